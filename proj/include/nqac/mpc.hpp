#pragma once

// MostPopularCompletion over a character trie of background query counts.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nqac/corpus.hpp"

namespace nqac::mpc {

struct Completion {
  std::string query;
  std::uint64_t count = 0;

  friend bool operator==(const Completion&, const Completion&) = default;
};

// Immutable after construction. Nodes live in a flat array; children are kept
// sorted by byte so preorder traversal is lexicographic.
class CountedTrie {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  struct Node {
    std::vector<std::pair<unsigned char, std::uint32_t>> children;
    std::uint64_t completion_count = 0;
    std::uint64_t subtree_total = 0;
    // Highest-ranked (count desc, text asc) query in this subtree, as an index
    // into queries(); kNone when the subtree is empty.
    std::uint32_t best = kNone;
  };
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  CountedTrie();
  explicit CountedTrie(const corpus::QueryCounts& counts);

  // Node index reached by walking `prefix`, or kNone.
  std::uint32_t find(std::string_view prefix) const;
  const Node& node(std::uint32_t index) const { return nodes_[index]; }
  std::uint32_t root() const { return 0; }
  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t total() const { return nodes_[0].subtree_total; }
  std::size_t size() const { return queries_.size(); }

  // Top-k queries starting with `prefix`, ordered by count descending then
  // text ascending.
  std::vector<Completion> complete(std::string_view prefix, std::size_t k) const;

  // O(|prefix|): at least one stored query starts with `prefix`.
  bool is_seen(std::string_view prefix) const;

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static CountedTrie load(std::istream& in);
  static CountedTrie load_file(const std::string& path);

 private:
  struct Entry {
    std::string text;
    std::uint64_t count;
  };

  std::uint32_t add_child(std::uint32_t parent, unsigned char label);
  void finalize();
  bool ranks_before(std::uint32_t a, std::uint32_t b) const;

  std::vector<Node> nodes_;
  std::vector<Entry> queries_;
  std::vector<std::uint32_t> terminal_query_;  // node -> query index or kNone
};

}  // namespace nqac::mpc
