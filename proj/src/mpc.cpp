#include "nqac/mpc.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>

#include "nqac/errors.hpp"

namespace nqac::mpc {

namespace {

constexpr char kMagic[8] = {'N', 'Q', 'A', 'C', 'T', 'R', 'I', 'E'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf;
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size()))
    throw LoadError("trie file truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

}  // namespace

CountedTrie::CountedTrie() : nodes_(1), terminal_query_(1, kNone) {}

CountedTrie::CountedTrie(const corpus::QueryCounts& counts) : CountedTrie() {
  for (const auto& [query, count] : counts) {
    if (count == 0) continue;
    std::uint32_t cur = 0;
    for (char ch : query) cur = add_child(cur, static_cast<unsigned char>(ch));
    nodes_[cur].completion_count += count;
  }
  finalize();
}

std::uint32_t CountedTrie::add_child(std::uint32_t parent, unsigned char label) {
  auto& kids = nodes_[parent].children;
  auto it = std::lower_bound(kids.begin(), kids.end(), label,
                             [](const auto& e, unsigned char l) { return e.first < l; });
  if (it != kids.end() && it->first == label) return it->second;
  const auto idx = static_cast<std::uint32_t>(nodes_.size());
  kids.insert(it, {label, idx});
  nodes_.emplace_back();
  terminal_query_.push_back(kNone);
  return idx;
}

bool CountedTrie::ranks_before(std::uint32_t a, std::uint32_t b) const {
  if (queries_[a].count != queries_[b].count) return queries_[a].count > queries_[b].count;
  return queries_[a].text < queries_[b].text;
}

// Recomputes subtree totals, the query table and per-node best pointers from
// completion counts. Preorder walk keeps queries_ lexicographically sorted.
void CountedTrie::finalize() {
  queries_.clear();
  std::fill(terminal_query_.begin(), terminal_query_.end(), kNone);
  std::string path;
  struct Frame {
    std::uint32_t node;
    std::size_t next_child;
  };
  std::vector<Frame> stack{{0, 0}};
  if (nodes_[0].completion_count > 0) {
    terminal_query_[0] = 0;
    queries_.push_back({"", nodes_[0].completion_count});
  }
  while (!stack.empty()) {
    auto& f = stack.back();
    auto& n = nodes_[f.node];
    if (f.next_child < n.children.size()) {
      const auto [label, child] = n.children[f.next_child++];
      path.push_back(static_cast<char>(label));
      if (nodes_[child].completion_count > 0) {
        terminal_query_[child] = static_cast<std::uint32_t>(queries_.size());
        queries_.push_back({path, nodes_[child].completion_count});
      }
      stack.push_back({child, 0});
      continue;
    }
    n.subtree_total = n.completion_count;
    n.best = terminal_query_[f.node];
    for (const auto& [label, child] : n.children) {
      const auto& c = nodes_[child];
      n.subtree_total += c.subtree_total;
      if (c.best != kNone && (n.best == kNone || ranks_before(c.best, n.best))) n.best = c.best;
    }
    const bool is_root = f.node == 0;
    stack.pop_back();
    if (!is_root) path.pop_back();
  }
}

std::uint32_t CountedTrie::find(std::string_view prefix) const {
  std::uint32_t cur = 0;
  for (char ch : prefix) {
    const auto& kids = nodes_[cur].children;
    const auto label = static_cast<unsigned char>(ch);
    auto it = std::lower_bound(kids.begin(), kids.end(), label,
                               [](const auto& e, unsigned char l) { return e.first < l; });
    if (it == kids.end() || it->first != label) return kNone;
    cur = it->second;
  }
  return cur;
}

bool CountedTrie::is_seen(std::string_view prefix) const {
  const auto n = find(prefix);
  return n != kNone && nodes_[n].subtree_total > 0;
}

std::vector<Completion> CountedTrie::complete(std::string_view prefix, std::size_t k) const {
  std::vector<Completion> out;
  const auto start = find(prefix);
  if (start == kNone || k == 0 || nodes_[start].best == kNone) return out;

  // Best-first over subtrees keyed by their best query. An entry is either a
  // subtree (expand) or a single terminal query (emit).
  struct Item {
    std::uint32_t query;
    std::uint32_t node;
    bool terminal;
  };
  auto worse = [this](const Item& a, const Item& b) { return ranks_before(b.query, a.query); };
  std::priority_queue<Item, std::vector<Item>, decltype(worse)> heap(worse);
  heap.push({nodes_[start].best, start, false});
  while (!heap.empty() && out.size() < k) {
    const Item top = heap.top();
    heap.pop();
    if (top.terminal) {
      out.push_back({queries_[top.query].text, queries_[top.query].count});
      continue;
    }
    const auto& n = nodes_[top.node];
    if (terminal_query_[top.node] != kNone) heap.push({terminal_query_[top.node], top.node, true});
    for (const auto& [label, child] : n.children)
      if (nodes_[child].best != kNone) heap.push({nodes_[child].best, child, false});
  }
  return out;
}

// Preorder stream: label u8, completion_count u64, subtree_total u64, child count u32.
void CountedTrie::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, nodes_.size());
  std::vector<std::pair<std::uint32_t, unsigned char>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [idx, label] = stack.back();
    stack.pop_back();
    const auto& n = nodes_[idx];
    put_le<std::uint8_t>(out, label);
    put_le<std::uint64_t>(out, n.completion_count);
    put_le<std::uint64_t>(out, n.subtree_total);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n.children.size()));
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it)
      stack.push_back({it->second, it->first});
  }
  if (!out) throw IoError("failed writing trie");
}

void CountedTrie::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  save(out);
}

CountedTrie CountedTrie::load(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw LoadError("not a trie file (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion)
    throw LoadError("unsupported trie format version " + std::to_string(version));
  const auto count = get_le<std::uint64_t>(in);
  if (count == 0 || count > 0xFFFFFFF0ull) throw LoadError("bad trie node count");

  CountedTrie trie;
  trie.nodes_.clear();
  trie.terminal_query_.clear();
  std::vector<std::uint64_t> stored_totals;
  // (node index, children still to read)
  std::vector<std::pair<std::uint32_t, std::uint32_t>> stack;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto label = get_le<std::uint8_t>(in);
    const auto completion = get_le<std::uint64_t>(in);
    const auto subtree = get_le<std::uint64_t>(in);
    const auto kids = get_le<std::uint32_t>(in);
    const auto idx = static_cast<std::uint32_t>(trie.nodes_.size());
    trie.nodes_.emplace_back();
    trie.terminal_query_.push_back(kNone);
    trie.nodes_[idx].completion_count = completion;
    stored_totals.push_back(subtree);
    if (!stack.empty()) {
      auto& [parent, remaining] = stack.back();
      auto& siblings = trie.nodes_[parent].children;
      if (!siblings.empty() && siblings.back().first >= label)
        throw LoadError("trie children out of order");
      siblings.push_back({label, idx});
      --remaining;
    } else if (idx != 0) {
      throw LoadError("trie stream has trailing nodes");
    }
    stack.push_back({idx, kids});
    while (!stack.empty() && stack.back().second == 0) stack.pop_back();
  }
  if (!stack.empty()) throw LoadError("trie stream truncated");
  trie.finalize();
  for (std::size_t i = 0; i < trie.nodes_.size(); ++i)
    if (trie.nodes_[i].subtree_total != stored_totals[i])
      throw LoadError("trie subtree totals inconsistent");
  return trie;
}

CountedTrie CountedTrie::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trie file: " + path);
  return load(in);
}

}  // namespace nqac::mpc
