#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "nqac/errors.hpp"
#include "nqac/mpc.hpp"

using namespace nqac;
using nqac::corpus::QueryCounts;
using nqac::mpc::Completion;
using nqac::mpc::CountedTrie;

namespace {

std::vector<Completion> brute_force(const QueryCounts& counts, std::string_view prefix, std::size_t k) {
  std::vector<Completion> all;
  for (const auto& [q, n] : counts)
    if (n > 0 && q.starts_with(prefix)) all.push_back({q, n});
  std::sort(all.begin(), all.end(), [](const Completion& a, const Completion& b) {
    return a.count != b.count ? a.count > b.count : a.query < b.query;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

QueryCounts random_counts(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  QueryCounts counts;
  const std::string alphabet = "abcd ";
  while (counts.size() < n) {
    std::string q(1 + rng() % 8, 'a');
    for (auto& c : q) c = alphabet[rng() % alphabet.size()];
    counts[q] = 1 + rng() % 6;  // many ties on purpose
  }
  return counts;
}

}  // namespace

TEST(CountedTrie, SubtreeTotals) {
  const CountedTrie t(QueryCounts{{"abc", 3}, {"abd", 2}});
  EXPECT_EQ(t.node(t.find("ab")).subtree_total, 5u);
  EXPECT_EQ(t.node(t.find("abc")).completion_count, 3u);
  EXPECT_EQ(t.node(t.find("ab")).completion_count, 0u);
  EXPECT_EQ(t.total(), 5u);

  const CountedTrie empty(QueryCounts{});
  EXPECT_EQ(empty.total(), 0u);
  EXPECT_EQ(empty.node_count(), 1u);

  const CountedTrie single(QueryCounts{{"a", 1}});
  EXPECT_EQ(single.node(single.find("a")).completion_count, 1u);
}

TEST(CountedTrie, CompleteExamples) {
  const QueryCounts c{{"abc", 3}, {"abd", 2}, {"xyz", 5}};
  const CountedTrie t(c);
  EXPECT_EQ(t.complete("ab", 2), (std::vector<Completion>{{"abc", 3}, {"abd", 2}}));
  EXPECT_TRUE(t.complete("q", 2).empty());
  EXPECT_EQ(t.complete("", 2), (std::vector<Completion>{{"xyz", 5}, {"abc", 3}}));
  EXPECT_TRUE(t.complete("ab", 0).empty());
  EXPECT_EQ(t.complete("abc", 10), (std::vector<Completion>{{"abc", 3}}));
}

TEST(CountedTrie, TiesBreakLexicographically) {
  const CountedTrie t(QueryCounts{{"b", 2}, {"a", 2}, {"ab", 2}, {"c", 9}});
  EXPECT_EQ(t.complete("", 4), (std::vector<Completion>{{"c", 9}, {"a", 2}, {"ab", 2}, {"b", 2}}));
}

TEST(CountedTrie, IsSeen) {
  const CountedTrie t(QueryCounts{{"abc", 3}});
  EXPECT_TRUE(t.is_seen("ab"));
  EXPECT_TRUE(t.is_seen("abc"));
  EXPECT_FALSE(t.is_seen("abcd"));
  EXPECT_FALSE(t.is_seen("b"));
  EXPECT_FALSE(CountedTrie(QueryCounts{}).is_seen(""));
}

TEST(CountedTrie, MatchesBruteForceOnEveryPrefix) {
  const auto counts = random_counts(300, 11);
  const CountedTrie t(counts);
  EXPECT_EQ(t.size(), counts.size());
  std::size_t checked = 0;
  for (const auto& [q, n] : counts)
    for (std::size_t len = 0; len <= q.size(); ++len) {
      const auto p = q.substr(0, len);
      for (std::size_t k : {1u, 3u, 10u}) ASSERT_EQ(t.complete(p, k), brute_force(counts, p, k)) << p;
      ++checked;
    }
  EXPECT_GT(checked, 300u);
}

TEST(CountedTrie, RoundTripIsByteIdentical) {
  const auto counts = random_counts(200, 3);
  const CountedTrie t(counts);
  std::stringstream a;
  t.save(a);
  const auto bytes = a.str();
  std::istringstream in(bytes);
  const auto loaded = CountedTrie::load(in);
  std::stringstream b;
  loaded.save(b);
  EXPECT_EQ(b.str(), bytes);
  for (const auto& [q, n] : counts) EXPECT_EQ(loaded.complete(q.substr(0, 2), 10), t.complete(q.substr(0, 2), 10));
}

TEST(CountedTrie, RejectsCorruptFiles) {
  const CountedTrie t(QueryCounts{{"abc", 3}, {"abd", 2}});
  std::stringstream s;
  t.save(s);
  const auto bytes = s.str();

  auto load_bytes = [](const std::string& b) {
    std::istringstream in(b);
    return CountedTrie::load(in);
  };
  EXPECT_THROW(load_bytes(bytes.substr(0, bytes.size() - 3)), LoadError);
  EXPECT_THROW(load_bytes("NOTATRIE" + bytes.substr(8)), LoadError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(load_bytes(bad_version), LoadError);
  // Subtree total of the root no longer matches the stream.
  auto bad_total = bytes;
  bad_total[8 + 4 + 8 + 1 + 8] ^= 1;
  EXPECT_THROW(load_bytes(bad_total), LoadError);
  EXPECT_THROW(CountedTrie::load_file("/nonexistent/trie.bin"), IoError);
}
