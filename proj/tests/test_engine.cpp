#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "nqac/engine.hpp"
#include "nqac/errors.hpp"
#include "test_util.hpp"

using namespace nqac;
using namespace nqac::engine;
namespace fx = nqac::fixtures;

namespace {

const corpus::QueryCounts kCounts{{"ab cd", 5}, {"ab ce", 3}, {"hag fed", 2}, {"bead", 7}};

NeuralArtifacts neural_fixture() {
  auto s = fx::tiny_setup(lm::Activation::relu, 17);
  features::UserVectorTable users(2);
  users.set("alice", {0.9f, -0.4f});
  return {std::move(s.model), std::move(s.words), std::move(users)};
}

decoder::DecoderConfig small_decoder() {
  decoder::DecoderConfig d;
  d.beam_width = 5;
  d.k = 5;
  d.max_length = 8;
  return d;
}

QacEngine full_engine() { return QacEngine(mpc::CountedTrie(kCounts), neural_fixture(), small_decoder()); }

SuggestRequest request(std::string prefix, Strategy s, std::size_t k = 3) {
  SuggestRequest r;
  r.prefix = std::move(prefix);
  r.strategy = s;
  r.k = k;
  r.user_id = "alice";
  r.timestamp = Timestamp::from_civil(2006, 3, 1, 7, 17, 12);
  return r;
}

}  // namespace

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {Strategy::mpc, Strategy::neural, Strategy::neural_diverse, Strategy::routed})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_FALSE(parse_strategy("best"));
}

TEST(Engine, MpcSuggestionsFollowCounts) {
  const auto e = full_engine();
  const auto r = e.suggest(request("AB  c", Strategy::mpc, 2));
  EXPECT_EQ(r.prefix, "ab c");
  EXPECT_EQ(r.strategy, Strategy::mpc);
  EXPECT_EQ(r.suggestions, (std::vector<ScoredCompletion>{{"ab cd", 5}, {"ab ce", 3}}));
  EXPECT_GE(r.latency_ms, 0.0);
}

TEST(Engine, RoutedSeenEqualsMpc) {
  const auto e = full_engine();
  for (const char* p : {"ab ", "ab c", "hag f", "b"}) {
    const auto routed = e.suggest(request(p, Strategy::routed));
    const auto mpc = e.suggest(request(p, Strategy::mpc));
    EXPECT_EQ(routed.strategy, Strategy::mpc) << p;
    EXPECT_EQ(routed.suggestions, mpc.suggestions) << p;
  }
}

TEST(Engine, RoutedUnseenEqualsNeural) {
  const auto e = full_engine();
  for (const char* p : {"ab x", "zz ", "hag b"}) {
    const auto routed = e.suggest(request(p, Strategy::routed));
    const auto neural = e.suggest(request(p, Strategy::neural));
    EXPECT_EQ(routed.strategy, Strategy::neural) << p;
    EXPECT_EQ(routed.suggestions, neural.suggestions) << p;
    EXPECT_EQ(routed.suggestions.size(), 3u);
    for (const auto& s : routed.suggestions) EXPECT_TRUE(s.text.starts_with(routed.prefix));
  }
}

TEST(Engine, MissingUserMatchesZeroVector) {
  const auto e = full_engine();
  auto anon = request("ab x", Strategy::neural);
  anon.user_id.reset();
  auto unknown = request("ab x", Strategy::neural);
  unknown.user_id = "nobody";
  const auto a = e.suggest(anon).suggestions;
  EXPECT_EQ(a, e.suggest(unknown).suggestions);

  // Same thing computed directly with an explicit all-zero user slot.
  const auto* n = e.neural();
  lm::LmContext ctx = lm::make_context(n->model.spec(), nullptr, std::nullopt, anon.timestamp);
  ASSERT_EQ(ctx.user, (std::vector<double>{0.0, 0.0}));
  const decoder::ConditionedLm clm(n->model, &*n->words, ctx);
  auto cfg = small_decoder();
  cfg.k = 3;
  const auto direct = decoder::diverse_beam_search(clm, clm.prime("ab x"), [&] {
    auto c = cfg;
    c.diversity = 0;
    return c;
  }());
  ASSERT_EQ(direct.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(direct[i].text, a[i].text);

  // A known user does change the scores.
  const auto alice = e.suggest(request("ab x", Strategy::neural)).suggestions;
  EXPECT_NE(alice.front().score, a.front().score);
}

TEST(Engine, DiverseStrategyUsesPenalizedSearch) {
  auto d = small_decoder();
  d.diversity = 0;
  const QacEngine plain(mpc::CountedTrie(kCounts), neural_fixture(), d);
  EXPECT_EQ(plain.suggest(request("zz ", Strategy::neural_diverse)).suggestions,
            plain.suggest(request("zz ", Strategy::neural)).suggestions);
  const auto r = full_engine().suggest(request("zz ", Strategy::neural_diverse));
  EXPECT_EQ(r.strategy, Strategy::neural_diverse);
  EXPECT_EQ(r.suggestions.size(), 3u);
}

TEST(Engine, LargeKWidensBeam) {
  const auto e = full_engine();
  EXPECT_EQ(e.suggest(request("zz ", Strategy::neural, 9)).suggestions.size(), 9u);
}

TEST(Engine, CapabilityGating) {
  const QacEngine trie_only(mpc::CountedTrie(kCounts), std::nullopt);
  EXPECT_NO_THROW(trie_only.suggest(request("ab ", Strategy::mpc)));
  EXPECT_NO_THROW(trie_only.suggest(request("ab ", Strategy::routed)));
  EXPECT_THROW(trie_only.suggest(request("ab ", Strategy::neural)), ConfigError);
  EXPECT_THROW(trie_only.suggest(request("zz ", Strategy::routed)), ConfigError);

  const QacEngine model_only(std::nullopt, neural_fixture(), small_decoder());
  EXPECT_THROW(model_only.suggest(request("ab ", Strategy::mpc)), ConfigError);
  EXPECT_NO_THROW(model_only.suggest(request("ab ", Strategy::neural)));

  const auto both = full_engine();
  for (auto s : {Strategy::mpc, Strategy::neural, Strategy::neural_diverse, Strategy::routed})
    EXPECT_NO_THROW(both.suggest(request("ab ", s)));

  EXPECT_THROW(QacEngine(std::nullopt, std::nullopt), ConfigError);
  EXPECT_THROW(both.suggest(request("   ", Strategy::mpc)), ConfigError);
  EXPECT_THROW(both.suggest(request("ab", Strategy::mpc, 0)), ConfigError);
}

TEST(Engine, UnknownCharactersNeverCrash) {
  const auto e = full_engine();
  const auto r = e.suggest(request("\xc3\xa9t\xc3\xa9 ~", Strategy::routed));
  EXPECT_EQ(r.strategy, Strategy::neural);
  EXPECT_EQ(r.suggestions.size(), 3u);
}

TEST(Engine, BuildFromFilesMatchesInMemory) {
  const auto dir = fx::temp_path("engine");
  std::filesystem::create_directories(dir);
  const auto art = neural_fixture();
  const mpc::CountedTrie trie(kCounts);
  trie.save_file(dir + "/trie.bin");
  art.model.save_file(dir + "/model.bin");
  art.words->save_text_file(dir + "/words.txt");
  art.users->save_text_file(dir + "/users.txt");

  const auto built = QacEngine::build({dir + "/trie.bin", dir + "/model.bin", dir + "/words.txt", dir + "/users.txt"},
                                      small_decoder());
  const auto mem = full_engine();
  for (auto s : {Strategy::mpc, Strategy::neural, Strategy::neural_diverse, Strategy::routed})
    for (const char* p : {"ab ", "zz ", "hag f"})
      EXPECT_EQ(built.suggest(request(p, s)).suggestions, mem.suggest(request(p, s)).suggestions);

  try {
    QacEngine::build({dir + "/missing.bin", std::nullopt, std::nullopt, std::nullopt});
    FAIL() << "expected a configuration error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.bin"), std::string::npos);
  }
  std::ofstream(dir + "/junk.bin") << "garbage";
  EXPECT_THROW(QacEngine::build({std::nullopt, dir + "/junk.bin", std::nullopt, std::nullopt}), ConfigError);

  features::UserVectorTable wrong(5);
  wrong.set("x", {1, 2, 3, 4, 5});
  wrong.save_text_file(dir + "/wrong_users.txt");
  EXPECT_THROW(QacEngine::build({std::nullopt, dir + "/model.bin", dir + "/words.txt", dir + "/wrong_users.txt"}),
               ConfigError);
  std::filesystem::remove_all(dir);
}
