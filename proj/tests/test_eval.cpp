#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nqac/errors.hpp"
#include "nqac/eval.hpp"

using namespace nqac;
using namespace nqac::eval;

namespace {

engine::QacEngine mpc_engine() {
  return engine::QacEngine(mpc::CountedTrie(corpus::QueryCounts{{"ab x", 5}, {"ab y", 3}, {"ab z", 1}, {"cd e", 2}}),
                           std::nullopt);
}

corpus::PrefixSample sample(std::string prefix, std::string target) {
  return {std::move(prefix), std::move(target), "u", Timestamp::from_civil(2006, 3, 1)};
}

// Student t CDF with 3 degrees of freedom, closed form.
double t3_cdf(double t) {
  const double s = std::sqrt(3.0);
  return 0.5 + (t / (s * (1 + t * t / 3)) + std::atan(t / s)) / std::numbers::pi;
}

}  // namespace

TEST(ReciprocalRank, Definition) {
  const std::vector<std::string> list{"a", "b", "c", "d"};
  EXPECT_EQ(reciprocal_rank(list, "a"), 1.0);
  EXPECT_EQ(reciprocal_rank(list, "d"), 0.25);
  EXPECT_EQ(reciprocal_rank(list, "e"), 0.0);
  EXPECT_EQ(reciprocal_rank(list, " B "), 0.5);
  EXPECT_EQ(reciprocal_rank({}, "a"), 0.0);
}

TEST(Evaluate, HandBuiltRanks) {
  const auto eng = mpc_engine();
  const std::vector<corpus::PrefixSample> samples{sample("ab ", "ab x"), sample("ab ", "ab y"), sample("zz ", "zz q")};
  const auto r = evaluate(eng, samples, engine::Strategy::mpc, {10, 2});
  EXPECT_EQ(r.reciprocal_ranks, (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_NEAR(r.mrr_all, 0.5, 1e-12);
  EXPECT_EQ(r.n_seen, 2u);
  EXPECT_EQ(r.n_unseen, 1u);
  EXPECT_NEAR(r.mrr_seen, 0.75, 1e-12);
  EXPECT_EQ(r.mrr_unseen, 0.0);
  EXPECT_EQ(r.latency_s.size(), 3u);
  EXPECT_GE(r.p95_latency_s, 0.0);
  EXPECT_EQ(r.strategy, "mpc");
}

TEST(Evaluate, CutoffAtK) {
  const auto eng = mpc_engine();
  const auto r = evaluate(eng, {sample("ab ", "ab z")}, engine::Strategy::mpc, {2, 1});
  EXPECT_EQ(r.mrr_all, 0.0);
  const auto r3 = evaluate(eng, {sample("ab ", "ab z")}, engine::Strategy::mpc, {3, 1});
  EXPECT_NEAR(r3.mrr_all, 1.0 / 3.0, 1e-12);
}

TEST(Evaluate, WeightedMeanIdentity) {
  const std::vector<double> rr{1, 0.5, 0, 0.25, 1.0 / 3.0, 0, 0.2, 1};
  const std::vector<bool> seen{true, false, true, true, false, false, true, false};
  const auto r = summarize(rr, seen);
  const double n = static_cast<double>(rr.size());
  EXPECT_NEAR(r.mrr_all, (r.n_seen * r.mrr_seen + r.n_unseen * r.mrr_unseen) / n, 1e-9);
  double sum = 0;
  for (double x : rr) sum += x;
  EXPECT_NEAR(r.mrr_all, sum / n, 1e-12);
}

TEST(Evaluate, MpcScoresZeroOnUnseenTargets) {
  const auto eng = mpc_engine();
  const auto r = evaluate(eng, {sample("qq ", "qq r"), sample("cd f", "cd fg")}, engine::Strategy::mpc, {10, 1});
  EXPECT_EQ(r.n_unseen, 2u);
  EXPECT_EQ(r.mrr_unseen, 0.0);
  EXPECT_EQ(r.mrr_all, 0.0);
}

TEST(Evaluate, RanksAreDeterministicAcrossRuns) {
  const auto eng = mpc_engine();
  const std::vector<corpus::PrefixSample> samples{sample("ab ", "ab y"), sample("cd ", "cd e")};
  const auto a = evaluate(eng, samples, engine::Strategy::routed, {10, 1});
  const auto b = evaluate(eng, samples, engine::Strategy::routed, {10, 3});
  EXPECT_EQ(a.reciprocal_ranks, b.reciprocal_ranks);
  EXPECT_EQ(a.mrr_all, b.mrr_all);
  EXPECT_EQ(a.mrr_seen, b.mrr_seen);
  EXPECT_EQ(a.mrr_unseen, b.mrr_unseen);
}

TEST(Evaluate, EmptySetAndMissingArtifacts) {
  const auto eng = mpc_engine();
  EXPECT_THROW(evaluate(eng, {}, engine::Strategy::mpc), EvalError);
  EXPECT_THROW(summarize({}, {}), EvalError);
  EXPECT_THROW(evaluate(eng, {sample("ab ", "ab x")}, engine::Strategy::neural), ConfigError);
}

TEST(PairedTTest, MatchesClosedForm) {
  const std::vector<double> a{1, 0.5, 0, 1};
  const std::vector<double> b{0.5, 0.5, 0, 0};
  const auto r = paired_t_test(a, b);
  // d = (0.5, 0, 0, 1): mean 0.375, sample sd sqrt(0.6875 / 3).
  const double t = 0.375 / (std::sqrt(0.6875 / 3) / 2);
  EXPECT_NEAR(r.mean_difference, 0.375, 1e-12);
  EXPECT_NEAR(r.t_statistic, t, 1e-12);
  EXPECT_EQ(r.degrees_of_freedom, 3.0);
  EXPECT_NEAR(r.p_value, 2 * (1 - t3_cdf(t)), 1e-10);

  const auto same = paired_t_test(a, a);
  EXPECT_EQ(same.p_value, 1.0);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{1}), ContractError);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1, 2}), ContractError);
}

TEST(Report, JsonAndTable) {
  const auto r = evaluate(mpc_engine(), {sample("ab ", "ab y")}, engine::Strategy::mpc, {10, 1});
  const auto j = to_json(r);
  EXPECT_EQ(j.at("strategy"), "mpc");
  EXPECT_EQ(j.at("mrr_all").get<double>(), 0.5);
  EXPECT_EQ(j.at("n_seen").get<std::size_t>(), 1u);
  const auto table = format_table({r});
  EXPECT_NE(table.find("Model"), std::string::npos);
  EXPECT_NE(table.find("Unseen"), std::string::npos);
  EXPECT_NE(table.find("0.500"), std::string::npos);
}
