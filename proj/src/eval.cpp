#include "nqac/eval.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nqac/errors.hpp"

namespace nqac::eval {

double reciprocal_rank(std::span<const std::string> suggestions, std::string_view target) {
  const auto want = corpus::normalize(target);
  for (std::size_t i = 0; i < suggestions.size(); ++i)
    if (corpus::normalize(suggestions[i]) == want) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

EvalReport summarize(std::span<const double> rr, const std::vector<bool>& seen) {
  if (rr.empty()) throw EvalError("empty test set");
  if (seen.size() != rr.size()) throw ContractError("seen flags do not match ranks");
  EvalReport r;
  double all = 0, s = 0, u = 0;
  for (std::size_t i = 0; i < rr.size(); ++i) {
    all += rr[i];
    if (seen[i]) {
      s += rr[i];
      ++r.n_seen;
    } else {
      u += rr[i];
      ++r.n_unseen;
    }
  }
  r.mrr_all = all / static_cast<double>(rr.size());
  r.mrr_seen = r.n_seen ? s / static_cast<double>(r.n_seen) : 0.0;
  r.mrr_unseen = r.n_unseen ? u / static_cast<double>(r.n_unseen) : 0.0;
  r.reciprocal_ranks.assign(rr.begin(), rr.end());
  r.seen = seen;
  return r;
}

EvalReport evaluate(const engine::QacEngine& engine, const std::vector<corpus::PrefixSample>& samples,
                    engine::Strategy strategy, const EvalOptions& options) {
  if (samples.empty()) throw EvalError("empty test set");
  const int passes = std::max(1, options.passes);
  std::vector<double> rr(samples.size());
  std::vector<bool> seen(samples.size());
  std::vector<double> latency(samples.size(), 0.0);
  std::vector<std::string> texts;
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      engine::SuggestRequest req{s.prefix, s.user_id, s.timestamp, options.k, strategy};
      const auto t0 = std::chrono::steady_clock::now();
      const auto resp = engine.suggest(req);
      const auto t1 = std::chrono::steady_clock::now();
      latency[i] += std::chrono::duration<double>(t1 - t0).count();
      if (pass > 0) continue;
      texts.clear();
      for (const auto& c : resp.suggestions) texts.push_back(c.text);
      rr[i] = reciprocal_rank(texts, s.target);
      seen[i] = engine.has_trie() && engine.trie()->is_seen(resp.prefix);
    }
  }
  for (auto& l : latency) l /= passes;

  EvalReport report = summarize(rr, seen);
  report.strategy = std::string(engine::to_string(strategy));
  report.k = options.k;
  report.latency_s = latency;
  report.mean_latency_s = std::accumulate(latency.begin(), latency.end(), 0.0) / static_cast<double>(latency.size());
  std::vector<double> sorted = latency;
  std::sort(sorted.begin(), sorted.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size()))) - 1;
  report.p95_latency_s = sorted[std::min(idx, sorted.size() - 1)];
  return report;
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("paired t-test needs two equal samples of size >= 2");
  const auto n = static_cast<double>(a.size());
  double mean = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double var = 0;
  for (std::size_t i = 0; i < a.size(); ++i) var += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  var /= n - 1;
  PairedTTest r;
  r.mean_difference = mean;
  r.degrees_of_freedom = n - 1;
  if (var == 0) {
    r.t_statistic = mean == 0 ? 0 : std::copysign(INFINITY, mean);
    r.p_value = mean == 0 ? 1.0 : 0.0;
    return r;
  }
  r.t_statistic = mean / std::sqrt(var / n);
  const boost::math::students_t dist(r.degrees_of_freedom);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic)));
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"strategy", r.strategy},       {"k", r.k},
          {"mrr_all", r.mrr_all},         {"mrr_seen", r.mrr_seen},
          {"mrr_unseen", r.mrr_unseen},   {"n_seen", r.n_seen},
          {"n_unseen", r.n_unseen},       {"mean_latency_s", r.mean_latency_s},
          {"p95_latency_s", r.p95_latency_s}};
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.strategy.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %7s  %7s  %7s  %9s\n", int(width), "Model", "Seen", "Unseen", "All", "Time(s)");
  out += buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s  %7.3f  %7.3f  %7.3f  %9.4f\n", int(width), r.strategy.c_str(), r.mrr_seen,
                  r.mrr_unseen, r.mrr_all, r.mean_latency_s);
    out += buf;
  }
  return out;
}

}  // namespace nqac::eval
