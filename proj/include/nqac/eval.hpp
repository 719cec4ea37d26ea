#pragma once

// Mean reciprocal rank with a seen/unseen breakdown and per-prefix latency.

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nqac/corpus.hpp"
#include "nqac/engine.hpp"

namespace nqac::eval {

// 1/r for the first suggestion equal to the target (both normalized), 0 if absent.
double reciprocal_rank(std::span<const std::string> suggestions, std::string_view target);

struct EvalOptions {
  std::size_t k = 10;
  int passes = 10;  // timing passes; ranks come from the first
};

struct EvalReport {
  std::string strategy;
  std::size_t k = 10;
  double mrr_all = 0;
  double mrr_seen = 0;
  double mrr_unseen = 0;
  std::size_t n_seen = 0;
  std::size_t n_unseen = 0;
  double mean_latency_s = 0;
  double p95_latency_s = 0;
  std::vector<double> reciprocal_ranks;  // per test prefix, input order
  std::vector<bool> seen;
  std::vector<double> latency_s;  // per prefix, averaged over passes
};

// Seen/unseen is decided by the engine's trie (everything is unseen without one).
// Throws EvalError on an empty test set.
EvalReport evaluate(const engine::QacEngine& engine, const std::vector<corpus::PrefixSample>& samples,
                    engine::Strategy strategy, const EvalOptions& options = {});

// MRR aggregation over precomputed reciprocal ranks.
EvalReport summarize(std::span<const double> reciprocal_ranks, const std::vector<bool>& seen);

struct PairedTTest {
  double mean_difference = 0;
  double t_statistic = 0;
  double degrees_of_freedom = 0;
  double p_value = 1;  // two-sided
};

// Paired on per-prefix reciprocal ranks. Requires equal, >= 2 lengths.
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

nlohmann::json to_json(const EvalReport& report);
// Aligned columns: Model | Seen | Unseen | All | Time.
std::string format_table(const std::vector<EvalReport>& reports);

}  // namespace nqac::eval
