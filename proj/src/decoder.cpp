#include "nqac/decoder.hpp"

#include <algorithm>

#include "nqac/errors.hpp"

namespace nqac::decoder {

namespace {

struct PoolEntry {
  std::size_t parent;
  int symbol;  // -1: finished parent carried over unchanged
  double log_prob;
  std::vector<int> sequence;
  std::string suffix;
};

// Higher score first, then lexicographic on the generated symbol sequence.
bool ranks_before(double score_a, const std::vector<int>& seq_a, double score_b, const std::vector<int>& seq_b) {
  if (score_a != score_b) return score_a > score_b;
  return seq_a < seq_b;
}

std::vector<PoolEntry> build_pool(const lm::Vocabulary& vocab, const std::vector<BeamCandidate>& beam) {
  std::vector<PoolEntry> pool;
  for (std::size_t i = 0; i < beam.size(); ++i) {
    const auto& c = beam[i];
    if (c.finished) {
      pool.push_back({i, -1, c.log_prob, c.generated, std::string(c.suffix())});
      continue;
    }
    for (int s = 0; s <= vocab.end_index(); ++s) {
      PoolEntry e{i, s, c.log_prob + c.next_log_probs(s), c.generated, std::string(c.suffix())};
      e.sequence.push_back(s);
      if (s != vocab.end_index()) e.suffix.push_back(vocab.symbol(s));
      pool.push_back(std::move(e));
    }
  }
  std::sort(pool.begin(), pool.end(), [](const PoolEntry& a, const PoolEntry& b) {
    return ranks_before(a.log_prob, a.sequence, b.log_prob, b.sequence);
  });
  return pool;
}

BeamCandidate materialize(const ConditionedLm& lm, const std::vector<BeamCandidate>& beam, const PoolEntry& e) {
  if (e.symbol < 0) return beam[e.parent];
  return lm.extend(beam[e.parent], e.symbol);
}

bool all_finished(const std::vector<BeamCandidate>& beam) {
  return std::all_of(beam.begin(), beam.end(), [](const auto& c) { return c.finished; });
}

std::vector<Completion> collect(std::vector<BeamCandidate> beam, std::size_t k) {
  std::stable_sort(beam.begin(), beam.end(), [](const BeamCandidate& a, const BeamCandidate& b) {
    if (a.finished != b.finished) return a.finished;
    return ranks_before(a.score, a.generated, b.score, b.generated);
  });
  std::vector<Completion> out;
  for (const auto& c : beam) {
    if (out.size() == k) break;
    out.push_back({c.text, c.score, c.log_prob, c.finished});
  }
  return out;
}

}  // namespace

void DecoderConfig::validate() const {
  if (k < 1 || beam_width < k) throw ConfigError("decoder needs beam width >= k >= 1");
  if (!(diversity >= 0)) throw ConfigError("diversity weight must be >= 0");
}

ConditionedLm::ConditionedLm(const lm::LmModel& model, const features::WordEmbeddingTable* words,
                             lm::LmContext context)
    : model_(model), encoder_(model, words), context_(std::move(context)) {}

BeamCandidate ConditionedLm::prime(std::string_view prefix) const {
  if (prefix.empty()) throw ContractError("cannot prime on an empty prefix");
  BeamCandidate c;
  c.text = std::string(prefix);
  c.prefix_length = prefix.size();
  c.state = lm::initial_state(model_);
  lm::VectorXd column(static_cast<Eigen::Index>(encoder_.input_dim()));
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    encoder_.encode_position(prefix, i, context_, column);
    c.next_log_probs = lm::step(model_, c.state, column);
  }
  return c;
}

BeamCandidate ConditionedLm::extend(const BeamCandidate& candidate, int symbol) const {
  if (candidate.finished) throw ContractError("finished candidates cannot be extended");
  const auto& vocab = model_.vocab();
  BeamCandidate next = candidate;
  next.log_prob += candidate.next_log_probs(symbol);
  next.score = next.log_prob;
  next.generated.push_back(symbol);
  if (symbol == vocab.end_index()) {
    next.finished = true;
    return next;
  }
  lm::VectorXd column(static_cast<Eigen::Index>(encoder_.input_dim()));
  encoder_.encode_symbol(symbol, next.text, context_, column);
  next.text.push_back(vocab.symbol(symbol));
  next.next_log_probs = lm::step(model_, next.state, column);
  return next;
}

Completion greedy_decode(const ConditionedLm& lm, const BeamCandidate& primed, std::size_t max_length) {
  const auto& vocab = lm.model().vocab();
  BeamCandidate cur = primed;
  for (std::size_t t = 0; t < max_length && !cur.finished; ++t) {
    int best = 0;
    for (int s = 1; s <= vocab.end_index(); ++s)
      if (cur.next_log_probs(s) > cur.next_log_probs(best)) best = s;
    cur = lm.extend(cur, best);
  }
  return {cur.text, cur.log_prob, cur.log_prob, cur.finished};
}

std::vector<Completion> beam_search(const ConditionedLm& lm, const BeamCandidate& primed,
                                    const DecoderConfig& config) {
  config.validate();
  std::vector<BeamCandidate> beam{primed};
  beam[0].score = beam[0].log_prob;
  for (std::size_t t = 0; t < config.max_length && !all_finished(beam); ++t) {
    const auto pool = build_pool(lm.model().vocab(), beam);
    std::vector<BeamCandidate> next;
    for (std::size_t i = 0; i < pool.size() && next.size() < config.beam_width; ++i) {
      next.push_back(materialize(lm, beam, pool[i]));
      next.back().score = next.back().log_prob;
    }
    beam = std::move(next);
  }
  return collect(std::move(beam), config.k);
}

std::vector<Completion> diverse_beam_search(const ConditionedLm& lm, const BeamCandidate& primed,
                                            const DecoderConfig& config) {
  config.validate();
  const double lambda = config.diversity;
  std::vector<BeamCandidate> beam{primed};
  beam[0].score = beam[0].log_prob;
  for (std::size_t t = 0; t < config.max_length && !all_finished(beam); ++t) {
    const auto pool = build_pool(lm.model().vocab(), beam);
    if (pool.empty()) break;

    // Greedy selection: pool[0] seeds the step; each further pick maximizes
    // log-prob minus its penalty against the suffixes picked so far.
    std::vector<std::size_t> picked{0};
    std::vector<double> penalty{0.0};
    std::vector<double> distance_sum(pool.size(), 0.0);
    std::vector<bool> taken(pool.size(), false);
    taken[0] = true;
    while (picked.size() < config.beam_width && picked.size() < pool.size()) {
      const std::size_t last = picked.back();
      std::size_t best = pool.size();
      double best_adjusted = 0, best_penalty = 0;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (taken[i]) continue;
        if (lambda > 0) distance_sum[i] += normalized_levenshtein(pool[i].suffix, pool[last].suffix);
        const double pen = lambda * (1.0 - distance_sum[i] / static_cast<double>(picked.size()));
        const double adjusted = pool[i].log_prob - pen;
        if (best == pool.size() ||
            ranks_before(adjusted, pool[i].sequence, best_adjusted, pool[best].sequence)) {
          best = i;
          best_adjusted = adjusted;
          best_penalty = pen;
        }
      }
      taken[best] = true;
      picked.push_back(best);
      penalty.push_back(best_penalty);
    }
    // Rebalance the first-ranked candidate with the mean penalty of the rest.
    if (picked.size() > 1) {
      double sum = 0;
      for (std::size_t j = 1; j < penalty.size(); ++j) sum += penalty[j];
      penalty[0] = sum / static_cast<double>(penalty.size() - 1);
    }

    std::vector<BeamCandidate> next;
    next.reserve(picked.size());
    for (std::size_t j = 0; j < picked.size(); ++j) {
      next.push_back(materialize(lm, beam, pool[picked[j]]));
      next.back().score = next.back().log_prob - penalty[j];
    }
    std::stable_sort(next.begin(), next.end(), [](const BeamCandidate& a, const BeamCandidate& b) {
      return ranks_before(a.score, a.generated, b.score, b.generated);
    });
    beam = std::move(next);
  }
  return collect(std::move(beam), config.k);
}

}  // namespace nqac::decoder
