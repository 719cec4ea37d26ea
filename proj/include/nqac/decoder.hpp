#pragma once

// Decoders turning a primed language model into ranked completions.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nqac/lm_model.hpp"

namespace nqac::decoder {

// Levenshtein distance divided by the longer length; 0 when both are empty.
double normalized_levenshtein(std::string_view a, std::string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

struct BeamCandidate {
  std::string text;              // prefix + generated characters (no end marker)
  std::vector<int> generated;    // generated symbol indices, including the end marker once finished
  double log_prob = 0;           // cumulative over generated symbols; the prefix is not scored
  double score = 0;              // ranking score (log_prob for plain search, adjusted for diverse)
  bool finished = false;
  std::size_t prefix_length = 0;
  lm::RecurrentState state;      // after consuming `text`
  lm::VectorXd next_log_probs;   // distribution of the symbol following `text`

  std::string_view suffix() const { return std::string_view(text).substr(prefix_length); }
};

struct DecoderConfig {
  std::size_t beam_width = 10;
  std::size_t max_length = 30;  // decode steps, each emitting one symbol (the end marker included)
  double diversity = 0.5;       // lambda; 0 reduces diverse search to plain beam search
  std::size_t k = 10;

  void validate() const;  // throws ConfigError
};

// A language model bound to one request context (user, time, word table).
class ConditionedLm {
 public:
  ConditionedLm(const lm::LmModel& model, const features::WordEmbeddingTable* words, lm::LmContext context);

  const lm::LmModel& model() const { return model_; }

  // State after consuming the whole prefix; unknown characters map to UNK.
  // Throws ContractError on an empty prefix.
  BeamCandidate prime(std::string_view prefix) const;
  // Appends one symbol. The end marker finishes the candidate without a model step.
  BeamCandidate extend(const BeamCandidate& candidate, int symbol) const;
  const lm::InputEncoder& encoder() const { return encoder_; }
  const lm::LmContext& context() const { return context_; }

 private:
  const lm::LmModel& model_;
  lm::InputEncoder encoder_;
  lm::LmContext context_;
};

struct Completion {
  std::string text;
  double score = 0;
  double log_prob = 0;
  bool finished = false;

  friend bool operator==(const Completion&, const Completion&) = default;
};

// Argmax symbol per step (ties to the lowest vocabulary index).
Completion greedy_decode(const ConditionedLm& lm, const BeamCandidate& primed, std::size_t max_length);

// Breadth-B search over cumulative log-probability. Finished candidates stay
// in the pool; ties break on the generated symbol sequence.
std::vector<Completion> beam_search(const ConditionedLm& lm, const BeamCandidate& primed,
                                    const DecoderConfig& config);

// Beam search with per-step diversity penalties: the pool is ranked by
// log-probability, every candidate after the first is penalized by
// lambda * (1 - mean normalized edit distance of its suffix to the suffixes
// already selected this step), selection is greedy on the adjusted score, and
// the first-ranked candidate is charged the mean penalty of the others.
std::vector<Completion> diverse_beam_search(const ConditionedLm& lm, const BeamCandidate& primed,
                                            const DecoderConfig& config);

}  // namespace nqac::decoder
