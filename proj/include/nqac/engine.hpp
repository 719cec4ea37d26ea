#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nqac/decoder.hpp"
#include "nqac/lm_model.hpp"
#include "nqac/mpc.hpp"

namespace nqac::engine {

enum class Strategy { mpc, neural, neural_diverse, routed };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

struct SuggestRequest {
  std::string prefix;
  std::optional<std::string> user_id;
  std::optional<Timestamp> timestamp;
  std::size_t k = 10;
  Strategy strategy = Strategy::routed;
};

struct ScoredCompletion {
  std::string text;
  double score = 0;

  friend bool operator==(const ScoredCompletion&, const ScoredCompletion&) = default;
};

struct SuggestResponse {
  std::string prefix;  // normalized
  std::vector<ScoredCompletion> suggestions;
  Strategy strategy = Strategy::mpc;  // branch actually taken
  double latency_ms = 0;
};

struct NeuralArtifacts {
  lm::LmModel model;
  std::optional<features::WordEmbeddingTable> words;
  std::optional<features::UserVectorTable> users;
};

struct EnginePaths {
  std::optional<std::string> trie;
  std::optional<std::string> model;
  std::optional<std::string> word_embeddings;
  std::optional<std::string> user_vectors;
};

// Serves MPC, neural and routed suggestions. Immutable after construction;
// suggest() is safe to call concurrently.
class QacEngine {
 public:
  QacEngine(std::optional<mpc::CountedTrie> trie, std::optional<NeuralArtifacts> neural,
            decoder::DecoderConfig decoder_config = {});

  // Throws ConfigError naming the artifact that could not be loaded.
  static QacEngine build(const EnginePaths& paths, const decoder::DecoderConfig& decoder_config = {});

  bool has_trie() const { return trie_.has_value(); }
  bool has_model() const { return neural_.has_value(); }
  const mpc::CountedTrie* trie() const { return trie_ ? &*trie_ : nullptr; }
  const NeuralArtifacts* neural() const { return neural_ ? &*neural_ : nullptr; }
  const decoder::DecoderConfig& decoder_config() const { return decoder_config_; }

  // Throws ConfigError when the strategy needs an artifact the engine lacks
  // or the request is invalid.
  SuggestResponse suggest(const SuggestRequest& request) const;

 private:
  std::vector<ScoredCompletion> suggest_mpc(const std::string& prefix, std::size_t k) const;
  std::vector<ScoredCompletion> suggest_neural(const std::string& prefix, const SuggestRequest& request,
                                               bool diverse) const;

  std::optional<mpc::CountedTrie> trie_;
  std::optional<NeuralArtifacts> neural_;
  decoder::DecoderConfig decoder_config_;
};

}  // namespace nqac::engine
