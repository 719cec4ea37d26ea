#include "nqac/engine.hpp"

#include <chrono>

#include "nqac/corpus.hpp"
#include "nqac/errors.hpp"

namespace nqac::engine {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::mpc: return "mpc";
    case Strategy::neural: return "neural";
    case Strategy::neural_diverse: return "neural_diverse";
    case Strategy::routed: return "routed";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (auto s : {Strategy::mpc, Strategy::neural, Strategy::neural_diverse, Strategy::routed})
    if (to_string(s) == name) return s;
  return std::nullopt;
}

QacEngine::QacEngine(std::optional<mpc::CountedTrie> trie, std::optional<NeuralArtifacts> neural,
                     decoder::DecoderConfig decoder_config)
    : trie_(std::move(trie)), neural_(std::move(neural)), decoder_config_(decoder_config) {
  if (!trie_ && !neural_) throw ConfigError("engine needs a trie, a model, or both");
  decoder_config_.validate();
  if (neural_ && neural_->words && neural_->model.spec().word_dim > 0 &&
      neural_->words->dim() != neural_->model.spec().word_dim)
    throw ConfigError("word embedding dimension does not match the model");
  if (neural_ && neural_->users && neural_->model.spec().user_dim > 0 &&
      neural_->users->dim() != neural_->model.spec().user_dim)
    throw ConfigError("user vector dimension does not match the model");
}

QacEngine QacEngine::build(const EnginePaths& paths, const decoder::DecoderConfig& decoder_config) {
  auto load = [](const std::string& path, auto&& loader) {
    try {
      return loader(path);
    } catch (const std::exception& e) {
      throw ConfigError("cannot load " + path + ": " + e.what());
    }
  };
  std::optional<mpc::CountedTrie> trie;
  if (paths.trie) trie = load(*paths.trie, [](const std::string& p) { return mpc::CountedTrie::load_file(p); });
  std::optional<NeuralArtifacts> neural;
  if (paths.model) {
    neural.emplace(NeuralArtifacts{load(*paths.model, [](const std::string& p) { return lm::LmModel::load_file(p); }),
                                   std::nullopt, std::nullopt});
    if (paths.word_embeddings)
      neural->words = load(*paths.word_embeddings,
                           [](const std::string& p) { return features::VectorTable::load_text_file(p); });
    if (paths.user_vectors)
      neural->users = load(*paths.user_vectors,
                           [](const std::string& p) { return features::VectorTable::load_text_file(p); });
  }
  return QacEngine(std::move(trie), std::move(neural), decoder_config);
}

std::vector<ScoredCompletion> QacEngine::suggest_mpc(const std::string& prefix, std::size_t k) const {
  std::vector<ScoredCompletion> out;
  for (auto& c : trie_->complete(prefix, k)) out.push_back({std::move(c.query), static_cast<double>(c.count)});
  return out;
}

std::vector<ScoredCompletion> QacEngine::suggest_neural(const std::string& prefix, const SuggestRequest& request,
                                                        bool diverse) const {
  const auto& n = *neural_;
  const auto ctx = lm::make_context(n.model.spec(), n.users ? &*n.users : nullptr, request.user_id, request.timestamp);
  const decoder::ConditionedLm lm(n.model, n.words ? &*n.words : nullptr, ctx);
  auto config = decoder_config_;
  config.k = request.k;
  config.beam_width = std::max(config.beam_width, request.k);
  const auto primed = lm.prime(prefix);
  const auto completions =
      diverse ? decoder::diverse_beam_search(lm, primed, config) : decoder::beam_search(lm, primed, config);
  std::vector<ScoredCompletion> out;
  out.reserve(completions.size());
  for (const auto& c : completions) out.push_back({c.text, c.score});
  return out;
}

SuggestResponse QacEngine::suggest(const SuggestRequest& request) const {
  const auto started = std::chrono::steady_clock::now();
  if (request.k < 1) throw ConfigError("k must be at least 1");
  SuggestResponse response;
  response.prefix = corpus::normalize_prefix(request.prefix);
  if (response.prefix.empty()) throw ConfigError("prefix is empty after normalization");

  Strategy branch = request.strategy;
  if (branch == Strategy::routed) {
    if (!trie_) throw ConfigError("routed strategy needs a trie");
    branch = trie_->is_seen(response.prefix) ? Strategy::mpc : Strategy::neural;
  }
  switch (branch) {
    case Strategy::mpc:
      if (!trie_) throw ConfigError("mpc strategy needs a trie");
      response.suggestions = suggest_mpc(response.prefix, request.k);
      break;
    case Strategy::neural:
    case Strategy::neural_diverse:
      if (!neural_) throw ConfigError(std::string(to_string(branch)) + " strategy needs a language model");
      response.suggestions = suggest_neural(response.prefix, request, branch == Strategy::neural_diverse);
      break;
    case Strategy::routed:
      break;
  }
  response.strategy = branch;
  response.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return response;
}

}  // namespace nqac::engine
