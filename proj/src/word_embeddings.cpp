#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "nqac/errors.hpp"
#include "nqac/features.hpp"

namespace nqac::features {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

WordEmbeddingTable train_word_embeddings(const std::vector<std::string>& queries,
                                         const WordEmbeddingConfig& config) {
  if (config.dim == 0) throw ConfigError("embedding dimension must be positive");
  if (config.epochs < 0 || config.window < 1 || config.negative_samples < 0)
    throw ConfigError("invalid skip-gram configuration");

  // Vocabulary in first-occurrence order keeps the table deterministic.
  std::vector<std::string> words;
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::uint64_t> freq;
  std::vector<std::vector<std::uint32_t>> sentences;
  sentences.reserve(queries.size());
  for (const auto& q : queries) {
    std::vector<std::uint32_t> ids;
    for (auto& w : corpus::split_words(q)) {
      auto [it, inserted] = index.emplace(w, static_cast<std::uint32_t>(words.size()));
      if (inserted) {
        words.push_back(w);
        freq.push_back(0);
      }
      ++freq[it->second];
      ids.push_back(it->second);
    }
    if (!ids.empty()) sentences.push_back(std::move(ids));
  }
  if (words.empty()) throw ConfigError("word embedding corpus is empty");

  const std::size_t dim = config.dim;
  const std::size_t vocab = words.size();
  std::mt19937_64 rng(config.seed);
  std::vector<double> input(vocab * dim), output(vocab * dim, 0.0);
  for (auto& x : input) x = (uniform01(rng) - 0.5) / static_cast<double>(dim);

  // Unigram^0.75 noise distribution as a cumulative table.
  std::vector<double> noise_cdf(vocab);
  double acc = 0;
  for (std::size_t i = 0; i < vocab; ++i) {
    acc += std::pow(static_cast<double>(freq[i]), 0.75);
    noise_cdf[i] = acc;
  }
  auto draw_noise = [&] {
    const double u = uniform01(rng) * acc;
    auto it = std::upper_bound(noise_cdf.begin(), noise_cdf.end(), u);
    return static_cast<std::uint32_t>(std::min<std::size_t>(it - noise_cdf.begin(), vocab - 1));
  };

  std::size_t total_tokens = 0;
  for (const auto& s : sentences) total_tokens += s.size();
  const double total_steps = std::max(1.0, double(total_tokens) * std::max(1, config.epochs));
  double processed = 0;

  std::vector<double> grad_in(dim);
  auto train_pair = [&](std::uint32_t center, std::uint32_t context, double lr) {
    double* in = &input[center * dim];
    std::fill(grad_in.begin(), grad_in.end(), 0.0);
    for (int n = 0; n <= config.negative_samples; ++n) {
      std::uint32_t target;
      double label;
      if (n == 0) {
        target = context;
        label = 1;
      } else {
        target = draw_noise();
        if (target == context) continue;
        label = 0;
      }
      double* out = &output[target * dim];
      double dot = 0;
      for (std::size_t d = 0; d < dim; ++d) dot += in[d] * out[d];
      const double g = (label - sigmoid(dot)) * lr;
      for (std::size_t d = 0; d < dim; ++d) {
        grad_in[d] += g * out[d];
        out[d] += g * in[d];
      }
    }
    for (std::size_t d = 0; d < dim; ++d) in[d] += grad_in[d];
  };

  std::vector<std::size_t> order(sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (auto si : order) {
      const auto& s = sentences[si];
      for (std::size_t pos = 0; pos < s.size(); ++pos) {
        const double lr = std::max(config.learning_rate * 1e-4,
                                   config.learning_rate * (1.0 - processed / total_steps));
        processed += 1;
        const auto reduced = static_cast<int>(rng() % static_cast<std::uint64_t>(config.window));
        const int span = config.window - reduced;
        const auto lo = pos >= std::size_t(span) ? pos - span : 0;
        const auto hi = std::min(s.size() - 1, pos + span);
        for (auto c = lo; c <= hi; ++c)
          if (c != pos) train_pair(s[pos], s[c], lr);
      }
    }
  }

  // Exported vector is input + output: words that co-occur, and not only
  // words that share contexts, end up close.
  WordEmbeddingTable table(dim);
  for (std::size_t i = 0; i < vocab; ++i) {
    std::vector<float> v(dim);
    for (std::size_t d = 0; d < dim; ++d) v[d] = static_cast<float>(input[i * dim + d] + output[i * dim + d]);
    table.set(words[i], std::move(v));
  }
  return table;
}

}  // namespace nqac::features
