#include "test_util.hpp"

#include <cmath>
#include <filesystem>
#include <unistd.h>

namespace nqac::fixtures {

TinySetup tiny_setup(lm::Activation act, std::uint64_t seed) {
  lm::ModelSpec spec;
  spec.word_dim = 3;
  spec.user_dim = 2;
  spec.time_dim = 4;
  spec.hidden = 8;
  spec.layers = 2;
  spec.candidate = act;
  lm::Vocabulary vocab("abcdefgh ");  // 9 regular + 3 reserved = 12
  TinySetup s{lm::LmModel::random(spec, vocab, seed), features::WordEmbeddingTable(3), {}, {}};
  s.words.set("ab", {0.5f, -0.25f, 0.75f});
  s.words.set("hag", {-0.5f, 0.125f, 0.3f});
  s.queries = {"ab cd", "hag fed b", "bead"};
  lm::LmContext c1;
  c1.user = {0.3, -0.7};
  c1.time = features::encode_time(Timestamp::from_civil(2006, 3, 1, 7, 17, 12)).as_array();
  c1.has_time = true;
  lm::LmContext c2;
  c2.user = {-0.2, 0.4};
  c2.time = features::encode_time(Timestamp::from_civil(2006, 3, 5, 22, 1, 0)).as_array();
  c2.has_time = true;
  lm::LmContext c3;
  c3.user = {0.0, 0.0};
  s.contexts = {c1, c2, c3};
  return s;
}

lm::Batch batch_for(const lm::LmModel& model, const features::WordEmbeddingTable* words,
                    const std::vector<std::string>& queries, const std::vector<lm::LmContext>& contexts) {
  const lm::InputEncoder enc(model, words);
  std::vector<lm::EncodedQuery> encoded;
  for (std::size_t i = 0; i < queries.size(); ++i)
    encoded.push_back(lm::encode_for_training(enc, queries[i], contexts[i]));
  std::vector<const lm::EncodedQuery*> ptrs;
  for (const auto& e : encoded) ptrs.push_back(&e);
  return lm::make_batch(ptrs);
}

lm::Gradients finite_difference_gradients(lm::LmModel model, const lm::Batch& batch, lm::Mode mode,
                                          const lm::DropoutSpec& dropout, double eps) {
  lm::Gradients out = model.zero_gradients();
  auto& params = model.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = params[p].value;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double orig = m(i, j);
        m(i, j) = orig + eps;
        const double up = lm::loss(model, batch, mode, dropout).per_query;
        m(i, j) = orig - eps;
        const double down = lm::loss(model, batch, mode, dropout).per_query;
        m(i, j) = orig;
        out[p](i, j) = (up - down) / (2 * eps);
      }
  }
  return out;
}

GradientAgreement compare_gradients(const lm::LmModel& model, const lm::Gradients& analytic,
                                    const lm::Gradients& numeric, double floor) {
  GradientAgreement g;
  for (std::size_t p = 0; p < analytic.size(); ++p)
    for (Eigen::Index i = 0; i < analytic[p].size(); ++i) {
      const double a = analytic[p](i), b = numeric[p](i);
      const double scale = std::max({std::abs(a), std::abs(b), floor});
      const double rel = std::abs(a - b) / scale;
      ++g.entries;
      if (rel > g.worst_relative) {
        g.worst_relative = rel;
        g.worst_tensor = model.params()[p].name;
      }
    }
  return g;
}

std::vector<std::string> toy_queries_50() {
  return {"apple pie recipe",       "bank of america",       "cheap flights to paris", "dog training tips",
          "easy chicken soup",      "free music downloads",  "google maps",            "home depot coupons",
          "irs tax forms",          "jobs in new york",      "kids games online",      "lyrics to yesterday",
          "map of texas",           "news today",            "online banking login",   "pizza hut menu",
          "quick bread recipes",    "real estate listings",  "south park episodes",    "tv guide tonight",
          "used cars for sale",     "verizon wireless",      "weather in boston",      "xbox cheats",
          "yahoo mail",             "zip code lookup",       "amazon books",           "best buy deals",
          "craigslist chicago",     "delta airlines",        "ebay motors",            "fox news",
          "garden plants",          "hotmail sign in",       "ikea furniture",         "java download",
          "kelley blue book",       "lottery results",       "myspace layouts",        "nfl scores",
          "old navy jeans",         "people search",         "quotes about love",      "radio shack",
          "sears outlet",           "target store hours",    "univision novelas",      "vacation rentals",
          "walmart pharmacy",       "youtube videos"};
}

double sequence_log_prob(const decoder::ConditionedLm& lm, std::string_view prefix, std::string_view suffix,
                         bool finished) {
  const auto& model = lm.model();
  const std::string full = std::string(prefix) + std::string(suffix);
  const auto enc = lm::encode_for_training(lm.encoder(), full, lm.context(), 1000);
  const lm::EncodedQuery* ptr = &enc;
  const auto batch = lm::make_batch(std::span<const lm::EncodedQuery* const>(&ptr, 1));
  const auto fwd = lm::forward(model, batch, lm::Mode::infer);
  double total = 0;
  // Step t predicts symbol t + 1; the suffix starts at symbol |prefix|.
  const std::size_t last = finished ? full.size() : full.size() - 1;
  for (std::size_t sym = prefix.size(); sym <= last; ++sym)
    total += std::log(fwd.probabilities[sym - 1](enc.symbols[sym], 0));
  return total;
}

double mean_pairwise_distance(const std::vector<std::string>& texts) {
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < texts.size(); ++i)
    for (std::size_t j = i + 1; j < texts.size(); ++j) {
      sum += decoder::normalized_levenshtein(texts[i], texts[j]);
      ++pairs;
    }
  return pairs ? sum / static_cast<double>(pairs) : 0.0;
}

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nqac_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace nqac::fixtures
