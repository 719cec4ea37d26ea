#include <Eigen/Dense>
#include <algorithm>
#include <random>
#include <unordered_map>

#include "nqac/errors.hpp"
#include "nqac/features.hpp"

namespace nqac::features {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

// Row-wise log-softmax of word-by-user scores.
MatrixXd log_posteriors(const MatrixXd& words, const MatrixXd& users) {
  MatrixXd s = words * users.transpose();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    const double lse = m + std::log((s.row(i).array() - m).exp().sum());
    s.row(i).array() -= lse;
  }
  return s;
}

}  // namespace

std::map<std::string, std::vector<std::string>> build_user_histories(
    const std::vector<corpus::QueryRecord>& records, std::size_t max_queries_per_user) {
  std::map<std::string, std::vector<const corpus::QueryRecord*>> by_user;
  for (const auto& r : records) by_user[r.user_id].push_back(&r);
  std::map<std::string, std::vector<std::string>> histories;
  for (auto& [user, recs] : by_user) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const auto* a, const auto* b) { return a->timestamp < b->timestamp; });
    const std::size_t start =
        max_queries_per_user == 0 || recs.size() <= max_queries_per_user
            ? 0
            : recs.size() - max_queries_per_user;
    auto& words = histories[user];
    for (std::size_t i = start; i < recs.size(); ++i)
      for (auto& w : corpus::split_words(recs[i]->query)) words.push_back(std::move(w));
  }
  return histories;
}

UserVectorTraining train_user_vectors(
    const std::map<std::string, std::vector<std::string>>& histories, const UserVectorConfig& config) {
  if (config.dim <= 0) throw ConfigError("user vector dimension must be positive");
  if (config.epochs < 0) throw ConfigError("epochs must be non-negative");
  const auto dim = static_cast<Eigen::Index>(config.dim);

  std::vector<std::string> users;
  std::vector<std::string> words;
  std::unordered_map<std::string, Eigen::Index> word_index;
  std::vector<std::vector<Eigen::Index>> history_ids;
  for (const auto& [user, hist] : histories) {
    if (hist.empty()) continue;
    users.push_back(user);
    auto& ids = history_ids.emplace_back();
    for (const auto& w : hist) {
      auto [it, inserted] = word_index.emplace(w, static_cast<Eigen::Index>(words.size()));
      if (inserted) words.push_back(w);
      ids.push_back(it->second);
    }
  }

  UserVectorTraining result;
  result.table = UserVectorTable(static_cast<std::size_t>(dim));
  result.word_vectors = VectorTable(static_cast<std::size_t>(dim));
  if (users.empty()) return result;

  const auto n_users = static_cast<Eigen::Index>(users.size());
  const auto n_words = static_cast<Eigen::Index>(words.size());

  std::mt19937_64 rng(config.seed);
  MatrixXd word_vecs(n_words, dim);
  for (Eigen::Index i = 0; i < n_words; ++i)
    for (Eigen::Index d = 0; d < dim; ++d)
      word_vecs(i, d) = (uniform01(rng) - 0.5) / static_cast<double>(dim);
  MatrixXd user_vecs = MatrixXd::Zero(n_users, dim);

  // weight(w, u) = multiplicity of w in Q^u / (|U| * |Q^u|)
  MatrixXd weight = MatrixXd::Zero(n_words, n_users);
  for (Eigen::Index u = 0; u < n_users; ++u) {
    const auto& ids = history_ids[u];
    const double w = 1.0 / (static_cast<double>(n_users) * static_cast<double>(ids.size()));
    for (auto id : ids) weight(id, u) += w;
  }

  auto record = [&] {
    const MatrixXd logp = log_posteriors(word_vecs, user_vecs);
    result.objective.push_back((weight.array() * logp.array()).sum());
    std::vector<double> per_user(users.size());
    for (Eigen::Index u = 0; u < n_users; ++u)
      per_user[u] = (weight.col(u).array() * logp.col(u).array()).sum() * static_cast<double>(n_users);
    result.per_user.push_back(std::move(per_user));
  };
  record();

  std::vector<Eigen::Index> order(users.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.full_batch) {
      const MatrixXd logp = log_posteriors(word_vecs, user_vecs);
      const MatrixXd post = logp.array().exp();
      const VectorXd word_mass = weight.rowwise().sum();
      const MatrixXd g = weight - word_mass.asDiagonal() * post;  // dJ/dscores
      const MatrixXd d_users = g.transpose() * word_vecs;
      const MatrixXd d_words = g * user_vecs;
      user_vecs += config.learning_rate * d_users;
      word_vecs += config.learning_rate * d_words;
    } else {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
      VectorXd scores(n_users);
      for (auto u : order) {
        const auto& ids = history_ids[u];
        for (std::size_t it = 0; it < ids.size(); ++it) {
          const auto w = ids[rng() % ids.size()];
          scores = user_vecs * word_vecs.row(w).transpose();
          const double m = scores.maxCoeff();
          VectorXd p = (scores.array() - m).exp();
          p /= p.sum();
          VectorXd g = -p;
          g(u) += 1.0;
          const Eigen::RowVectorXd d_word = g.transpose() * user_vecs;
          user_vecs += config.learning_rate * g * word_vecs.row(w);
          word_vecs.row(w) += config.learning_rate * d_word;
        }
      }
    }
    record();
  }

  for (Eigen::Index u = 0; u < n_users; ++u) {
    std::vector<float> v(static_cast<std::size_t>(dim));
    for (Eigen::Index d = 0; d < dim; ++d) v[d] = static_cast<float>(user_vecs(u, d));
    result.table.set(users[u], std::move(v));
  }
  for (Eigen::Index i = 0; i < n_words; ++i) {
    std::vector<float> v(static_cast<std::size_t>(dim));
    for (Eigen::Index d = 0; d < dim; ++d) v[d] = static_cast<float>(word_vecs(i, d));
    result.word_vectors.set(words[i], std::move(v));
  }
  return result;
}

std::vector<double> user_posterior(const UserVectorTraining& model, std::string_view word) {
  if (!model.word_vectors.contains(word)) return {};
  const auto w = model.word_vectors.lookup(word);
  std::vector<double> scores;
  for (const auto& user : model.table.keys()) {
    const auto u = model.table.lookup(user);
    double dot = 0;
    for (std::size_t d = 0; d < w.size(); ++d) dot += double(u[d]) * w[d];
    scores.push_back(dot);
  }
  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0;
  for (auto& s : scores) z += (s = std::exp(s - m));
  for (auto& s : scores) s /= z;
  return scores;
}

}  // namespace nqac::features
