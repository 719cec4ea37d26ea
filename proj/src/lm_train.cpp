#include "nqac/lm_train.hpp"

#include <chrono>
#include <cmath>
#include "json.hpp"
#include <ostream>
#include <random>

#include "nqac/errors.hpp"

namespace nqac::lm {

namespace {

std::vector<EncodedQuery> encode_all(const InputEncoder& encoder, const std::vector<TrainingExample>& examples,
                                     std::size_t max_len) {
  std::vector<EncodedQuery> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode_for_training(encoder, ex.query, ex.context, max_len));
  return out;
}

LossValue pass_loss(const LmModel& model, const std::vector<EncodedQuery>& encoded, std::size_t batch_size) {
  LossValue total;
  double sum = 0;
  std::vector<const EncodedQuery*> ptrs;
  for (std::size_t start = 0; start < encoded.size(); start += batch_size) {
    ptrs.clear();
    for (std::size_t i = start; i < std::min(encoded.size(), start + batch_size); ++i) ptrs.push_back(&encoded[i]);
    const auto v = loss(model, make_batch(ptrs), Mode::infer);
    sum += v.per_query * static_cast<double>(v.queries);
    total.queries += v.queries;
    total.positions += v.positions;
  }
  if (total.queries) total.per_query = sum / static_cast<double>(total.queries);
  if (total.positions) total.per_char = sum / static_cast<double>(total.positions);
  return total;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(clip_norm > 0)) throw ConfigError("clip norm must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
  if (max_sequence_length == 0) throw ConfigError("sequence length cap must be positive");
}

LossValue evaluate_loss(const LmModel& model, const features::WordEmbeddingTable* words,
                        const std::vector<TrainingExample>& examples, std::size_t batch_size,
                        std::size_t max_sequence_length) {
  if (examples.empty()) throw ContractError("empty example set");
  const InputEncoder encoder(model, words);
  return pass_loss(model, encode_all(encoder, examples, max_sequence_length), std::max<std::size_t>(1, batch_size));
}

TrainResult train(LmModel& model, const features::WordEmbeddingTable* words,
                  const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& validation_set, const TrainConfig& config,
                  const StepObserver& observer, std::ostream* metrics_log) {
  config.validate();
  if (train_set.empty()) throw ContractError("training set is empty");

  const InputEncoder encoder(model, words);
  const auto train_enc = encode_all(encoder, train_set, config.max_sequence_length);
  const auto val_enc = encode_all(encoder, validation_set, config.max_sequence_length);

  auto& params = model.params();
  Gradients m1 = model.zero_gradients();
  Gradients m2 = model.zero_gradients();
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_enc.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  std::size_t step_count = 0;
  std::vector<const EncodedQuery*> ptrs;
  const auto started = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      ptrs.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        ptrs.push_back(&train_enc[order[i]]);
      const Batch batch = make_batch(ptrs);
      auto g = gradients(model, batch, Mode::train, DropoutSpec{config.dropout, rng()});
      if (!std::isfinite(g.loss.per_query)) throw TrainingError("training loss is not finite", epoch);

      double sq = 0;
      for (const auto& t : g.params) sq += t.squaredNorm();
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm)) throw TrainingError("gradient is not finite", epoch);
      const double scale = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
      ++step_count;
      if (observer) observer({epoch, step_count, norm, norm * scale});

      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step_count));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step_count));
      for (std::size_t p = 0; p < params.size(); ++p) {
        const MatrixXd gp = g.params[p] * scale;
        m1[p] = config.beta1 * m1[p] + (1.0 - config.beta1) * gp;
        m2[p] = config.beta2 * m2[p] + (1.0 - config.beta2) * gp.cwiseAbs2();
        params[p].value.array() -= config.learning_rate * (m1[p].array() / bc1) /
                                   ((m2[p].array() / bc2).sqrt() + config.epsilon);
      }
      model.snap_to_float();
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train = pass_loss(model, train_enc, std::max<std::size_t>(config.batch_size, 64));
    if (!std::isfinite(metrics.train.per_query)) throw TrainingError("training loss is not finite", epoch);
    if (!val_enc.empty()) metrics.validation = pass_loss(model, val_enc, std::max<std::size_t>(config.batch_size, 64));
    metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (metrics_log) {
      nlohmann::json line{{"epoch", epoch},
                          {"train_loss", metrics.train.per_query},
                          {"train_loss_per_char", metrics.train.per_char},
                          {"val_loss", metrics.validation ? nlohmann::json(metrics.validation->per_query)
                                                          : nlohmann::json(nullptr)},
                          {"wall_seconds", metrics.wall_seconds}};
      *metrics_log << line.dump() << '\n';
      metrics_log->flush();
    }
    result.history.push_back(metrics);
  }
  return result;
}

}  // namespace nqac::lm
