#include "nqac/lm_model.hpp"

#include <cmath>
#include <random>

#include "nqac/errors.hpp"

namespace nqac::lm {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

MatrixXd sigmoid(const MatrixXd& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

MatrixXd activate(const MatrixXd& a, Activation act) {
  return act == Activation::relu ? MatrixXd(a.cwiseMax(0.0)) : MatrixXd(a.array().tanh().matrix());
}

// d act / d a expressed through the pre-activation and activation value.
MatrixXd activate_grad(const MatrixXd& pre, const MatrixXd& value, Activation act) {
  if (act == Activation::relu) return (pre.array() > 0.0).cast<double>().matrix();
  return (1.0 - value.array().square()).matrix();
}

// Column-wise log-softmax.
MatrixXd log_softmax(const MatrixXd& logits) {
  MatrixXd out = logits;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double m = out.col(c).maxCoeff();
    const double lse = m + std::log((out.col(c).array() - m).exp().sum());
    out.col(c).array() -= lse;
  }
  return out;
}

struct LayerStep {
  MatrixXd x, h_prev, z, r, pre_c, cand, h;
};

struct Cache {
  std::vector<std::vector<LayerStep>> layers;  // [layer][t]
  std::vector<std::vector<MatrixXd>> masks;    // [layer][t], empty when no dropout
  std::vector<MatrixXd> top;                   // dropped output of last layer, per t
  std::vector<MatrixXd> log_probs;             // per t
};

void check_batch(const LmModel& model, const Batch& batch) {
  if (batch.steps() == 0 || batch.size() == 0) throw ContractError("empty batch");
  if (batch.targets.size() != batch.steps()) throw ContractError("batch targets/inputs length mismatch");
  for (std::size_t t = 0; t < batch.steps(); ++t) {
    if (static_cast<std::size_t>(batch.inputs[t].rows()) != model.input_dim() ||
        static_cast<std::size_t>(batch.inputs[t].cols()) != batch.size() ||
        batch.targets[t].size() != batch.size())
      throw ContractError("batch shape does not match model input spec");
  }
}

Cache run_forward(const LmModel& model, const Batch& batch, Mode mode, const DropoutSpec& dropout) {
  check_batch(model, batch);
  const auto& spec = model.spec();
  const auto H = static_cast<Eigen::Index>(spec.hidden);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const std::size_t T = batch.steps();
  const bool drop = mode == Mode::train && dropout.rate > 0.0;
  if (drop && dropout.rate >= 1.0) throw ContractError("dropout rate must be below 1");

  Cache cache;
  cache.layers.assign(spec.layers, std::vector<LayerStep>(T));
  if (drop) {
    cache.masks.assign(spec.layers, std::vector<MatrixXd>(T));
    std::mt19937_64 rng(dropout.seed);
    const double scale = 1.0 / (1.0 - dropout.rate);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t l = 0; l < spec.layers; ++l) {
        MatrixXd m(H, B);
        for (Eigen::Index j = 0; j < B; ++j)
          for (Eigen::Index i = 0; i < H; ++i) m(i, j) = uniform01(rng) < dropout.rate ? 0.0 : scale;
        cache.masks[l][t] = std::move(m);
      }
  }

  std::vector<MatrixXd> h(spec.layers, MatrixXd::Zero(H, B));
  cache.top.resize(T);
  cache.log_probs.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    MatrixXd x = batch.inputs[t];
    for (std::size_t l = 0; l < spec.layers; ++l) {
      auto& s = cache.layers[l][t];
      const auto& W = model.gru_w(l);
      const auto& U = model.gru_u(l);
      const auto& b = model.gru_b(l);
      s.x = std::move(x);
      s.h_prev = h[l];
      MatrixXd gx = W * s.x;
      gx.colwise() += b.col(0);
      MatrixXd zr = gx.topRows(2 * H) + U.topRows(2 * H) * s.h_prev;
      zr = sigmoid(zr);
      s.z = zr.topRows(H);
      s.r = zr.bottomRows(H);
      s.pre_c = gx.bottomRows(H) + U.bottomRows(H) * s.r.cwiseProduct(s.h_prev);
      s.cand = activate(s.pre_c, spec.candidate);
      s.h = (1.0 - s.z.array()) * s.h_prev.array() + s.z.array() * s.cand.array();
      h[l] = s.h;
      x = drop ? MatrixXd(s.h.cwiseProduct(cache.masks[l][t])) : s.h;
    }
    MatrixXd logits = model.out_w() * x;
    logits.colwise() += model.out_b().col(0);
    cache.log_probs[t] = log_softmax(logits);
    cache.top[t] = std::move(x);
  }
  return cache;
}

LossValue compute_loss(const Batch& batch, const Cache& cache) {
  LossValue v;
  v.queries = batch.size();
  double total = 0;
  for (std::size_t t = 0; t < batch.steps(); ++t)
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const int target = batch.targets[t][b];
      if (target < 0) continue;
      total -= cache.log_probs[t](target, static_cast<Eigen::Index>(b));
      ++v.positions;
    }
  v.per_query = total / static_cast<double>(v.queries);
  v.per_char = v.positions ? total / static_cast<double>(v.positions) : 0.0;
  return v;
}

void init_uniform(MatrixXd& m, double bound, std::mt19937_64& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * uniform01(rng) - 1.0) * bound;
}

}  // namespace

// ---------------------------------------------------------------------------
// LmModel

LmModel::LmModel(const ModelSpec& spec, Vocabulary vocab) : spec_(spec), vocab_(std::move(vocab)) {
  if (spec_.hidden == 0 || spec_.layers == 0) throw ConfigError("model needs at least one hidden unit and layer");
  const auto H = static_cast<Eigen::Index>(spec_.hidden);
  const auto V = static_cast<Eigen::Index>(vocab_.size());
  for (std::size_t l = 0; l < spec_.layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? input_dim() : spec_.hidden);
    const auto p = "gru" + std::to_string(l);
    params_.push_back({p + ".w", MatrixXd::Zero(3 * H, in)});
    params_.push_back({p + ".u", MatrixXd::Zero(3 * H, H)});
    params_.push_back({p + ".b", MatrixXd::Zero(3 * H, 1)});
  }
  params_.push_back({"out.w", MatrixXd::Zero(V, H)});
  params_.push_back({"out.b", MatrixXd::Zero(V, 1)});
}

LmModel LmModel::random(const ModelSpec& spec, Vocabulary vocab, std::uint64_t seed) {
  LmModel m(spec, std::move(vocab));
  std::mt19937_64 rng(seed);
  const double hidden_bound = 1.0 / std::sqrt(static_cast<double>(spec.hidden));
  for (auto& p : m.params_) {
    // Weight matrices use their own fan-in; biases use the hidden fan-in.
    const bool is_bias = p.value.cols() == 1;
    const double bound = is_bias ? hidden_bound : 1.0 / std::sqrt(static_cast<double>(p.value.cols()));
    init_uniform(p.value, bound, rng);
  }
  m.snap_to_float();
  return m;
}

std::size_t LmModel::input_dim() const {
  return vocab_.size() + spec_.word_dim + spec_.user_dim + spec_.time_dim;
}

Gradients LmModel::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(MatrixXd::Zero(p.value.rows(), p.value.cols()));
  return g;
}

std::size_t LmModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void LmModel::snap_to_float() {
  for (auto& p : params_) p.value = p.value.cast<float>().cast<double>();
}

// ---------------------------------------------------------------------------
// Encoding

LmContext make_context(const ModelSpec& spec, const features::UserVectorTable* users,
                       const std::optional<std::string>& user_id,
                       const std::optional<Timestamp>& timestamp) {
  LmContext ctx;
  ctx.user.assign(spec.user_dim, 0.0);
  if (users && user_id && users->dim() == spec.user_dim) {
    const auto v = users->lookup(*user_id);
    for (std::size_t i = 0; i < spec.user_dim; ++i) ctx.user[i] = v[i];
  }
  if (timestamp) {
    ctx.time = features::encode_time(*timestamp).as_array();
    ctx.has_time = true;
  }
  return ctx;
}

InputEncoder::InputEncoder(const LmModel& model, const features::WordEmbeddingTable* words)
    : model_(model), words_(words), input_dim_(model.input_dim()) {
  if (words_ && model.spec().word_dim > 0 && words_->dim() != model.spec().word_dim)
    throw ContractError("word table dimension " + std::to_string(words_->dim()) +
                        " does not match model word slot " + std::to_string(model.spec().word_dim));
}

void InputEncoder::encode_symbol(int index, std::string_view text_before, const LmContext& context,
                                 Eigen::Ref<VectorXd> column) const {
  const auto& spec = model_.spec();
  const auto V = model_.vocab_size();
  column.setZero();
  column(index) = 1.0;
  std::size_t off = V;
  if (spec.word_dim > 0 && words_ && index != model_.vocab().end_index() &&
      model_.vocab().symbol(index) == ' ') {
    auto end = text_before.size();
    while (end > 0 && text_before[end - 1] == ' ') --end;
    auto start = end;
    while (start > 0 && text_before[start - 1] != ' ') --start;
    if (end > start) {
      const auto v = words_->lookup(text_before.substr(start, end - start));
      for (std::size_t i = 0; i < spec.word_dim; ++i) column(static_cast<Eigen::Index>(off + i)) = v[i];
    }
  }
  off += spec.word_dim;
  if (spec.user_dim > 0) {
    if (context.user.size() != spec.user_dim) throw ContractError("user context has wrong dimension");
    for (std::size_t i = 0; i < spec.user_dim; ++i)
      column(static_cast<Eigen::Index>(off + i)) = context.user[i];
  }
  off += spec.user_dim;
  if (context.has_time)
    for (std::size_t i = 0; i < spec.time_dim && i < 4; ++i)
      column(static_cast<Eigen::Index>(off + i)) = context.time[i];
}

void InputEncoder::encode_position(std::string_view text, std::size_t pos, const LmContext& context,
                                   Eigen::Ref<VectorXd> column) const {
  const int index = pos < text.size() ? model_.vocab().index_of(text[pos]) : model_.vocab().end_index();
  encode_symbol(index, text.substr(0, std::min(pos, text.size())), context, column);
}

MatrixXd InputEncoder::encode_query(std::string_view text, const LmContext& context) const {
  MatrixXd m(static_cast<Eigen::Index>(input_dim_), static_cast<Eigen::Index>(text.size() + 1));
  for (std::size_t t = 0; t <= text.size(); ++t) encode_position(text, t, context, m.col(static_cast<Eigen::Index>(t)));
  return m;
}

EncodedQuery encode_for_training(const InputEncoder& encoder, std::string_view query,
                                 const LmContext& context, std::size_t max_length) {
  if (query.size() > max_length) query = query.substr(0, max_length);
  EncodedQuery e;
  e.inputs = encoder.encode_query(query, context);
  for (char c : query) e.symbols.push_back(encoder.vocab().index_of(c));
  e.symbols.push_back(encoder.vocab().end_index());
  return e;
}

std::size_t Batch::predicted_positions() const {
  std::size_t n = 0;
  for (const auto& row : targets)
    for (int t : row) n += t >= 0;
  return n;
}

}  // namespace nqac::lm

namespace nqac::lm {

Batch make_batch(std::span<const EncodedQuery* const> queries) {
  if (queries.empty()) throw ContractError("empty batch");
  std::size_t steps = 0;
  for (const auto* q : queries) steps = std::max(steps, q->symbols.size() - 1);
  if (steps == 0) steps = 1;
  const auto rows = queries.front()->inputs.rows();
  const auto B = static_cast<Eigen::Index>(queries.size());
  Batch batch;
  batch.inputs.assign(steps, MatrixXd::Zero(rows, B));
  batch.targets.assign(steps, std::vector<int>(queries.size(), -1));
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& q = *queries[static_cast<std::size_t>(b)];
    const std::size_t n = q.symbols.size() - 1;  // predicted positions
    for (std::size_t t = 0; t < n; ++t) {
      batch.inputs[t].col(b) = q.inputs.col(static_cast<Eigen::Index>(t));
      batch.targets[t][static_cast<std::size_t>(b)] = q.symbols[t + 1];
    }
  }
  return batch;
}

ForwardResult forward(const LmModel& model, const Batch& batch, Mode mode, const DropoutSpec& dropout) {
  Cache cache = run_forward(model, batch, mode, dropout);
  ForwardResult r;
  r.probabilities.reserve(batch.steps());
  for (auto& lp : cache.log_probs) r.probabilities.push_back(lp.array().exp().matrix());
  for (std::size_t l = 0; l < model.spec().layers; ++l) r.final_states.push_back(cache.layers[l].back().h);
  return r;
}

LossValue loss(const LmModel& model, const Batch& batch, Mode mode, const DropoutSpec& dropout) {
  return compute_loss(batch, run_forward(model, batch, mode, dropout));
}

LossGradients gradients(const LmModel& model, const Batch& batch, Mode mode, const DropoutSpec& dropout,
                        bool input_gradients) {
  const Cache cache = run_forward(model, batch, mode, dropout);
  const auto& spec = model.spec();
  const auto H = static_cast<Eigen::Index>(spec.hidden);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const std::size_t T = batch.steps();
  const std::size_t L = spec.layers;
  const bool drop = !cache.masks.empty();

  LossGradients out;
  out.loss = compute_loss(batch, cache);
  out.params = model.zero_gradients();
  auto& d_out_w = out.params[3 * L];
  auto& d_out_b = out.params[3 * L + 1];
  const double inv_q = 1.0 / static_cast<double>(B);

  // Gradient w.r.t. each layer's output h (before dropout), per step.
  std::vector<MatrixXd> d_from_above(T);
  for (std::size_t t = 0; t < T; ++t) {
    MatrixXd d_logits = cache.log_probs[t].array().exp().matrix();
    for (Eigen::Index b = 0; b < B; ++b) {
      const int target = batch.targets[t][static_cast<std::size_t>(b)];
      if (target < 0) {
        d_logits.col(b).setZero();
      } else {
        d_logits(target, b) -= 1.0;
      }
    }
    d_logits *= inv_q;
    d_out_w.noalias() += d_logits * cache.top[t].transpose();
    d_out_b.col(0) += d_logits.rowwise().sum();
    MatrixXd d_top = model.out_w().transpose() * d_logits;
    if (drop) d_top = d_top.cwiseProduct(cache.masks[L - 1][t]);
    d_from_above[t] = std::move(d_top);
  }

  if (input_gradients) out.inputs.resize(T);
  for (std::size_t li = L; li-- > 0;) {
    const auto& W = model.gru_w(li);
    const auto& U = model.gru_u(li);
    auto& dW = out.params[3 * li];
    auto& dU = out.params[3 * li + 1];
    auto& db = out.params[3 * li + 2];
    const bool need_dx = li > 0 || input_gradients;
    std::vector<MatrixXd> d_below(need_dx ? T : 0);
    MatrixXd d_h_next = MatrixXd::Zero(H, B);
    for (std::size_t t = T; t-- > 0;) {
      const auto& s = cache.layers[li][t];
      const MatrixXd d_h = d_from_above[t] + d_h_next;
      const MatrixXd d_z = d_h.cwiseProduct(s.cand - s.h_prev);
      const MatrixXd d_cand = d_h.cwiseProduct(s.z);
      MatrixXd d_hprev = d_h.cwiseProduct((1.0 - s.z.array()).matrix());
      const MatrixXd d_pre_c = d_cand.cwiseProduct(activate_grad(s.pre_c, s.cand, spec.candidate));

      MatrixXd d_gates(3 * H, B);
      const MatrixXd rh = s.r.cwiseProduct(s.h_prev);
      const MatrixXd d_rh = U.bottomRows(H).transpose() * d_pre_c;
      const MatrixXd d_r = d_rh.cwiseProduct(s.h_prev);
      d_hprev += d_rh.cwiseProduct(s.r);
      d_gates.topRows(H) = d_z.cwiseProduct(s.z.cwiseProduct((1.0 - s.z.array()).matrix()));
      d_gates.middleRows(H, H) = d_r.cwiseProduct(s.r.cwiseProduct((1.0 - s.r.array()).matrix()));
      d_gates.bottomRows(H) = d_pre_c;

      dW.noalias() += d_gates * s.x.transpose();
      db.col(0) += d_gates.rowwise().sum();
      dU.topRows(2 * H).noalias() += d_gates.topRows(2 * H) * s.h_prev.transpose();
      dU.bottomRows(H).noalias() += d_pre_c * rh.transpose();
      d_hprev.noalias() += U.topRows(2 * H).transpose() * d_gates.topRows(2 * H);
      d_h_next = std::move(d_hprev);
      if (need_dx) d_below[t] = W.transpose() * d_gates;
    }
    if (li > 0) {
      for (std::size_t t = 0; t < T; ++t)
        d_from_above[t] = drop ? MatrixXd(d_below[t].cwiseProduct(cache.masks[li - 1][t])) : d_below[t];
    } else if (input_gradients) {
      out.inputs = std::move(d_below);
    }
  }
  return out;
}

RecurrentState initial_state(const LmModel& model) {
  RecurrentState s;
  s.hidden.assign(model.spec().layers, VectorXd::Zero(static_cast<Eigen::Index>(model.spec().hidden)));
  return s;
}

VectorXd step(const LmModel& model, RecurrentState& state, const VectorXd& input) {
  const auto& spec = model.spec();
  if (static_cast<std::size_t>(input.size()) != model.input_dim())
    throw ContractError("input column does not match model input spec");
  if (state.hidden.size() != spec.layers) throw ContractError("recurrent state has wrong layer count");
  const auto H = static_cast<Eigen::Index>(spec.hidden);
  VectorXd x = input;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const auto& U = model.gru_u(l);
    VectorXd& h = state.hidden[l];
    VectorXd gx = model.gru_w(l) * x + model.gru_b(l).col(0);
    VectorXd zr = gx.head(2 * H) + U.topRows(2 * H) * h;
    zr = (1.0 + (-zr.array()).exp()).inverse().matrix();
    const auto z = zr.head(H).array();
    const auto r = zr.tail(H).array();
    VectorXd pre = gx.tail(H) + U.bottomRows(H) * (r * h.array()).matrix();
    VectorXd cand = spec.candidate == Activation::relu ? VectorXd(pre.cwiseMax(0.0))
                                                       : VectorXd(pre.array().tanh().matrix());
    h = ((1.0 - z) * h.array() + z * cand.array()).matrix();
    x = h;
  }
  VectorXd logits = model.out_w() * x + model.out_b().col(0);
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

}  // namespace nqac::lm
