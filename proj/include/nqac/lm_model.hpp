#pragma once

// Character-level GRU language model conditioned on previous-word, user and
// time context.
//
// Input at each position is the concatenation
//   [ one-hot(char) | word slot (word_dim) | user slot (user_dim) | time slot (time_dim) ]
// fed through `layers` stacked GRU layers and a softmax over the vocabulary.
// GRU recurrence (per layer):
//   z  = sigmoid(Wz x + Uz h + bz)
//   r  = sigmoid(Wr x + Ur h + br)
//   h~ = act(Wh x + Uh (r * h) + bh)        act = ReLU (default) or tanh
//   h' = (1 - z) * h + z * h~
// Parameters are held in double precision but kept float-representable so
// that the float32 model file round-trips exactly.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nqac/features.hpp"
#include "nqac/vocabulary.hpp"

namespace nqac::lm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation : int { relu = 0, tanh = 1 };

struct ModelSpec {
  std::size_t word_dim = 50;
  std::size_t user_dim = 30;
  std::size_t time_dim = 4;
  std::size_t hidden = 1024;
  std::size_t layers = 2;
  Activation candidate = Activation::relu;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// A named parameter tensor. Vectors are stored as n x 1 matrices.
struct Tensor {
  std::string name;
  MatrixXd value;
};

using Gradients = std::vector<MatrixXd>;

class LmModel {
 public:
  // All parameters zero (uniform output distribution).
  LmModel(const ModelSpec& spec, Vocabulary vocab);
  // Uniform(-a, a) with a = 1/sqrt(fan-in), seeded.
  static LmModel random(const ModelSpec& spec, Vocabulary vocab, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t input_dim() const;
  std::size_t vocab_size() const { return vocab_.size(); }

  // Order: for each layer "gruL.w" (3H x in), "gruL.u" (3H x H), "gruL.b" (3H x 1),
  // then "out.w" (V x H), "out.b" (V x 1). Gate row blocks are z, r, candidate.
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const MatrixXd& gru_w(std::size_t layer) const { return params_[3 * layer].value; }
  const MatrixXd& gru_u(std::size_t layer) const { return params_[3 * layer + 1].value; }
  const MatrixXd& gru_b(std::size_t layer) const { return params_[3 * layer + 2].value; }
  const MatrixXd& out_w() const { return params_[3 * spec_.layers].value; }
  const MatrixXd& out_b() const { return params_[3 * spec_.layers + 1].value; }

  Gradients zero_gradients() const;
  std::size_t parameter_count() const;
  // Round every parameter to the nearest float.
  void snap_to_float();

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static LmModel load(std::istream& in);
  static LmModel load_file(const std::string& path);

 private:
  ModelSpec spec_;
  Vocabulary vocab_;
  std::vector<Tensor> params_;
};

// Per-query context held constant across character positions.
struct LmContext {
  std::vector<double> user;  // user_dim entries (zeros for unknown users)
  std::array<double, 4> time{0, 0, 0, 0};
  bool has_time = false;
};

// Builds a context for the model: zero slots when the user is unknown or the
// timestamp is absent.
LmContext make_context(const ModelSpec& spec, const features::UserVectorTable* users,
                       const std::optional<std::string>& user_id,
                       const std::optional<Timestamp>& timestamp);

// Fills model input vectors. Holds references; the model and table must outlive it.
class InputEncoder {
 public:
  InputEncoder(const LmModel& model, const features::WordEmbeddingTable* words);

  std::size_t input_dim() const { return input_dim_; }
  const Vocabulary& vocab() const { return model_.vocab(); }

  // Column t encodes text[t]; a final column encodes the end-of-query marker.
  // Result has |text| + 1 columns. Space positions carry the embedding of the
  // word preceding the space.
  MatrixXd encode_query(std::string_view text, const LmContext& context) const;

  // Input column for the character at position `pos` of `text`.
  void encode_position(std::string_view text, std::size_t pos, const LmContext& context,
                       Eigen::Ref<VectorXd> column) const;
  // Input column for symbol `index` appended after `text_before`.
  void encode_symbol(int index, std::string_view text_before, const LmContext& context,
                     Eigen::Ref<VectorXd> column) const;

 private:
  const LmModel& model_;
  const features::WordEmbeddingTable* words_;
  std::size_t input_dim_;
};

// Time-major padded batch. inputs[t] is input_dim x B; targets[t][b] is the
// vocabulary index to predict after consuming inputs[t] column b, or -1 for
// padding.
struct Batch {
  std::vector<MatrixXd> inputs;
  std::vector<std::vector<int>> targets;
  std::size_t size() const { return inputs.empty() ? 0 : static_cast<std::size_t>(inputs[0].cols()); }
  std::size_t steps() const { return inputs.size(); }
  std::size_t predicted_positions() const;
};

struct EncodedQuery {
  MatrixXd inputs;  // input_dim x (n + 1), last column is the end marker
  std::vector<int> symbols;  // n + 1 indices, last is the end marker
};

EncodedQuery encode_for_training(const InputEncoder& encoder, std::string_view query,
                                 const LmContext& context, std::size_t max_length = 100);
Batch make_batch(std::span<const EncodedQuery* const> queries);

enum class Mode { train, infer };

struct DropoutSpec {
  double rate = 0.5;
  std::uint64_t seed = 0;
};

struct ForwardResult {
  // probabilities[t] is V x B.
  std::vector<MatrixXd> probabilities;
  // Final hidden state per layer (H x B).
  std::vector<MatrixXd> final_states;
};

// Train mode applies inverted dropout after every GRU layer with masks drawn
// from dropout.seed; infer mode is deterministic and ignores `dropout`.
ForwardResult forward(const LmModel& model, const Batch& batch, Mode mode, const DropoutSpec& dropout = {});

struct LossValue {
  double per_query = 0;  // average over queries of the summed cross entropy (nats)
  double per_char = 0;   // total cross entropy / predicted positions
  std::size_t queries = 0;
  std::size_t positions = 0;
};

LossValue loss(const LmModel& model, const Batch& batch, Mode mode = Mode::infer,
               const DropoutSpec& dropout = {});

struct LossGradients {
  LossValue loss;
  Gradients params;
  // d loss / d inputs[t], same shapes as batch.inputs; filled when requested.
  std::vector<MatrixXd> inputs;
};

// Exact gradients of loss(...).per_query by backpropagation through time.
LossGradients gradients(const LmModel& model, const Batch& batch, Mode mode = Mode::infer,
                        const DropoutSpec& dropout = {}, bool input_gradients = false);

// Single-step inference for decoding.
struct RecurrentState {
  std::vector<VectorXd> hidden;
};

RecurrentState initial_state(const LmModel& model);
// Consumes one input column; returns log-probabilities of the next symbol.
VectorXd step(const LmModel& model, RecurrentState& state, const VectorXd& input);

}  // namespace nqac::lm
