#pragma once

// Context representations fed to the language model: cyclic time features,
// word embeddings for the previous-word slot, and per-user vectors.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nqac/corpus.hpp"
#include "nqac/timestamp.hpp"

namespace nqac::features {

struct TimeFeatures {
  double sin_day = 0;
  double cos_day = 1;
  double sin_week = 0;
  double cos_week = 1;

  std::array<double, 4> as_array() const { return {sin_day, cos_day, sin_week, cos_week}; }
};

// Day angle 2*pi*(3600h + 60m + s)/86400; week angle 2*pi*(weekday + day fraction)/7
// with Monday = 0.
TimeFeatures encode_time(const Timestamp& t);

// String-keyed table of fixed-dimension vectors. Lookups of unknown keys
// return the all-zero vector.
class VectorTable {
 public:
  VectorTable() = default;
  explicit VectorTable(std::size_t dim) : dim_(dim), zero_(dim, 0.0f) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }
  bool contains(std::string_view key) const;

  // Throws ContractError when v.size() != dim().
  void set(const std::string& key, std::vector<float> v);
  std::span<const float> lookup(std::string_view key) const;
  // Keys in insertion order.
  const std::vector<std::string>& keys() const { return keys_; }

  // Textual word2vec format: "count dim" header, then "key v1 ... vdim".
  void save_text(std::ostream& out) const;
  void save_text_file(const std::string& path) const;
  static VectorTable load_text(std::istream& in);
  static VectorTable load_text_file(const std::string& path);

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::size_t dim_ = 0;
  std::vector<float> zero_;
  std::vector<std::string> keys_;
  std::vector<std::vector<float>> rows_;
  std::unordered_map<std::string, std::size_t, StringHash, std::equal_to<>> index_;
};

using WordEmbeddingTable = VectorTable;
using UserVectorTable = VectorTable;

// Skip-gram with negative sampling over queries treated as sentences.
struct WordEmbeddingConfig {
  std::size_t dim = 50;
  int epochs = 5;
  int window = 5;
  int negative_samples = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

WordEmbeddingTable train_word_embeddings(const std::vector<std::string>& queries,
                                         const WordEmbeddingConfig& config);
inline WordEmbeddingTable load_word_embeddings(const std::string& path) {
  return VectorTable::load_text_file(path);
}

double cosine(std::span<const float> a, std::span<const float> b);

// Per-user word multisets. max_queries_per_user = 0 keeps every query;
// otherwise only the most recent k queries (by timestamp) contribute.
std::map<std::string, std::vector<std::string>> build_user_histories(
    const std::vector<corpus::QueryRecord>& records, std::size_t max_queries_per_user = 0);

struct UserVectorConfig {
  int dim = 30;
  int epochs = 100;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
  // Full-batch gradient ascent on the mean log-likelihood instead of
  // per-sample stochastic steps.
  bool full_batch = false;
};

struct UserVectorTraining {
  UserVectorTable table;
  // Word-side parameters of the user model; internal to it and distinct from
  // the LM's WordEmbeddingTable.
  VectorTable word_vectors;
  // Mean over users of mean log P(u|w) over the user's history, recorded at
  // initialization (entry 0) and after every epoch.
  std::vector<double> objective;
  // Per-user mean log-likelihood, same indexing as objective; users in
  // table key order.
  std::vector<std::vector<double>> per_user;
};

// PV-DBOW style: the user is predicted from a word sampled from the user's
// history, P(u|w) = softmax over users of (user_vec . word_vec). Users with
// empty histories are left out (they get the zero vector on lookup).
UserVectorTraining train_user_vectors(
    const std::map<std::string, std::vector<std::string>>& histories, const UserVectorConfig& config);

// P(u|word) for every user, in table key order. Empty if the word is unknown.
std::vector<double> user_posterior(const UserVectorTraining& model, std::string_view word);

}  // namespace nqac::features
