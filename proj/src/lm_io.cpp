#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "nqac/errors.hpp"
#include "nqac/lm_model.hpp"

// Model file: "NQACLM01", u32 tensor count, then per tensor
//   u32 name length, name bytes, u32 rank, u32 dims[rank], float32 data (row-major),
// all little-endian. Two metadata tensors precede the parameters:
//   meta.spec  [8]  word_dim, user_dim, time_dim, hidden, layers, activation, 0, 0
//   meta.vocab [V]  symbol bytes in index order

namespace nqac::lm {

namespace {

constexpr char kMagic[8] = {'N', 'Q', 'A', 'C', 'L', 'M', '0', '1'};
constexpr std::uint32_t kMaxRank = 4;

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b;
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw LoadError("model file truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

void write_tensor(std::ostream& out, const std::string& name, const MatrixXd& m, bool vector) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  if (vector) {
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(m.size()));
  } else {
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f32(out, static_cast<float>(m(i, j)));
}

struct RawTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

RawTensor read_tensor(std::istream& in) {
  RawTensor t;
  const auto name_len = get_u32(in);
  if (name_len > 256) throw LoadError("model file: tensor name too long");
  t.name.resize(name_len);
  if (!in.read(t.name.data(), name_len)) throw LoadError("model file truncated");
  const auto rank = get_u32(in);
  if (rank == 0 || rank > kMaxRank) throw LoadError("model file: bad tensor rank for " + t.name);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims.push_back(get_u32(in));
    count *= t.dims.back();
    if (count > (1ull << 32)) throw LoadError("model file: tensor too large");
  }
  t.data.resize(count);
  for (auto& x : t.data) x = std::bit_cast<float>(get_u32(in));
  return t;
}

}  // namespace

void LmModel::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(params_.size() + 2));
  MatrixXd meta(8, 1);
  meta << double(spec_.word_dim), double(spec_.user_dim), double(spec_.time_dim), double(spec_.hidden),
      double(spec_.layers), double(static_cast<int>(spec_.candidate)), 0, 0;
  write_tensor(out, "meta.spec", meta, true);
  MatrixXd vocab(static_cast<Eigen::Index>(vocab_.size()), 1);
  for (std::size_t i = 0; i < vocab_.size(); ++i)
    vocab(static_cast<Eigen::Index>(i)) = static_cast<unsigned char>(vocab_.symbol(static_cast<int>(i)));
  write_tensor(out, "meta.vocab", vocab, true);
  for (const auto& p : params_) write_tensor(out, p.name, p.value, p.value.cols() == 1);
  if (!out) throw IoError("failed writing model");
}

void LmModel::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  save(out);
}

LmModel LmModel::load(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw LoadError("model file truncated");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw LoadError("not a model file or unsupported version");
  const auto count = get_u32(in);
  if (count < 2) throw LoadError("model file has no metadata");

  const auto spec_t = read_tensor(in);
  if (spec_t.name != "meta.spec" || spec_t.data.size() != 8) throw LoadError("model file: bad meta.spec");
  ModelSpec spec;
  spec.word_dim = static_cast<std::size_t>(spec_t.data[0]);
  spec.user_dim = static_cast<std::size_t>(spec_t.data[1]);
  spec.time_dim = static_cast<std::size_t>(spec_t.data[2]);
  spec.hidden = static_cast<std::size_t>(spec_t.data[3]);
  spec.layers = static_cast<std::size_t>(spec_t.data[4]);
  const int act = static_cast<int>(spec_t.data[5]);
  if (act != 0 && act != 1) throw LoadError("model file: unknown activation");
  spec.candidate = static_cast<Activation>(act);

  const auto vocab_t = read_tensor(in);
  if (vocab_t.name != "meta.vocab") throw LoadError("model file: bad meta.vocab");
  std::string symbols;
  for (float f : vocab_t.data) symbols.push_back(static_cast<char>(static_cast<unsigned char>(f)));
  Vocabulary vocab;
  try {
    vocab = Vocabulary::from_symbols(symbols);
  } catch (const ContractError& e) {
    throw LoadError(std::string("model file: ") + e.what());
  }

  LmModel model(spec, std::move(vocab));
  if (count != model.params_.size() + 2) throw LoadError("model file: unexpected tensor count");
  for (auto& p : model.params_) {
    const auto t = read_tensor(in);
    const bool vector = p.value.cols() == 1;
    const bool shape_ok = t.name == p.name &&
                          (vector ? t.dims.size() == 1 && t.dims[0] == p.value.rows()
                                  : t.dims.size() == 2 && t.dims[0] == p.value.rows() &&
                                        t.dims[1] == p.value.cols());
    if (!shape_ok) throw LoadError("model file: tensor " + t.name + " does not match " + p.name);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      for (Eigen::Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = t.data[k++];
  }
  return model;
}

LmModel LmModel::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  return load(in);
}

}  // namespace nqac::lm
