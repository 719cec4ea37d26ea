#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "nqac/errors.hpp"
#include "nqac/features.hpp"

namespace nqac::features {

bool VectorTable::contains(std::string_view key) const { return index_.find(key) != index_.end(); }

void VectorTable::set(const std::string& key, std::vector<float> v) {
  if (v.size() != dim_)
    throw ContractError("vector for '" + key + "' has dimension " + std::to_string(v.size()) +
                        ", table expects " + std::to_string(dim_));
  if (auto it = index_.find(key); it != index_.end()) {
    rows_[it->second] = std::move(v);
    return;
  }
  index_.emplace(key, rows_.size());
  keys_.push_back(key);
  rows_.push_back(std::move(v));
}

std::span<const float> VectorTable::lookup(std::string_view key) const {
  if (auto it = index_.find(key); it != index_.end()) return rows_[it->second];
  return zero_;
}

void VectorTable::save_text(std::ostream& out) const {
  out << keys_.size() << ' ' << dim_ << '\n';
  // max_digits10 so a save/load cycle reproduces floats exactly
  out << std::setprecision(9);
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    out << keys_[i];
    for (float x : rows_[i]) out << ' ' << x;
    out << '\n';
  }
}

void VectorTable::save_text_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  save_text(out);
}

VectorTable VectorTable::load_text(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("vector file is empty (line 1)");
  std::istringstream header(line);
  long long count = -1, dim = -1;
  if (!(header >> count >> dim) || count < 0 || dim <= 0)
    throw ParseError("bad vector file header at line 1");

  VectorTable table(static_cast<std::size_t>(dim));
  std::size_t lineno = 1;
  while (static_cast<long long>(table.size()) < count && std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    std::vector<float> v;
    std::string tok;
    while (fields >> tok) {
      float x = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(x))
        throw ParseError("bad number at line " + std::to_string(lineno));
      v.push_back(x);
    }
    if (v.size() != table.dim())
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                       " components, got " + std::to_string(v.size()));
    table.set(key, std::move(v));
  }
  if (static_cast<long long>(table.size()) != count)
    throw ParseError("vector file declares " + std::to_string(count) + " entries but has " +
                     std::to_string(table.size()));
  return table;
}

VectorTable VectorTable::load_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vector file: " + path);
  return load_text(in);
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

}  // namespace nqac::features
