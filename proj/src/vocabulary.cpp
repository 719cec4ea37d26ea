#include "nqac/vocabulary.hpp"

#include <algorithm>

#include "nqac/errors.hpp"

namespace nqac::lm {

namespace {

bool is_regular(unsigned char c) { return c >= 0x20 && c != 0x7F; }

}  // namespace

Vocabulary::Vocabulary(std::string_view characters) {
  std::array<bool, 256> present{};
  for (char ch : characters) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_regular(c)) present[c] = true;
  }
  for (int c = 0; c < 256; ++c)
    if (present[c]) symbols_.push_back(static_cast<char>(c));
  end_ = static_cast<int>(symbols_.size());
  symbols_.push_back(kEndOfQuery);
  symbols_.push_back(kUnknownByte);
  symbols_.push_back(kPaddingByte);

  lookup_.fill(unknown_index());
  for (int i = 0; i < end_; ++i) lookup_[static_cast<unsigned char>(symbols_[i])] = i;
  lookup_[static_cast<unsigned char>(kEndOfQuery)] = end_;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, std::size_t min_frequency) {
  std::array<std::size_t, 256> freq{};
  for (const auto& t : texts)
    for (char ch : t) ++freq[static_cast<unsigned char>(ch)];
  std::string kept;
  for (int c = 0; c < 256; ++c)
    if (freq[c] >= std::max<std::size_t>(1, min_frequency)) kept.push_back(static_cast<char>(c));
  return Vocabulary(kept);
}

Vocabulary Vocabulary::from_symbols(std::string_view symbols) {
  if (symbols.size() < 3) throw ContractError("vocabulary needs the three reserved symbols");
  Vocabulary v(symbols.substr(0, symbols.size() - 3));
  if (v.symbols_ != symbols) throw ContractError("vocabulary symbol layout is not canonical");
  return v;
}

}  // namespace nqac::lm
