#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace nqac::lm {

// Character inventory of the language model. Regular characters come first in
// ascending byte order, followed by the reserved end-of-query marker, the
// unknown-character slot and padding. Index order therefore matches byte
// order for ordinary text, and index 0 is always a regular character when one
// exists.
class Vocabulary {
 public:
  static constexpr char kEndOfQuery = '\n';
  // Placeholder bytes used to store the reserved slots; they never occur in
  // normalized text.
  static constexpr char kUnknownByte = '\x01';
  static constexpr char kPaddingByte = '\x00';

  Vocabulary() : Vocabulary(std::string{}) {}
  // Regular characters are the distinct printable bytes of `characters`.
  explicit Vocabulary(std::string_view characters);

  // Characters occurring fewer than `min_frequency` times collapse to UNK.
  static Vocabulary build(const std::vector<std::string>& texts, std::size_t min_frequency = 5);
  // Inverse of symbols(); throws ContractError if the layout is not one we produce.
  static Vocabulary from_symbols(std::string_view symbols);

  std::size_t size() const { return symbols_.size(); }
  int index_of(char c) const { return lookup_[static_cast<unsigned char>(c)]; }
  char symbol(int index) const { return symbols_[static_cast<std::size_t>(index)]; }
  int end_index() const { return end_; }
  int unknown_index() const { return end_ + 1; }
  int padding_index() const { return end_ + 2; }
  std::size_t regular_count() const { return static_cast<std::size_t>(end_); }
  // Symbols a decoder may emit: regular characters and the end marker.
  bool is_generatable(int index) const { return index >= 0 && index <= end_; }

  const std::string& symbols() const { return symbols_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.symbols_ == b.symbols_; }

 private:
  std::string symbols_;
  std::array<int, 256> lookup_{};
  int end_ = 0;
};

}  // namespace nqac::lm
