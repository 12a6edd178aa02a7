#pragma once

#include <string>
#include <vector>

#include "htru/common.hpp"

namespace htru {

// 52 letters (a-z then A-Z) plus a reserved pad token at index 52.
class Alphabet {
 public:
  static constexpr int kNumLetters = 52;
  static constexpr int kPadIndex = 52;
  static constexpr int kNumClasses = 53;

  Alphabet();

  bool contains(char c) const { return index_of(c) >= 0; }
  // -1 when c is not a letter.
  int index_of(char c) const;
  char symbol_at(int idx) const;

  // Fixed-slot encoding: indices for each character, pad beyond the text.
  // Throws naming the character and position on invalid input.
  std::vector<int> encode(const std::string& text, int max_len) const;
  std::string decode(const std::vector<int>& slots) const;

  bool valid_word(const std::string& text) const;

  const std::vector<char>& symbols() const { return symbols_; }

 private:
  std::vector<char> symbols_;
  int lut_[256];
};

}  // namespace htru
