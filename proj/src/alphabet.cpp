#include "htru/alphabet.hpp"

#include <algorithm>

namespace htru {

Alphabet::Alphabet() {
  for (char c = 'a'; c <= 'z'; ++c) symbols_.push_back(c);
  for (char c = 'A'; c <= 'Z'; ++c) symbols_.push_back(c);
  std::fill(std::begin(lut_), std::end(lut_), -1);
  for (size_t i = 0; i < symbols_.size(); ++i) {
    lut_[static_cast<unsigned char>(symbols_[i])] = static_cast<int>(i);
  }
}

int Alphabet::index_of(char c) const {
  return lut_[static_cast<unsigned char>(c)];
}

char Alphabet::symbol_at(int idx) const {
  if (idx < 0 || idx >= kNumLetters)
    throw Error("Alphabet: symbol index out of range: " + std::to_string(idx));
  return symbols_[static_cast<size_t>(idx)];
}

std::vector<int> Alphabet::encode(const std::string& text, int max_len) const {
  if (static_cast<int>(text.size()) > max_len) {
    throw Error("encode: text \"" + text + "\" longer than max_len " +
                std::to_string(max_len));
  }
  std::vector<int> slots(static_cast<size_t>(max_len), kPadIndex);
  for (size_t i = 0; i < text.size(); ++i) {
    const int idx = index_of(text[i]);
    if (idx < 0) {
      throw Error("encode: invalid character '" + std::string(1, text[i]) +
                  "' at position " + std::to_string(i));
    }
    slots[i] = idx;
  }
  return slots;
}

std::string Alphabet::decode(const std::vector<int>& slots) const {
  std::string out;
  for (int idx : slots) {
    if (idx == kPadIndex) continue;
    out.push_back(symbol_at(idx));
  }
  return out;
}

bool Alphabet::valid_word(const std::string& text) const {
  if (text.empty()) return false;
  for (char c : text) {
    if (!contains(c)) return false;
  }
  return true;
}

}  // namespace htru
