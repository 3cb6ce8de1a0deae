#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "vdict/error.hpp"

namespace vdict {

/// 26 lowercase letters followed by 10 digits. Class 36 is the model-internal
/// EOS/blank token and never appears inside a stored word.
inline constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
inline constexpr int kAlphabetSize = 36;
inline constexpr int kEosClass = 36;
inline constexpr int kNumClasses = 37;
inline constexpr std::size_t kMaxWordLength = 25;

constexpr int char_class(char c) {
  if (c >= 'a' && c <= 'z') return c - 'a';
  if (c >= '0' && c <= '9') return 26 + (c - '0');
  return -1;
}

constexpr char class_char(int cls) { return kAlphabet[static_cast<std::size_t>(cls)]; }

inline bool is_normalized(std::string_view w) {
  if (w.size() > kMaxWordLength) return false;
  for (char c : w)
    if (char_class(c) < 0) return false;
  return true;
}

/// Lowercases `raw` and validates it against the 36-symbol alphabet.
inline std::string normalize_word(std::string_view raw) {
  if (raw.empty()) throw Error(ErrorCode::kEmptyWord, "empty word");
  if (raw.size() > kMaxWordLength)
    throw Error(ErrorCode::kTooLong, "word longer than 25 characters: " + std::string(raw));
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    char lower = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    if (char_class(lower) < 0)
      throw Error(ErrorCode::kInvalidCharacter, "character outside [a-z0-9] in: " + std::string(raw));
    out.push_back(lower);
  }
  return out;
}

}  // namespace vdict
