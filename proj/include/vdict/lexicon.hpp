#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vdict/alphabet.hpp"
#include "vdict/binary_io.hpp"
#include "vdict/error.hpp"

namespace vdict {

/// Normalized word list in load order. Duplicates (after lowercasing) keep
/// their first position.
class Lexicon {
 public:
  Lexicon() = default;

  explicit Lexicon(const std::vector<std::string>& raw_words) {
    for (const auto& raw : raw_words) add(raw);
    if (words_.empty()) throw Error(ErrorCode::kEmptyLexicon, "lexicon has no words");
  }

  /// Parses one word per line; blank lines and lines starting with '#' are skipped.
  static Lexicon parse(std::string_view text) {
    Lexicon lex;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(start, end - start);
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
      while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
      if (!line.empty() && line.front() != '#') lex.add(line);
      start = end + 1;
    }
    if (lex.words_.empty()) throw Error(ErrorCode::kEmptyLexicon, "lexicon has no words");
    return lex;
  }

  static Lexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open lexicon: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write lexicon: " + path);
    for (const auto& w : words_) out << w << '\n';
    if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path);
  }

  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  bool contains(std::string_view w) const { return members_.contains(std::string(w)); }

  /// Content hash over the normalized word sequence.
  std::uint64_t digest() const {
    Fnv1a h;
    for (const auto& w : words_) {
      h.update(w);
      h.update("\n");
    }
    return h.value();
  }

 private:
  void add(std::string_view raw) {
    std::string w = normalize_word(raw);
    if (members_.insert(w).second) words_.push_back(std::move(w));
  }

  std::vector<std::string> words_;
  std::unordered_set<std::string> members_;
};

}  // namespace vdict
