#pragma once

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "vdict/alphabet.hpp"
#include "vdict/error.hpp"

namespace vdict {

/// For each of the 36 characters, five visually similar characters.
class ConfusionTable {
 public:
  static constexpr int kRowSize = 5;
  using Row = std::array<char, kRowSize>;

  /// Parses 36 lines of "key:c1c2c3c4c5" ('#' comments and blank lines allowed).
  static ConfusionTable parse(std::string_view text, int version = 0) {
    ConfusionTable t;
    t.version_ = version;
    std::array<bool, kAlphabetSize> seen{};
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      if (line.size() != 7 || line[1] != ':')
        throw Error(ErrorCode::kCorruptFile, "confusion row must be \"k:abcde\": " + line);
      const int key = char_class(line[0]);
      if (key < 0) throw Error(ErrorCode::kInvalidCharacter, "confusion key: " + line);
      if (seen[static_cast<std::size_t>(key)]) throw Error(ErrorCode::kCorruptFile, "duplicate confusion key: " + line);
      seen[static_cast<std::size_t>(key)] = true;
      Row row{};
      for (int i = 0; i < kRowSize; ++i) {
        const char c = line[static_cast<std::size_t>(2 + i)];
        if (char_class(c) < 0) throw Error(ErrorCode::kInvalidCharacter, "confusion entry: " + line);
        if (c == line[0]) throw Error(ErrorCode::kCorruptFile, "row contains its own key: " + line);
        for (int j = 0; j < i; ++j)
          if (row[static_cast<std::size_t>(j)] == c) throw Error(ErrorCode::kCorruptFile, "repeated entry: " + line);
        row[static_cast<std::size_t>(i)] = c;
      }
      t.rows_[static_cast<std::size_t>(key)] = row;
    }
    for (bool s : seen)
      if (!s) throw Error(ErrorCode::kCorruptFile, "confusion table must cover all 36 characters");
    return t;
  }

  static ConfusionTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open confusion table: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  std::string to_text() const {
    std::string out;
    for (int k = 0; k < kAlphabetSize; ++k) {
      out.push_back(class_char(k));
      out.push_back(':');
      for (char c : rows_[static_cast<std::size_t>(k)]) out.push_back(c);
      out.push_back('\n');
    }
    return out;
  }

  const Row& row(char c) const {
    const int k = char_class(c);
    if (k < 0) throw Error(ErrorCode::kInvalidCharacter, std::string("no confusion row for '") + c + "'");
    return rows_[static_cast<std::size_t>(k)];
  }

  bool confusable(char from, char to) const {
    for (char c : row(from))
      if (c == to) return true;
    return false;
  }

  int version() const { return version_; }

 private:
  std::array<Row, kAlphabetSize> rows_{};
  int version_ = 0;
};

/// Row 'a' and the pairs t->r, e->c, n->m, d->q follow the published
/// examples; the remaining rows are this project's fixed version-1 table
/// (mirrored in data/confusion_v1.txt).
inline const ConfusionTable& default_confusion_table() {
  static const ConfusionTable table = ConfusionTable::parse(
      "a:deoqu\nb:dhop6\nc:oeaug\nd:qbaoc\ne:caosg\nf:tlirj\ng:q9yoa\nh:nbklm\ni:lj1tr\n"
      "j:ily1t\nk:hxylb\nl:1itjf\nm:nwrhu\nn:mhruo\no:0aceq\np:bqodg\nq:gdpa9\nr:tnfiv\n"
      "s:5zeac\nt:rfli7\nu:vnaow\nv:uywxr\nw:vmuyx\nx:kyzvw\ny:vgjxu\nz:2sx7r\n0:o8dq6\n"
      "1:lij7t\n2:z73sq\n3:8592b\n4:a91hy\n5:s638b\n6:b580g\n7:1t2zl\n8:3b069\n9:gq846\n",
      1);
  return table;
}

}  // namespace vdict
