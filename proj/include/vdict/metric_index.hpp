#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "vdict/binary_io.hpp"
#include "vdict/error.hpp"
#include "vdict/levenshtein.hpp"
#include "vdict/lexicon.hpp"

namespace vdict {

struct RankedCandidate {
  std::string word;
  int distance = 0;
  std::size_t rank = 0;

  friend bool operator==(const RankedCandidate&, const RankedCandidate&) = default;
};

/// Total order used for every top-N answer: distance, then word.
inline bool candidate_less(int da, std::string_view wa, int db, std::string_view wb) {
  return da != db ? da < db : wa < wb;
}

/// Reference answer: full scan, sort, truncate.
inline std::vector<RankedCandidate> brute_force_top_n(const std::vector<std::string>& words,
                                                      std::string_view query, std::size_t n) {
  std::vector<std::pair<int, const std::string*>> all;
  all.reserve(words.size());
  for (const auto& w : words) all.emplace_back(levenshtein(query, w), &w);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return candidate_less(a.first, *a.second, b.first, *b.second); });
  std::vector<RankedCandidate> out;
  for (std::size_t i = 0; i < std::min(n, all.size()); ++i) out.push_back({*all[i].second, all[i].first, i});
  return out;
}

/// BK-tree over a lexicon. Immutable after construction; queries are const
/// and safe to run concurrently.
class MetricIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::uint32_t kNoParent = UINT32_MAX;

  struct Node {
    std::uint32_t word = 0;    // index into words_
    std::uint32_t parent = kNoParent;
    std::uint32_t edge = 0;    // distance to parent
    std::vector<std::uint32_t> children;
  };

  explicit MetricIndex(const Lexicon& lexicon) : words_(lexicon.words()), source_digest_(lexicon.digest()) {
    if (words_.empty()) throw Error(ErrorCode::kEmptyLexicon, "cannot index an empty lexicon");
    nodes_.reserve(words_.size());
    for (std::uint32_t i = 0; i < words_.size(); ++i) insert(i);
  }

  std::size_t word_count() const { return nodes_.size(); }
  std::uint64_t source_digest() const { return source_digest_; }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// The n smallest (distance, word) pairs; all words when n >= word_count.
  std::vector<RankedCandidate> top_n(std::string_view query, std::size_t n) const {
    if (nodes_.empty()) throw Error(ErrorCode::kEmptyLexicon, "empty index");
    if (n == 0) throw Error(ErrorCode::kInvalidArgument, "n must be >= 1");
    n = std::min(n, nodes_.size());

    auto worse = [this](const Hit& a, const Hit& b) {
      return candidate_less(a.distance, words_[a.word], b.distance, words_[b.word]);
    };
    // Max-heap on the total order: top() is the current n-th best.
    std::priority_queue<Hit, std::vector<Hit>, decltype(worse)> best(worse);
    std::vector<std::uint32_t> stack{0};
    while (!stack.empty()) {
      const Node& node = nodes_[stack.back()];
      stack.pop_back();
      const int d = levenshtein(query, words_[node.word]);
      const Hit hit{d, node.word};
      if (best.size() < n) {
        best.push(hit);
      } else if (worse(hit, best.top())) {
        best.pop();
        best.push(hit);
      }
      // A child at edge e holds words at distance >= |d - e| from the query;
      // equal distances must still be visited for the lexicographic tie-break.
      const bool full = best.size() == n;
      const int bound = full ? best.top().distance : INT32_MAX;
      for (std::uint32_t c : node.children) {
        const int e = static_cast<int>(nodes_[c].edge);
        if (!full || std::abs(d - e) <= bound) stack.push_back(c);
      }
    }
    std::vector<RankedCandidate> out(best.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      const Hit h = best.top();
      best.pop();
      out[i] = {words_[h.word], h.distance, i};
    }
    return out;
  }

  /// Serialized form: "VDIX", version, source digest, word list, node table, checksum.
  std::vector<std::uint8_t> serialize() const {
    ByteWriter w;
    w.magic("VDIX");
    w.u32(kFormatVersion);
    w.u64(source_digest_);
    w.u32(static_cast<std::uint32_t>(words_.size()));
    for (const auto& word : words_) w.str(word);
    for (const auto& node : nodes_) {
      w.u32(node.word);
      w.u32(node.parent);
      w.u32(node.edge);
    }
    w.checksum();
    return w.bytes();
  }

  void save(const std::string& path) const { ByteWriter::write_file(path, serialize()); }

  /// Loads a cached index; throws kVersionMismatch when the cache belongs to a
  /// different lexicon or format version.
  static MetricIndex load(const std::string& path, std::uint64_t expected_digest) {
    ByteReader r = ByteReader::from_file(path);
    r.verify_checksum();
    if (!r.expect_magic("VDIX")) throw Error(ErrorCode::kCorruptFile, "bad index magic");
    if (r.u32() != kFormatVersion) throw Error(ErrorCode::kVersionMismatch, "index format version");
    const std::uint64_t digest = r.u64();
    if (digest != expected_digest) throw Error(ErrorCode::kVersionMismatch, "index built from a different lexicon");
    MetricIndex idx;
    idx.source_digest_ = digest;
    const std::uint32_t count = r.u32();
    idx.words_.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) idx.words_.push_back(r.str());
    idx.nodes_.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      Node& node = idx.nodes_[i];
      node.word = r.u32();
      node.parent = r.u32();
      node.edge = r.u32();
      if (node.word >= count || (i == 0) != (node.parent == kNoParent) || (i > 0 && node.parent >= i))
        throw Error(ErrorCode::kCorruptFile, "invalid index node");
      if (i > 0) idx.nodes_[node.parent].children.push_back(i);
    }
    return idx;
  }

  /// Loads the cache when it matches `lexicon`, otherwise rebuilds and rewrites it.
  static MetricIndex load_or_build(const std::string& path, const Lexicon& lexicon) {
    try {
      return load(path, lexicon.digest());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kVersionMismatch && e.code() != ErrorCode::kCorruptFile &&
          e.code() != ErrorCode::kIoError)
        throw;
    }
    MetricIndex idx(lexicon);
    idx.save(path);
    return idx;
  }

 private:
  struct Hit {
    int distance;
    std::uint32_t word;
  };

  MetricIndex() = default;

  void insert(std::uint32_t word) {
    if (nodes_.empty()) {
      nodes_.push_back({word, kNoParent, 0, {}});
      return;
    }
    std::uint32_t cur = 0;
    for (;;) {
      const auto d = static_cast<std::uint32_t>(levenshtein(words_[word], words_[nodes_[cur].word]));
      std::uint32_t next = kNoParent;
      for (std::uint32_t c : nodes_[cur].children)
        if (nodes_[c].edge == d) {
          next = c;
          break;
        }
      if (next == kNoParent) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back({word, cur, d, {}});
        nodes_[cur].children.push_back(id);
        return;
      }
      cur = next;
    }
  }

  std::vector<std::string> words_;
  std::vector<Node> nodes_;
  std::uint64_t source_digest_ = 0;
};

}  // namespace vdict
