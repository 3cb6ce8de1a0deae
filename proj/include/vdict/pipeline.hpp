#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vdict/metric_index.hpp"
#include "vdict/neural.hpp"

namespace vdict {

/// Visual prediction plus its top-N dictionary neighbours.
struct CandidateSet {
  std::vector<std::string> entries;
  std::vector<int> distances;  // distance of each entry to the prediction
  std::string source_prediction;
  std::size_t top_n_used = 0;
};

/// Top-N dictionary words in rank order, then the prediction appended last
/// unless it is already one of them.
inline CandidateSet candidate_set_from_ranked(const std::vector<RankedCandidate>& ranked, std::string_view y_hat,
                                              std::size_t n) {
  CandidateSet set;
  set.source_prediction = std::string(y_hat);
  set.top_n_used = n;
  bool has_prediction = false;
  for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i) {
    set.entries.push_back(ranked[i].word);
    set.distances.push_back(ranked[i].distance);
    has_prediction = has_prediction || ranked[i].word == y_hat;
  }
  if (!has_prediction) {
    set.entries.emplace_back(y_hat);
    set.distances.push_back(0);
  }
  return set;
}

inline CandidateSet build_candidate_set(const MetricIndex& index, std::string_view y_hat, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "candidate count must be >= 1");
  return candidate_set_from_ranked(index.top_n(y_hat, n), y_hat, n);
}

/// Forced correction: the distance-minimal lexicon word.
inline std::string ordinary_correct(const MetricIndex& index, std::string_view y_hat) {
  return index.top_n(y_hat, 1).front().word;
}

enum class InferenceMode { kBaseline, kOrdinary, kProposed };

inline std::string_view to_string(InferenceMode m) {
  switch (m) {
    case InferenceMode::kBaseline: return "baseline";
    case InferenceMode::kOrdinary: return "ordinary";
    case InferenceMode::kProposed: return "proposed";
  }
  return "unknown";
}

inline InferenceMode parse_inference_mode(std::string_view s) {
  for (auto m : {InferenceMode::kBaseline, InferenceMode::kOrdinary, InferenceMode::kProposed})
    if (to_string(m) == s) return m;
  throw Error(ErrorCode::kInvalidArgument, "unknown inference mode: " + std::string(s));
}

struct InferenceResult {
  std::string visual_prediction;
  CandidateSet candidates;
  Vector scores;  // i2t probabilities over candidates (proposed mode only)
  std::string final_prediction;
  InferenceMode mode = InferenceMode::kBaseline;
};

/// Unit-norm text embeddings, memoized. Lexicon words are encoded once per
/// model; other strings (usually out-of-lexicon predictions) are cached on
/// first use. Not thread-safe.
class TextEmbeddingCache {
 public:
  explicit TextEmbeddingCache(const ModelParams& params) : params_(&params) {}

  const Vector& get(const std::string& word) {
    auto it = cache_.find(word);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(word, normalized(project(*params_, text_encode(*params_, word)))).first->second;
  }

  void warm(const std::vector<std::string>& words) {
    for (const auto& w : words) get(w);
  }

  std::size_t size() const { return cache_.size(); }

 private:
  const ModelParams* params_;
  std::unordered_map<std::string, Vector> cache_;
};

inline Vector image_embedding(const ModelParams& p, const GlyphImage& image) {
  return normalized(project(p, image_encode(p, image, ImagePath::kMatching)));
}

/// i2t scores for a candidate set and the arg-max entry (first wins on ties).
inline std::pair<Vector, std::size_t> score_candidates(const Vector& image_emb, const CandidateSet& set,
                                                       TextEmbeddingCache& texts, double tau) {
  std::vector<Vector> embs;
  embs.reserve(set.entries.size());
  for (const auto& w : set.entries) embs.push_back(texts.get(w));
  Vector scores = i2t_distribution(image_emb, embs, tau);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i)
    if (scores(i) > scores(best)) best = i;
  return {std::move(scores), static_cast<std::size_t>(best)};
}

/// Two-forward inference. Forward one recognizes; forward two (proposed mode)
/// scores every candidate against the image.
inline InferenceResult infer(const ModelParams& p, const MetricIndex& index, const GlyphImage& image, std::size_t n,
                             double tau, InferenceMode mode, TextEmbeddingCache* cache = nullptr) {
  InferenceResult r;
  r.mode = mode;
  r.visual_prediction = recognize(p, image).y_hat;
  switch (mode) {
    case InferenceMode::kBaseline:
      r.final_prediction = r.visual_prediction;
      break;
    case InferenceMode::kOrdinary:
      r.final_prediction = ordinary_correct(index, r.visual_prediction);
      break;
    case InferenceMode::kProposed: {
      std::optional<TextEmbeddingCache> local;
      if (!cache) cache = &local.emplace(p);
      r.candidates = build_candidate_set(index, r.visual_prediction, n);
      auto [scores, best] = score_candidates(image_embedding(p, image), r.candidates, *cache, tau);
      r.scores = std::move(scores);
      r.final_prediction = r.candidates.entries[best];
      break;
    }
  }
  return r;
}

}  // namespace vdict
