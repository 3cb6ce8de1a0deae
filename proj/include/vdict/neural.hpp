#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "vdict/alphabet.hpp"
#include "vdict/error.hpp"
#include "vdict/glyph.hpp"
#include "vdict/model.hpp"
#include "vdict/tensor.hpp"

namespace vdict {

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kNormFloor = 1e-12;

enum class FeatureRole { kImage, kText };

/// L x C sequence features from either encoder.
struct FeatureSequence {
  Matrix rows;
  FeatureRole role = FeatureRole::kImage;
};

/// Which parallel-attention layer reads the shared backbone.
enum class ImagePath { kRecognition, kMatching };

inline const AttentionParams& attention_for(const ModelParams& p, ImagePath path) {
  return path == ImagePath::kRecognition ? p.recog_attention : p.match_attention;
}
inline AttentionParams& attention_for(ModelParams& p, ImagePath path) {
  return path == ImagePath::kRecognition ? p.recog_attention : p.match_attention;
}

// ---------------------------------------------------------------------------
// Image encoder: H = X G + P, then L learned queries attend over the W cells.
// ---------------------------------------------------------------------------

struct ImageCache {
  ImagePath path = ImagePath::kRecognition;
  Matrix x;       // W x K input cells
  Matrix h;       // W x C backbone features
  Matrix keys;    // W x C
  Matrix values;  // W x C
  Matrix attn;    // L x W
  Matrix out;     // L x C
};

inline void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::kNonFiniteParams, std::string("non-finite values in ") + what);
}

inline ImageCache image_forward(const ModelParams& p, const GlyphImage& image, ImagePath path) {
  const AttentionParams& a = attention_for(p, path);
  check_finite(p.glyph_embed, "glyph_embed");
  check_finite(p.image_pos_embed, "image_pos_embed");
  check_finite(a.query, "attention query");
  check_finite(a.key, "attention key");
  check_finite(a.value, "attention value");
  ImageCache c;
  c.path = path;
  c.x = image.cells;
  c.h = c.x * p.glyph_embed + p.image_pos_embed;
  c.keys = c.h * a.key;
  c.values = c.h * a.value;
  c.attn = softmax_rows((a.query * c.keys.transpose()) / std::sqrt(static_cast<double>(p.dims.C)));
  c.out = c.attn * c.values;
  return c;
}

/// Accumulates into `g` the gradient of a scalar loss given dL/d(out).
inline void image_backward(const ModelParams& p, const ImageCache& c, const Matrix& d_out, ModelParams& g) {
  const AttentionParams& a = attention_for(p, c.path);
  AttentionParams& ga = attention_for(g, c.path);
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.dims.C));
  const Matrix d_attn = d_out * c.values.transpose();
  const Matrix d_values = c.attn.transpose() * d_out;
  const Matrix d_scores = softmax_rows_backward(c.attn, d_attn) * scale;
  ga.query.noalias() += d_scores * c.keys;
  const Matrix d_keys = d_scores.transpose() * a.query;
  ga.key.noalias() += c.h.transpose() * d_keys;
  ga.value.noalias() += c.h.transpose() * d_values;
  const Matrix d_h = d_keys * a.key.transpose() + d_values * a.value.transpose();
  g.glyph_embed.noalias() += c.x.transpose() * d_h;
  g.image_pos_embed += d_h;
}

inline FeatureSequence image_encode(const ModelParams& p, const GlyphImage& image,
                                    ImagePath path = ImagePath::kRecognition) {
  return {image_forward(p, image, path).out, FeatureRole::kImage};
}

// ---------------------------------------------------------------------------
// Recognizer
// ---------------------------------------------------------------------------

/// Per-position class probabilities, L x K.
struct CharDistribution {
  Matrix probs;
};

/// Greedy decode: per-position argmax, cut at the first EOS.
inline std::string greedy_decode(const CharDistribution& dist) {
  std::string out;
  for (Eigen::Index i = 0; i < dist.probs.rows(); ++i) {
    Eigen::Index best = 0;
    dist.probs.row(i).maxCoeff(&best);
    if (best == kEosClass) break;
    out.push_back(class_char(static_cast<int>(best)));
    if (out.size() == kMaxWordLength) break;
  }
  return out;
}

struct Recognition {
  FeatureSequence features;
  CharDistribution dist;
  std::string y_hat;
};

struct RecognitionCache {
  ImageCache image;
  Matrix probs;  // L x K
};

inline RecognitionCache recognition_forward(const ModelParams& p, const GlyphImage& image) {
  check_finite(p.recog_head_w, "recog_head.w");
  check_finite(p.recog_head_b, "recog_head.b");
  RecognitionCache c;
  c.image = image_forward(p, image, ImagePath::kRecognition);
  Matrix logits = c.image.out * p.recog_head_w;
  logits.rowwise() += p.recog_head_b.row(0);
  c.probs = softmax_rows(std::move(logits));
  return c;
}

inline Recognition recognize(const ModelParams& p, const GlyphImage& image) {
  RecognitionCache c = recognition_forward(p, image);
  Recognition r{{c.image.out, FeatureRole::kImage}, {std::move(c.probs)}, {}};
  r.y_hat = greedy_decode(r.dist);
  return r;
}

/// Target tokens: the label characters followed by one EOS, capped at L.
inline std::vector<int> target_tokens(std::string_view label, int L) {
  if (label.size() > static_cast<std::size_t>(L)) throw Error(ErrorCode::kTooLong, "label longer than L");
  std::vector<int> t;
  for (char c : label) t.push_back(char_class(c));
  if (static_cast<int>(t.size()) < L) t.push_back(kEosClass);
  return t;
}

/// Mean negative log-likelihood of the target tokens. When `d_logits` is given
/// it receives dL/d(logits) (zero wherever the log floor is active).
inline double recognition_loss(const CharDistribution& dist, std::string_view label, Matrix* d_logits = nullptr) {
  const std::vector<int> t = target_tokens(label, static_cast<int>(dist.probs.rows()));
  const double inv_n = 1.0 / static_cast<double>(t.size());
  double loss = 0.0;
  if (d_logits) *d_logits = Matrix::Zero(dist.probs.rows(), dist.probs.cols());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double pt = dist.probs(r, t[i]);
    loss -= std::log(std::max(pt, kLogFloor)) * inv_n;
    if (d_logits && pt >= kLogFloor) {
      d_logits->row(r) = dist.probs.row(r) * inv_n;
      (*d_logits)(r, t[i]) -= inv_n;
    }
  }
  return loss;
}

/// Loss for one sample plus accumulation of its gradient into `g`, scaled by `weight`.
inline double recognition_loss_and_grad(const ModelParams& p, const GlyphImage& image, std::string_view label,
                                        double weight, ModelParams& g) {
  const RecognitionCache c = recognition_forward(p, image);
  Matrix d_logits;
  const double loss = recognition_loss({c.probs}, label, &d_logits);
  d_logits *= weight;
  g.recog_head_w.noalias() += c.image.out.transpose() * d_logits;
  g.recog_head_b += d_logits.colwise().sum();
  image_backward(p, c.image, d_logits * p.recog_head_w.transpose(), g);
  return loss;
}

// ---------------------------------------------------------------------------
// Text encoder: token + position embeddings, two single-head blocks
// (attention + ReLU feed-forward, both residual). Only the live rows
// (characters plus one EOS) are computed. Pad rows are masked out as keys and
// are zero in the output, so padding never leaks into live rows.
// ---------------------------------------------------------------------------

struct TextBlockCache {
  Matrix x_in;   // n x C
  Matrix q, k, v;
  Matrix attn;   // n x n
  Matrix z;      // attn * v
  Matrix x_mid;  // after attention residual
  Matrix pre;    // n x ffn, pre-activation
  Matrix act;    // relu(pre)
};

struct TextCache {
  std::vector<int> tokens;  // live tokens, length n
  std::array<TextBlockCache, 2> blocks;
  Matrix out;               // n x C (live rows only)
};

inline TextCache text_forward(const ModelParams& p, std::string_view text) {
  if (!is_normalized(text)) {
    if (text.size() > kMaxWordLength) throw Error(ErrorCode::kTooLong, "text longer than L");
    throw Error(ErrorCode::kInvalidCharacter, "text must be a normalized word");
  }
  TextCache c;
  c.tokens = target_tokens(text, p.dims.L);
  const auto n = static_cast<Eigen::Index>(c.tokens.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.dims.C));
  Matrix x(n, p.dims.C);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = p.text_embed.row(c.tokens[i]) + p.text_pos_embed.row(i);
  for (std::size_t b = 0; b < p.text_blocks.size(); ++b) {
    const TextBlockParams& w = p.text_blocks[b];
    TextBlockCache& bc = c.blocks[b];
    bc.x_in = x;
    bc.q = x * w.wq;
    bc.k = x * w.wk;
    bc.v = x * w.wv;
    bc.attn = softmax_rows((bc.q * bc.k.transpose()) * scale);
    bc.z = bc.attn * bc.v;
    bc.x_mid = x + bc.z * w.wo;
    bc.pre = bc.x_mid * w.w1;
    bc.pre.rowwise() += w.b1.row(0);
    bc.act = bc.pre.cwiseMax(0.0);
    x = bc.x_mid + bc.act * w.w2;
    x.rowwise() += w.b2.row(0);
  }
  c.out = std::move(x);
  return c;
}

/// Accumulates text-encoder gradients given dL/d(out) on the live rows.
inline void text_backward(const ModelParams& p, const TextCache& c, Matrix d_x, ModelParams& g) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.dims.C));
  for (std::size_t bi = p.text_blocks.size(); bi-- > 0;) {
    const TextBlockParams& w = p.text_blocks[bi];
    TextBlockParams& gw = g.text_blocks[bi];
    const TextBlockCache& bc = c.blocks[bi];
    // feed-forward residual
    g.text_blocks[bi].b2 += d_x.colwise().sum();
    gw.w2.noalias() += bc.act.transpose() * d_x;
    Matrix d_pre = (d_x * w.w2.transpose()).cwiseProduct((bc.pre.array() > 0.0).cast<double>().matrix());
    gw.b1 += d_pre.colwise().sum();
    gw.w1.noalias() += bc.x_mid.transpose() * d_pre;
    Matrix d_mid = d_x + d_pre * w.w1.transpose();
    // attention residual
    gw.wo.noalias() += bc.z.transpose() * d_mid;
    const Matrix d_z = d_mid * w.wo.transpose();
    const Matrix d_attn = d_z * bc.v.transpose();
    const Matrix d_v = bc.attn.transpose() * d_z;
    const Matrix d_scores = softmax_rows_backward(bc.attn, d_attn) * scale;
    const Matrix d_q = d_scores * bc.k;
    const Matrix d_k = d_scores.transpose() * bc.q;
    gw.wq.noalias() += bc.x_in.transpose() * d_q;
    gw.wk.noalias() += bc.x_in.transpose() * d_k;
    gw.wv.noalias() += bc.x_in.transpose() * d_v;
    d_x = d_mid + d_q * w.wq.transpose() + d_k * w.wk.transpose() + d_v * w.wv.transpose();
  }
  for (Eigen::Index i = 0; i < d_x.rows(); ++i) {
    g.text_embed.row(c.tokens[static_cast<std::size_t>(i)]) += d_x.row(i);
    g.text_pos_embed.row(i) += d_x.row(i);
  }
}

/// Full L x C encoding; rows past the live region are zero.
inline FeatureSequence text_encode(const ModelParams& p, std::string_view text) {
  const TextCache c = text_forward(p, text);
  FeatureSequence f{Matrix::Zero(p.dims.L, p.dims.C), FeatureRole::kText};
  f.rows.topRows(c.out.rows()) = c.out;
  return f;
}

// ---------------------------------------------------------------------------
// Projection and similarity
// ---------------------------------------------------------------------------

/// Applies l_v or l_t per position and flattens the L x D result row-major.
inline Vector project(const ModelParams& p, const FeatureSequence& f) {
  const Matrix& w = f.role == FeatureRole::kImage ? p.proj_image : p.proj_text;
  const Matrix y = f.rows * w;
  return Eigen::Map<const Vector>(y.data(), y.size());
}

inline double cosine_similarity(const Vector& u, const Vector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu < kNormFloor || nv < kNormFloor)
    throw Error(ErrorCode::kDegenerateEmbedding, "embedding norm below 1e-12");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

inline Vector normalized(const Vector& u) {
  const double n = u.norm();
  if (n < kNormFloor) throw Error(ErrorCode::kDegenerateEmbedding, "embedding norm below 1e-12");
  return u / n;
}

/// Softmax over s(I, T_m) / tau for every text m.
inline Vector i2t_distribution(const Vector& image_emb, const std::vector<Vector>& text_embs, double tau) {
  if (text_embs.empty()) throw Error(ErrorCode::kInvalidArgument, "i2t needs at least one text");
  if (!(tau > 0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  Vector s(static_cast<Eigen::Index>(text_embs.size()));
  for (std::size_t m = 0; m < text_embs.size(); ++m)
    s(static_cast<Eigen::Index>(m)) = cosine_similarity(image_emb, text_embs[m]) / tau;
  return softmax(s);
}

/// Softmax over s(T, I_m) / tau for every image m.
inline Vector t2i_distribution(const Vector& text_emb, const std::vector<Vector>& image_embs, double tau) {
  if (image_embs.empty()) throw Error(ErrorCode::kInvalidArgument, "t2i needs at least one image");
  return i2t_distribution(text_emb, image_embs, tau);
}

// ---------------------------------------------------------------------------
// Image-text contrastive loss
// ---------------------------------------------------------------------------

struct ItcBatch {
  std::vector<const GlyphImage*> images;  // N
  std::vector<std::string> texts;         // N genuine labels first, then resemblants
};

struct ItcResult {
  double loss = 0.0;
  Matrix similarity;  // N x MN cosine similarities
};

/// Loss over one batch: half the sum of the mean i2t cross-entropy (each image
/// against all MN texts) and the mean t2i cross-entropy (each genuine text
/// against the N images). Resemblants only appear as i2t negatives.
/// Gradients are accumulated into `g` when given.
inline ItcResult itc_loss(const ModelParams& p, const ItcBatch& batch, double tau, ModelParams* g = nullptr) {
  const std::size_t n = batch.images.size();
  const std::size_t mn = batch.texts.size();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "contrastive batch needs at least two pairs");
  if (mn < n) throw Error(ErrorCode::kInvalidArgument, "every image needs its genuine text");
  if (!(tau > 0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  const int L = p.dims.L;
  const int D = p.dims.D;

  std::vector<ImageCache> icache;
  std::vector<TextCache> tcache;
  std::vector<Vector> ie, te;  // raw embeddings
  icache.reserve(n);
  tcache.reserve(mn);
  for (const GlyphImage* img : batch.images) {
    icache.push_back(image_forward(p, *img, ImagePath::kMatching));
    const Matrix y = icache.back().out * p.proj_image;
    ie.emplace_back(Eigen::Map<const Vector>(y.data(), y.size()));
  }
  for (const auto& t : batch.texts) {
    tcache.push_back(text_forward(p, t));
    const Matrix y = tcache.back().out * p.proj_text;
    Vector flat = Vector::Zero(static_cast<Eigen::Index>(L) * D);
    flat.head(y.size()) = Eigen::Map<const Vector>(y.data(), y.size());
    te.push_back(std::move(flat));
  }
  std::vector<double> inorm(n), tnorm(mn);
  std::vector<Vector> iu(n), tu(mn);
  for (std::size_t i = 0; i < n; ++i) {
    inorm[i] = ie[i].norm();
    if (inorm[i] < kNormFloor) throw Error(ErrorCode::kDegenerateEmbedding, "image embedding collapsed");
    iu[i] = ie[i] / inorm[i];
  }
  for (std::size_t j = 0; j < mn; ++j) {
    tnorm[j] = te[j].norm();
    if (tnorm[j] < kNormFloor) throw Error(ErrorCode::kDegenerateEmbedding, "text embedding collapsed");
    tu[j] = te[j] / tnorm[j];
  }
  ItcResult res;
  res.similarity.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(mn));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < mn; ++j)
      res.similarity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = iu[i].dot(tu[j]);

  const Matrix logits = res.similarity / tau;
  const auto N = static_cast<Eigen::Index>(n);
  Matrix p_i2t = softmax_rows(logits);
  Matrix p_t2i = softmax_rows(logits.leftCols(N).transpose());  // row j: genuine text j over images
  double l_i2t = 0.0, l_t2i = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    l_i2t += log_sum_exp(logits.row(i).transpose()) - logits(i, i);
    l_t2i += log_sum_exp(logits.col(i).head(N)) - logits(i, i);
  }
  res.loss = 0.5 * (l_i2t + l_t2i) / static_cast<double>(n);
  if (!std::isfinite(res.loss)) throw Error(ErrorCode::kNonFiniteLoss, "contrastive loss is not finite");
  if (!g) return res;

  // dL/d(logits): softmax minus one-hot, for both directions.
  Matrix d_logits = p_i2t;
  for (Eigen::Index i = 0; i < N; ++i) d_logits(i, i) -= 1.0;
  Matrix d_t2i = p_t2i;
  for (Eigen::Index i = 0; i < N; ++i) d_t2i(i, i) -= 1.0;
  d_logits.leftCols(N) += d_t2i.transpose();
  const Matrix d_cos = d_logits * (0.5 / (static_cast<double>(n) * tau));

  // Through the cosine: ds/du = (v_hat - s u_hat) / |u|.
  std::vector<Vector> d_ie(n, Vector::Zero(ie[0].size())), d_te(mn, Vector::Zero(te[0].size()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < mn; ++j) {
      const double d = d_cos(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (d == 0.0) continue;
      const double s = res.similarity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      d_ie[i] += d * (tu[j] - s * iu[i]) / inorm[i];
      d_te[j] += d * (iu[i] - s * tu[j]) / tnorm[j];
    }

  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Map<const Matrix> dy(d_ie[i].data(), L, D);
    const ImageCache& c = icache[i];
    g->proj_image.noalias() += c.out.transpose() * dy;
    image_backward(p, c, dy * p.proj_image.transpose(), *g);
  }
  for (std::size_t j = 0; j < mn; ++j) {
    const TextCache& c = tcache[j];
    const Eigen::Map<const Matrix> dy_full(d_te[j].data(), L, D);
    const Matrix dy = dy_full.topRows(c.out.rows());
    g->proj_text.noalias() += c.out.transpose() * dy;
    text_backward(p, c, dy * p.proj_text.transpose(), *g);
  }
  return res;
}

/// Weighted stage objective: lambda1 * recognition + lambda2 * contrastive.
inline double overall_loss(double recog, double sitm, double lambda1, double lambda2) {
  if (lambda1 < 0 || lambda2 < 0) throw Error(ErrorCode::kInvalidArgument, "loss weights must be non-negative");
  double total = 0.0;
  if (lambda1 != 0.0) total += lambda1 * recog;
  if (lambda2 != 0.0) total += lambda2 * sitm;
  return total;
}

}  // namespace vdict
