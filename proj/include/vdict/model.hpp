#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vdict/alphabet.hpp"
#include "vdict/binary_io.hpp"
#include "vdict/error.hpp"
#include "vdict/glyph.hpp"
#include "vdict/rng.hpp"
#include "vdict/tensor.hpp"

namespace vdict {

struct ModelDims {
  int L = 25;      // feature sequence length
  int C = 32;      // channel width
  int D = 32;      // projection width
  int K = kNumClasses;
  int vocab = kNumClasses;
  int W = kGlyphCells;
  int ffn = 64;    // hidden width of the text-encoder feed-forward

  void validate() const {
    if (L <= 0 || C <= 0 || D <= 0 || K <= 0 || vocab <= 0 || W <= 0 || ffn <= 0)
      throw Error(ErrorCode::kInvalidArgument, "model dimensions must be positive");
    if (L < static_cast<int>(kMaxWordLength))
      throw Error(ErrorCode::kInvalidArgument, "L must cover the maximum word length");
    if (K != kNumClasses || vocab != kNumClasses || W != kGlyphCells)
      throw Error(ErrorCode::kInvalidArgument, "K, vocab and W are fixed by the glyph alphabet");
  }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Parameter groups, used to freeze or unfreeze parts of the model per stage.
enum class ParamGroup : std::uint8_t {
  kBackbone,         // glyph embedding + image positions, shared by both image paths
  kRecogAttention,   // parallel attention feeding the recognizer head
  kRecogHead,
  kMatchAttention,   // parallel attention feeding the image projection
  kTextEncoder,
  kProjection,
};

inline constexpr std::array<ParamGroup, 6> kAllGroups = {
    ParamGroup::kBackbone,       ParamGroup::kRecogAttention, ParamGroup::kRecogHead,
    ParamGroup::kMatchAttention, ParamGroup::kTextEncoder,    ParamGroup::kProjection};

inline std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kBackbone: return "backbone";
    case ParamGroup::kRecogAttention: return "recog_attention";
    case ParamGroup::kRecogHead: return "recog_head";
    case ParamGroup::kMatchAttention: return "match_attention";
    case ParamGroup::kTextEncoder: return "text_encoder";
    case ParamGroup::kProjection: return "projection";
  }
  return "unknown";
}

inline ParamGroup parse_param_group(std::string_view s) {
  for (ParamGroup g : kAllGroups)
    if (to_string(g) == s) return g;
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter group: " + std::string(s));
}

/// L learned queries attending over the W image cells.
struct AttentionParams {
  Matrix query;  // L x C
  Matrix key;    // C x C
  Matrix value;  // C x C
};

struct TextBlockParams {
  Matrix wq, wk, wv, wo;  // C x C
  Matrix w1;              // C x ffn
  Matrix b1;              // 1 x ffn
  Matrix w2;              // ffn x C
  Matrix b2;              // 1 x C
};

/// All trainable tensors. Gradients reuse the same struct. Biases are 1 x n
/// matrices so every tensor is visited uniformly.
struct ModelParams {
  ModelDims dims;
  Matrix glyph_embed;      // K x C
  Matrix image_pos_embed;  // W x C
  AttentionParams recog_attention;
  Matrix recog_head_w;     // C x K
  Matrix recog_head_b;     // 1 x K
  AttentionParams match_attention;
  Matrix text_embed;       // vocab x C
  Matrix text_pos_embed;   // L x C
  std::array<TextBlockParams, 2> text_blocks;
  Matrix proj_image;       // C x D
  Matrix proj_text;        // C x D

  /// Visits every tensor in a fixed order as (name, group, matrix).
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("glyph_embed", ParamGroup::kBackbone, self.glyph_embed);
    fn("image_pos_embed", ParamGroup::kBackbone, self.image_pos_embed);
    fn("recog_attention.query", ParamGroup::kRecogAttention, self.recog_attention.query);
    fn("recog_attention.key", ParamGroup::kRecogAttention, self.recog_attention.key);
    fn("recog_attention.value", ParamGroup::kRecogAttention, self.recog_attention.value);
    fn("recog_head.w", ParamGroup::kRecogHead, self.recog_head_w);
    fn("recog_head.b", ParamGroup::kRecogHead, self.recog_head_b);
    fn("match_attention.query", ParamGroup::kMatchAttention, self.match_attention.query);
    fn("match_attention.key", ParamGroup::kMatchAttention, self.match_attention.key);
    fn("match_attention.value", ParamGroup::kMatchAttention, self.match_attention.value);
    fn("text_embed", ParamGroup::kTextEncoder, self.text_embed);
    fn("text_pos_embed", ParamGroup::kTextEncoder, self.text_pos_embed);
    for (std::size_t b = 0; b < self.text_blocks.size(); ++b) {
      auto& blk = self.text_blocks[b];
      const std::string p = "text_block" + std::to_string(b) + ".";
      fn(p + "wq", ParamGroup::kTextEncoder, blk.wq);
      fn(p + "wk", ParamGroup::kTextEncoder, blk.wk);
      fn(p + "wv", ParamGroup::kTextEncoder, blk.wv);
      fn(p + "wo", ParamGroup::kTextEncoder, blk.wo);
      fn(p + "w1", ParamGroup::kTextEncoder, blk.w1);
      fn(p + "b1", ParamGroup::kTextEncoder, blk.b1);
      fn(p + "w2", ParamGroup::kTextEncoder, blk.w2);
      fn(p + "b2", ParamGroup::kTextEncoder, blk.b2);
    }
    fn("proj_image", ParamGroup::kProjection, self.proj_image);
    fn("proj_text", ParamGroup::kProjection, self.proj_text);
  }

  template <typename Fn>
  void for_each(Fn&& fn) { visit(*this, std::forward<Fn>(fn)); }
  template <typename Fn>
  void for_each(Fn&& fn) const { visit(*this, std::forward<Fn>(fn)); }

  /// Same shapes, all zeros. Used for gradient accumulators.
  static ModelParams zeros(const ModelDims& d) {
    d.validate();
    ModelParams p;
    p.dims = d;
    p.glyph_embed = Matrix::Zero(d.K, d.C);
    p.image_pos_embed = Matrix::Zero(d.W, d.C);
    for (auto* a : {&p.recog_attention, &p.match_attention}) {
      a->query = Matrix::Zero(d.L, d.C);
      a->key = Matrix::Zero(d.C, d.C);
      a->value = Matrix::Zero(d.C, d.C);
    }
    p.recog_head_w = Matrix::Zero(d.C, d.K);
    p.recog_head_b = Matrix::Zero(1, d.K);
    p.text_embed = Matrix::Zero(d.vocab, d.C);
    p.text_pos_embed = Matrix::Zero(d.L, d.C);
    for (auto& b : p.text_blocks) {
      b.wq = b.wk = b.wv = b.wo = Matrix::Zero(d.C, d.C);
      b.w1 = Matrix::Zero(d.C, d.ffn);
      b.b1 = Matrix::Zero(1, d.ffn);
      b.w2 = Matrix::Zero(d.ffn, d.C);
      b.b2 = Matrix::Zero(1, d.C);
    }
    p.proj_image = Matrix::Zero(d.C, d.D);
    p.proj_text = Matrix::Zero(d.C, d.D);
    return p;
  }

  /// Gaussian init: embeddings and queries at unit scale, weight matrices at
  /// 1/sqrt(fan_in), biases zero.
  static ModelParams init(const ModelDims& d, std::uint64_t seed) {
    ModelParams p = zeros(d);
    Rng rng(seed);
    p.for_each([&](const std::string& name, ParamGroup, Matrix& m) {
      if (name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2")) return;
      const bool unit = name == "glyph_embed" || name == "image_pos_embed" || name == "text_embed" ||
                        name == "text_pos_embed" || name.ends_with(".query");
      const double scale = unit ? 1.0 : 1.0 / std::sqrt(static_cast<double>(m.rows()));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    });
    return p;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, ParamGroup, const Matrix& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, ParamGroup, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  void set_zero() {
    for_each([](const std::string&, ParamGroup, Matrix& m) { m.setZero(); });
  }

  /// this += scale * other, tensor by tensor.
  void add_scaled(const ModelParams& other, double scale) {
    std::vector<const Matrix*> src;
    other.for_each([&](const std::string&, ParamGroup, const Matrix& m) { src.push_back(&m); });
    std::size_t i = 0;
    for_each([&](const std::string&, ParamGroup, Matrix& m) { m += scale * *src[i++]; });
  }

  static constexpr std::uint32_t kFormatVersion = 1;

  /// "VDMP", version, dims header, then each tensor as rows, cols and
  /// little-endian float64 values in row-major order, then a checksum.
  std::vector<std::uint8_t> serialize() const {
    ByteWriter w;
    w.magic("VDMP");
    w.u32(kFormatVersion);
    for (int v : {dims.L, dims.C, dims.D, dims.K, dims.vocab, dims.W, dims.ffn}) w.u32(static_cast<std::uint32_t>(v));
    for_each([&](const std::string&, ParamGroup, const Matrix& m) {
      w.u32(static_cast<std::uint32_t>(m.rows()));
      w.u32(static_cast<std::uint32_t>(m.cols()));
      for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
    });
    w.checksum();
    return w.bytes();
  }

  std::uint64_t digest() const {
    const auto bytes = serialize();
    Fnv1a h;
    h.update(bytes.data(), bytes.size());
    return h.value();
  }

  void save(const std::string& path) const { ByteWriter::write_file(path, serialize()); }

  static ModelParams deserialize(std::vector<std::uint8_t> bytes, const ModelDims* expected = nullptr) {
    return read(ByteReader(std::move(bytes)), expected);
  }

  static ModelParams load(const std::string& path, const ModelDims* expected = nullptr) {
    return read(ByteReader::from_file(path), expected);
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) { return a.serialize() == b.serialize(); }

 private:
  static ModelParams read(ByteReader r, const ModelDims* expected) {
    r.verify_checksum();
    if (!r.expect_magic("VDMP")) throw Error(ErrorCode::kCorruptFile, "bad model magic");
    if (r.u32() != kFormatVersion) throw Error(ErrorCode::kVersionMismatch, "model format version");
    ModelDims d;
    for (int* v : {&d.L, &d.C, &d.D, &d.K, &d.vocab, &d.W, &d.ffn}) *v = static_cast<int>(r.u32());
    if (expected && !(d == *expected)) throw Error(ErrorCode::kVersionMismatch, "model dims differ from expected");
    try {
      d.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kVersionMismatch, std::string("unsupported dims header: ") + e.what());
    }
    ModelParams p = zeros(d);
    p.for_each([&](const std::string& name, ParamGroup, Matrix& m) {
      const auto rows = r.u32();
      const auto cols = r.u32();
      if (rows != m.rows() || cols != m.cols())
        throw Error(ErrorCode::kVersionMismatch, "tensor shape mismatch for " + name);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    });
    if (r.remaining() != 8) throw Error(ErrorCode::kCorruptFile, "trailing bytes in model file");
    return p;
  }

};

}  // namespace vdict
