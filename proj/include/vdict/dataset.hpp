#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vdict/binary_io.hpp"
#include "vdict/confusion.hpp"
#include "vdict/glyph.hpp"
#include "vdict/lexicon.hpp"
#include "vdict/rng.hpp"

namespace vdict {

struct LabeledSample {
  GlyphImage image;
  std::string label;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct DatasetSpec {
  std::uint64_t seed = 7;
  std::size_t train_size = 4000;
  std::size_t test_size = 1000;
  double noise_rate = 0.05;                    // test images
  std::optional<double> train_noise_rate;      // defaults to noise_rate
  double smear = 0.4;
  double out_of_lexicon_fraction = 0.2;

  double effective_train_noise() const { return train_noise_rate.value_or(noise_rate); }

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(noise_rate) || !prob(effective_train_noise()) || !prob(smear) || !prob(out_of_lexicon_fraction))
      throw Error(ErrorCode::kInvalidArgument, "dataset probabilities must lie in [0,1]");
    if (train_size < 1 || test_size < 1) throw Error(ErrorCode::kInvalidArgument, "dataset sizes must be >= 1");
  }

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct Dataset {
  DatasetSpec spec;
  std::uint64_t lexicon_digest = 0;
  int table_version = 0;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;

  static constexpr std::uint32_t kFormatVersion = 1;

  /// "VDDS" file: header, then samples stored sparsely (non-zero channels
  /// only, values as raw float64), then an FNV-1a checksum.
  std::vector<std::uint8_t> serialize() const {
    ByteWriter w;
    w.magic("VDDS");
    w.u32(kFormatVersion);
    w.u64(spec.seed);
    w.u64(spec.train_size);
    w.u64(spec.test_size);
    w.f64(spec.noise_rate);
    w.f64(spec.effective_train_noise());
    w.f64(spec.smear);
    w.f64(spec.out_of_lexicon_fraction);
    w.u64(lexicon_digest);
    w.u32(static_cast<std::uint32_t>(table_version));
    for (const auto* split : {&train, &test}) {
      w.u64(split->size());
      for (const auto& s : *split) {
        w.str(s.label);
        w.u32(static_cast<std::uint32_t>(s.image.label_length));
        for (int i = 0; i < kGlyphCells; ++i) {
          std::uint8_t nnz = 0;
          for (int k = 0; k < kNumClasses; ++k) nnz += s.image.cells(i, k) != 0.0;
          w.u8(nnz);
          for (int k = 0; k < kNumClasses; ++k)
            if (s.image.cells(i, k) != 0.0) {
              w.u8(static_cast<std::uint8_t>(k));
              w.f64(s.image.cells(i, k));
            }
        }
      }
    }
    w.checksum();
    return w.bytes();
  }

  std::uint64_t digest() const {
    Fnv1a h;
    const auto bytes = serialize();
    h.update(bytes.data(), bytes.size());
    return h.value();
  }

  void save(const std::string& path) const { ByteWriter::write_file(path, serialize()); }

  static Dataset load(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    r.verify_checksum();
    if (!r.expect_magic("VDDS")) throw Error(ErrorCode::kCorruptFile, "bad dataset magic");
    if (r.u32() != kFormatVersion) throw Error(ErrorCode::kVersionMismatch, "dataset format version");
    Dataset d;
    d.spec.seed = r.u64();
    d.spec.train_size = r.u64();
    d.spec.test_size = r.u64();
    d.spec.noise_rate = r.f64();
    d.spec.train_noise_rate = r.f64();
    d.spec.smear = r.f64();
    d.spec.out_of_lexicon_fraction = r.f64();
    d.lexicon_digest = r.u64();
    d.table_version = static_cast<int>(r.u32());
    for (auto* split : {&d.train, &d.test}) {
      const std::uint64_t n = r.u64();
      if (n > r.remaining()) throw Error(ErrorCode::kCorruptFile, "sample count exceeds file size");
      split->resize(n);
      for (auto& s : *split) {
        s.label = r.str();
        if (!is_normalized(s.label)) throw Error(ErrorCode::kCorruptFile, "dataset label not normalized");
        s.image.label_length = static_cast<int>(r.u32());
        for (int i = 0; i < kGlyphCells; ++i) {
          const int nnz = r.u8();
          for (int j = 0; j < nnz; ++j) {
            const int k = r.u8();
            if (k >= kNumClasses) throw Error(ErrorCode::kCorruptFile, "channel out of range");
            s.image.cells(i, k) = r.f64();
          }
        }
      }
    }
    return d;
  }
};

/// Random lexicon of distinct words, lengths 3..10, ~10% digits per position.
inline Lexicon generate_random_lexicon(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < size) {
    const std::size_t len = 3 + rng.below(8);
    std::string w;
    for (std::size_t i = 0; i < len; ++i)
      w.push_back(rng.bernoulli(0.9) ? kAlphabet[rng.below(26)] : kAlphabet[26 + rng.below(10)]);
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return Lexicon(words);
}

/// Single confusable substitution of a random lexicon word, rejected until
/// the result is absent from the lexicon.
inline std::string make_out_of_lexicon_word(const Lexicon& lexicon, const ConfusionTable& table, Rng& rng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const std::string& base = lexicon.words()[rng.below(lexicon.size())];
    std::string w = base;
    const std::size_t pos = rng.below(w.size());
    w[pos] = table.row(w[pos])[rng.below(ConfusionTable::kRowSize)];
    if (!lexicon.contains(w)) return w;
  }
  throw Error(ErrorCode::kInvalidArgument, "could not derive an out-of-lexicon word");
}

/// Train labels are drawn uniformly from the lexicon. Exactly
/// round(out_of_lexicon_fraction * test_size) test labels, at random
/// positions, are confusable mutations absent from the lexicon.
inline Dataset generate_dataset(const DatasetSpec& spec, const Lexicon& lexicon,
                                const ConfusionTable& table = default_confusion_table()) {
  spec.validate();
  if (lexicon.empty()) throw Error(ErrorCode::kEmptyLexicon, "cannot sample labels from an empty lexicon");
  Dataset d;
  d.spec = spec;
  d.lexicon_digest = lexicon.digest();
  d.table_version = table.version();

  Rng label_rng(mix_seed(spec.seed, 1));
  d.train.reserve(spec.train_size);
  for (std::size_t i = 0; i < spec.train_size; ++i) {
    std::string label = lexicon.words()[label_rng.below(lexicon.size())];
    GlyphImage img = perturb(render(label), table, spec.effective_train_noise(), spec.smear, mix_seed(spec.seed, 1000000 + i));
    d.train.push_back({std::move(img), std::move(label)});
  }

  Rng test_rng(mix_seed(spec.seed, 2));
  const auto n_ool = static_cast<std::size_t>(std::llround(spec.out_of_lexicon_fraction * static_cast<double>(spec.test_size)));
  std::vector<bool> ool(spec.test_size, false);
  std::fill(ool.begin(), ool.begin() + static_cast<std::ptrdiff_t>(n_ool), true);
  for (std::size_t i = ool.size(); i > 1; --i) {
    const std::size_t j = test_rng.below(i);
    const bool tmp = ool[i - 1];
    ool[i - 1] = ool[j];
    ool[j] = tmp;
  }
  d.test.reserve(spec.test_size);
  for (std::size_t i = 0; i < spec.test_size; ++i) {
    std::string label = ool[i] ? make_out_of_lexicon_word(lexicon, table, test_rng)
                               : lexicon.words()[test_rng.below(lexicon.size())];
    GlyphImage img = perturb(render(label), table, spec.noise_rate, spec.smear, mix_seed(spec.seed, 2000000 + i));
    d.test.push_back({std::move(img), std::move(label)});
  }
  return d;
}

}  // namespace vdict
