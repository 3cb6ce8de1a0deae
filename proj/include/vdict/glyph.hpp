#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "vdict/alphabet.hpp"
#include "vdict/confusion.hpp"
#include "vdict/rng.hpp"
#include "vdict/tensor.hpp"

namespace vdict {

inline constexpr int kGlyphCells = 25;

/// Synthetic text image: one probability vector over the 37 classes per cell.
struct GlyphImage {
  Matrix cells = Matrix::Zero(kGlyphCells, kNumClasses);
  int label_length = 0;

  friend bool operator==(const GlyphImage& a, const GlyphImage& b) {
    return a.label_length == b.label_length && a.cells == b.cells;
  }
};

inline GlyphImage render(std::string_view label) {
  if (!is_normalized(label)) throw Error(ErrorCode::kInvalidCharacter, "render needs a normalized label");
  GlyphImage img;
  img.label_length = static_cast<int>(label.size());
  for (int i = 0; i < kGlyphCells; ++i) {
    const int cls = i < img.label_length ? char_class(label[static_cast<std::size_t>(i)]) : kEosClass;
    img.cells(i, cls) = 1.0;
  }
  return img;
}

/// Per non-blank cell: with probability `noise_rate` the dominant class swaps
/// its mass with a random member of its confusion row; then a `smear`
/// fraction of the cell is spread evenly over that same row.
inline GlyphImage perturb(const GlyphImage& image, const ConfusionTable& table, double noise_rate, double smear,
                          std::uint64_t seed) {
  if (noise_rate < 0 || noise_rate > 1 || smear < 0 || smear > 1)
    throw Error(ErrorCode::kInvalidArgument, "noise_rate and smear must lie in [0,1]");
  GlyphImage out = image;
  Rng rng(seed);
  for (int i = 0; i < out.label_length; ++i) {
    auto cell = out.cells.row(i);
    Eigen::Index dominant = 0;
    cell.maxCoeff(&dominant);
    if (dominant == kEosClass) continue;
    const auto& row = table.row(class_char(static_cast<int>(dominant)));
    if (rng.bernoulli(noise_rate)) {
      const int target = char_class(row[rng.below(ConfusionTable::kRowSize)]);
      std::swap(cell(dominant), cell(target));
    }
    if (smear > 0) {
      cell *= 1.0 - smear;
      for (char c : row) cell(char_class(c)) += smear / ConfusionTable::kRowSize;
      cell /= cell.sum();
    }
  }
  return out;
}

}  // namespace vdict
