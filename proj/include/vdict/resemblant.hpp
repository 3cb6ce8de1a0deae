#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vdict/confusion.hpp"
#include "vdict/error.hpp"
#include "vdict/rng.hpp"

namespace vdict {

struct ResemblantSpec {
  std::size_t count = 3;
  const ConfusionTable* table = &default_confusion_table();
  std::uint64_t seed = 0;
};

/// Hard negatives for `label`: `count` distinct single-position substitutions,
/// each replacement taken from the confusion row of the replaced character.
/// Samples without replacement from the 5 * |label| variant space.
inline std::vector<std::string> generate_resemblants(std::string_view label, const ResemblantSpec& spec) {
  const std::size_t space = ConfusionTable::kRowSize * label.size();
  if (spec.count > space)
    throw Error(ErrorCode::kInfeasibleCount, "asked for " + std::to_string(spec.count) + " resemblants of \"" +
                                                 std::string(label) + "\", at most " + std::to_string(space) + " exist");
  std::vector<std::string> out;
  if (spec.count == 0) return out;
  std::vector<std::uint32_t> slots(space);
  for (std::uint32_t i = 0; i < space; ++i) slots[i] = i;
  Rng rng(spec.seed);
  out.reserve(spec.count);
  for (std::size_t k = 0; k < spec.count; ++k) {
    std::swap(slots[k], slots[k + rng.below(space - k)]);
    const std::size_t pos = slots[k] / ConfusionTable::kRowSize;
    const std::size_t alt = slots[k] % ConfusionTable::kRowSize;
    std::string variant(label);
    variant[pos] = spec.table->row(label[pos])[alt];
    out.push_back(std::move(variant));
  }
  return out;
}

}  // namespace vdict
