#pragma once

#include "cflab/dataset.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace cflab {

// Positive (user, item) pairs with per-pair negative item lists. AU-family
// losses ignore the negatives, which may then be empty.
struct Batch {
  std::vector<std::pair<Index, Index>> pairs;
  std::vector<std::vector<Index>> negatives;

  Index size() const { return static_cast<Index>(pairs.size()); }
};

enum class NegativeMode { uniform, in_batch };

// Uniform mode: n items per pair drawn uniformly from I \ {pos_item}
// (only the pair's own positive is rejected). In-batch mode: the other
// pairs' positives, minus any that equal this pair's positive.
Batch sample_negatives(const InteractionDataset& ds, const std::vector<std::pair<Index, Index>>& pairs,
                       int num_negatives, NegativeMode mode, std::uint64_t seed);

}  // namespace cflab
