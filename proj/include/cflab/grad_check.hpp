#pragma once

#include "cflab/loss.hpp"

#include <cstdint>

namespace cflab {

struct GradCheckOptions {
  double eps = 1e-5;          // central-difference step, must lie in [1e-6, 1e-4]
  int max_coordinates = 200;  // per tensor-set sample budget (>= 200 in the acceptance suite)
  std::uint64_t seed = 0;     // coordinate subsampling
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int coordinates_checked = 0;
};

// Central finite differences over the parameter coordinates touched by the
// batch (a random subsample when there are more than max_coordinates).
// Relative error per coordinate: |analytic - numeric| / max(1e-4, |analytic| + |numeric|).
// Throws NumericError when the loss evaluates non-finite.
GradCheckResult grad_check(const LossConfig& cfg, const ModelState& state, const Encoder& encoder,
                           const Batch& batch, const GradCheckOptions& options,
                           const InteractionDataset* dataset = nullptr);

}  // namespace cflab
