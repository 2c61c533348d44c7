#pragma once

#include "cflab/loss.hpp"
#include "cflab/model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cflab {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // classic L2, added into the gradient
  bool lazy = true;           // update moments only for touched rows
};

// Bias-corrected Adam with per-parameter first/second moments. In lazy mode
// only the rows touched by a batch are stepped (moment decay is skipped for
// untouched rows); dense mode steps every row for exactness tests.
class AdamState {
 public:
  AdamState(const ModelState& shapes, AdamConfig config);

  // One update from a loss evaluation; throws NumericError on non-finite
  // gradients. Tensors are visited in the fixed ModelState order.
  void step(ModelState& params, const LossEvaluation& eval);

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }

  std::map<std::string, Matrix>& first_moments() { return m_; }
  std::map<std::string, Matrix>& second_moments() { return v_; }
  void set_step_count(std::int64_t t) { step_ = t; }

 private:
  AdamConfig config_;
  std::map<std::string, Matrix> m_, v_;
  std::int64_t step_ = 0;
};

// Xavier-uniform init of the embedding tables with fan = dim per side,
// i.e. bound = sqrt(6 / (2 dim)); margins and the boundary projector start
// at zero (effective margin softplus(0) = ln 2).
void init_params(ModelState& state, std::uint64_t seed);

}  // namespace cflab
