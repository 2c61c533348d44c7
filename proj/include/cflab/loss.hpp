#pragma once

#include "cflab/dataset.hpp"
#include "cflab/encoder.hpp"
#include "cflab/model.hpp"
#include "cflab/sampling.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cflab {

enum class LossKind { BCE, MCL, UIB, BPR, CML, SML, CCL, SSM, BC, DirectAU, MAWU };

enum class MarginMode { zero, inverse_popularity, uib_fashion, bc_fashion, learned };

struct MclParams {
  double alpha = 2.0;
  double beta = 2.0;
  double lambda_p = 0.0;
  double lambda_n = 0.0;
};

struct LossConfig {
  LossKind kind = LossKind::BPR;
  double tau = 1.0;          // SSM/BC temperature
  double margin_const = 0.0; // CML's M / CCL's filter margin
  double ccl_weight = 1.0;   // CCL's w
  MclParams mcl_params;
  double uib_alpha = 1.0;    // UIB's negative-term weight
  double gamma = 1.0;        // DirectAU uniformity weight
  double gamma1 = 1.0;       // MAWU user-uniformity weight
  double gamma2 = 1.0;       // MAWU item-uniformity weight
  double sml_lambda = 0.0;   // SML's L_AM weight
  MarginMode margin_mode = MarginMode::learned;

  void validate() const;
};

const char* loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);
const char* margin_mode_name(MarginMode mode);
MarginMode margin_mode_from_name(const std::string& name);

// Scalar loss plus gradients for every parameter tensor the batch touched;
// untouched tensors have no entry. touched_rows lists the rows that carry
// gradient (all rows when the encoder propagates).
struct LossEvaluation {
  double value = 0.0;
  bool user_uniformity_skipped = false;
  bool item_uniformity_skipped = false;
  std::map<std::string, Matrix> grads;
  std::map<std::string, std::vector<Index>> touched_rows;
};

// Evaluates cfg.kind on the batch through the encoder. `dataset` supplies
// popularity counts and is required only for the inverse_popularity and
// bc_fashion margin modes.
LossEvaluation evaluate_loss(const LossConfig& cfg, const ModelState& state, const Encoder& encoder,
                             const Batch& batch, const InteractionDataset* dataset = nullptr);

// cos(arccos(s) + m) via the angle-addition identity
//   cos(theta + m) = s cos(m) - sin(theta) sin(m),
// which is exactly s when m == 0. The sine factor uses s clamped to
// [-1+1e-7, 1-1e-7] only where a division by sin(theta) would occur.
double cos_angle_plus_margin(double s, double m);

// Diagnostic (M_u, M_i) for one (user, item) under a margin mode, evaluated
// on the embedding tables (lookup-encoder view).
std::pair<double, double> margin_value(const ModelState& state, const InteractionDataset& ds, MarginMode mode,
                                       Index user, Index item);

// Affine rescale of the inverse-popularity ratios p_max/p into [0, pi/4].
struct InversePopularityScale {
  double max_ratio_user = 1.0;
  double max_ratio_item = 1.0;
  std::int64_t pmax_user = 1;
  std::int64_t pmax_item = 1;

  static InversePopularityScale from(const InteractionDataset& ds);
  double user_margin(std::int64_t pop) const;
  double item_margin(std::int64_t pop) const;
};

}  // namespace cflab
