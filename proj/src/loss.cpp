#include "cflab/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <unordered_set>

namespace cflab {

namespace {

// arccos inputs are clamped to +-(1 - kArccosClamp) wherever a division by
// sin(theta) occurs, to avoid the infinite derivative at |s| = 1.
constexpr double kArccosClamp = 1e-7;
constexpr double kNormFloor = 1e-12;

double clamp_unit(double s) { return std::clamp(s, -1.0, 1.0); }
double clamp_arccos(double s) { return std::clamp(s, -1.0 + kArccosClamp, 1.0 - kArccosClamp); }

// sin(arccos(s)) on the value path; exact 0 at |s| = 1.
double sin_theta(double s) { return std::sqrt(std::max(0.0, 1.0 - clamp_unit(s) * clamp_unit(s))); }

}  // namespace

double cos_angle_plus_margin(double s, double m) {
  return clamp_unit(s) * std::cos(m) - sin_theta(s) * std::sin(m);
}

void LossConfig::validate() const {
  if (tau <= 0.0) throw ConfigError("LossConfig: tau must be > 0");
  if (gamma < 0.0 || gamma1 < 0.0 || gamma2 < 0.0) throw ConfigError("LossConfig: gamma weights must be >= 0");
  if (kind == LossKind::MCL && (mcl_params.alpha <= 0.0 || mcl_params.beta <= 0.0))
    throw ConfigError("LossConfig: MCL needs alpha, beta > 0");
  if (kind == LossKind::CML && margin_const < 0.0) throw ConfigError("LossConfig: CML margin must be >= 0");
}

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::BCE: return "BCE";
    case LossKind::MCL: return "MCL";
    case LossKind::UIB: return "UIB";
    case LossKind::BPR: return "BPR";
    case LossKind::CML: return "CML";
    case LossKind::SML: return "SML";
    case LossKind::CCL: return "CCL";
    case LossKind::SSM: return "SSM";
    case LossKind::BC: return "BC";
    case LossKind::DirectAU: return "DirectAU";
    case LossKind::MAWU: return "MAWU";
  }
  return "?";
}

LossKind loss_kind_from_name(const std::string& name) {
  for (LossKind k : {LossKind::BCE, LossKind::MCL, LossKind::UIB, LossKind::BPR, LossKind::CML, LossKind::SML,
                     LossKind::CCL, LossKind::SSM, LossKind::BC, LossKind::DirectAU, LossKind::MAWU})
    if (name == loss_kind_name(k)) return k;
  throw ConfigError("unknown loss kind: " + name);
}

const char* margin_mode_name(MarginMode mode) {
  switch (mode) {
    case MarginMode::zero: return "zero";
    case MarginMode::inverse_popularity: return "inverse_popularity";
    case MarginMode::uib_fashion: return "uib_fashion";
    case MarginMode::bc_fashion: return "bc_fashion";
    case MarginMode::learned: return "learned";
  }
  return "?";
}

MarginMode margin_mode_from_name(const std::string& name) {
  for (MarginMode m : {MarginMode::zero, MarginMode::inverse_popularity, MarginMode::uib_fashion,
                       MarginMode::bc_fashion, MarginMode::learned})
    if (name == margin_mode_name(m)) return m;
  throw ConfigError("unknown margin mode: " + name);
}

InversePopularityScale InversePopularityScale::from(const InteractionDataset& ds) {
  InversePopularityScale sc;
  auto scan = [](const std::vector<std::int64_t>& pop, std::int64_t& pmax, double& max_ratio) {
    pmax = 1;
    std::int64_t pmin = std::numeric_limits<std::int64_t>::max();
    for (std::int64_t p : pop) {
      const std::int64_t q = std::max<std::int64_t>(p, 1);
      pmax = std::max(pmax, q);
      pmin = std::min(pmin, q);
    }
    if (pmin == std::numeric_limits<std::int64_t>::max()) pmin = 1;
    max_ratio = static_cast<double>(pmax) / static_cast<double>(pmin);
  };
  scan(ds.user_pop, sc.pmax_user, sc.max_ratio_user);
  scan(ds.item_pop, sc.pmax_item, sc.max_ratio_item);
  return sc;
}

namespace {

double rescaled_ratio(double ratio, double max_ratio) {
  if (max_ratio <= 1.0) return 0.0;
  return (std::numbers::pi / 4.0) * (ratio - 1.0) / (max_ratio - 1.0);
}

}  // namespace

double InversePopularityScale::user_margin(std::int64_t pop) const {
  const double r = static_cast<double>(pmax_user) / static_cast<double>(std::max<std::int64_t>(pop, 1));
  return rescaled_ratio(r, max_ratio_user);
}

double InversePopularityScale::item_margin(std::int64_t pop) const {
  const double r = static_cast<double>(pmax_item) / static_cast<double>(std::max<std::int64_t>(pop, 1));
  return rescaled_ratio(r, max_ratio_item);
}

namespace {

void normalize_rows(const Matrix& raw, Matrix& unit, Vector& norms) {
  unit.resizeLike(raw);
  norms.resize(raw.rows());
  for (Index r = 0; r < raw.rows(); ++r) {
    const double n = raw.row(r).norm();
    norms(r) = n;
    if (n < kNormFloor)
      unit.row(r).setZero();  // degenerate row: treated as a constant
    else
      unit.row(r) = raw.row(r) / n;
  }
}

// Gradient through row normalization: d/dv of ~v = v/|v| applied to g.
void normalization_backward(const Matrix& unit, const Vector& norms, const Matrix& g_unit, Matrix& g_raw) {
  for (Index r = 0; r < unit.rows(); ++r) {
    if (norms(r) < kNormFloor) continue;
    const double proj = g_unit.row(r).dot(unit.row(r));
    g_raw.row(r) += (g_unit.row(r) - proj * unit.row(r)) / norms(r);
  }
}

struct EvalContext {
  const LossConfig& cfg;
  const ModelState& state;
  const Encoder& encoder;
  const Batch& batch;
  const InteractionDataset* ds;

  Matrix U, I;    // encoder outputs (raw)
  Matrix Un, In;  // row-normalized outputs
  Vector u_norms, i_norms;

  Matrix gUn, gIn;  // grads wrt normalized rows
  Matrix gU, gI;    // grads wrt raw output rows (direct paths)

  Matrix g_user_margin, g_item_margin, g_boundary, g_pop_user, g_pop_item;
  bool touch_user_margin = false, touch_item_margin = false, touch_boundary = false, touch_pop = false;
  bool margin_touches_all_rows = false;  // SML's L_AM regularizes every margin row

  // bc_fashion popularity embeddings, normalized lazily
  Matrix PopUn, PopIn;
  Vector pop_u_norms, pop_i_norms;
  Matrix gPopUn, gPopIn;

  LossEvaluation result;

  Index B() const { return batch.size(); }
  Index user(Index k) const { return batch.pairs[static_cast<std::size_t>(k)].first; }
  Index item(Index k) const { return batch.pairs[static_cast<std::size_t>(k)].second; }
  const std::vector<Index>& negs(Index k) const { return batch.negatives[static_cast<std::size_t>(k)]; }

  double sim(Index u, Index i) const { return Un.row(u).dot(In.row(i)); }
  double dist2(Index u, Index i) const { return (Un.row(u) - In.row(i)).squaredNorm(); }
  double dist2_items(Index i, Index j) const { return (In.row(i) - In.row(j)).squaredNorm(); }

  void add_sim_grad(Index u, Index i, double g) {
    gUn.row(u) += g * In.row(i);
    gIn.row(i) += g * Un.row(u);
  }
  void add_dist2_grad(Index u, Index i, double g) {
    const auto diff = (Un.row(u) - In.row(i)).eval();
    gUn.row(u) += 2.0 * g * diff;
    gIn.row(i) -= 2.0 * g * diff;
  }
  void add_dist2_items_grad(Index i, Index j, double g) {
    const auto diff = (In.row(i) - In.row(j)).eval();
    gIn.row(i) += 2.0 * g * diff;
    gIn.row(j) -= 2.0 * g * diff;
  }

  void require_margins() {
    if (state.user_margin.rows() != state.num_users() || state.item_margin.rows() != state.num_items())
      throw ConfigError("loss: user_margin/item_margin missing or mis-shaped");
  }
  void require_boundary() {
    if (state.boundary_proj.rows() != state.dim() || state.boundary_proj.cols() != 1)
      throw ConfigError("loss: boundary_proj missing or mis-shaped");
  }
  void require_pop_tables() {
    if (ds == nullptr) throw ConfigError("loss: popularity margin modes need the dataset");
    if (state.pop_user_emb.rows() < 1 || state.pop_item_emb.rows() < 1)
      throw ConfigError("loss: popularity embeddings missing");
    if (PopUn.rows() == 0) {
      normalize_rows(state.pop_user_emb, PopUn, pop_u_norms);
      normalize_rows(state.pop_item_emb, PopIn, pop_i_norms);
      gPopUn = Matrix::Zero(PopUn.rows(), PopUn.cols());
      gPopIn = Matrix::Zero(PopIn.rows(), PopIn.cols());
    }
  }

  Index user_bucket(Index u) const {
    return std::min(pop_bucket(ds->user_pop[static_cast<std::size_t>(u)]), state.pop_user_emb.rows() - 1);
  }
  Index item_bucket(Index i) const {
    return std::min(pop_bucket(ds->item_pop[static_cast<std::size_t>(i)]), state.pop_item_emb.rows() - 1);
  }
};

// Effective M_ui = M_u + M_i of a batch pair under cfg.margin_mode, with the
// matching parameter-gradient routing.
class MarginProvider {
 public:
  explicit MarginProvider(EvalContext& ctx) : ctx_(ctx), mode_(ctx.cfg.margin_mode) {
    switch (mode_) {
      case MarginMode::zero:
        break;
      case MarginMode::learned:
        ctx_.require_margins();
        ctx_.touch_user_margin = ctx_.touch_item_margin = true;
        break;
      case MarginMode::inverse_popularity:
        if (ctx_.ds == nullptr) throw ConfigError("inverse_popularity margins need the dataset");
        scale_ = InversePopularityScale::from(*ctx_.ds);
        break;
      case MarginMode::uib_fashion:
        ctx_.require_boundary();
        ctx_.touch_boundary = true;
        break;
      case MarginMode::bc_fashion:
        ctx_.require_pop_tables();
        ctx_.touch_pop = true;
        break;
    }
  }

  double total(Index k) {
    const Index u = ctx_.user(k);
    const Index i = ctx_.item(k);
    switch (mode_) {
      case MarginMode::zero:
        return 0.0;
      case MarginMode::learned:
        return softplus(ctx_.state.user_margin(u, 0)) + softplus(ctx_.state.item_margin(i, 0));
      case MarginMode::inverse_popularity:
        return scale_.user_margin(ctx_.ds->user_pop[static_cast<std::size_t>(u)]) +
               scale_.item_margin(ctx_.ds->item_pop[static_cast<std::size_t>(i)]);
      case MarginMode::uib_fashion:
        return softplus(ctx_.U.row(u).dot(ctx_.state.boundary_proj.col(0))) +
               softplus(ctx_.I.row(i).dot(ctx_.state.boundary_proj.col(0)));
      case MarginMode::bc_fashion:
        return std::acos(clamp_unit(ctx_.PopUn.row(ctx_.user_bucket(u)).dot(ctx_.PopIn.row(ctx_.item_bucket(i)))));
    }
    return 0.0;
  }

  void backprop(Index k, double g_total) {
    if (g_total == 0.0) return;
    const Index u = ctx_.user(k);
    const Index i = ctx_.item(k);
    switch (mode_) {
      case MarginMode::zero:
      case MarginMode::inverse_popularity:
        return;  // constant margins
      case MarginMode::learned:
        ctx_.g_user_margin(u, 0) += g_total * softplus_grad(ctx_.state.user_margin(u, 0));
        ctx_.g_item_margin(i, 0) += g_total * softplus_grad(ctx_.state.item_margin(i, 0));
        return;
      case MarginMode::uib_fashion: {
        const auto& w = ctx_.state.boundary_proj.col(0);
        const double zu = ctx_.U.row(u).dot(w);
        const double zi = ctx_.I.row(i).dot(w);
        ctx_.g_boundary.col(0) += g_total * (softplus_grad(zu) * ctx_.U.row(u) + softplus_grad(zi) * ctx_.I.row(i)).transpose();
        ctx_.gU.row(u) += g_total * softplus_grad(zu) * w.transpose();
        ctx_.gI.row(i) += g_total * softplus_grad(zi) * w.transpose();
        return;
      }
      case MarginMode::bc_fashion: {
        const Index bu = ctx_.user_bucket(u);
        const Index bi = ctx_.item_bucket(i);
        const double t = ctx_.PopUn.row(bu).dot(ctx_.PopIn.row(bi));
        const double tc = clamp_arccos(t);
        const double g_dot = -g_total / std::sqrt(1.0 - tc * tc);
        ctx_.gPopUn.row(bu) += g_dot * ctx_.PopIn.row(bi);
        ctx_.gPopIn.row(bi) += g_dot * ctx_.PopUn.row(bu);
        return;
      }
    }
  }

 private:
  EvalContext& ctx_;
  MarginMode mode_;
  InversePopularityScale scale_;
};

Index count_negatives(const Batch& batch) {
  Index n = 0;
  for (const auto& negs : batch.negatives) n += static_cast<Index>(negs.size());
  return n;
}

void require_exactly_one_negative(const Batch& batch, const char* who) {
  for (const auto& negs : batch.negatives)
    if (negs.size() != 1) throw ConfigError(std::string(who) + " needs exactly 1 negative per pair");
}

void require_some_negative(const Batch& batch, const char* who) {
  for (const auto& negs : batch.negatives)
    if (negs.empty()) throw ConfigError(std::string(who) + " needs at least 1 negative per pair");
}

// ---- pointwise -------------------------------------------------------------

void eval_bce(EvalContext& ctx) {
  const double T = static_cast<double>(ctx.B() + count_negatives(ctx.batch));
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(T));
  for (Index k = 0; k < ctx.B(); ++k) {
    const double s = ctx.sim(ctx.user(k), ctx.item(k));
    terms.push_back(softplus(-s));  // -log sigmoid(s)
    ctx.add_sim_grad(ctx.user(k), ctx.item(k), (sigmoid(s) - 1.0) / T);
    for (Index j : ctx.negs(k)) {
      const double sj = ctx.sim(ctx.user(k), j);
      terms.push_back(softplus(sj));  // -log(1 - sigmoid(s))
      ctx.add_sim_grad(ctx.user(k), j, sigmoid(sj) / T);
    }
  }
  ctx.result.value = pairwise_sum(terms) / T;
}

void eval_mcl(EvalContext& ctx) {
  const auto& p = ctx.cfg.mcl_params;
  struct Side {
    std::vector<double> exponents;
    double m = 0.0;
  };

  Side pos, neg;
  for (Index k = 0; k < ctx.B(); ++k) {
    pos.exponents.push_back(p.alpha * (ctx.dist2(ctx.user(k), ctx.item(k)) + p.lambda_p));
    for (Index j : ctx.negs(k)) neg.exponents.push_back(-p.beta * (ctx.dist2(ctx.user(k), j) + p.lambda_n));
  }
  pos.m = static_cast<double>(pos.exponents.size());
  neg.m = static_cast<double>(neg.exponents.size());

  // (1/a) log(1 + (1/m) sum e^{y}) with a shifted log-sum-exp
  auto stable_term = [](const Side& side, double a, double& denom_out) {
    double shift = 0.0;
    for (double y : side.exponents) shift = std::max(shift, y);
    std::vector<double> es(side.exponents.size());
    for (std::size_t q = 0; q < es.size(); ++q) es[q] = std::exp(side.exponents[q] - shift);
    const double sum = pairwise_sum(es);
    denom_out = side.m * std::exp(-shift) + sum;  // (m + S) * e^{-shift}
    return (shift + std::log(side.m * std::exp(-shift) + sum) - std::log(side.m)) / a;
  };

  double pos_denom = 1.0, neg_denom = 1.0;
  double value = stable_term(pos, p.alpha, pos_denom);
  double neg_value = 0.0;
  if (!neg.exponents.empty()) neg_value = stable_term(neg, p.beta, neg_denom);
  ctx.result.value = value + neg_value;

  double pos_shift = 0.0;
  for (double y : pos.exponents) pos_shift = std::max(pos_shift, y);
  double neg_shift = 0.0;
  for (double y : neg.exponents) neg_shift = std::max(neg_shift, y);

  std::size_t qp = 0, qn = 0;
  for (Index k = 0; k < ctx.B(); ++k) {
    // dL/dd2 = e^{y}/(m + S)
    const double gp = std::exp(pos.exponents[qp++] - pos_shift) / pos_denom;
    ctx.add_dist2_grad(ctx.user(k), ctx.item(k), gp);
    for (Index j : ctx.negs(k)) {
      const double gn = -std::exp(neg.exponents[qn++] - neg_shift) / neg_denom;
      ctx.add_dist2_grad(ctx.user(k), j, gn);
    }
  }
}

void eval_uib(EvalContext& ctx) {
  ctx.require_boundary();
  ctx.touch_boundary = true;
  const auto& w = ctx.state.boundary_proj.col(0);
  const double alpha = ctx.cfg.uib_alpha;
  const double T = static_cast<double>(ctx.B() + count_negatives(ctx.batch));

  std::vector<double> terms;
  for (Index k = 0; k < ctx.B(); ++k) {
    const Index u = ctx.user(k);
    const double b = ctx.U.row(u).dot(w);  // boundary on the raw representation
    double g_b = 0.0;

    const double s = ctx.sim(u, ctx.item(k));
    terms.push_back(softplus(b - s));  // -log sigmoid(s - b)
    const double gp = (sigmoid(s - b) - 1.0) / T;
    ctx.add_sim_grad(u, ctx.item(k), gp);
    g_b -= gp;

    for (Index j : ctx.negs(k)) {
      const double sj = ctx.sim(u, j);
      terms.push_back(alpha * softplus(sj - b));  // -alpha log sigmoid(b - s_j)
      const double gn = alpha * (sigmoid(b - sj) - 1.0) / T;
      g_b += gn;
      ctx.add_sim_grad(u, j, -gn);
    }

    ctx.g_boundary.col(0) += g_b * ctx.U.row(u).transpose();
    ctx.gU.row(u) += g_b * w.transpose();
  }
  ctx.result.value = pairwise_sum(terms) / T;
}

// ---- pairwise --------------------------------------------------------------

void eval_bpr(EvalContext& ctx) {
  require_exactly_one_negative(ctx.batch, "BPR");
  const double B = static_cast<double>(ctx.B());
  std::vector<double> terms;
  terms.reserve(ctx.batch.pairs.size());
  for (Index k = 0; k < ctx.B(); ++k) {
    const Index u = ctx.user(k), i = ctx.item(k), j = ctx.negs(k)[0];
    const double x = ctx.sim(u, i) - ctx.sim(u, j);
    terms.push_back(softplus(-x));
    const double g = (sigmoid(x) - 1.0) / B;
    ctx.add_sim_grad(u, i, g);
    ctx.add_sim_grad(u, j, -g);
  }
  ctx.result.value = pairwise_sum(terms) / B;
}

void eval_cml(EvalContext& ctx) {
  require_exactly_one_negative(ctx.batch, "CML");
  const double B = static_cast<double>(ctx.B());
  std::vector<double> terms;
  terms.reserve(ctx.batch.pairs.size());
  for (Index k = 0; k < ctx.B(); ++k) {
    const Index u = ctx.user(k), i = ctx.item(k), j = ctx.negs(k)[0];
    const double h = ctx.dist2(u, i) - ctx.dist2(u, j) + ctx.cfg.margin_const;
    terms.push_back(std::max(h, 0.0));
    if (h > 0.0) {  // subgradient 0 at the kink
      ctx.add_dist2_grad(u, i, 1.0 / B);
      ctx.add_dist2_grad(u, j, -1.0 / B);
    }
  }
  ctx.result.value = pairwise_sum(terms) / B;
}

void eval_sml(EvalContext& ctx) {
  require_exactly_one_negative(ctx.batch, "SML");
  ctx.require_margins();
  ctx.touch_user_margin = ctx.touch_item_margin = true;
  const double B = static_cast<double>(ctx.B());
  const double lambda = ctx.cfg.sml_lambda;

  std::vector<double> terms;
  for (Index k = 0; k < ctx.B(); ++k) {
    const Index u = ctx.user(k), i = ctx.item(k), j = ctx.negs(k)[0];
    const double mu = softplus(ctx.state.user_margin(u, 0));
    const double mi = softplus(ctx.state.item_margin(i, 0));
    const double d_ui = ctx.dist2(u, i);

    const double hu = d_ui - ctx.dist2(u, j) + mu;
    const double hi = d_ui - ctx.dist2_items(i, j) + mi;
    terms.push_back(std::max(hu, 0.0) + std::max(hi, 0.0));
    if (hu > 0.0) {
      ctx.add_dist2_grad(u, i, 1.0 / B);
      ctx.add_dist2_grad(u, j, -1.0 / B);
      ctx.g_user_margin(u, 0) += softplus_grad(ctx.state.user_margin(u, 0)) / B;
    }
    if (hi > 0.0) {
      ctx.add_dist2_grad(u, i, 1.0 / B);
      ctx.add_dist2_items_grad(i, j, -1.0 / B);
      ctx.g_item_margin(i, 0) += softplus_grad(ctx.state.item_margin(i, 0)) / B;
    }
  }
  double value = pairwise_sum(terms) / B;

  if (lambda != 0.0) {
    // margin-expansion regularizer: -(mean_u M_u + mean_i M_i), full vectors
    ctx.margin_touches_all_rows = true;
    const double nu = static_cast<double>(ctx.state.num_users());
    const double ni = static_cast<double>(ctx.state.num_items());
    std::vector<double> mus, mis;
    for (Index u = 0; u < ctx.state.num_users(); ++u) {
      mus.push_back(softplus(ctx.state.user_margin(u, 0)));
      ctx.g_user_margin(u, 0) -= lambda * softplus_grad(ctx.state.user_margin(u, 0)) / nu;
    }
    for (Index i = 0; i < ctx.state.num_items(); ++i) {
      mis.push_back(softplus(ctx.state.item_margin(i, 0)));
      ctx.g_item_margin(i, 0) -= lambda * softplus_grad(ctx.state.item_margin(i, 0)) / ni;
    }
    value -= lambda * (pairwise_mean(mus) + pairwise_mean(mis));
  }
  ctx.result.value = value;
}

// ---- setwise ---------------------------------------------------------------

void eval_ccl(EvalContext& ctx) {
  require_some_negative(ctx.batch, "CCL");
  const double B = static_cast<double>(ctx.B());
  const double w = ctx.cfg.ccl_weight;
  const double M = ctx.cfg.margin_const;

  std::vector<double> terms;
  terms.reserve(ctx.batch.pairs.size());
  for (Index k = 0; k < ctx.B(); ++k) {
    const Index u = ctx.user(k), i = ctx.item(k);
    const double nn = static_cast<double>(ctx.negs(k).size());
    double term = 1.0 - ctx.sim(u, i);
    ctx.add_sim_grad(u, i, -1.0 / B);
    for (Index j : ctx.negs(k)) {
      const double sj = ctx.sim(u, j);
      if (sj > M) {
        term += w / nn * (sj - M);
        ctx.add_sim_grad(u, j, w / (nn * B));
      }
    }
    terms.push_back(term);
  }
  ctx.result.value = pairwise_sum(terms) / B;
}

// Shared softmax cross-entropy over {positive logit} + negative logits.
// Returns the per-set loss and the softmax probabilities.
double softmax_set(double pos_logit, const std::vector<double>& neg_logits, double& p_pos,
                   std::vector<double>& p_neg) {
  double shift = pos_logit;
  for (double z : neg_logits) shift = std::max(shift, z);
  const double ep = std::exp(pos_logit - shift);
  std::vector<double> en(neg_logits.size());
  for (std::size_t q = 0; q < en.size(); ++q) en[q] = std::exp(neg_logits[q] - shift);
  const double Z = ep + pairwise_sum(en);
  p_pos = ep / Z;
  p_neg.resize(en.size());
  for (std::size_t q = 0; q < en.size(); ++q) p_neg[q] = en[q] / Z;
  return std::log(Z) + shift - pos_logit;
}

void eval_ssm_or_bc(EvalContext& ctx, bool with_margin) {
  require_some_negative(ctx.batch, with_margin ? "BC" : "SSM");
  const double B = static_cast<double>(ctx.B());
  const double tau = ctx.cfg.tau;

  std::unique_ptr<MarginProvider> margins;
  if (with_margin) margins = std::make_unique<MarginProvider>(ctx);

  std::vector<double> terms, neg_logits, p_neg;
  terms.reserve(ctx.batch.pairs.size());
  for (Index k = 0; k < ctx.B(); ++k) {
    const Index u = ctx.user(k), i = ctx.item(k);
    const double s = ctx.sim(u, i);
    const double m = margins ? margins->total(k) : 0.0;
    const double pos_logit = (margins ? cos_angle_plus_margin(s, m) : s) / tau;

    neg_logits.clear();
    for (Index j : ctx.negs(k)) neg_logits.push_back(ctx.sim(u, j) / tau);

    double p_pos = 0.0;
    terms.push_back(softmax_set(pos_logit, neg_logits, p_pos, p_neg));

    const double g_logit = (p_pos - 1.0) / (tau * B);
    if (margins) {
      const double sc = clamp_arccos(s);
      const double dcos_ds = std::cos(m) + sc * std::sin(m) / std::sqrt(1.0 - sc * sc);
      const double dcos_dm = -(sin_theta(s) * std::cos(m) + clamp_unit(s) * std::sin(m));  // -sin(theta+m)
      ctx.add_sim_grad(u, i, g_logit * dcos_ds);
      margins->backprop(k, g_logit * dcos_dm);
    } else {
      ctx.add_sim_grad(u, i, g_logit);
    }
    std::size_t q = 0;
    for (Index j : ctx.negs(k)) ctx.add_sim_grad(u, j, p_neg[q++] / (tau * B));
  }
  ctx.result.value = pairwise_sum(terms) / B;
}

// ---- alignment and uniformity ----------------------------------------------

// log mean_{k<l} exp(-2 d^2(slot_k, slot_l)) over in-batch slots, with the
// weighted gradient scattered into g_unit. Self-pairs (k == l) are excluded;
// duplicate ids occupy distinct slots, matching an in-batch pdist.
double uniformity_term(const std::vector<Index>& slots, const Matrix& unit, Matrix& g_unit, double weight,
                       bool& skipped) {
  const Index B = static_cast<Index>(slots.size());
  std::unordered_set<Index> distinct(slots.begin(), slots.end());
  if (distinct.size() < 2) {
    skipped = true;
    return 0.0;
  }
  skipped = false;

  Matrix V(B, unit.cols());
  for (Index k = 0; k < B; ++k) V.row(k) = unit.row(slots[static_cast<std::size_t>(k)]);
  const Matrix G = V * V.transpose();

  Matrix W(B, B);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(B * (B - 1) / 2));
  for (Index k = 0; k < B; ++k) {
    W(k, k) = 0.0;
    for (Index l = k + 1; l < B; ++l) {
      const double d2 = G(k, k) + G(l, l) - 2.0 * G(k, l);
      const double e = std::exp(-2.0 * d2);
      W(k, l) = e;
      W(l, k) = e;
      terms.push_back(e);
    }
  }
  const double S = pairwise_sum(terms);
  const double P = static_cast<double>(terms.size());

  const Vector rowsum = W.rowwise().sum();
  const Matrix dV = (-4.0 / S) * (rowsum.asDiagonal() * V - W * V);
  for (Index k = 0; k < B; ++k) g_unit.row(slots[static_cast<std::size_t>(k)]) += weight * dV.row(k);

  return std::log(S / P);
}

void eval_directau(EvalContext& ctx) {
  const double B = static_cast<double>(ctx.B());
  std::vector<double> align;
  align.reserve(ctx.batch.pairs.size());
  for (Index k = 0; k < ctx.B(); ++k) {
    const Index u = ctx.user(k), i = ctx.item(k);
    // half squared distance on normalized vectors: 1 - s
    align.push_back(1.0 - ctx.sim(u, i));
    ctx.add_sim_grad(u, i, -1.0 / B);
  }

  std::vector<Index> user_slots, item_slots;
  for (Index k = 0; k < ctx.B(); ++k) {
    user_slots.push_back(ctx.user(k));
    item_slots.push_back(ctx.item(k));
  }
  const double gamma = ctx.cfg.gamma;
  const double unif_u = uniformity_term(user_slots, ctx.Un, ctx.gUn, gamma, ctx.result.user_uniformity_skipped);
  const double unif_i = uniformity_term(item_slots, ctx.In, ctx.gIn, gamma, ctx.result.item_uniformity_skipped);
  ctx.result.value = pairwise_mean(align) + gamma * (unif_u + unif_i);
}

void eval_mawu(EvalContext& ctx) {
  const double B = static_cast<double>(ctx.B());
  MarginProvider margins(ctx);

  std::vector<double> align;
  align.reserve(ctx.batch.pairs.size());
  for (Index k = 0; k < ctx.B(); ++k) {
    const Index u = ctx.user(k), i = ctx.item(k);
    const double s = ctx.sim(u, i);
    const double m = margins.total(k);
    const double angle = std::acos(clamp_unit(s)) + m;

    if (angle > std::numbers::pi) {
      // clamp active: flat at -cos(pi), no gradient
      align.push_back(1.0);
      continue;
    }
    align.push_back(-cos_angle_plus_margin(s, m));
    const double sc = clamp_arccos(s);
    const double dcos_ds = std::cos(m) + sc * std::sin(m) / std::sqrt(1.0 - sc * sc);
    const double sin_sum = sin_theta(s) * std::cos(m) + clamp_unit(s) * std::sin(m);  // sin(theta+m)
    ctx.add_sim_grad(u, i, -dcos_ds / B);
    margins.backprop(k, sin_sum / B);
  }

  std::vector<Index> user_slots, item_slots;
  for (Index k = 0; k < ctx.B(); ++k) {
    user_slots.push_back(ctx.user(k));
    item_slots.push_back(ctx.item(k));
  }
  const double unif_u =
      uniformity_term(user_slots, ctx.Un, ctx.gUn, ctx.cfg.gamma1, ctx.result.user_uniformity_skipped);
  const double unif_i =
      uniformity_term(item_slots, ctx.In, ctx.gIn, ctx.cfg.gamma2, ctx.result.item_uniformity_skipped);
  ctx.result.value = pairwise_mean(align) + ctx.cfg.gamma1 * unif_u + ctx.cfg.gamma2 * unif_i;
}

// ---- assembly ---------------------------------------------------------------

void check_batch_ids(const ModelState& state, const Batch& batch) {
  for (const auto& [u, i] : batch.pairs) {
    if (u < 0 || u >= state.num_users()) throw std::out_of_range("batch user id out of range");
    if (i < 0 || i >= state.num_items()) throw std::out_of_range("batch item id out of range");
  }
  for (const auto& negs : batch.negatives)
    for (Index j : negs)
      if (j < 0 || j >= state.num_items()) throw std::out_of_range("batch negative id out of range");
}

std::vector<Index> sorted_unique(std::vector<Index> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) v[static_cast<std::size_t>(r)] = r;
  return v;
}

}  // namespace

LossEvaluation evaluate_loss(const LossConfig& cfg, const ModelState& state, const Encoder& encoder,
                             const Batch& batch, const InteractionDataset* dataset) {
  cfg.validate();
  if (batch.pairs.empty()) throw ConfigError("evaluate_loss: empty batch");
  if (batch.negatives.size() != batch.pairs.size())
    throw ConfigError("evaluate_loss: negatives list does not match pairs");
  check_batch_ids(state, batch);

  EvalContext ctx{cfg, state, encoder, batch, dataset};
  encoder.forward(state, ctx.U, ctx.I);
  normalize_rows(ctx.U, ctx.Un, ctx.u_norms);
  normalize_rows(ctx.I, ctx.In, ctx.i_norms);
  ctx.gUn = Matrix::Zero(ctx.Un.rows(), ctx.Un.cols());
  ctx.gIn = Matrix::Zero(ctx.In.rows(), ctx.In.cols());
  ctx.gU = Matrix::Zero(ctx.U.rows(), ctx.U.cols());
  ctx.gI = Matrix::Zero(ctx.I.rows(), ctx.I.cols());
  ctx.g_user_margin = Matrix::Zero(state.user_margin.rows(), 1);
  ctx.g_item_margin = Matrix::Zero(state.item_margin.rows(), 1);
  ctx.g_boundary = Matrix::Zero(state.boundary_proj.rows(), 1);

  switch (cfg.kind) {
    case LossKind::BCE: eval_bce(ctx); break;
    case LossKind::MCL: eval_mcl(ctx); break;
    case LossKind::UIB: eval_uib(ctx); break;
    case LossKind::BPR: eval_bpr(ctx); break;
    case LossKind::CML: eval_cml(ctx); break;
    case LossKind::SML: eval_sml(ctx); break;
    case LossKind::CCL: eval_ccl(ctx); break;
    case LossKind::SSM: eval_ssm_or_bc(ctx, /*with_margin=*/false); break;
    case LossKind::BC: eval_ssm_or_bc(ctx, /*with_margin=*/true); break;
    case LossKind::DirectAU: eval_directau(ctx); break;
    case LossKind::MAWU: eval_mawu(ctx); break;
  }

  // normalized-vector gradients -> raw representation gradients -> tables
  normalization_backward(ctx.Un, ctx.u_norms, ctx.gUn, ctx.gU);
  normalization_backward(ctx.In, ctx.i_norms, ctx.gIn, ctx.gI);

  LossEvaluation& out = ctx.result;
  Matrix d_user_emb, d_item_emb;
  encoder.backward(ctx.gU, ctx.gI, d_user_emb, d_item_emb);
  out.grads["user_emb"] = std::move(d_user_emb);
  out.grads["item_emb"] = std::move(d_item_emb);

  std::vector<Index> touched_users, touched_pos, touched_items;
  for (Index k = 0; k < ctx.B(); ++k) {
    touched_users.push_back(ctx.user(k));
    touched_pos.push_back(ctx.item(k));
    touched_items.push_back(ctx.item(k));
    for (Index j : ctx.negs(k)) touched_items.push_back(j);
  }
  if (encoder.densifies_gradients()) {
    out.touched_rows["user_emb"] = all_rows(state.num_users());
    out.touched_rows["item_emb"] = all_rows(state.num_items());
  } else {
    out.touched_rows["user_emb"] = sorted_unique(touched_users);
    out.touched_rows["item_emb"] = sorted_unique(touched_items);
  }

  if (ctx.touch_user_margin) {
    out.grads["user_margin"] = std::move(ctx.g_user_margin);
    out.touched_rows["user_margin"] =
        ctx.margin_touches_all_rows ? all_rows(state.user_margin.rows()) : sorted_unique(touched_users);
  }
  if (ctx.touch_item_margin) {
    out.grads["item_margin"] = std::move(ctx.g_item_margin);
    out.touched_rows["item_margin"] =
        ctx.margin_touches_all_rows ? all_rows(state.item_margin.rows()) : sorted_unique(touched_pos);
  }
  if (ctx.touch_boundary) {
    out.grads["boundary_proj"] = std::move(ctx.g_boundary);
    out.touched_rows["boundary_proj"] = all_rows(state.boundary_proj.rows());
  }
  if (ctx.touch_pop) {
    Matrix g_pop_user = Matrix::Zero(state.pop_user_emb.rows(), state.pop_user_emb.cols());
    Matrix g_pop_item = Matrix::Zero(state.pop_item_emb.rows(), state.pop_item_emb.cols());
    normalization_backward(ctx.PopUn, ctx.pop_u_norms, ctx.gPopUn, g_pop_user);
    normalization_backward(ctx.PopIn, ctx.pop_i_norms, ctx.gPopIn, g_pop_item);
    out.grads["pop_user_emb"] = std::move(g_pop_user);
    out.grads["pop_item_emb"] = std::move(g_pop_item);
    std::vector<Index> ub, ib;
    for (Index k = 0; k < ctx.B(); ++k) {
      ub.push_back(ctx.user_bucket(ctx.user(k)));
      ib.push_back(ctx.item_bucket(ctx.item(k)));
    }
    out.touched_rows["pop_user_emb"] = sorted_unique(ub);
    out.touched_rows["pop_item_emb"] = sorted_unique(ib);
  }
  return out;
}

std::pair<double, double> margin_value(const ModelState& state, const InteractionDataset& ds, MarginMode mode,
                                       Index user, Index item) {
  if (user < 0 || user >= state.num_users()) throw std::out_of_range("margin_value: user id out of range");
  if (item < 0 || item >= state.num_items()) throw std::out_of_range("margin_value: item id out of range");
  switch (mode) {
    case MarginMode::zero:
      return {0.0, 0.0};
    case MarginMode::inverse_popularity: {
      const auto sc = InversePopularityScale::from(ds);
      return {sc.user_margin(ds.user_pop[static_cast<std::size_t>(user)]),
              sc.item_margin(ds.item_pop[static_cast<std::size_t>(item)])};
    }
    case MarginMode::uib_fashion: {
      const auto& w = state.boundary_proj.col(0);
      return {softplus(state.user_emb.row(user).dot(w)), softplus(state.item_emb.row(item).dot(w))};
    }
    case MarginMode::bc_fashion: {
      const Index bu = std::min(pop_bucket(ds.user_pop[static_cast<std::size_t>(user)]), state.pop_user_emb.rows() - 1);
      const Index bi = std::min(pop_bucket(ds.item_pop[static_cast<std::size_t>(item)]), state.pop_item_emb.rows() - 1);
      Matrix pu, pi;
      Vector nu, ni;
      normalize_rows(state.pop_user_emb, pu, nu);
      normalize_rows(state.pop_item_emb, pi, ni);
      const double angle = std::acos(clamp_unit(pu.row(bu).dot(pi.row(bi))));
      return {angle / 2.0, angle / 2.0};  // split evenly
    }
    case MarginMode::learned:
      return {softplus(state.user_margin(user, 0)), softplus(state.item_margin(item, 0))};
  }
  return {0.0, 0.0};
}

}  // namespace cflab
