#include "cflab/optim.hpp"

#include <cmath>
#include <random>

namespace cflab {

AdamState::AdamState(const ModelState& shapes, AdamConfig config) : config_(config) {
  for (const auto& [name, tensor] : shapes.named_tensors()) {
    m_[name] = Matrix::Zero(tensor->rows(), tensor->cols());
    v_[name] = Matrix::Zero(tensor->rows(), tensor->cols());
  }
}

void AdamState::step(ModelState& params, const LossEvaluation& eval) {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));

  for (auto& [name, tensor] : params.named_tensors()) {
    const auto git = eval.grads.find(name);
    if (git == eval.grads.end()) continue;
    const Matrix& grad = git->second;
    if (grad.rows() != tensor->rows() || grad.cols() != tensor->cols())
      throw ConfigError("adam_step: gradient shape mismatch for " + name);

    Matrix& m = m_.at(name);
    Matrix& v = v_.at(name);

    auto update_row = [&](Index r) {
      for (Index c = 0; c < tensor->cols(); ++c) {
        double g = grad(r, c);
        if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in " + name);
        g += config_.weight_decay * (*tensor)(r, c);
        m(r, c) = config_.beta1 * m(r, c) + (1.0 - config_.beta1) * g;
        v(r, c) = config_.beta2 * v(r, c) + (1.0 - config_.beta2) * g * g;
        const double mhat = m(r, c) / bc1;
        const double vhat = v(r, c) / bc2;
        (*tensor)(r, c) -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      }
    };

    if (config_.lazy) {
      const auto tit = eval.touched_rows.find(name);
      if (tit == eval.touched_rows.end()) continue;
      for (Index r : tit->second) update_row(r);
    } else {
      for (Index r = 0; r < tensor->rows(); ++r) update_row(r);
    }
  }
}

void init_params(ModelState& state, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto xavier = [&](Matrix& table) {
    const double bound = std::sqrt(6.0 / (2.0 * static_cast<double>(state.dim())));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index r = 0; r < table.rows(); ++r)
      for (Index c = 0; c < table.cols(); ++c) table(r, c) = dist(rng);
  };
  xavier(state.user_emb);
  xavier(state.item_emb);
  state.user_margin.setZero();
  state.item_margin.setZero();
  state.boundary_proj.setZero();
  xavier(state.pop_user_emb);
  xavier(state.pop_item_emb);
}

}  // namespace cflab
