#include "cflab/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cflab {

GradCheckResult grad_check(const LossConfig& cfg, const ModelState& state, const Encoder& encoder,
                           const Batch& batch, const GradCheckOptions& options,
                           const InteractionDataset* dataset) {
  if (options.eps < 1e-6 || options.eps > 1e-4) throw ConfigError("grad_check: eps must be in [1e-6, 1e-4]");

  const LossEvaluation base = evaluate_loss(cfg, state, encoder, batch, dataset);
  if (!std::isfinite(base.value)) throw NumericError("grad_check: non-finite loss value");

  // every touched coordinate: (tensor name, row, col)
  struct Coord {
    std::string name;
    Index row;
    Index col;
  };
  std::vector<Coord> coords;
  for (const auto& [name, rows] : base.touched_rows) {
    const Matrix& g = base.grads.at(name);
    for (Index r : rows)
      for (Index c = 0; c < g.cols(); ++c) coords.push_back({name, r, c});
  }

  std::mt19937_64 rng(options.seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (static_cast<int>(coords.size()) > options.max_coordinates)
    coords.resize(static_cast<std::size_t>(options.max_coordinates));

  ModelState perturbed = state;
  auto tensor_of = [&](const std::string& name) -> Matrix& {
    for (auto& [n, m] : perturbed.named_tensors())
      if (n == name) return *m;
    throw ConfigError("grad_check: unknown tensor " + name);
  };

  GradCheckResult result;
  for (const Coord& coord : coords) {
    Matrix& tensor = tensor_of(coord.name);
    const double saved = tensor(coord.row, coord.col);

    tensor(coord.row, coord.col) = saved + options.eps;
    const double up = evaluate_loss(cfg, perturbed, encoder, batch, dataset).value;
    tensor(coord.row, coord.col) = saved - options.eps;
    const double down = evaluate_loss(cfg, perturbed, encoder, batch, dataset).value;
    tensor(coord.row, coord.col) = saved;

    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite perturbed loss");

    const double numeric = (up - down) / (2.0 * options.eps);
    const double analytic = base.grads.at(coord.name)(coord.row, coord.col);
    const double rel = std::abs(analytic - numeric) / std::max(1e-4, std::abs(analytic) + std::abs(numeric));
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace cflab
