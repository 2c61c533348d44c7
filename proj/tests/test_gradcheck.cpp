#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cflab/grad_check.hpp"
#include "cflab/optim.hpp"

#include <cmath>
#include <random>

using namespace cflab;

namespace {

struct Setup {
  ModelState state;
  Batch batch;
  InteractionDataset ds;

  Setup(Index num_users, Index num_items, Index dim, Index pairs, Index negs, std::uint64_t seed) {
    state = ModelState::create(num_users, num_items, dim, 3, 3);
    init_params(state, seed);
    std::mt19937_64 rng(seed + 555);
    std::normal_distribution<double> g(0.0, 0.4);
    for (Index r = 0; r < num_users; ++r) state.user_margin(r, 0) = g(rng);
    for (Index r = 0; r < num_items; ++r) state.item_margin(r, 0) = g(rng);
    for (Index r = 0; r < dim; ++r) state.boundary_proj(r, 0) = g(rng);

    ds.num_users = num_users;
    ds.num_items = num_items;
    std::uniform_int_distribution<Index> du(0, num_users - 1), di(0, num_items - 1);
    for (int k = 0; k < 50; ++k) ds.interactions.push_back({du(rng), di(rng), k});
    ds.split.assign(ds.interactions.size(), SplitLabel::train);
    ds.recompute_popularity();

    for (Index k = 0; k < pairs; ++k) {
      const Index u = du(rng), i = di(rng);
      batch.pairs.push_back({u, i});
      std::vector<Index> ns;
      for (Index q = 0; q < negs; ++q) {
        Index j = di(rng);
        while (j == i) j = di(rng);
        ns.push_back(j);
      }
      batch.negatives.push_back(ns);
    }
  }
};

}  // namespace

TEST_CASE("bpr gradients agree with central differences on 8 triplets") {
  Setup s(10, 12, 6, 8, 1, 41);
  LossConfig cfg;
  cfg.kind = LossKind::BPR;
  GradCheckOptions opt;
  opt.eps = 1e-5;
  opt.max_coordinates = 300;
  const auto res = grad_check(cfg, s.state, MfEncoder{}, s.batch, opt);
  CHECK(res.max_rel_error < 1e-4);
  CHECK(res.coordinates_checked >= 60);  // every touched coordinate of this small instance
}

TEST_CASE("mawu at a clamp-active point reports matching zero margin gradients") {
  Setup s(1, 1, 2, 1, 0, 42);
  s.state.user_emb.row(0) << 1.0, 0.0;
  s.state.item_emb.row(0) << std::cos(2.5), std::sin(2.5);
  const double raw = std::log(std::exp(0.5) - 1.0);
  s.state.user_margin = Matrix::Constant(1, 1, raw);
  s.state.item_margin = Matrix::Constant(1, 1, raw);
  s.batch.pairs = {{0, 0}};
  s.batch.negatives = {{}};

  LossConfig cfg;
  cfg.kind = LossKind::MAWU;
  cfg.margin_mode = MarginMode::learned;
  cfg.gamma1 = cfg.gamma2 = 0.0;
  GradCheckOptions opt;
  const auto res = grad_check(cfg, s.state, MfEncoder{}, s.batch, opt);
  // 2.5 + 0.5 + 0.5 = 3.5 > pi: a flat region, analytic and numeric both zero
  CHECK(res.max_rel_error == 0.0);
}

TEST_CASE("stiff ssm at tau=0.05 stays under 1e-3") {
  Setup s(8, 12, 6, 6, 5, 43);
  LossConfig cfg;
  cfg.kind = LossKind::SSM;
  cfg.tau = 0.05;
  GradCheckOptions opt;
  opt.max_coordinates = 250;
  const auto res = grad_check(cfg, s.state, MfEncoder{}, s.batch, opt);
  CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("gradients flow correctly through lightgcn propagation") {
  Setup s(8, 10, 5, 6, 3, 44);
  const LightGcnEncoder encoder(NormalizedAdjacency::build(s.ds), 2);
  for (LossKind kind : {LossKind::SSM, LossKind::DirectAU, LossKind::MAWU}) {
    LossConfig cfg;
    cfg.kind = kind;
    cfg.tau = 0.4;
    cfg.margin_mode = MarginMode::learned;
    GradCheckOptions opt;
    opt.max_coordinates = 220;
    opt.seed = 7;
    const auto res = grad_check(cfg, s.state, encoder, s.batch, opt, &s.ds);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("grad_check rejects out-of-range eps") {
  Setup s(4, 5, 3, 2, 1, 45);
  LossConfig cfg;
  cfg.kind = LossKind::BPR;
  GradCheckOptions opt;
  opt.eps = 1e-2;
  CHECK_THROWS_AS(grad_check(cfg, s.state, MfEncoder{}, s.batch, opt), ConfigError);
}

TEST_CASE("grad_check aborts with a diagnostic on non-finite loss") {
  Setup s(4, 5, 3, 2, 1, 46);
  s.state.user_emb(0, 0) = std::numeric_limits<double>::quiet_NaN();
  LossConfig cfg;
  cfg.kind = LossKind::BPR;
  GradCheckOptions opt;
  CHECK_THROWS_AS(grad_check(cfg, s.state, MfEncoder{}, s.batch, opt), NumericError);
}
