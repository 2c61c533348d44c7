#pragma once

#include "cflab/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cflab {

struct SweepPoint {
  double sweep_value = 0.0;  // tau, |N|, or identity-check index
  double mean_disc = 0.0;
  double max_disc = 0.0;
};

struct RelationReport {
  std::string relation;
  bool passed = false;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
  int trials = 0;
  std::vector<SweepPoint> sweep;
  std::string note;
};

// SSM(|N|=1, tau=1) == BPR, exact identity (tolerance 1e-12).
RelationReport check_ssm_equals_bpr(int trials, std::uint64_t seed);

// BC with zero margin == SSM across tau in {0.1, 1} x |N| in {1, 30} (1e-12).
RelationReport check_bc_zero_margin(int trials, std::uint64_t seed);

// tau -> 0+: |tau * SSM - [s(u, j_max) - s(u, i)]_+| non-increasing along the
// descending tau sweep and <= 1e-2 at the final tau. Instances are resampled
// so the hardest-negative gap and the hinge argument stay >= 0.05.
RelationReport check_tau_zero_limit(const std::vector<double>& taus, int trials, std::uint64_t seed);

// tau -> inf: |tau * (SSM - log(|N|+1)) - (-s_pos + mean s_neg)| non-increasing
// along the ascending sweep and <= 1e-2 at the final tau, |N| = 30. The
// centering must count every denominator term (|N|+1, not the |N| of the
// usual |N| >> 1 shorthand): the tau-scaled gap otherwise diverges as
// tau * log(1 + 1/|N|).
RelationReport check_tau_inf_limit(const std::vector<double>& taus, int trials, std::uint64_t seed);

// |N| -> inf against a fixed item population: |(SSM - log|N|) -
// (-s_pos/tau + log mean_pop e^{s/tau})| decreases along the size sweep.
RelationReport check_num_neg_limit(const std::vector<int>& sizes, double tau, int trials, std::uint64_t seed);

// Margin-rotation equivalences in d=2: (a) cos(theta+M_u+M_i) equals the dot
// of the rotated embeddings (1e-12); (b) the sum-of-squares rewriting and
// (c) the compactness identities of the proof chain (1e-10).
RelationReport check_theorem_a1(int trials, std::uint64_t seed);

// The default verification set, in a fixed order.
std::vector<RelationReport> run_relations(const std::vector<std::string>& only, std::uint64_t seed);
std::vector<std::string> default_relation_names();

std::string relations_to_json(const std::vector<RelationReport>& reports);
std::string relations_to_csv(const std::vector<RelationReport>& reports);

}  // namespace cflab
