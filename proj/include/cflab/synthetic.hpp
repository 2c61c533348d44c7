#pragma once

#include "cflab/dataset.hpp"

#include <cstdint>
#include <string>

namespace cflab {

// Zipf-distributed item popularity combined with a latent-factor preference
// model; user activity is mildly Zipf-skewed as well so popularity-grouped
// metrics and margin diagnostics have signal.
struct SyntheticSpec {
  Index num_users = 1000;
  Index num_items = 1500;
  Index target_interactions = 100000;
  double zipf_exponent = 1.0;       // item popularity skew
  double user_zipf_exponent = 0.6;  // user activity skew
  Index latent_dim = 8;
  double preference_strength = 2.0;  // weight of the latent affinity inside the sampling logits
  std::uint64_t seed = 1;
};

InteractionDataset generate_synthetic(const SyntheticSpec& spec);

// "zipf:1.0,users=1000,items=1500[,interactions=100000][,user_zipf=0.6]
//  [,latent=8][,pref=2.0][,seed=1]"
SyntheticSpec parse_synthetic_spec(const std::string& text);

}  // namespace cflab
