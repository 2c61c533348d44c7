#include "cflab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

namespace cflab {

InteractionDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_users < 2 || spec.num_items < 2) throw ConfigError("synthetic: need at least 2 users and items");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix p(spec.num_users, spec.latent_dim), q(spec.num_items, spec.latent_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  for (Index u = 0; u < spec.num_users; ++u)
    for (Index k = 0; k < spec.latent_dim; ++k) p(u, k) = gauss(rng) * scale;
  for (Index i = 0; i < spec.num_items; ++i)
    for (Index k = 0; k < spec.latent_dim; ++k) q(i, k) = gauss(rng) * scale;

  // item id == popularity rank: weight 1/(i+1)^zipf
  std::vector<double> item_logw(static_cast<std::size_t>(spec.num_items));
  for (Index i = 0; i < spec.num_items; ++i)
    item_logw[static_cast<std::size_t>(i)] = -spec.zipf_exponent * std::log(static_cast<double>(i + 1));

  // user activity: Zipf over user ranks, normalized to the interaction budget
  std::vector<double> activity(static_cast<std::size_t>(spec.num_users));
  double act_sum = 0.0;
  for (Index u = 0; u < spec.num_users; ++u) {
    activity[static_cast<std::size_t>(u)] = std::pow(static_cast<double>(u + 1), -spec.user_zipf_exponent);
    act_sum += activity[static_cast<std::size_t>(u)];
  }
  const Index max_per_user = spec.num_items / 2;

  InteractionDataset ds;
  ds.num_users = spec.num_users;
  ds.num_items = spec.num_items;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> weights(static_cast<std::size_t>(spec.num_items));
  for (Index u = 0; u < spec.num_users; ++u) {
    Index count = static_cast<Index>(std::llround(static_cast<double>(spec.target_interactions) *
                                                  activity[static_cast<std::size_t>(u)] / act_sum));
    count = std::clamp<Index>(count, 3, max_per_user);

    double wsum = 0.0;
    for (Index i = 0; i < spec.num_items; ++i) {
      const double logit = item_logw[static_cast<std::size_t>(i)] + spec.preference_strength * p.row(u).dot(q.row(i));
      weights[static_cast<std::size_t>(i)] = std::exp(logit);
      wsum += weights[static_cast<std::size_t>(i)];
    }

    std::unordered_set<Index> chosen;
    std::int64_t ts = 0;
    while (static_cast<Index>(chosen.size()) < count) {
      double r = unit(rng) * wsum;
      Index pick = spec.num_items - 1;
      for (Index i = 0; i < spec.num_items; ++i) {
        r -= weights[static_cast<std::size_t>(i)];
        if (r <= 0.0) {
          pick = i;
          break;
        }
      }
      if (chosen.insert(pick).second) ds.interactions.push_back({u, pick, ts++});
    }
  }

  ds.split.assign(ds.interactions.size(), SplitLabel::train);
  ds.recompute_popularity();
  return ds;
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec spec;
  std::string rest = text;
  if (rest.rfind("zipf:", 0) != 0) throw ConfigError("synthetic spec must start with `zipf:<exponent>`");
  rest = rest.substr(5);

  std::size_t pos = 0;
  bool first = true;
  while (pos < rest.size()) {
    std::size_t comma = rest.find(',', pos);
    if (comma == std::string::npos) comma = rest.size();
    const std::string token = rest.substr(pos, comma - pos);
    pos = comma + 1;
    if (token.empty()) continue;
    if (first) {
      spec.zipf_exponent = std::stod(token);
      first = false;
      continue;
    }
    const std::size_t eq = token.find('=');
    if (eq == std::string::npos) throw ConfigError("synthetic spec: expected key=value, got " + token);
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "users")
      spec.num_users = std::stoll(value);
    else if (key == "items")
      spec.num_items = std::stoll(value);
    else if (key == "interactions")
      spec.target_interactions = std::stoll(value);
    else if (key == "user_zipf")
      spec.user_zipf_exponent = std::stod(value);
    else if (key == "latent")
      spec.latent_dim = std::stoll(value);
    else if (key == "pref")
      spec.preference_strength = std::stod(value);
    else if (key == "seed")
      spec.seed = std::stoull(value);
    else
      throw ConfigError("synthetic spec: unknown key " + key);
  }
  if (first) throw ConfigError("synthetic spec: missing zipf exponent");
  return spec;
}

}  // namespace cflab
