#include "cflab/adjacency.hpp"

#include <cmath>
#include <set>
#include <vector>

namespace cflab {

NormalizedAdjacency NormalizedAdjacency::build(const InteractionDataset& ds) {
  NormalizedAdjacency adj;
  adj.num_users = ds.num_users;
  adj.num_items = ds.num_items;

  // unique train edges (ingest dedups pairs, but be safe for synthetic inputs)
  std::set<std::pair<Index, Index>> edges;
  for (std::size_t k = 0; k < ds.interactions.size(); ++k)
    if (ds.split[k] == SplitLabel::train) edges.emplace(ds.interactions[k].user, ds.interactions[k].item);

  std::vector<std::int64_t> udeg(static_cast<std::size_t>(ds.num_users), 0);
  std::vector<std::int64_t> ideg(static_cast<std::size_t>(ds.num_items), 0);
  for (const auto& [u, i] : edges) {
    ++udeg[static_cast<std::size_t>(u)];
    ++ideg[static_cast<std::size_t>(i)];
  }

  const Index n = ds.num_users + ds.num_items;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges.size() * 2);
  for (const auto& [u, i] : edges) {
    const double w = 1.0 / std::sqrt(static_cast<double>(udeg[static_cast<std::size_t>(u)]) *
                                     static_cast<double>(ideg[static_cast<std::size_t>(i)]));
    triplets.emplace_back(u, ds.num_users + i, w);
    triplets.emplace_back(ds.num_users + i, u, w);
  }
  adj.matrix.resize(n, n);
  adj.matrix.setFromTriplets(triplets.begin(), triplets.end());
  adj.matrix.makeCompressed();
  return adj;
}

}  // namespace cflab
