#include "cflab/sampling.hpp"

#include <random>

namespace cflab {

Batch sample_negatives(const InteractionDataset& ds, const std::vector<std::pair<Index, Index>>& pairs,
                       int num_negatives, NegativeMode mode, std::uint64_t seed) {
  Batch batch;
  batch.pairs = pairs;
  batch.negatives.resize(pairs.size());

  if (mode == NegativeMode::in_batch) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      auto& negs = batch.negatives[k];
      negs.reserve(pairs.size() - 1);
      for (std::size_t l = 0; l < pairs.size(); ++l) {
        if (l == k) continue;
        if (pairs[l].second == pairs[k].second) continue;  // never the pair's own positive
        negs.push_back(pairs[l].second);
      }
    }
    return batch;
  }

  if (num_negatives < 1) throw ConfigError("sample_negatives: uniform mode needs n >= 1");
  if (ds.num_items < 2) throw DataError("sample_negatives: need at least 2 items to sample a negative");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, ds.num_items - 1);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    auto& negs = batch.negatives[k];
    negs.reserve(static_cast<std::size_t>(num_negatives));
    for (int j = 0; j < num_negatives; ++j) {
      Index cand = pick(rng);
      while (cand == pairs[k].second) cand = pick(rng);
      negs.push_back(cand);
    }
  }
  return batch;
}

}  // namespace cflab
