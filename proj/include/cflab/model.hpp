#pragma once

#include "cflab/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace cflab {

// Every trainable tensor of the laboratory. Margins are stored raw
// (unconstrained); losses use softplus(raw) as the effective margin.
// pop_*_emb are the BC-fashion popularity embeddings, one row per
// floor(log2(popularity)) bucket.
struct ModelState {
  Matrix user_emb;      // |U| x d
  Matrix item_emb;      // |I| x d
  Matrix user_margin;   // |U| x 1, raw
  Matrix item_margin;   // |I| x 1, raw
  Matrix boundary_proj; // d x 1   (UIB's W)
  Matrix pop_user_emb;  // user pop buckets x d
  Matrix pop_item_emb;  // item pop buckets x d

  static ModelState create(Index num_users, Index num_items, Index dim, Index user_pop_buckets = 1,
                           Index item_pop_buckets = 1);

  Index num_users() const { return user_emb.rows(); }
  Index num_items() const { return item_emb.rows(); }
  Index dim() const { return user_emb.cols(); }

  // Fixed iteration order; the names are the checkpoint/gradient keys.
  std::vector<std::pair<std::string, Matrix*>> named_tensors();
  std::vector<std::pair<std::string, const Matrix*>> named_tensors() const;
};

// Popularity bucket used to index the BC-fashion embedding tables.
inline Index pop_bucket(std::int64_t popularity) {
  Index b = 0;
  for (std::int64_t p = popularity < 1 ? 1 : popularity; p > 1; p >>= 1) ++b;
  return b;
}

inline Index pop_bucket_count(std::int64_t max_popularity) { return pop_bucket(max_popularity) + 1; }

// JSON (de)serialization of a set of named tensors; shared by model
// checkpoints and optimizer moments.
std::string tensors_to_json(const std::vector<std::pair<std::string, const Matrix*>>& tensors);
void tensors_from_json(const std::string& text, const std::vector<std::pair<std::string, Matrix*>>& tensors);

}  // namespace cflab
