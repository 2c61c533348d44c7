#pragma once

#include "cflab/common.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cflab {

struct Interaction {
  Index user = 0;
  Index item = 0;
  std::int64_t timestamp = 0;  // 0 when the input file has no timestamp column
};

enum class SplitLabel : std::uint8_t { train = 0, valid = 1, test = 2 };

// Implicit-feedback interaction log with compacted ids, split labels and
// per-entity train-interaction counts (popularity).
struct InteractionDataset {
  Index num_users = 0;
  Index num_items = 0;
  std::vector<Interaction> interactions;
  std::vector<SplitLabel> split;            // parallel to interactions; all-train until split() runs
  std::vector<std::int64_t> user_pop;       // train interactions per user
  std::vector<std::int64_t> item_pop;       // train interactions per item

  Index num_interactions() const { return static_cast<Index>(interactions.size()); }

  // Recounts user_pop/item_pop from the current train labels.
  void recompute_popularity();

  std::vector<std::pair<Index, Index>> pairs_of(SplitLabel label) const;
};

// Parses `user \t item \t timestamp` (timestamp optional, `#` comments and
// blank lines skipped). Ids are compacted by first appearance; duplicate
// (user, item) pairs keep the record with the largest timestamp, later
// lines winning ties.
InteractionDataset ingest_tsv(const std::string& path);
InteractionDataset ingest_tsv_stream(std::istream& in, const std::string& origin);

// Iterative peeling: removes users/items with < k interactions until a fixed
// point. Ids are re-compacted; the result may be empty.
InteractionDataset kcore_filter(const InteractionDataset& ds, std::int64_t k);

// Per-user chronological split by ratio (earliest interactions to train).
// Users with fewer than 3 interactions go entirely to train. Timestamp ties
// are broken by a seed-derived hash so the split is deterministic.
void chronological_split(InteractionDataset& ds, std::array<int, 3> ratio, std::uint64_t seed);

// Gini index of a non-negative count vector:
//   G = sum_i (2i - n - 1) x_i / (n * sum x),  x ascending, i 1-based.
// Throws DataError on an empty or all-zero input.
double gini_index(const std::vector<std::int64_t>& counts);

struct DatasetStats {
  Index num_users = 0;
  Index num_items = 0;
  Index num_interactions = 0;
  double density = 0.0;
  double gini_user = 0.0;
  double gini_item = 0.0;
  double gini_ratio = 0.0;  // gini_item / gini_user
};

DatasetStats dataset_stats(const InteractionDataset& ds);

// JSON round-trip of the dataset artifact emitted by `prepare`.
std::string dataset_to_json(const InteractionDataset& ds);
InteractionDataset dataset_from_json(const std::string& text);

}  // namespace cflab
