#pragma once

#include "cflab/dataset.hpp"
#include "cflab/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace cflab {

// |top-n intersect relevant| / |relevant|. The ranked list must be duplicate-free.
double recall_at_n(const std::vector<Index>& ranked, const std::unordered_set<Index>& relevant, int n);

// Binary-relevance NDCG with 1/log2(rank+1) discount and ideal DCG over
// min(|relevant|, n) hits.
double ndcg_at_n(const std::vector<Index>& ranked, const std::unordered_set<Index>& relevant, int n);

// Descending score order, ties broken by ascending item id. Items with
// score -inf are still ranked (last); masking is the caller's concern.
std::vector<Index> rank_items(const Vector& scores);

struct MetricsSummary {
  std::map<int, double> recall;  // cutoff -> mean
  std::map<int, double> ndcg;
  Index users_evaluated = 0;
  Index users_skipped = 0;  // empty relevant sets
};

struct MetricsReport {
  MetricsSummary overall;
  MetricsSummary popular_group;    // top 20% of users by train popularity
  MetricsSummary unpopular_group;  // the rest
};

struct PerUserMetrics {
  Index user = 0;
  std::map<int, double> recall;
  std::map<int, double> ndcg;
};

// Group split 2:8 by train popularity (ties by ascending user id), groups
// partition the evaluated users; per-group and overall means.
MetricsReport group_report(const InteractionDataset& ds, const std::vector<PerUserMetrics>& per_user,
                           const std::vector<int>& cutoffs);

// Spearman rank correlation with averaged tie ranks; 0 for constant inputs.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct MarginProfileRow {
  std::string kind;  // "user" or "item"
  Index id = 0;
  std::int64_t popularity = 0;
  double margin = 0.0;  // softplus(raw)
};

struct MarginProfile {
  std::vector<MarginProfileRow> rows;
  double user_correlation = 0.0;  // popularity vs learned margin
  double item_correlation = 0.0;
};

// Learned-margin diagnostics (margin_mode = learned).
MarginProfile margin_popularity_profile(const ModelState& state, const InteractionDataset& ds);

std::string margin_profile_to_csv(const MarginProfile& profile);

}  // namespace cflab
