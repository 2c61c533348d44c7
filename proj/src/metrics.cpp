#include "cflab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cflab {

double recall_at_n(const std::vector<Index>& ranked, const std::unordered_set<Index>& relevant, int n) {
  if (relevant.empty()) throw DataError("recall_at_n: empty relevant set");
  Index hits = 0;
  const int top = std::min<int>(n, static_cast<int>(ranked.size()));
  for (int r = 0; r < top; ++r)
    if (relevant.count(ranked[static_cast<std::size_t>(r)])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_n(const std::vector<Index>& ranked, const std::unordered_set<Index>& relevant, int n) {
  if (relevant.empty()) throw DataError("ndcg_at_n: empty relevant set");
  double dcg = 0.0;
  const int top = std::min<int>(n, static_cast<int>(ranked.size()));
  for (int r = 0; r < top; ++r)
    if (relevant.count(ranked[static_cast<std::size_t>(r)])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  const int ideal = std::min<int>(n, static_cast<int>(relevant.size()));
  for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

std::vector<Index> rank_items(const Vector& scores) {
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  });
  return order;
}

namespace {

MetricsSummary summarize(const std::vector<const PerUserMetrics*>& users, const std::vector<int>& cutoffs) {
  MetricsSummary s;
  s.users_evaluated = static_cast<Index>(users.size());
  for (int n : cutoffs) {
    std::vector<double> rec, nd;
    rec.reserve(users.size());
    nd.reserve(users.size());
    for (const auto* u : users) {
      rec.push_back(u->recall.at(n));
      nd.push_back(u->ndcg.at(n));
    }
    s.recall[n] = pairwise_mean(rec);
    s.ndcg[n] = pairwise_mean(nd);
  }
  return s;
}

}  // namespace

MetricsReport group_report(const InteractionDataset& ds, const std::vector<PerUserMetrics>& per_user,
                           const std::vector<int>& cutoffs) {
  // top 20% by train popularity, ties by ascending user id
  std::vector<Index> order(static_cast<std::size_t>(ds.num_users));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const auto pa = ds.user_pop[static_cast<std::size_t>(a)];
    const auto pb = ds.user_pop[static_cast<std::size_t>(b)];
    if (pa != pb) return pa > pb;
    return a < b;
  });
  const std::size_t pop_count = static_cast<std::size_t>(ds.num_users) * 2 / 10;
  std::vector<bool> is_popular(static_cast<std::size_t>(ds.num_users), false);
  for (std::size_t r = 0; r < pop_count; ++r) is_popular[static_cast<std::size_t>(order[r])] = true;

  std::vector<const PerUserMetrics*> all, pop, unpop;
  for (const auto& u : per_user) {
    all.push_back(&u);
    (is_popular[static_cast<std::size_t>(u.user)] ? pop : unpop).push_back(&u);
  }

  MetricsReport report;
  report.overall = summarize(all, cutoffs);
  report.popular_group = summarize(pop, cutoffs);
  report.unpopular_group = summarize(unpop, cutoffs);
  return report;
}

namespace {

std::vector<double> tie_averaged_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t q = i; q <= j; ++q) ranks[order[q]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return 0.0;
  const auto rx = tie_averaged_ranks(xs);
  const auto ry = tie_averaged_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += rx[k];
    my += ry[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;  // constant vector convention
  return sxy / std::sqrt(sxx * syy);
}

MarginProfile margin_popularity_profile(const ModelState& state, const InteractionDataset& ds) {
  MarginProfile profile;
  std::vector<double> upop, umargin, ipop, imargin;
  for (Index u = 0; u < state.num_users(); ++u) {
    const double m = softplus(state.user_margin(u, 0));
    profile.rows.push_back({"user", u, ds.user_pop[static_cast<std::size_t>(u)], m});
    upop.push_back(static_cast<double>(ds.user_pop[static_cast<std::size_t>(u)]));
    umargin.push_back(m);
  }
  for (Index i = 0; i < state.num_items(); ++i) {
    const double m = softplus(state.item_margin(i, 0));
    profile.rows.push_back({"item", i, ds.item_pop[static_cast<std::size_t>(i)], m});
    ipop.push_back(static_cast<double>(ds.item_pop[static_cast<std::size_t>(i)]));
    imargin.push_back(m);
  }
  profile.user_correlation = spearman(upop, umargin);
  profile.item_correlation = spearman(ipop, imargin);
  return profile;
}

std::string margin_profile_to_csv(const MarginProfile& profile) {
  std::ostringstream out;
  out << "kind,id,popularity,margin\n";
  out.precision(17);
  for (const auto& row : profile.rows)
    out << row.kind << ',' << row.id << ',' << row.popularity << ',' << row.margin << '\n';
  return out.str();
}

}  // namespace cflab
