#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cflab/metrics.hpp"

#include <cmath>
#include <random>

using namespace cflab;

TEST_CASE("recall basics") {
  const std::vector<Index> ranked = {3, 1, 4, 1 + 4, 9, 2, 6, 5, 8, 7, 0};
  CHECK(recall_at_n(ranked, {3}, 10) == 1.0);       // relevant at rank 1
  CHECK(recall_at_n(ranked, {0}, 10) == 0.0);       // relevant at rank 11
  CHECK(recall_at_n({1, 2, 3}, {1, 3}, 3) == 1.0);  // both inside the cutoff
  CHECK_THROWS_AS(recall_at_n(ranked, {}, 10), DataError);
}

TEST_CASE("ndcg basics and the hand-computed two-hit case") {
  CHECK(ndcg_at_n({5, 1, 2}, {5}, 10) == 1.0);
  CHECK(ndcg_at_n({5, 1, 2}, {9}, 3) == 0.0);
  // hits at ranks 1 and 3 with n=3: (1 + 1/log2(4)) / (1 + 1/log2(3))
  const double expected = (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
  CHECK(ndcg_at_n({7, 1, 9}, {7, 9}, 3) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ndcg is 1 exactly when the top slots are ideally filled") {
  CHECK(ndcg_at_n({4, 2, 9, 0}, {4, 2, 9}, 3) == 1.0);
  CHECK(ndcg_at_n({4, 2, 9, 0}, {4, 2, 9, 0, 5}, 3) == 1.0);  // min(|rel|, n) hits
}

TEST_CASE("rank_items sorts by score descending with id tie-break") {
  Vector scores(5);
  scores << 0.5, 0.9, 0.5, -1.0, 0.9;
  const auto ranked = rank_items(scores);
  CHECK(ranked == std::vector<Index>{1, 4, 0, 2, 3});
}

TEST_CASE("metrics match a brute-force rank-counting oracle") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<Index> pick(0, 39);
  for (int trial = 0; trial < 50; ++trial) {
    Vector scores(40);
    for (Index i = 0; i < 40; ++i) scores(i) = gauss(rng);
    std::unordered_set<Index> relevant;
    for (int q = 0; q < 5; ++q) relevant.insert(pick(rng));

    const auto ranked = rank_items(scores);
    for (int n : {10, 20}) {
      // oracle: the rank of item i is 1 + #{j : s_j > s_i or (s_j == s_i and j < i)}
      Index hits = 0;
      double dcg = 0.0;
      for (Index i : relevant) {
        Index rank = 1;
        for (Index j = 0; j < 40; ++j)
          if (scores(j) > scores(i) || (scores(j) == scores(i) && j < i)) ++rank;
        if (rank <= n) {
          ++hits;
          dcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
        }
      }
      double idcg = 0.0;
      for (Index r = 1; r <= std::min<Index>(n, static_cast<Index>(relevant.size())); ++r)
        idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
      CHECK(recall_at_n(ranked, relevant, n) ==
            doctest::Approx(static_cast<double>(hits) / static_cast<double>(relevant.size())));
      CHECK(ndcg_at_n(ranked, relevant, n) == doctest::Approx(dcg / idcg));
    }
  }
}

namespace {

InteractionDataset popularity_dataset(const std::vector<std::int64_t>& user_pop) {
  InteractionDataset ds;
  ds.num_users = static_cast<Index>(user_pop.size());
  ds.num_items = 5;
  ds.user_pop = user_pop;
  ds.item_pop = {1, 1, 1, 1, 1};
  return ds;
}

}  // namespace

TEST_CASE("group report splits 10 users into 2 and 8") {
  const auto ds = popularity_dataset({9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
  std::vector<PerUserMetrics> per_user;
  for (Index u = 0; u < 10; ++u) {
    PerUserMetrics m;
    m.user = u;
    m.recall[20] = static_cast<double>(u);
    m.ndcg[20] = static_cast<double>(u) / 10.0;
    per_user.push_back(m);
  }
  const auto report = group_report(ds, per_user, {20});
  CHECK(report.popular_group.users_evaluated == 2);
  CHECK(report.unpopular_group.users_evaluated == 8);
  // users 0 and 1 are the most popular
  CHECK(report.popular_group.recall.at(20) == doctest::Approx(0.5));
}

TEST_CASE("group split breaks popularity ties by user id") {
  const auto ds = popularity_dataset({3, 3, 3, 3, 3, 3, 3, 3, 3, 3});
  std::vector<PerUserMetrics> per_user;
  for (Index u = 0; u < 10; ++u) {
    PerUserMetrics m;
    m.user = u;
    m.recall[20] = u < 2 ? 1.0 : 0.0;
    m.ndcg[20] = 0.0;
    per_user.push_back(m);
  }
  const auto report = group_report(ds, per_user, {20});
  CHECK(report.popular_group.users_evaluated == 2);
  CHECK(report.popular_group.recall.at(20) == doctest::Approx(1.0));  // ids 0 and 1
}

TEST_CASE("group means recombine to the overall mean weighted by sizes") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::int64_t> pops;
  std::vector<PerUserMetrics> per_user;
  for (Index u = 0; u < 37; ++u) {
    pops.push_back(static_cast<std::int64_t>(u * 7 % 13));
    PerUserMetrics m;
    m.user = u;
    m.recall[20] = unit(rng);
    m.ndcg[20] = unit(rng);
    per_user.push_back(m);
  }
  const auto ds = popularity_dataset(pops);
  const auto report = group_report(ds, per_user, {20});
  const double np = static_cast<double>(report.popular_group.users_evaluated);
  const double nu = static_cast<double>(report.unpopular_group.users_evaluated);
  const double recombined =
      (np * report.popular_group.ndcg.at(20) + nu * report.unpopular_group.ndcg.at(20)) / (np + nu);
  CHECK(std::abs(recombined - report.overall.ndcg.at(20)) <= 1e-12);
}

TEST_CASE("spearman handles perfect, inverse and constant relationships") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {8, 6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3, 4}, {5, 5, 5, 5}) == 0.0);  // constant vector convention
}

TEST_CASE("margin profile: constant margins give zero correlation") {
  ModelState st = ModelState::create(6, 7, 3);
  InteractionDataset ds;
  ds.num_users = 6;
  ds.num_items = 7;
  ds.user_pop = {5, 4, 3, 2, 1, 6};
  ds.item_pop = {7, 6, 5, 4, 3, 2, 1};
  const auto profile = margin_popularity_profile(st, ds);  // raw margins all 0 -> ln 2
  CHECK(profile.user_correlation == 0.0);
  CHECK(profile.item_correlation == 0.0);
  CHECK(profile.rows.size() == 13);
  for (const auto& row : profile.rows) CHECK(row.margin == doctest::Approx(std::log(2.0)));
}

TEST_CASE("margin profile: margins built as negative popularity rank correlate at -1") {
  ModelState st = ModelState::create(5, 4, 3);
  InteractionDataset ds;
  ds.num_users = 5;
  ds.num_items = 4;
  ds.user_pop = {1, 2, 3, 4, 5};
  ds.item_pop = {4, 3, 2, 1};
  for (Index u = 0; u < 5; ++u) st.user_margin(u, 0) = -static_cast<double>(ds.user_pop[u]);
  for (Index i = 0; i < 4; ++i) st.item_margin(i, 0) = -static_cast<double>(ds.item_pop[i]);
  const auto profile = margin_popularity_profile(st, ds);
  CHECK(profile.user_correlation == doctest::Approx(-1.0));
  CHECK(profile.item_correlation == doctest::Approx(-1.0));
}

TEST_CASE("margin profile CSV has the documented header") {
  ModelState st = ModelState::create(1, 1, 2);
  InteractionDataset ds;
  ds.num_users = 1;
  ds.num_items = 1;
  ds.user_pop = {3};
  ds.item_pop = {3};
  const auto csv = margin_profile_to_csv(margin_popularity_profile(st, ds));
  CHECK(csv.rfind("kind,id,popularity,margin\n", 0) == 0);
  CHECK(csv.find("user,0,3,") != std::string::npos);
}
