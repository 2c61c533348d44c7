#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cflab/dataset.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

using namespace cflab;

namespace {

InteractionDataset ingest_text(const std::string& text) {
  std::istringstream in(text);
  return ingest_tsv_stream(in, "<test>");
}

// Independent k-core oracle: peel entities one at a time until no entity has
// degree below k.
std::set<std::pair<Index, Index>> kcore_oracle(std::set<std::pair<Index, Index>> edges, std::int64_t k) {
  for (;;) {
    std::map<Index, std::int64_t> udeg, ideg;
    for (const auto& [u, i] : edges) {
      ++udeg[u];
      ++ideg[i];
    }
    std::set<std::pair<Index, Index>> kept;
    for (const auto& [u, i] : edges)
      if (udeg[u] >= k && ideg[i] >= k) kept.insert({u, i});
    if (kept == edges) return edges;
    edges = std::move(kept);
  }
}

}  // namespace

TEST_CASE("ingest collapses duplicates keeping the last interaction") {
  const auto ds = ingest_text("1\t7\t100\n1\t7\t250\n2\t9\t50\n");
  CHECK(ds.num_interactions() == 2);
  // pair (user 0 = raw 1, item 0 = raw 7) keeps the larger timestamp
  bool found = false;
  for (const auto& it : ds.interactions)
    if (it.user == 0 && it.item == 0) {
      CHECK(it.timestamp == 250);
      found = true;
    }
  CHECK(found);
}

TEST_CASE("ingest rejects an empty file") {
  CHECK_THROWS_AS(ingest_text(""), DataError);
  CHECK_THROWS_AS(ingest_text("# only a comment\n"), DataError);
}

TEST_CASE("ingest compacts ids by first appearance") {
  const auto ds = ingest_text("10\t42\t1\n42\t10\t2\n");
  CHECK(ds.num_users == 2);
  CHECK(ds.num_items == 2);
  CHECK(ds.interactions[0].user == 0);
  CHECK(ds.interactions[0].item == 0);
  CHECK(ds.interactions[1].user == 1);
  CHECK(ds.interactions[1].item == 1);
}

TEST_CASE("ingest reports malformed lines with their number") {
  try {
    ingest_text("1\t2\t3\nnot-a-line\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("ingest accepts missing timestamps and comments") {
  const auto ds = ingest_text("# comment\n1\t2\n3\t4\t9\n");
  CHECK(ds.num_interactions() == 2);
  CHECK(ds.interactions[0].timestamp == 0);
}

TEST_CASE("kcore with k=1 is the identity on datasets without isolated ids") {
  const auto ds = ingest_text("1\t1\t1\n1\t2\t2\n2\t1\t3\n");
  const auto filtered = kcore_filter(ds, 1);
  CHECK(filtered.num_interactions() == ds.num_interactions());
  CHECK(filtered.num_users == ds.num_users);
  CHECK(filtered.num_items == ds.num_items);
}

TEST_CASE("kcore empties a star graph at k=2") {
  // one user interacting once with each of 5 items: every item has degree 1
  const auto ds = ingest_text("0\t1\t1\n0\t2\t2\n0\t3\t3\n0\t4\t4\n0\t5\t5\n");
  const auto filtered = kcore_filter(ds, 2);
  CHECK(filtered.num_interactions() == 0);
  CHECK(filtered.num_users == 0);
  CHECK(filtered.num_items == 0);
}

TEST_CASE("kcore removes a dangling item from a grid and matches the peeling oracle") {
  // 4x4 complete grid plus one dangling item seen once
  std::ostringstream text;
  for (int u = 0; u < 4; ++u)
    for (int i = 0; i < 4; ++i) text << u << '\t' << i << '\t' << (u * 4 + i) << '\n';
  text << "0\t99\t100\n";
  const auto ds = ingest_text(text.str());
  const auto filtered = kcore_filter(ds, 2);
  CHECK(filtered.num_interactions() == 16);
  CHECK(filtered.num_items == 4);

  std::set<std::pair<Index, Index>> edges;
  for (const auto& it : ds.interactions) edges.insert({it.user, it.item});
  CHECK(filtered.num_interactions() == static_cast<Index>(kcore_oracle(edges, 2).size()));
}

TEST_CASE("kcore is idempotent") {
  std::ostringstream text;
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 6; ++i)
      if ((u + i) % 2 == 0) text << u << '\t' << i << '\t' << (u * 6 + i) << '\n';
  const auto once = kcore_filter(ingest_text(text.str()), 2);
  const auto twice = kcore_filter(once, 2);
  CHECK(once.num_interactions() == twice.num_interactions());
  CHECK(once.num_users == twice.num_users);
}

TEST_CASE("split assigns 7/1/2 chronologically for a 10-interaction user") {
  std::ostringstream text;
  for (int k = 0; k < 10; ++k) text << 0 << '\t' << k << '\t' << (1000 - k * 10) << '\n';  // reverse order
  auto ds = ingest_text(text.str());
  chronological_split(ds, {7, 1, 2}, 3);

  int n_train = 0, n_valid = 0, n_test = 0;
  std::int64_t max_train_ts = -1, min_test_ts = 1 << 20, valid_ts = -1;
  for (std::size_t k = 0; k < ds.interactions.size(); ++k) {
    switch (ds.split[k]) {
      case SplitLabel::train:
        ++n_train;
        max_train_ts = std::max(max_train_ts, ds.interactions[k].timestamp);
        break;
      case SplitLabel::valid:
        ++n_valid;
        valid_ts = ds.interactions[k].timestamp;
        break;
      case SplitLabel::test:
        ++n_test;
        min_test_ts = std::min(min_test_ts, ds.interactions[k].timestamp);
        break;
    }
  }
  CHECK(n_train == 7);
  CHECK(n_valid == 1);
  CHECK(n_test == 2);
  // earliest interactions in train, then valid, then test
  CHECK(max_train_ts < valid_ts);
  CHECK(valid_ts < min_test_ts);
}

TEST_CASE("split leaves users with fewer than 3 interactions entirely in train") {
  auto ds = ingest_text("0\t0\t1\n0\t1\t2\n1\t0\t5\n1\t1\t6\n1\t2\t7\n1\t3\t8\n1\t4\t9\n");
  chronological_split(ds, {7, 1, 2}, 3);
  for (std::size_t k = 0; k < ds.interactions.size(); ++k)
    if (ds.interactions[k].user == 0) CHECK(ds.split[k] == SplitLabel::train);
}

TEST_CASE("split is deterministic under timestamp ties") {
  std::ostringstream text;
  for (int k = 0; k < 10; ++k) text << 0 << '\t' << k << "\t77\n";  // all timestamps equal
  auto a = ingest_text(text.str());
  auto b = ingest_text(text.str());
  chronological_split(a, {7, 1, 2}, 12345);
  chronological_split(b, {7, 1, 2}, 12345);
  CHECK(a.split == b.split);
}

TEST_CASE("split labels partition and popularity sums match the train count") {
  std::ostringstream text;
  for (int u = 0; u < 8; ++u)
    for (int i = 0; i < 7; ++i) text << u << '\t' << i << '\t' << (u * 100 + i) << '\n';
  auto ds = ingest_text(text.str());
  chronological_split(ds, {7, 1, 2}, 5);

  Index n_train = 0;
  for (auto label : ds.split)
    if (label == SplitLabel::train) ++n_train;
  std::int64_t upop = 0, ipop = 0;
  for (auto p : ds.user_pop) upop += p;
  for (auto p : ds.item_pop) ipop += p;
  CHECK(upop == n_train);
  CHECK(ipop == n_train);
}

TEST_CASE("gini index of uniform counts is zero") { CHECK(gini_index({5, 5, 5, 5}) == doctest::Approx(0.0)); }

TEST_CASE("gini index of [0,0,0,10] is exactly 0.75") { CHECK(gini_index({0, 0, 0, 10}) == 0.75); }

TEST_CASE("gini index rejects all-zero and empty inputs") {
  CHECK_THROWS_AS(gini_index({0, 0, 0}), DataError);
  CHECK_THROWS_AS(gini_index({}), DataError);
}

TEST_CASE("gini index is scale invariant") {
  const std::vector<std::int64_t> counts = {1, 4, 9, 2, 7, 7, 3};
  std::vector<std::int64_t> scaled;
  for (auto c : counts) scaled.push_back(c * 13);
  CHECK(gini_index(counts) == doctest::Approx(gini_index(scaled)).epsilon(1e-12));
}

TEST_CASE("dataset stats include the gini ratio") {
  std::ostringstream text;
  for (int u = 0; u < 5; ++u)
    for (int i = 0; i <= u; ++i) text << u << '\t' << i << '\t' << (u * 10 + i) << '\n';
  const auto ds = ingest_text(text.str());
  const auto st = dataset_stats(ds);
  CHECK(st.gini_ratio == doctest::Approx(st.gini_item / st.gini_user));
  CHECK(st.density == doctest::Approx(static_cast<double>(st.num_interactions) /
                                      (static_cast<double>(st.num_users) * static_cast<double>(st.num_items))));
}

TEST_CASE("dataset JSON round-trips") {
  std::ostringstream text;
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 5; ++i) text << u << '\t' << i << '\t' << (u + i * 3) << '\n';
  auto ds = ingest_text(text.str());
  chronological_split(ds, {7, 1, 2}, 9);
  const auto restored = dataset_from_json(dataset_to_json(ds));
  CHECK(restored.num_users == ds.num_users);
  CHECK(restored.num_items == ds.num_items);
  CHECK(restored.split == ds.split);
  CHECK(restored.user_pop == ds.user_pop);
  REQUIRE(restored.num_interactions() == ds.num_interactions());
  for (Index k = 0; k < ds.num_interactions(); ++k) {
    CHECK(restored.interactions[static_cast<std::size_t>(k)].user ==
          ds.interactions[static_cast<std::size_t>(k)].user);
    CHECK(restored.interactions[static_cast<std::size_t>(k)].timestamp ==
          ds.interactions[static_cast<std::size_t>(k)].timestamp);
  }
}
