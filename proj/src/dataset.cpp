#include "cflab/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace cflab {

void InteractionDataset::recompute_popularity() {
  user_pop.assign(static_cast<std::size_t>(num_users), 0);
  item_pop.assign(static_cast<std::size_t>(num_items), 0);
  for (std::size_t k = 0; k < interactions.size(); ++k) {
    if (split[k] != SplitLabel::train) continue;
    ++user_pop[static_cast<std::size_t>(interactions[k].user)];
    ++item_pop[static_cast<std::size_t>(interactions[k].item)];
  }
}

std::vector<std::pair<Index, Index>> InteractionDataset::pairs_of(SplitLabel label) const {
  std::vector<std::pair<Index, Index>> out;
  for (std::size_t k = 0; k < interactions.size(); ++k)
    if (split[k] == label) out.emplace_back(interactions[k].user, interactions[k].item);
  return out;
}

namespace {

bool parse_int(std::string_view field, std::int64_t& value) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc{} && ptr == last;
}

}  // namespace

InteractionDataset ingest_tsv_stream(std::istream& in, const std::string& origin) {
  InteractionDataset ds;
  std::unordered_map<std::int64_t, Index> user_ids, item_ids;
  // (user, item) -> index into ds.interactions, for last-interaction dedup
  std::unordered_map<std::uint64_t, std::size_t> seen;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    std::string_view rest(line);
    std::array<std::string_view, 3> fields;
    std::size_t n_fields = 0;
    while (n_fields < 3) {
      const std::size_t tab = rest.find('\t');
      fields[n_fields++] = rest.substr(0, tab);
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }

    std::int64_t raw_user = 0, raw_item = 0, ts = 0;
    const bool ok = n_fields >= 2 && parse_int(fields[0], raw_user) && parse_int(fields[1], raw_item) &&
                    (n_fields < 3 || parse_int(fields[2], ts));
    if (!ok)
      throw DataError(origin + ":" + std::to_string(line_no) + ": malformed line, expected `user\\titem[\\ttimestamp]`");

    auto [uit, u_new] = user_ids.try_emplace(raw_user, ds.num_users);
    if (u_new) ++ds.num_users;
    auto [iit, i_new] = item_ids.try_emplace(raw_item, ds.num_items);
    if (i_new) ++ds.num_items;
    const Index u = uit->second;
    const Index i = iit->second;

    const std::uint64_t key =
        (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(static_cast<std::uint32_t>(i));
    auto [sit, fresh] = seen.try_emplace(key, ds.interactions.size());
    if (fresh) {
      ds.interactions.push_back({u, i, ts});
    } else if (ts >= ds.interactions[sit->second].timestamp) {
      // keep the last-interacted record
      ds.interactions[sit->second].timestamp = ts;
    }
  }

  if (ds.interactions.empty()) throw DataError(origin + ": empty dataset");
  ds.split.assign(ds.interactions.size(), SplitLabel::train);
  ds.recompute_popularity();
  return ds;
}

InteractionDataset ingest_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");
  return ingest_tsv_stream(in, path);
}

InteractionDataset kcore_filter(const InteractionDataset& ds, std::int64_t k) {
  if (k < 1) throw ConfigError("kcore_filter: k must be >= 1");

  std::vector<Interaction> current = ds.interactions;
  for (;;) {
    std::vector<std::int64_t> udeg(static_cast<std::size_t>(ds.num_users), 0);
    std::vector<std::int64_t> ideg(static_cast<std::size_t>(ds.num_items), 0);
    for (const auto& it : current) {
      ++udeg[static_cast<std::size_t>(it.user)];
      ++ideg[static_cast<std::size_t>(it.item)];
    }
    std::vector<Interaction> kept;
    kept.reserve(current.size());
    for (const auto& it : current)
      if (udeg[static_cast<std::size_t>(it.user)] >= k && ideg[static_cast<std::size_t>(it.item)] >= k)
        kept.push_back(it);
    const bool fixed_point = kept.size() == current.size();
    current = std::move(kept);
    if (fixed_point || current.empty()) break;
  }

  // Re-compact ids, preserving the original order of first appearance.
  InteractionDataset out;
  std::vector<Index> umap(static_cast<std::size_t>(ds.num_users), -1);
  std::vector<Index> imap(static_cast<std::size_t>(ds.num_items), -1);
  for (const auto& it : current) {
    Index& u = umap[static_cast<std::size_t>(it.user)];
    if (u < 0) u = out.num_users++;
    Index& i = imap[static_cast<std::size_t>(it.item)];
    if (i < 0) i = out.num_items++;
    out.interactions.push_back({u, i, it.timestamp});
  }
  out.split.assign(out.interactions.size(), SplitLabel::train);
  out.recompute_popularity();
  return out;
}

void chronological_split(InteractionDataset& ds, std::array<int, 3> ratio, std::uint64_t seed) {
  const int total = ratio[0] + ratio[1] + ratio[2];
  if (ratio[0] <= 0 || ratio[1] < 0 || ratio[2] < 0 || total <= 0)
    throw ConfigError("chronological_split: bad ratio");

  std::vector<std::vector<std::size_t>> by_user(static_cast<std::size_t>(ds.num_users));
  for (std::size_t k = 0; k < ds.interactions.size(); ++k)
    by_user[static_cast<std::size_t>(ds.interactions[k].user)].push_back(k);

  ds.split.assign(ds.interactions.size(), SplitLabel::train);
  for (auto& idxs : by_user) {
    std::sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      const auto& ia = ds.interactions[a];
      const auto& ib = ds.interactions[b];
      if (ia.timestamp != ib.timestamp) return ia.timestamp < ib.timestamp;
      // seed-derived tie-break keeps the split deterministic
      return mix_seed(seed, static_cast<std::uint64_t>(ia.item), static_cast<std::uint64_t>(ia.user)) <
             mix_seed(seed, static_cast<std::uint64_t>(ib.item), static_cast<std::uint64_t>(ib.user));
    });
    const std::size_t n = idxs.size();
    if (n < 3) continue;  // too few to split: everything stays in train
    const std::size_t n_test = n * static_cast<std::size_t>(ratio[2]) / static_cast<std::size_t>(total);
    const std::size_t n_valid = n * static_cast<std::size_t>(ratio[1]) / static_cast<std::size_t>(total);
    for (std::size_t r = 0; r < n_valid; ++r) ds.split[idxs[n - n_test - 1 - r]] = SplitLabel::valid;
    for (std::size_t r = 0; r < n_test; ++r) ds.split[idxs[n - 1 - r]] = SplitLabel::test;
  }
  ds.recompute_popularity();
}

double gini_index(const std::vector<std::int64_t>& counts) {
  if (counts.empty()) throw DataError("gini_index: empty counts");
  std::vector<std::int64_t> sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double total = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double x = static_cast<double>(sorted[i]);
    total += x;
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * x;
  }
  if (total <= 0.0) throw DataError("gini_index: all counts are zero");
  return weighted / (n * total);
}

DatasetStats dataset_stats(const InteractionDataset& ds) {
  DatasetStats st;
  st.num_users = ds.num_users;
  st.num_items = ds.num_items;
  st.num_interactions = ds.num_interactions();
  st.density = ds.num_users > 0 && ds.num_items > 0
                   ? static_cast<double>(st.num_interactions) /
                         (static_cast<double>(ds.num_users) * static_cast<double>(ds.num_items))
                   : 0.0;
  st.gini_user = gini_index(ds.user_pop);
  st.gini_item = gini_index(ds.item_pop);
  st.gini_ratio = st.gini_item / st.gini_user;
  return st;
}

std::string dataset_to_json(const InteractionDataset& ds) {
  nlohmann::json j;
  j["version"] = 1;
  j["num_users"] = ds.num_users;
  j["num_items"] = ds.num_items;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.interactions.size(); ++k) {
    const auto& it = ds.interactions[k];
    rows.push_back({it.user, it.item, it.timestamp, static_cast<int>(ds.split[k])});
  }
  j["interactions"] = std::move(rows);
  return j.dump();
}

InteractionDataset dataset_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  InteractionDataset ds;
  ds.num_users = j.at("num_users").get<Index>();
  ds.num_items = j.at("num_items").get<Index>();
  for (const auto& row : j.at("interactions")) {
    ds.interactions.push_back({row.at(0).get<Index>(), row.at(1).get<Index>(), row.at(2).get<std::int64_t>()});
    ds.split.push_back(static_cast<SplitLabel>(row.at(3).get<int>()));
  }
  if (ds.interactions.empty()) throw DataError("dataset_from_json: empty dataset");
  ds.recompute_popularity();
  return ds;
}

}  // namespace cflab
