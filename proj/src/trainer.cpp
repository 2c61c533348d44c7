#include "cflab/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace cflab {

const char* encoder_kind_name(EncoderKind kind) { return kind == EncoderKind::MF ? "MF" : "LightGCN"; }

EncoderKind encoder_kind_from_name(const std::string& name) {
  if (name == "MF") return EncoderKind::MF;
  if (name == "LightGCN") return EncoderKind::LightGCN;
  throw ConfigError("unknown encoder: " + name);
}

void TrainConfig::validate() const {
  if (dim < 1 || batch_size < 1 || max_epochs < 1) throw ConfigError("TrainConfig: sizes must be positive");
  if (patience < 1) throw ConfigError("TrainConfig: patience must be >= 1");
  if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
  loss.validate();
}

std::unique_ptr<Encoder> make_encoder(const InteractionDataset& ds, EncoderKind kind, int layers) {
  if (kind == EncoderKind::MF) return std::make_unique<MfEncoder>();
  return std::make_unique<LightGcnEncoder>(NormalizedAdjacency::build(ds), layers);
}

Vector score_user(const Matrix& users_out, const Matrix& items_out, Index user) {
  if (user < 0 || user >= users_out.rows()) throw std::out_of_range("score_user: user id out of range");
  return items_out * users_out.row(user).transpose();
}

std::vector<PerUserMetrics> evaluate_split(const InteractionDataset& ds, const Matrix& users_out,
                                           const Matrix& items_out, SplitLabel target,
                                           const std::vector<int>& cutoffs, Index* skipped_users) {
  const SplitLabel other = target == SplitLabel::valid ? SplitLabel::test : SplitLabel::valid;

  std::vector<std::vector<Index>> train_items(static_cast<std::size_t>(ds.num_users));
  std::vector<std::vector<Index>> other_items(static_cast<std::size_t>(ds.num_users));
  std::vector<std::vector<Index>> relevant(static_cast<std::size_t>(ds.num_users));
  for (std::size_t k = 0; k < ds.interactions.size(); ++k) {
    const auto& it = ds.interactions[k];
    if (ds.split[k] == SplitLabel::train)
      train_items[static_cast<std::size_t>(it.user)].push_back(it.item);
    else if (ds.split[k] == target)
      relevant[static_cast<std::size_t>(it.user)].push_back(it.item);
    else if (ds.split[k] == other)
      other_items[static_cast<std::size_t>(it.user)].push_back(it.item);
  }

  std::vector<PerUserMetrics> out;
  Index skipped = 0;
  for (Index u = 0; u < ds.num_users; ++u) {
    if (relevant[static_cast<std::size_t>(u)].empty()) {
      ++skipped;
      continue;
    }
    Vector scores = score_user(users_out, items_out, u);
    for (Index i : train_items[static_cast<std::size_t>(u)]) scores(i) = -std::numeric_limits<double>::infinity();
    for (Index i : other_items[static_cast<std::size_t>(u)]) scores(i) = -std::numeric_limits<double>::infinity();

    const std::vector<Index> ranked = rank_items(scores);
    const std::unordered_set<Index> rel(relevant[static_cast<std::size_t>(u)].begin(),
                                        relevant[static_cast<std::size_t>(u)].end());
    PerUserMetrics m;
    m.user = u;
    for (int n : cutoffs) {
      m.recall[n] = recall_at_n(ranked, rel, n);
      m.ndcg[n] = ndcg_at_n(ranked, rel, n);
    }
    out.push_back(std::move(m));
  }
  if (skipped_users != nullptr) *skipped_users = skipped;
  return out;
}

double mean_ndcg(const std::vector<PerUserMetrics>& per_user, int cutoff) {
  std::vector<double> vals;
  vals.reserve(per_user.size());
  for (const auto& m : per_user) vals.push_back(m.ndcg.at(cutoff));
  return pairwise_mean(vals);
}

namespace {

bool is_au_family(LossKind kind) { return kind == LossKind::DirectAU || kind == LossKind::MAWU; }

bool is_pairwise(LossKind kind) {
  return kind == LossKind::BPR || kind == LossKind::CML || kind == LossKind::SML;
}

nlohmann::json tensors_json(const std::map<std::string, Matrix>& tensors) {
  nlohmann::json j;
  for (const auto& [name, m] : tensors) {
    j[name]["rows"] = m.rows();
    j[name]["cols"] = m.cols();
    j[name]["data"] = std::vector<double>(m.data(), m.data() + m.size());
  }
  return j;
}

void tensors_from(const nlohmann::json& j, std::map<std::string, Matrix>& tensors) {
  tensors.clear();
  for (auto it = j.begin(); it != j.end(); ++it) {
    Matrix m(it.value().at("rows").get<Index>(), it.value().at("cols").get<Index>());
    const auto& data = it.value().at("data");
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = data[static_cast<std::size_t>(k)].get<double>();
    tensors[it.key()] = std::move(m);
  }
}

nlohmann::json state_json(const ModelState& state) {
  std::map<std::string, Matrix> tensors;
  for (const auto& [name, m] : state.named_tensors()) tensors[name] = *m;
  return tensors_json(tensors);
}

ModelState state_from(const nlohmann::json& j) {
  std::map<std::string, Matrix> tensors;
  tensors_from(j, tensors);
  ModelState s;
  for (auto& [name, m] : s.named_tensors()) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint: missing tensor " + name);
    *m = it->second;
  }
  return s;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["version"] = 1;
  j["epoch"] = ckpt.epoch;
  j["best_metric"] = ckpt.best_metric;
  j["best_epoch"] = ckpt.best_epoch;
  j["non_improving"] = ckpt.non_improving;
  j["best_state"] = state_json(ckpt.best_state);
  j["last_state"] = state_json(ckpt.last_state);
  j["adam_m"] = tensors_json(ckpt.adam_m);
  j["adam_v"] = tensors_json(ckpt.adam_v);
  j["adam_step"] = ckpt.adam_step;
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  Checkpoint ckpt;
  ckpt.epoch = j.at("epoch").get<int>();
  ckpt.best_metric = j.at("best_metric").get<double>();
  ckpt.best_epoch = j.at("best_epoch").get<int>();
  ckpt.non_improving = j.at("non_improving").get<int>();
  ckpt.best_state = state_from(j.at("best_state"));
  ckpt.last_state = state_from(j.at("last_state"));
  tensors_from(j.at("adam_m"), ckpt.adam_m);
  tensors_from(j.at("adam_v"), ckpt.adam_v);
  ckpt.adam_step = j.at("adam_step").get<std::int64_t>();
  return ckpt;
}

TrainResult train(const InteractionDataset& ds, const TrainConfig& cfg, const Checkpoint* resume) {
  cfg.validate();
  if (ds.num_users < 1 || ds.num_items < 1) throw DataError("train: empty dataset");

  const auto encoder = make_encoder(ds, cfg.encoder, cfg.layers);

  std::int64_t pmax_u = 1, pmax_i = 1;
  for (auto p : ds.user_pop) pmax_u = std::max(pmax_u, p);
  for (auto p : ds.item_pop) pmax_i = std::max(pmax_i, p);

  ModelState state =
      ModelState::create(ds.num_users, ds.num_items, cfg.dim, pop_bucket_count(pmax_u), pop_bucket_count(pmax_i));
  init_params(state, cfg.seed);

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.weight_decay = cfg.weight_decay;
  adam_cfg.lazy = cfg.lazy_adam;
  AdamState adam(state, adam_cfg);

  TrainResult result;
  result.best_metric = -std::numeric_limits<double>::infinity();
  int start_epoch = 1;
  int non_improving = 0;

  if (resume != nullptr) {
    state = resume->last_state;
    result.best_state = resume->best_state;
    result.best_metric = resume->best_metric;
    result.best_epoch = resume->best_epoch;
    non_improving = resume->non_improving;
    start_epoch = resume->epoch + 1;
    adam.first_moments() = resume->adam_m;
    adam.second_moments() = resume->adam_v;
    adam.set_step_count(resume->adam_step);
  }

  const auto train_pairs = ds.pairs_of(SplitLabel::train);
  if (train_pairs.empty()) throw DataError("train: no train interactions");
  const bool au = is_au_family(cfg.loss.kind);
  // pairwise losses take a single negative per triplet
  const int num_negatives = is_pairwise(cfg.loss.kind) ? 1 : cfg.num_negatives;

  for (int epoch = start_epoch; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 epoch_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), epoch_rng);

    std::vector<double> batch_losses;
    bool diverged = false;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::pair<Index, Index>> pairs;
      pairs.reserve(stop - start);
      for (std::size_t q = start; q < stop; ++q) pairs.push_back(train_pairs[order[q]]);

      Batch batch;
      if (au) {
        batch.pairs = std::move(pairs);
        batch.negatives.resize(batch.pairs.size());
      } else {
        batch = sample_negatives(ds, pairs, num_negatives, cfg.negative_mode,
                                 mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), batch_index));
        if (cfg.negative_mode == NegativeMode::in_batch) {
          // a trailing single-pair batch (or one whose positives all coincide)
          // has no in-batch negatives to offer
          bool degenerate = false;
          for (const auto& negs : batch.negatives) degenerate = degenerate || negs.empty();
          if (degenerate) {
            ++batch_index;
            continue;
          }
        }
      }
      ++batch_index;

      const LossEvaluation eval = evaluate_loss(cfg.loss, state, *encoder, batch, &ds);
      if (!std::isfinite(eval.value)) {
        diverged = true;
        break;
      }
      batch_losses.push_back(eval.value);
      adam.step(state, eval);
    }

    Matrix users_out, items_out;
    encoder->forward(state, users_out, items_out);
    const auto valid = evaluate_split(ds, users_out, items_out, SplitLabel::valid, {20});
    const double metric = mean_ndcg(valid, 20);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = pairwise_mean(batch_losses);
    rec.valid_ndcg20 = metric;
    rec.elapsed_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);

    if (diverged) {
      result.diverged = true;
      break;
    }

    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      result.best_state = state;
      non_improving = 0;
    } else {
      ++non_improving;
    }
    if (non_improving >= cfg.patience) break;
  }

  if (result.best_epoch == 0) {  // no epoch ever improved (e.g. immediate divergence)
    result.best_state = state;
  }

  result.final_checkpoint.epoch = result.history.empty() ? start_epoch - 1 : result.history.back().epoch;
  result.final_checkpoint.best_metric = result.best_metric;
  result.final_checkpoint.best_epoch = result.best_epoch;
  result.final_checkpoint.non_improving = non_improving;
  result.final_checkpoint.best_state = result.best_state;
  result.final_checkpoint.last_state = state;
  result.final_checkpoint.adam_m = adam.first_moments();
  result.final_checkpoint.adam_v = adam.second_moments();
  result.final_checkpoint.adam_step = adam.step_count();
  return result;
}

}  // namespace cflab
