#pragma once

#include "cflab/encoder.hpp"
#include "cflab/loss.hpp"
#include "cflab/metrics.hpp"
#include "cflab/optim.hpp"
#include "cflab/sampling.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace cflab {

enum class EncoderKind { MF, LightGCN };

const char* encoder_kind_name(EncoderKind kind);
EncoderKind encoder_kind_from_name(const std::string& name);

struct TrainConfig {
  Index dim = 64;
  double lr = 1e-3;
  Index batch_size = 2048;
  int num_negatives = 30;
  int max_epochs = 1000;
  int patience = 10;  // early stopping on validation NDCG@20
  double weight_decay = 0.0;
  EncoderKind encoder = EncoderKind::MF;
  int layers = 2;  // LightGCN only
  NegativeMode negative_mode = NegativeMode::uniform;
  bool lazy_adam = true;
  LossConfig loss;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_ndcg20 = 0.0;
  std::int64_t elapsed_ms = 0;
};

// Everything needed to continue a run bit-identically: per-epoch RNG streams
// are derived from (seed, epoch), so resuming at epoch e reproduces an
// uninterrupted run.
struct Checkpoint {
  int epoch = 0;
  double best_metric = 0.0;
  int best_epoch = 0;
  int non_improving = 0;
  ModelState best_state;
  ModelState last_state;
  std::map<std::string, Matrix> adam_m, adam_v;
  std::int64_t adam_step = 0;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

struct TrainResult {
  ModelState best_state;
  double best_metric = 0.0;
  int best_epoch = 0;
  std::vector<EpochRecord> history;
  bool diverged = false;
  Checkpoint final_checkpoint;
};

std::unique_ptr<Encoder> make_encoder(const InteractionDataset& ds, EncoderKind kind, int layers);

// Mini-batch training over shuffled train pairs with early stopping on
// validation NDCG@20. AU-family losses skip negative sampling entirely.
// Divergence (non-finite loss) aborts and returns the last finite state
// with the diverged flag set.
TrainResult train(const InteractionDataset& ds, const TrainConfig& cfg, const Checkpoint* resume = nullptr);

// Inference scores r(u, i) = f(u)^T f(i) on the raw (unnormalized) encoder
// outputs; margins play no role at inference.
Vector score_user(const Matrix& users_out, const Matrix& items_out, Index user);

// Full-ranking evaluation of one holdout split: candidates are all items
// minus the user's train items minus the other holdout split's items;
// users with no relevant items are skipped.
std::vector<PerUserMetrics> evaluate_split(const InteractionDataset& ds, const Matrix& users_out,
                                           const Matrix& items_out, SplitLabel target,
                                           const std::vector<int>& cutoffs, Index* skipped_users = nullptr);

double mean_ndcg(const std::vector<PerUserMetrics>& per_user, int cutoff);

}  // namespace cflab
