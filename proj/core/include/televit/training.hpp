// SPDX-License-Identifier: Apache-2.0
//
// Optimization: two-class cross-entropy, Adam with L2 added to gradients,
// reduce-on-plateau scheduling, and a seeded training loop that keeps the
// checkpoint with the lowest validation loss.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "televit/datacube.hpp"
#include "televit/model.hpp"

namespace televit {

/// Mean over batch and pixels of -log softmax(logits)[target].
/// logits [B,2,H,W], target [B,1,H,W] with values in {0,1}.
Tensor cross_entropy_loss(const Tensor& logits, const Tensor& target);

/// Loss of a single sample's logits [2,H,W] against its target [1,H,W].
Tensor sample_loss(const Tensor& logits, const Tensor& target);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update. weight_decay * param is added to each
/// gradient before the moment updates (classic L2, not decoupled).
/// A parameter without a gradient is treated as having a zero gradient.
/// Throws NumericError naming the parameter when a gradient is not finite.
void adam_step(std::span<const NamedParam> params, AdamState& state, double lr, double weight_decay,
               const AdamOptions& options = {});

/// Multiplies the rate by `factor` once validation loss has failed to improve
/// strictly for `patience` consecutive epochs; the counter resets on
/// improvement and after each reduction.
class ReduceLROnPlateau {
 public:
  ReduceLROnPlateau(double lr, double factor, std::size_t patience, double min_lr = 0.0);

  /// Feeds one epoch's validation loss and returns the rate for the next epoch.
  double step(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_, factor_, min_lr_;
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  std::optional<double> best_;
};

/// Rate after replaying a sequence of validation losses from `initial_lr`.
double reduce_on_plateau(std::span<const double> val_losses, double initial_lr, double factor,
                         std::size_t patience, double min_lr = 0.0);

struct TrainConfig {
  std::size_t epochs = 50;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  std::size_t batch_size = 4;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  double min_lr = 1e-7;
  std::uint64_t seed = 0;
  std::size_t horizon = 1;
  Variant variant = Variant::with_indices_and_global;
  std::size_t max_steps = 0;  // 0 = no cap
  AdamOptions adam;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps so far
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_auprc;
  double lr = 0.0;  // rate used during the epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based, minimum val loss
};

nlohmann::json history_json(const TrainHistory& history);

/// Mean per-sample loss, computed without graph recording, in sample order.
double evaluate_loss(const TeleViTModel& model, const std::vector<Sample>& samples);

struct TrainOptions {
  std::optional<std::filesystem::path> run_dir;  // writes config.json, history.json, best.ckpt, last.ckpt
  nlohmann::json checkpoint_extra = nlohmann::json::object();
  std::function<void(std::size_t step, double batch_loss)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TeleViTModel best;
  TeleViTModel last;
  TrainHistory history;
};

/// Deep copy of a model's parameters.
TeleViTModel clone_model(const TeleViTModel& model);

/// Seeded loop: shuffle, batch forward/backward, Adam, validation, scheduler,
/// best-checkpoint tracking. With no validation samples, selection uses the
/// training loss. Throws DivergenceError when the loss stops being finite.
TrainResult train(const TeleViTModel& initial, const std::vector<Sample>& train_samples,
                  const std::vector<Sample>& val_samples, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace televit
