// SPDX-License-Identifier: Apache-2.0
#include "televit/training.hpp"

#include <cmath>
#include <fstream>

#include "televit/checkpoint.hpp"
#include "televit/errors.hpp"
#include "json_keys.hpp"
#include "televit/metrics.hpp"
#include "televit/parallel.hpp"

namespace televit {

namespace {

std::vector<int> binary_labels(const Tensor& target) {
  std::vector<int> labels(target.numel());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = target.data()[i];
    if (v != 0.0 && v != 1.0) throw ContractError("cross-entropy target must be binary, found " + std::to_string(v));
    labels[i] = v == 1.0 ? 1 : 0;
  }
  return labels;
}

}  // namespace

Tensor cross_entropy_loss(const Tensor& logits, const Tensor& target) {
  if (logits.rank() != 4 || logits.dim(1) != 2 || target.rank() != 4 || target.dim(1) != 1 ||
      logits.dim(0) != target.dim(0) || logits.dim(2) != target.dim(2) || logits.dim(3) != target.dim(3))
    throw DimensionError("cross_entropy_loss: logits " + shape_str(logits.shape()) + " and target " +
                         shape_str(target.shape()) + " are not conformable");
  const std::size_t b = logits.dim(0), pixels = logits.dim(2) * logits.dim(3);
  const auto labels = binary_labels(target);
  return cross_entropy(reshape(logits, Shape{b, 2, pixels}), labels);
}

Tensor sample_loss(const Tensor& logits, const Tensor& target) {
  if (logits.rank() != 3 || target.rank() != 3)
    throw DimensionError("sample_loss: expects [2,H,W] logits and [1,H,W] target");
  return cross_entropy_loss(reshape(logits, Shape{1, 2, logits.dim(1), logits.dim(2)}),
                            reshape(target, Shape{1, 1, target.dim(1), target.dim(2)}));
}

// ---------------------------------------------------------------------------

void adam_step(std::span<const NamedParam> params, AdamState& state, double lr, double weight_decay,
               const AdamOptions& o) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: state does not match parameters");
  for (const auto& p : params)
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad())
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor param = params[k].tensor;
    auto values = param.mutable_data();
    const auto grad = param.grad();
    const bool has_grad = param.has_grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = (has_grad ? grad[i] : 0.0) + weight_decay * values[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      values[i] -= lr * mhat / (std::sqrt(vhat) + o.eps);
    }
    for (double x : values)
      if (!std::isfinite(x)) throw NumericError("parameter '" + params[k].name + "' became non-finite");
  }
}

ReduceLROnPlateau::ReduceLROnPlateau(double lr, double factor, std::size_t patience, double min_lr)
    : lr_(lr), factor_(factor), min_lr_(min_lr), patience_(patience) {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must be in (0, 1)");
  if (patience < 1) throw ConfigError("plateau patience must be >= 1");
}

double ReduceLROnPlateau::step(double val_loss) {
  if (!best_ || val_loss < *best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    bad_epochs_ = 0;
  }
  return lr_;
}

double reduce_on_plateau(std::span<const double> val_losses, double initial_lr, double factor,
                         std::size_t patience, double min_lr) {
  ReduceLROnPlateau scheduler(initial_lr, factor, patience, min_lr);
  for (double v : val_losses) scheduler.step(v);
  return scheduler.lr();
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau_factor must be in (0, 1)");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},
       {"plateau_factor", c.plateau_factor},
       {"plateau_patience", c.plateau_patience},
       {"min_lr", c.min_lr},
       {"seed", c.seed},
       {"horizon", c.horizon},
       {"variant", to_string(c.variant)},
       {"max_steps", c.max_steps},
       {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const nlohmann::json ref = TrainConfig{};
  detail::require_known_keys(j, ref, "train config");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("epochs", c.epochs);
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("batch_size", c.batch_size);
    get("plateau_factor", c.plateau_factor);
    get("plateau_patience", c.plateau_patience);
    get("min_lr", c.min_lr);
    get("seed", c.seed);
    get("horizon", c.horizon);
    get("max_steps", c.max_steps);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      detail::require_known_keys(a, ref.at("adam"), "adam config");
      if (a.contains("beta1")) a.at("beta1").get_to(c.adam.beta1);
      if (a.contains("beta2")) a.at("beta2").get_to(c.adam.beta2);
      if (a.contains("eps")) a.at("eps").get_to(c.adam.eps);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

nlohmann::json history_json(const TrainHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"steps", e.steps},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_auprc", e.val_auprc ? nlohmann::json(*e.val_auprc) : nlohmann::json(nullptr)},
                      {"lr", e.lr}});
  return {{"epochs", epochs}, {"best_epoch", h.best_epoch}};
}

double evaluate_loss(const TeleViTModel& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractError("evaluate_loss: no samples");
  std::vector<double> losses(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    NoGradGuard no_grad;
    losses[i] = sample_loss(forward(samples[i], model), samples[i].target).item();
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(samples.size());
}

TeleViTModel clone_model(const TeleViTModel& model) {
  TeleViTModel copy = TeleViTModel::zeros(model.config(), model.seed());
  auto src = model.parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto out = dst[i].tensor.mutable_data();
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), out.begin());
  }
  return copy;
}

namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json epoch_metrics(const EpochRecord& e) {
  return {{"train_loss", e.train_loss},
          {"val_loss", e.val_loss},
          {"val_auprc", e.val_auprc ? nlohmann::json(*e.val_auprc) : nlohmann::json(nullptr)}};
}

}  // namespace

TrainResult train(const TeleViTModel& initial, const std::vector<Sample>& train_samples,
                  const std::vector<Sample>& val_samples, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (train_samples.empty()) throw DataError("train: no training samples");
  if (initial.config().variant != config.variant)
    throw ConfigError("train: model variant " + to_string(initial.config().variant) +
                      " differs from config variant " + to_string(config.variant));
  for (const auto& s : train_samples)
    if (s.h != config.horizon) throw DataError("train: sample horizon differs from config horizon");

  TeleViTModel model = clone_model(initial);
  const auto params = model.parameters();
  AdamState adam;
  ReduceLROnPlateau scheduler(config.lr, config.plateau_factor, config.plateau_patience, config.min_lr);
  TrainHistory history;
  std::optional<TeleViTModel> best;
  double best_loss = INFINITY;
  std::size_t steps = 0;
  double lr = config.lr;

  nlohmann::json extra = options.checkpoint_extra;
  extra["train_config"] = config;
  if (options.run_dir) {
    std::filesystem::create_directories(*options.run_dir);
    write_json(*options.run_dir / "config.json", {{"train", config}, {"model", model.config()}});
  }
  auto save = [&](const TeleViTModel& m, const char* name, const EpochRecord& rec) {
    if (!options.run_dir) return;
    save_checkpoint(*options.run_dir / name, m, {rec.epoch, epoch_metrics(rec), extra});
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.max_steps && steps >= config.max_steps) break;
    Rng shuffle(Rng::mix(config.seed, epoch));
    const auto order = shuffle.permutation(train_samples.size());
    Rng dropout_rng(Rng::mix(config.seed ^ 0xD50F, epoch));
    ForwardOptions fwd;
    fwd.dropout_rng = &dropout_rng;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        if (config.max_steps && steps >= config.max_steps) break;
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        for (const auto& p : params) Tensor(p.tensor).zero_grad();
        std::vector<Tensor> logits, targets;
        for (std::size_t i = start; i < end; ++i) {
          const Sample& s = train_samples[order[i]];
          const Tensor z = forward(s, model, fwd);
          logits.push_back(reshape(z, Shape{1, z.dim(0), z.dim(1), z.dim(2)}));
          targets.push_back(reshape(s.target, Shape{1, 1, s.target.dim(1), s.target.dim(2)}));
        }
        const Tensor loss = cross_entropy_loss(concat(logits), concat(targets));
        if (!std::isfinite(loss.item())) throw NumericError("loss is not finite");
        backward(loss);
        adam_step(params, adam, lr, config.weight_decay, config.adam);
        ++steps;
        loss_sum += loss.item() * static_cast<double>(end - start);
        seen += end - start;
        if (options.on_step) options.on_step(steps, loss.item());
      }
    } catch (const NumericError& e) {
      if (options.run_dir && !history.epochs.empty()) {
        write_json(*options.run_dir / "history.json", history_json(history));
      }
      throw DivergenceError(std::string("training diverged at epoch ") + std::to_string(epoch) + ": " + e.what());
    }
    rec.steps = steps;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    if (!val_samples.empty()) {
      rec.val_loss = evaluate_loss(model, val_samples);
      try {
        rec.val_auprc = evaluate(model_scores(model), val_samples, to_string(config.variant)).auprc;
      } catch (const UndefinedMetricError&) {
        rec.val_auprc.reset();
      }
    } else {
      rec.val_loss = rec.train_loss;
    }
    lr = scheduler.step(rec.val_loss);
    history.epochs.push_back(rec);
    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      history.best_epoch = epoch;
      best = clone_model(model);
      save(*best, "best.ckpt", rec);
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  if (!best) best = clone_model(model);

  if (options.run_dir && !history.epochs.empty()) {
    save(model, "last.ckpt", history.epochs.back());
    write_json(*options.run_dir / "history.json", history_json(history));
  }
  return TrainResult{std::move(*best), std::move(model), std::move(history)};
}

}  // namespace televit
