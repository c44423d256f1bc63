#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "mmtraj/config.hpp"
#include "mmtraj/data.hpp"
#include "mmtraj/params.hpp"

namespace mmtraj {

/// Adam with global-norm gradient clipping. Gradients are passed in the
/// visit order of ModelParams.
class Adam {
 public:
  explicit Adam(const TrainConfig& config) : config_(config) {}
  /// Returns the gradient norm before clipping.
  double step(ModelParams& params, const std::vector<std::vector<double>>& grads);
  std::size_t steps() const { return t_; }
  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  TrainConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_total = 0.0;
  double train_wta = 0.0;
  double train_prob = 0.0;
  std::optional<double> val_rmse_T;
  std::optional<double> val_mae_T;
  double wall_time_s = 0.0;
};

/// Deterministic fields only; wall time goes to a separate timing log.
nlohmann::json metrics_record(const EpochMetrics& m);

struct StepStats {
  double total = 0.0;
  double wta = 0.0;
  double prob = 0.0;
  double grad_norm = 0.0;
};

struct FitOptions {
  /// Receives metrics.jsonl, timing.jsonl, checkpoints and model.ckpt.
  std::optional<std::filesystem::path> out_dir;
  bool validate = true;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct FitResult {
  ModelParams params;
  std::vector<EpochMetrics> epochs;
  std::vector<StepStats> steps;
};

/// Averages per-scene gradients of the total loss over `batch` (scenes in the
/// model frame) and applies one optimizer step.
StepStats train_step(ModelParams& params, Adam& optimizer, const std::vector<const data::Scene*>& batch,
                     const ModelConfig& model_config, const TrainConfig& train_config);

FitResult fit(const data::DatasetSplit& split, const ModelConfig& model_config, const TrainConfig& train_config,
              const FitOptions& options = {});

}  // namespace mmtraj
