#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmtraj/config.hpp"
#include "mmtraj/data.hpp"
#include "mmtraj/params.hpp"
#include "mmtraj/tensor.hpp"

namespace mmtraj {

/// Future frame index of a horizon: round(horizon_s * rate) - 1.
std::size_t horizon_frame(double horizon_s, double sample_rate_hz, std::size_t t_pred);

/// sqrt(mean over valid vehicles of |pred - gt|_2^2) at the horizon frame.
/// `pred_best`, `gt` are [N, T_pred, 2]; vehicles masked at that frame are skipped.
double rmse_T(const Tensor& pred_best, const Tensor& gt, const Mask& future_mask, double horizon_s,
              double sample_rate_hz);
/// Mean over valid vehicles of |pred - gt|_1 at the horizon frame.
double mae_T(const Tensor& pred_best, const Tensor& gt, const Mask& future_mask, double horizon_s,
             double sample_rate_hz);

struct VehicleError {
  std::size_t scene = 0;
  long vehicle_id = 0;
  double horizon_s = 0.0;
  double l2 = 0.0;
  double l1 = 0.0;
};

struct EvalReport {
  std::string label;
  std::string config_fingerprint;
  std::map<double, double> rmse_by_horizon;
  std::map<double, double> mae_by_horizon;
  // Same metrics averaged over every valid frame up to the horizon.
  std::map<double, double> rmse_avg_by_horizon;
  std::map<double, double> mae_avg_by_horizon;
  /// Smallest over modes of the final-horizon L2 error, RMS over vehicles.
  double min_mode_rmse_final = 0.0;
  std::vector<double> mean_probabilities;  // [K] averaged over evaluated vehicles
  std::vector<VehicleError> per_vehicle;
  std::size_t scenes = 0;
  std::size_t vehicles = 0;

  double final_rmse() const { return rmse_by_horizon.rbegin()->second; }
  double final_mae() const { return mae_by_horizon.rbegin()->second; }
};

void to_json(nlohmann::json& j, const EvalReport& r);

/// Runs the model on every scene (normalize, predict, denormalize) and pools
/// errors over all vehicles of all scenes.
EvalReport evaluate(const std::vector<data::Scene>& scenes, const ModelParams& params, const ModelConfig& config,
                    const std::vector<double>& horizons_s, const std::string& label = "");

std::string format_report(const EvalReport& report);

/// FNV-1a over scene features, masks and ids, in order.
std::string dataset_hash(const std::vector<data::Scene>& scenes);

struct AblationVariant {
  std::string label;
  ModelConfig config;
};

struct AblationResult {
  std::vector<EvalReport> reports;  // OV_1, OV_K, MV_K
  std::string train_hash;
  std::string test_hash;
};

/// The three variants derived from `base`: OV_1 (K=1, no spatial), OV_K, MV_K.
std::vector<AblationVariant> ablation_variants(const ModelConfig& base);

/// Trains and evaluates each variant on the same data with the same train config.
AblationResult run_ablation(const data::DatasetSplit& split, const ModelConfig& base, const TrainConfig& train,
                            const std::vector<double>& horizons_s);

/// Rows RMSE and MAE, columns OV_1, OV_K, MV_K (final horizon).
std::string format_ablation_table(const AblationResult& result);
/// One row per variant: `variant,rmse_m,mae_m,...`.
std::string format_ablation_csv(const AblationResult& result);

}  // namespace mmtraj
