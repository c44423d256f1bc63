#include <cstdio>
#include <sstream>

#include "mmtraj/evaluation.hpp"
#include "mmtraj/trainer.hpp"

namespace mmtraj {

std::vector<AblationVariant> ablation_variants(const ModelConfig& base) {
  ModelConfig ov1 = base;
  ov1.K = 1;
  ov1.spatial_enabled = false;
  ModelConfig ovk = base;
  ovk.spatial_enabled = false;
  ModelConfig mvk = base;
  mvk.spatial_enabled = true;
  return {{"OV_1", ov1}, {"OV_K", ovk}, {"MV_K", mvk}};
}

AblationResult run_ablation(const data::DatasetSplit& split, const ModelConfig& base, const TrainConfig& train,
                            const std::vector<double>& horizons_s) {
  AblationResult result;
  result.train_hash = dataset_hash(split.train);
  result.test_hash = dataset_hash(split.test);
  FitOptions options;
  options.validate = false;
  for (const auto& variant : ablation_variants(base)) {
    const FitResult fitted = fit(split, variant.config, train, options);
    result.reports.push_back(evaluate(split.test, fitted.params, variant.config, horizons_s, variant.label));
  }
  return result;
}

std::string format_ablation_table(const AblationResult& result) {
  std::ostringstream out;
  char cell[64];
  std::snprintf(cell, sizeof(cell), "%-6s", "");
  out << cell;
  for (const auto& r : result.reports) {
    std::snprintf(cell, sizeof(cell), " %10s", r.label.c_str());
    out << cell;
  }
  out << "\n";
  for (const char* metric : {"RMSE", "MAE"}) {
    std::snprintf(cell, sizeof(cell), "%-6s", metric);
    out << cell;
    for (const auto& r : result.reports) {
      std::snprintf(cell, sizeof(cell), " %10.4f", metric[0] == 'R' ? r.final_rmse() : r.final_mae());
      out << cell;
    }
    out << "\n";
  }
  return out.str();
}

std::string format_ablation_csv(const AblationResult& result) {
  std::ostringstream out;
  out << "variant,rmse_m,mae_m,rmse_avg_m,mae_avg_m,min_mode_rmse_m,train_hash,test_hash\n";
  char row[256];
  for (const auto& r : result.reports) {
    std::snprintf(row, sizeof(row), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%s,%s\n", r.label.c_str(), r.final_rmse(),
                  r.final_mae(), r.rmse_avg_by_horizon.rbegin()->second, r.mae_avg_by_horizon.rbegin()->second,
                  r.min_mode_rmse_final, result.train_hash.c_str(), result.test_hash.c_str());
    out << row;
  }
  return out.str();
}

}  // namespace mmtraj
