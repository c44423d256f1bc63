#include <cmath>

#include "mmtraj/errors.hpp"
#include "mmtraj/evaluation.hpp"
#include "mmtraj/interpret.hpp"
#include "mmtraj/model.hpp"

namespace mmtraj {

std::vector<CounterfactualRow> counterfactual_remove(const data::Scene& scene, std::size_t removed,
                                                     const ModelParams& params, const ModelConfig& config,
                                                     const std::vector<double>& horizons_s) {
  const std::size_t n = scene.num_vehicles();
  if (n < 2) throw UsageError("counterfactual removal needs at least two vehicles");
  if (removed >= n) throw UsageError("vehicle index " + std::to_string(removed) + " out of range");

  // Both runs share the baseline's frame, so only the removal differs.
  const data::NormalizedScene norm = data::normalize_scene(scene);
  const ModePrediction base = forward(norm.scene, params, config);
  const ModePrediction alt = forward(data::mask_vehicle(norm.scene, removed), params, config);
  const BestMode base_best = select_best(base);
  const BestMode alt_best = select_best(alt);

  const std::size_t tp = scene.t_pred, k = config.K;
  const auto a = base_best.trajectories.data(), b = alt_best.trajectories.data();
  const auto pa = base.probabilities.data(), pb = alt.probabilities.data();
  std::vector<CounterfactualRow> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == removed || !base.active[i]) continue;
    double tv = 0.0;
    for (std::size_t m = 0; m < k; ++m) tv += std::abs(pa[i * k + m] - pb[i * k + m]);
    tv *= 0.5;
    for (double h : horizons_s) {
      const std::size_t f = horizon_frame(h, scene.sample_rate_hz, tp);
      const std::size_t o = (i * tp + f) * 2;
      out.push_back({scene.ids[removed], scene.ids[i], h, std::hypot(a[o] - b[o], a[o + 1] - b[o + 1]), tv});
    }
  }
  return out;
}

void write_counterfactual_csv(std::ostream& out, const std::vector<CounterfactualRow>& rows) {
  out << "removed_id,vehicle_id,horizon_s,delta_m,prob_tv\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.removed_id << "," << r.vehicle_id << "," << r.horizon_s << "," << r.delta_m << "," << r.prob_tv << "\n";
  }
}

}  // namespace mmtraj
