#include <cmath>
#include <cstdio>
#include <sstream>

#include "mmtraj/errors.hpp"
#include "mmtraj/evaluation.hpp"
#include "mmtraj/hash.hpp"
#include "mmtraj/model.hpp"

namespace mmtraj {

namespace {

void check_inputs(const Tensor& pred, const Tensor& gt, const Mask& mask) {
  if (pred.rank() != 3 || pred.shape().back() != 2 || gt.shape() != pred.shape() ||
      mask.shape != Shape{pred.dim(0), pred.dim(1)}) {
    throw DimensionError("metric inputs: prediction " + shape_str(pred.shape()) + ", ground truth " +
                         shape_str(gt.shape()) + ", mask " + shape_str(mask.shape));
  }
}

struct Displacement {
  double l2sq;
  double l1;
};

Displacement displacement(std::span<const double> p, std::span<const double> g, std::size_t at) {
  const double dx = p[at] - g[at], dy = p[at + 1] - g[at + 1];
  return {dx * dx + dy * dy, std::abs(dx) + std::abs(dy)};
}

template <typename Fn>
std::size_t per_vehicle_at_horizon(const Tensor& pred, const Tensor& gt, const Mask& mask, double horizon_s,
                                   double rate, Fn&& fn) {
  check_inputs(pred, gt, mask);
  const std::size_t tp = pred.dim(1);
  const std::size_t f = horizon_frame(horizon_s, rate, tp);
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.dim(0); ++i) {
    if (!mask.at(i, f)) continue;
    fn(displacement(pred.data(), gt.data(), (i * tp + f) * 2));
    ++count;
  }
  if (count == 0) {
    throw DegenerateInputError("no vehicle is valid at horizon " + std::to_string(horizon_s) + " s");
  }
  return count;
}

struct Pool {
  double l2sq = 0.0, l2 = 0.0, l1 = 0.0;
  std::size_t n = 0;
  void add(const Displacement& d) {
    l2sq += d.l2sq;
    l2 += std::sqrt(d.l2sq);
    l1 += d.l1;
    ++n;
  }
};

}  // namespace

std::size_t horizon_frame(double horizon_s, double sample_rate_hz, std::size_t t_pred) {
  const long f = std::lround(horizon_s * sample_rate_hz) - 1;
  if (f < 0 || static_cast<std::size_t>(f) >= t_pred) {
    throw UsageError("horizon " + std::to_string(horizon_s) + " s is outside the " + std::to_string(t_pred) +
                     "-frame prediction window");
  }
  return static_cast<std::size_t>(f);
}

double rmse_T(const Tensor& pred_best, const Tensor& gt, const Mask& future_mask, double horizon_s,
              double sample_rate_hz) {
  double acc = 0.0;
  const std::size_t n = per_vehicle_at_horizon(pred_best, gt, future_mask, horizon_s, sample_rate_hz,
                                               [&](const Displacement& d) { acc += d.l2sq; });
  return std::sqrt(acc / static_cast<double>(n));
}

double mae_T(const Tensor& pred_best, const Tensor& gt, const Mask& future_mask, double horizon_s,
             double sample_rate_hz) {
  double acc = 0.0;
  const std::size_t n = per_vehicle_at_horizon(pred_best, gt, future_mask, horizon_s, sample_rate_hz,
                                               [&](const Displacement& d) { acc += d.l1; });
  return acc / static_cast<double>(n);
}

EvalReport evaluate(const std::vector<data::Scene>& scenes, const ModelParams& params, const ModelConfig& config,
                    const std::vector<double>& horizons_s, const std::string& label) {
  if (scenes.empty()) throw UsageError("evaluation needs at least one scene");
  if (horizons_s.empty()) throw UsageError("evaluation needs at least one horizon");
  EvalReport report;
  report.label = label;
  report.config_fingerprint = fingerprint(nlohmann::json(config));
  report.scenes = scenes.size();
  report.mean_probabilities.assign(config.K, 0.0);

  std::map<double, Pool> at, upto;
  double min_mode_sq = 0.0;
  std::size_t min_mode_n = 0;
  const std::size_t k = config.K;

  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const data::Scene& scene = scenes[s];
    const data::NormalizedScene norm = data::normalize_scene(scene);
    const ModePrediction pred = forward(norm.scene, params, config);
    const Tensor best = norm.transform.denormalize(select_best(pred).trajectories);
    const Tensor modes = norm.transform.denormalize(pred.trajectories);
    const Tensor gt = scene.future_positions();
    const Mask fm = scene.future_mask();
    const std::size_t tp = scene.t_pred;
    const auto b = best.data(), g = gt.data(), md = modes.data(), p = pred.probabilities.data();

    for (std::size_t i = 0; i < scene.num_vehicles(); ++i) {
      if (!pred.active[i]) continue;
      ++report.vehicles;
      for (std::size_t m = 0; m < k; ++m) report.mean_probabilities[m] += p[i * k + m];
      for (double h : horizons_s) {
        const std::size_t f = horizon_frame(h, scene.sample_rate_hz, tp);
        for (std::size_t t = 0; t <= f; ++t) {
          if (fm.at(i, t)) upto[h].add(displacement(b, g, (i * tp + t) * 2));
        }
        if (!fm.at(i, f)) continue;
        const Displacement d = displacement(b, g, (i * tp + f) * 2);
        at[h].add(d);
        report.per_vehicle.push_back({s, scene.ids[i], h, std::sqrt(d.l2sq), d.l1});
      }
      const std::size_t last = tp - 1;
      if (fm.at(i, last)) {
        double best_sq = INFINITY;
        for (std::size_t m = 0; m < k; ++m) {
          const std::size_t o = ((i * k + m) * tp + last) * 2;
          const double dx = md[o] - g[(i * tp + last) * 2], dy = md[o + 1] - g[(i * tp + last) * 2 + 1];
          best_sq = std::min(best_sq, dx * dx + dy * dy);
        }
        min_mode_sq += best_sq;
        ++min_mode_n;
      }
    }
  }
  for (double h : horizons_s) {
    const Pool& a = at[h];
    if (a.n == 0) throw DegenerateInputError("no vehicle is valid at horizon " + std::to_string(h) + " s");
    report.rmse_by_horizon[h] = std::sqrt(a.l2sq / static_cast<double>(a.n));
    report.mae_by_horizon[h] = a.l1 / static_cast<double>(a.n);
    const Pool& u = upto[h];
    report.rmse_avg_by_horizon[h] = std::sqrt(u.l2sq / static_cast<double>(u.n));
    report.mae_avg_by_horizon[h] = u.l1 / static_cast<double>(u.n);
  }
  if (min_mode_n > 0) report.min_mode_rmse_final = std::sqrt(min_mode_sq / static_cast<double>(min_mode_n));
  for (double& v : report.mean_probabilities) v /= static_cast<double>(std::max<std::size_t>(1, report.vehicles));
  return report;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  auto by_horizon = [](const std::map<double, double>& m) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& [h, v] : m) {
      char key[32];
      std::snprintf(key, sizeof(key), "%g", h);
      o[key] = v;
    }
    return o;
  };
  j = {{"label", r.label},
       {"config_fingerprint", r.config_fingerprint},
       {"scenes", r.scenes},
       {"vehicles", r.vehicles},
       {"rmse_by_horizon", by_horizon(r.rmse_by_horizon)},
       {"mae_by_horizon", by_horizon(r.mae_by_horizon)},
       {"rmse_avg_by_horizon", by_horizon(r.rmse_avg_by_horizon)},
       {"mae_avg_by_horizon", by_horizon(r.mae_avg_by_horizon)},
       {"min_mode_rmse_final", r.min_mode_rmse_final},
       {"mean_probabilities", r.mean_probabilities}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& v : r.per_vehicle) {
    rows.push_back({{"scene", v.scene}, {"vehicle_id", v.vehicle_id}, {"horizon_s", v.horizon_s}, {"l2", v.l2},
                    {"l1", v.l1}});
  }
  j["per_vehicle"] = rows;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s %10s\n", "horizon_s", "RMSE", "MAE", "RMSE_avg",
                "MAE_avg");
  out << line;
  for (const auto& [h, rmse] : r.rmse_by_horizon) {
    std::snprintf(line, sizeof(line), "%-10g %10.4f %10.4f %10.4f %10.4f\n", h, rmse, r.mae_by_horizon.at(h),
                  r.rmse_avg_by_horizon.at(h), r.mae_avg_by_horizon.at(h));
    out << line;
  }
  return out.str();
}

std::string dataset_hash(const std::vector<data::Scene>& scenes) {
  std::uint64_t h = fnv1a64(std::string_view("scenes"));
  for (const auto& s : scenes) {
    std::vector<double> header = {static_cast<double>(s.num_vehicles()), static_cast<double>(s.t_hist),
                                  static_cast<double>(s.t_pred), s.sample_rate_hz};
    for (long id : s.ids) header.push_back(static_cast<double>(id));
    for (auto b : s.mask.data) header.push_back(b);
    h = fnv1a64(std::span<const double>(header), h);
    h = fnv1a64(s.features.data(), h);
  }
  return hex64(h);
}

}  // namespace mmtraj
