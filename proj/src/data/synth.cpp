#include <algorithm>
#include <cmath>
#include <random>

#include "mmtraj/data.hpp"
#include "mmtraj/errors.hpp"

namespace mmtraj::data {

namespace {

// Uniform draws built directly on the engine output so that scenes are
// reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n))); }

 private:
  std::mt19937_64 engine_;
};

struct VehicleSpec {
  std::size_t lane = 0;
  double x0 = 0.0;
  double v0 = 25.0;
  double accel = 0.0;
  Maneuver maneuver = Maneuver::kKeep;
  double change_start_s = 0.0;
  std::size_t first_frame = 0;
  std::size_t last_frame = 0;  // inclusive
};

// Quintic smoothstep on [0, 1] and its first two derivatives.
struct Step {
  double s, ds, dds;
};

Step smoothstep(double u) {
  if (u <= 0.0) return {0.0, 0.0, 0.0};
  if (u >= 1.0) return {1.0, 0.0, 0.0};
  const double u2 = u * u, u3 = u2 * u;
  return {u3 * (10.0 - 15.0 * u + 6.0 * u2), 30.0 * u2 * (1.0 - 2.0 * u + u2), 60.0 * u * (1.0 - 3.0 * u + 2.0 * u2)};
}

double lateral_shift(Maneuver m, double lane_width) {
  switch (m) {
    case Maneuver::kLeft:
    case Maneuver::kMerge:
      return lane_width;
    case Maneuver::kRight:
      return -lane_width;
    case Maneuver::kKeep:
      break;
  }
  return 0.0;
}

MotionState state_at(const VehicleSpec& v, double t, const SynthOptions& o) {
  MotionState s;
  s.x = v.x0 + v.v0 * t + 0.5 * v.accel * t * t;
  s.vx = v.v0 + v.accel * t;
  s.ax = v.accel;
  s.y = (static_cast<double>(v.lane) + 0.5) * o.lane_width;
  const double shift = lateral_shift(v.maneuver, o.lane_width);
  if (shift != 0.0) {
    const double sign = shift > 0.0 ? 1.0 : -1.0;
    const double cue = std::min(o.intent_cue_m, 0.5 * std::abs(shift)) * sign;
    const double main = shift - cue;
    const double dur = o.change_duration_s;
    const Step m = smoothstep((t - v.change_start_s) / dur);
    s.y += main * m.s;
    s.vy = main * m.ds / dur;
    s.ay = main * m.dds / (dur * dur);
    if (cue != 0.0 && o.intent_cue_s > 0.0) {
      const double cd = o.intent_cue_s;
      const Step c = smoothstep((t - (v.change_start_s - cd)) / cd);
      s.y += cue * c.s;
      s.vy += cue * c.ds / cd;
      s.ay += cue * c.dds / (cd * cd);
    }
  }
  s.theta = std::atan2(s.vy, s.vx);
  const double speed2 = s.vx * s.vx + s.vy * s.vy;
  s.yaw = speed2 > 0.0 ? (s.vx * s.ay - s.vy * s.ax) / speed2 : 0.0;
  return s;
}

Maneuver draw_maneuver(Rng& rng, const ManeuverMix& mix) {
  const double total = mix.keep + mix.left + mix.right + mix.merge;
  if (!(total > 0.0)) return Maneuver::kKeep;
  const double u = rng.uniform() * total;
  if (u < mix.keep) return Maneuver::kKeep;
  if (u < mix.keep + mix.left) return Maneuver::kLeft;
  if (u < mix.keep + mix.left + mix.right) return Maneuver::kRight;
  return Maneuver::kMerge;
}

Scene render(const std::vector<VehicleSpec>& specs, const SynthOptions& o, std::uint64_t seed) {
  const std::size_t t_hist = frames_for(o.hist_s, o.sample_rate_hz);
  const std::size_t t_pred = frames_for(o.pred_s, o.sample_rate_hz);
  const std::size_t total = t_hist + t_pred;
  std::vector<std::vector<std::optional<MotionState>>> rows;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::vector<std::optional<MotionState>> row(total);
    for (std::size_t f = specs[i].first_frame; f <= specs[i].last_frame && f < total; ++f) {
      MotionState s = state_at(specs[i], static_cast<double>(f) / o.sample_rate_hz, o);
      s.frame = static_cast<long>(f);
      s.vehicle_id = static_cast<long>(i + 1);
      row[f] = s;
    }
    rows.push_back(std::move(row));
  }
  return make_scene(rows, t_hist, t_pred, o.sample_rate_hz, SceneMeta{"synth:" + std::to_string(seed), 0});
}

void apply_interaction_rule(std::vector<VehicleSpec>& specs, std::size_t n_lanes, const SynthOptions& o,
                            Rng& rng) {
  const double t_end_hist = o.hist_s;
  for (auto& v : specs) {
    if (v.maneuver != Maneuver::kKeep) continue;
    const double x_self = v.x0 + v.v0 * t_end_hist + 0.5 * v.accel * t_end_hist * t_end_hist;
    const double v_self = v.v0 + v.accel * t_end_hist;
    const VehicleSpec* leader = nullptr;
    double best_gap = o.interaction_gap_m;
    for (const auto& u : specs) {
      if (&u == &v || u.lane != v.lane) continue;
      const double gap = u.x0 + u.v0 * t_end_hist + 0.5 * u.accel * t_end_hist * t_end_hist - x_self;
      if (gap > 0.0 && gap < best_gap) {
        best_gap = gap;
        leader = &u;
      }
    }
    if (!leader) continue;
    const double v_leader = leader->v0 + leader->accel * t_end_hist;
    if (v_self - v_leader < o.interaction_dv) continue;
    if (v.lane + 1 < n_lanes) {
      v.maneuver = Maneuver::kLeft;
    } else if (v.lane > 0) {
      v.maneuver = Maneuver::kRight;
    } else {
      continue;
    }
    v.change_start_s = rng.uniform(o.change_start_min_s, o.change_start_max_s);
  }
}

}  // namespace

SynthScene synth_highway_detailed(std::uint64_t seed, std::size_t n_vehicles, std::size_t n_lanes,
                                  const ManeuverMix& mix, const SynthOptions& o) {
  if (n_vehicles == 0) throw UsageError("synth_highway needs at least one vehicle");
  if (n_lanes == 0) throw UsageError("synth_highway needs at least one lane");
  Rng rng(seed);
  const std::size_t total = frames_for(o.hist_s, o.sample_rate_hz) + frames_for(o.pred_s, o.sample_rate_hz);
  const std::size_t t_hist = frames_for(o.hist_s, o.sample_rate_hz);

  std::vector<VehicleSpec> specs(n_vehicles);
  for (auto& v : specs) {
    v.maneuver = draw_maneuver(rng, mix);
    switch (v.maneuver) {
      case Maneuver::kMerge:
        if (n_lanes < 2) v.maneuver = Maneuver::kKeep;
        v.lane = 0;
        break;
      case Maneuver::kLeft:
        if (n_lanes < 2) {
          v.maneuver = Maneuver::kKeep;
          v.lane = 0;
        } else {
          v.lane = rng.index(n_lanes - 1);
        }
        break;
      case Maneuver::kRight:
        if (n_lanes < 2) {
          v.maneuver = Maneuver::kKeep;
          v.lane = 0;
        } else {
          v.lane = 1 + rng.index(n_lanes - 1);
        }
        break;
      case Maneuver::kKeep:
        v.lane = rng.index(n_lanes);
        break;
    }
    v.v0 = rng.uniform(o.speed_min, o.speed_max);
    v.accel = rng.uniform(-o.accel_max, o.accel_max);
    if (v.maneuver == Maneuver::kMerge) {
      v.v0 = std::max(1.0, o.speed_min - 4.0) + rng.uniform(0.0, 2.0);
      v.accel = 0.8;
    }
    v.change_start_s = rng.uniform(o.change_start_min_s, o.change_start_max_s);
    v.first_frame = 0;
    v.last_frame = total - 1;
    if (o.partial_presence > 0.0 && rng.uniform() < o.partial_presence) {
      if (rng.uniform() < 0.5 && t_hist > 1) {
        v.first_frame = 1 + rng.index(t_hist - 1);
      } else {
        v.last_frame = t_hist + rng.index(total - t_hist);
      }
    }
  }
  // Longitudinal placement: per lane, in draw order, with random gaps.
  std::vector<double> lane_head(n_lanes, 0.0);
  for (auto& head : lane_head) head = rng.uniform(0.0, 20.0);
  for (auto& v : specs) {
    v.x0 = lane_head[v.lane];
    lane_head[v.lane] += rng.uniform(25.0, 45.0);
  }
  if (o.interactive) apply_interaction_rule(specs, n_lanes, o, rng);

  SynthScene out;
  out.scene = render(specs, o, seed);
  for (const auto& v : specs) out.maneuvers.push_back(v.maneuver);
  return out;
}

Scene synth_highway(std::uint64_t seed, std::size_t n_vehicles, std::size_t n_lanes, const ManeuverMix& mix,
                    const SynthOptions& options) {
  return synth_highway_detailed(seed, n_vehicles, n_lanes, mix, options).scene;
}

Scene synth_car_following(std::uint64_t seed, const SynthOptions& options) {
  SynthOptions o = options;
  o.interactive = true;
  Rng rng(seed);
  const std::size_t total = frames_for(o.hist_s, o.sample_rate_hz) + frames_for(o.pred_s, o.sample_rate_hz);
  std::vector<VehicleSpec> specs(3);
  // Follower closes on a slower leader in lane 1; the third vehicle cruises in lane 0 far ahead.
  specs[0].lane = 1;
  specs[0].x0 = 0.0;
  specs[0].v0 = 27.0 + rng.uniform(0.0, 1.0);
  specs[1].lane = 1;
  specs[1].x0 = 32.0 + rng.uniform(0.0, 4.0);
  specs[1].v0 = 22.0 + rng.uniform(0.0, 1.0);
  specs[2].lane = 0;
  specs[2].x0 = 150.0 + rng.uniform(0.0, 20.0);
  specs[2].v0 = 25.0 + rng.uniform(0.0, 1.0);
  for (auto& v : specs) v.last_frame = total - 1;
  apply_interaction_rule(specs, 3, o, rng);
  return render(specs, o, seed);
}

}  // namespace mmtraj::data
