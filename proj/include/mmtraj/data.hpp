#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mmtraj/tensor.hpp"

namespace mmtraj::data {

/// Channel layout of the per-frame feature vector.
enum Feature : std::size_t { kX = 0, kY, kVx, kVy, kAx, kAy, kTheta, kYaw, kFeatureDim };

struct MotionState {
  long frame = 0;
  long vehicle_id = 0;
  double x = 0.0, y = 0.0;    // m
  double vx = 0.0, vy = 0.0;  // m/s
  double ax = 0.0, ay = 0.0;  // m/s^2
  double theta = 0.0;         // rad, heading
  double yaw = 0.0;           // rad/s

  std::vector<double> features() const { return {x, y, vx, vy, ax, ay, theta, yaw}; }
};

struct VehicleTrack {
  long vehicle_id = 0;
  std::vector<MotionState> states;  // strictly increasing frame
};

struct Recording {
  std::string source;
  double sample_rate_hz = 10.0;
  std::vector<VehicleTrack> tracks;  // sorted by vehicle id

  long first_frame() const;
  long last_frame() const;
};

struct SceneMeta {
  std::string source;
  long chunk_offset = 0;  // first frame of the window in the source recording
};

/// A fixed window of N vehicles over T_hist + T_pred frames.
struct Scene {
  Tensor features;  // [N, T_total, kFeatureDim]; entries at masked frames are 0
  Mask mask;        // [N, T_total], true = present
  std::size_t t_hist = 0;
  std::size_t t_pred = 0;
  double sample_rate_hz = 10.0;
  std::vector<long> ids;
  SceneMeta meta;

  std::size_t num_vehicles() const { return ids.size(); }
  std::size_t t_total() const { return t_hist + t_pred; }
  double feature(std::size_t n, std::size_t t, std::size_t f) const;
  bool present(std::size_t n, std::size_t t) const { return mask.at(n, t); }

  Mask history_mask() const;  // [N, T_hist]
  Mask future_mask() const;   // [N, T_pred]
  /// Ground-truth future positions [N, T_pred, 2] (0 where absent).
  Tensor future_positions() const;
  /// Last present history position per vehicle [N, 2]; 0 for vehicles with no history.
  Tensor last_observed_positions() const;
  /// Index of the last present history frame, if any.
  std::optional<std::size_t> last_history_frame(std::size_t n) const;

  /// Throws DataError if the invariants do not hold.
  void validate() const;
};

struct DatasetSplit {
  std::vector<Scene> train;
  std::vector<Scene> test;
  double sample_rate_hz = 10.0;
};

// ---- CSV ----

/// Parses `frame,vehicle_id,x,y,vx,vy,ax,ay,theta,yaw` rows (header required).
Recording parse_csv(std::istream& in, const std::string& source, double sample_rate_hz);
Recording load_csv(const std::filesystem::path& path, double sample_rate_hz);
void write_csv(std::ostream& out, const std::vector<MotionState>& rows);

// ---- chunking ----

struct ChunkOptions {
  double hist_s = 5.0;
  double pred_s = 5.0;
  /// Window start spacing; defaults to the window length (non-overlapping).
  std::optional<double> stride_s;
};

std::size_t frames_for(double seconds, double sample_rate_hz);

std::vector<Scene> chunk_scenes(const Recording& recording, const ChunkOptions& options = {});

// ---- scene persistence ----

/// Writes `scene.csv` (present rows only, chunk frames) and `mask.csv`
/// (`vehicle_id,frame,present` for every vehicle and window frame).
void save_scene(const Scene& scene, const std::filesystem::path& dir);
Scene load_scene(const std::filesystem::path& dir, std::size_t t_hist, std::size_t t_pred,
                 double sample_rate_hz);

// ---- synthetic highway ----

struct ManeuverMix {
  double keep = 1.0;
  double left = 0.0;
  double right = 0.0;
  double merge = 0.0;
};

enum class Maneuver { kKeep, kLeft, kRight, kMerge };

struct SynthOptions {
  double sample_rate_hz = 5.0;
  double hist_s = 5.0;
  double pred_s = 5.0;
  double lane_width = 3.75;
  double speed_min = 22.0;
  double speed_max = 30.0;
  double accel_max = 0.3;
  /// Lateral moves start uniformly in [start_min_s, start_max_s] from the window start.
  double change_start_min_s = 4.0;
  double change_start_max_s = 6.0;
  double change_duration_s = 4.0;
  /// Small lateral drift toward the target lane just before a lateral move;
  /// 0 disables it.
  double intent_cue_m = 0.0;
  double intent_cue_s = 1.5;
  /// A vehicle closing on a slower leader in its lane changes lanes instead
  /// of drawing from the mix.
  bool interactive = false;
  double interaction_gap_m = 45.0;
  double interaction_dv = 2.0;
  /// Probability that a vehicle enters late or leaves early.
  double partial_presence = 0.0;
};

struct SynthScene {
  Scene scene;
  std::vector<Maneuver> maneuvers;
};

SynthScene synth_highway_detailed(std::uint64_t seed, std::size_t n_vehicles, std::size_t n_lanes,
                                  const ManeuverMix& mix, const SynthOptions& options = {});
Scene synth_highway(std::uint64_t seed, std::size_t n_vehicles, std::size_t n_lanes,
                    const ManeuverMix& mix, const SynthOptions& options = {});

/// Leader/follower pair in one lane plus a distant vehicle in another lane.
/// Vehicle order: 0 = follower, 1 = leader, 2 = far-lane vehicle.
Scene synth_car_following(std::uint64_t seed, const SynthOptions& options = {});

Scene make_scene(const std::vector<std::vector<std::optional<MotionState>>>& rows, std::size_t t_hist,
                 std::size_t t_pred, double sample_rate_hz, SceneMeta meta = {});

// ---- normalization ----

/// Translation taking scene coordinates into the ego-window frame.
struct FrameTransform {
  double dx = 0.0;
  double dy = 0.0;

  /// Maps positions [..., 2] from the normalized frame back to the source frame.
  Tensor denormalize(const Tensor& positions) const;
  Tensor normalize(const Tensor& positions) const;
};

struct NormalizedScene {
  Scene scene;
  FrameTransform transform;
};

NormalizedScene normalize_scene(const Scene& scene);
Scene denormalize_scene(const Scene& scene, const FrameTransform& transform);

/// Copy of `scene` with vehicle `n` marked absent on every frame.
Scene mask_vehicle(const Scene& scene, std::size_t n);
/// Reorders vehicles: output vehicle i is input vehicle perm[i].
Scene permute_vehicles(const Scene& scene, const std::vector<std::size_t>& perm);

}  // namespace mmtraj::data
