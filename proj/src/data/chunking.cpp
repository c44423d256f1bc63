#include <cmath>

#include "mmtraj/data.hpp"
#include "mmtraj/errors.hpp"

namespace mmtraj::data {

double Scene::feature(std::size_t n, std::size_t t, std::size_t f) const {
  return features.data()[(n * t_total() + t) * kFeatureDim + f];
}

Mask Scene::history_mask() const {
  Mask m(Shape{num_vehicles(), t_hist}, false);
  for (std::size_t n = 0; n < num_vehicles(); ++n) {
    for (std::size_t t = 0; t < t_hist; ++t) m.set(n, t, present(n, t));
  }
  return m;
}

Mask Scene::future_mask() const {
  Mask m(Shape{num_vehicles(), t_pred}, false);
  for (std::size_t n = 0; n < num_vehicles(); ++n) {
    for (std::size_t t = 0; t < t_pred; ++t) m.set(n, t, present(n, t_hist + t));
  }
  return m;
}

Tensor Scene::future_positions() const {
  Tensor out(Shape{num_vehicles(), t_pred, 2});
  auto d = out.mutable_data();
  for (std::size_t n = 0; n < num_vehicles(); ++n) {
    for (std::size_t t = 0; t < t_pred; ++t) {
      if (!present(n, t_hist + t)) continue;
      d[(n * t_pred + t) * 2] = feature(n, t_hist + t, kX);
      d[(n * t_pred + t) * 2 + 1] = feature(n, t_hist + t, kY);
    }
  }
  return out;
}

std::optional<std::size_t> Scene::last_history_frame(std::size_t n) const {
  for (std::size_t t = t_hist; t-- > 0;) {
    if (present(n, t)) return t;
  }
  return std::nullopt;
}

Tensor Scene::last_observed_positions() const {
  Tensor out(Shape{num_vehicles(), 2});
  auto d = out.mutable_data();
  for (std::size_t n = 0; n < num_vehicles(); ++n) {
    if (const auto t = last_history_frame(n)) {
      d[n * 2] = feature(n, *t, kX);
      d[n * 2 + 1] = feature(n, *t, kY);
    }
  }
  return out;
}

void Scene::validate() const {
  const std::size_t n = num_vehicles();
  if (features.shape() != Shape{n, t_total(), kFeatureDim}) {
    throw DataError("scene features shape " + shape_str(features.shape()) + " inconsistent with N=" +
                    std::to_string(n) + ", T=" + std::to_string(t_total()));
  }
  if (mask.shape != Shape{n, t_total()}) throw DataError("scene mask shape " + shape_str(mask.shape));
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw DataError("scene contains a non-finite feature");
  }
}

std::size_t frames_for(double seconds, double sample_rate_hz) {
  const double f = std::round(seconds * sample_rate_hz);
  if (!(f >= 1.0)) {
    throw UsageError("duration " + std::to_string(seconds) + " s at " + std::to_string(sample_rate_hz) +
                     " Hz is shorter than one frame");
  }
  return static_cast<std::size_t>(f);
}

Scene make_scene(const std::vector<std::vector<std::optional<MotionState>>>& rows, std::size_t t_hist,
                 std::size_t t_pred, double sample_rate_hz, SceneMeta meta) {
  const std::size_t n = rows.size();
  const std::size_t total = t_hist + t_pred;
  Scene s;
  s.t_hist = t_hist;
  s.t_pred = t_pred;
  s.sample_rate_hz = sample_rate_hz;
  s.meta = std::move(meta);
  s.features = Tensor(Shape{n, total, kFeatureDim});
  s.mask = Mask(Shape{n, total}, false);
  auto d = s.features.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != total) throw DataError("scene row length mismatch");
    long id = 0;
    bool have_id = false;
    for (std::size_t t = 0; t < total; ++t) {
      if (!rows[i][t]) continue;
      const auto f = rows[i][t]->features();
      std::copy(f.begin(), f.end(), d.begin() + static_cast<long>((i * total + t) * kFeatureDim));
      s.mask.set(i, t, true);
      if (!have_id) id = rows[i][t]->vehicle_id;
      have_id = true;
    }
    s.ids.push_back(have_id ? id : static_cast<long>(i));
  }
  return s;
}

std::vector<Scene> chunk_scenes(const Recording& recording, const ChunkOptions& options) {
  const double rate = recording.sample_rate_hz;
  const std::size_t t_hist = frames_for(options.hist_s, rate);
  const std::size_t t_pred = frames_for(options.pred_s, rate);
  const std::size_t window = t_hist + t_pred;
  const std::size_t stride = options.stride_s ? frames_for(*options.stride_s, rate) : window;

  std::vector<Scene> scenes;
  if (recording.last_frame() < 0) return scenes;
  const long first = recording.first_frame();
  const long last = recording.last_frame();

  for (long start = first; start + static_cast<long>(window) - 1 <= last; start += static_cast<long>(stride)) {
    std::vector<std::vector<std::optional<MotionState>>> rows;
    for (const auto& track : recording.tracks) {
      std::vector<std::optional<MotionState>> row(window);
      bool in_history = false;
      for (const auto& st : track.states) {
        const long t = st.frame - start;
        if (t < 0) continue;
        if (t >= static_cast<long>(window)) break;
        row[static_cast<std::size_t>(t)] = st;
        if (static_cast<std::size_t>(t) < t_hist) in_history = true;
      }
      if (in_history) rows.push_back(std::move(row));
    }
    Scene scene = make_scene(rows, t_hist, t_pred, rate, SceneMeta{recording.source, start});
    if (scene.num_vehicles() > 0) scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace mmtraj::data
