#include "mmtraj/data.hpp"
#include "mmtraj/errors.hpp"

namespace mmtraj::data {

namespace {

Tensor shift_positions(const Tensor& positions, double dx, double dy) {
  if (positions.rank() == 0 || positions.shape().back() != 2) {
    throw DimensionError("positions must have a trailing axis of 2, got " + shape_str(positions.shape()));
  }
  Tensor out = positions.clone();
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < d.size(); i += 2) {
    d[i] += dx;
    d[i + 1] += dy;
  }
  return out;
}

Scene shifted(const Scene& scene, double dx, double dy) {
  Scene out = scene;
  out.features = scene.features.clone();
  auto d = out.features.mutable_data();
  for (std::size_t n = 0; n < scene.num_vehicles(); ++n) {
    for (std::size_t t = 0; t < scene.t_total(); ++t) {
      if (!scene.present(n, t)) continue;
      d[(n * scene.t_total() + t) * kFeatureDim + kX] += dx;
      d[(n * scene.t_total() + t) * kFeatureDim + kY] += dy;
    }
  }
  return out;
}

}  // namespace

Tensor FrameTransform::denormalize(const Tensor& positions) const { return shift_positions(positions, dx, dy); }

Tensor FrameTransform::normalize(const Tensor& positions) const { return shift_positions(positions, -dx, -dy); }

NormalizedScene normalize_scene(const Scene& scene) {
  double sx = 0.0, sy = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < scene.num_vehicles(); ++n) {
    if (const auto t = scene.last_history_frame(n)) {
      sx += scene.feature(n, *t, kX);
      sy += scene.feature(n, *t, kY);
      ++count;
    }
  }
  FrameTransform tf;
  if (count > 0) {
    tf.dx = sx / static_cast<double>(count);
    tf.dy = sy / static_cast<double>(count);
  }
  return {shifted(scene, -tf.dx, -tf.dy), tf};
}

Scene denormalize_scene(const Scene& scene, const FrameTransform& transform) {
  return shifted(scene, transform.dx, transform.dy);
}

Scene mask_vehicle(const Scene& scene, std::size_t n) {
  if (n >= scene.num_vehicles()) throw UsageError("vehicle index " + std::to_string(n) + " out of range");
  Scene out = scene;
  out.features = scene.features.clone();
  auto d = out.features.mutable_data();
  for (std::size_t t = 0; t < scene.t_total(); ++t) {
    out.mask.set(n, t, false);
    for (std::size_t f = 0; f < kFeatureDim; ++f) d[(n * scene.t_total() + t) * kFeatureDim + f] = 0.0;
  }
  return out;
}

Scene permute_vehicles(const Scene& scene, const std::vector<std::size_t>& perm) {
  const std::size_t n = scene.num_vehicles();
  if (perm.size() != n) throw UsageError("permutation size mismatch");
  Scene out = scene;
  out.features = Tensor(scene.features.shape());
  out.mask = Mask(scene.mask.shape, false);
  auto d = out.features.mutable_data();
  const auto src = scene.features.data();
  const std::size_t row = scene.t_total() * kFeatureDim;
  for (std::size_t i = 0; i < n; ++i) {
    if (perm[i] >= n) throw UsageError("permutation entry out of range");
    std::copy_n(src.begin() + static_cast<long>(perm[i] * row), row, d.begin() + static_cast<long>(i * row));
    for (std::size_t t = 0; t < scene.t_total(); ++t) out.mask.set(i, t, scene.present(perm[i], t));
    out.ids[i] = scene.ids[perm[i]];
  }
  return out;
}

}  // namespace mmtraj::data
