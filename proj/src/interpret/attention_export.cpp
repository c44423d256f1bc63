#include <cmath>

#include "mmtraj/errors.hpp"
#include "mmtraj/interpret.hpp"
#include "mmtraj/model.hpp"

namespace mmtraj {

AttentionExport export_attention(const data::Scene& scene, const ModelParams& params, const ModelConfig& config) {
  if (!config.spatial_enabled) throw UsageError("attention export needs spatial attention enabled");
  const data::NormalizedScene norm = data::normalize_scene(scene);

  AttentionExport out;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < scene.num_vehicles(); ++i) {
    if (scene.last_history_frame(i)) {
      rows.push_back(i);
      out.ids.push_back(scene.ids[i]);
    }
  }
  AttentionTrace trace;
  forward(norm.scene, params, config, &trace);

  const std::size_t n = rows.size(), th = scene.t_hist;
  std::vector<double> summary(n * n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  for (const auto& block : trace) {
    for (std::size_t h = 0; h < block.heads.size(); ++h) {
      const auto w = block.heads[h].weights.data();  // [T, N, N]
      const auto v = block.heads[h].values.data();   // [T, N, dh]
      const std::size_t dh = block.heads[h].values.dim(2);
      for (std::size_t t = 0; t < th; ++t) {
        AttentionRecord rec{block.layer, h, t, Tensor(Shape{n, n}), Tensor(Shape{n}), Tensor(Shape{n, n})};
        auto rw = rec.weights.mutable_data();
        auto rv = rec.value_norms.mutable_data();
        auto ri = rec.influence.mutable_data();
        for (std::size_t j = 0; j < n; ++j) {
          if (!scene.present(rows[j], t)) continue;
          double sq = 0.0;
          for (std::size_t c = 0; c < dh; ++c) sq += v[(t * n + j) * dh + c] * v[(t * n + j) * dh + c];
          rv[j] = std::sqrt(sq);
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (!scene.present(rows[i], t)) continue;
          double total = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            rw[i * n + j] = w[(t * n + i) * n + j];
            ri[i * n + j] = rw[i * n + j] * rv[j];
            total += ri[i * n + j];
          }
          if (total > 0.0) {
            for (std::size_t j = 0; j < n; ++j) ri[i * n + j] /= total;
          } else {
            for (std::size_t j = 0; j < n; ++j) ri[i * n + j] = rw[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) summary[i * n + j] += ri[i * n + j];
          ++counts[i];
        }
        out.records.push_back(std::move(rec));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) summary[i * n + j] /= static_cast<double>(std::max<std::size_t>(1, counts[i]));
  }
  out.summary = Tensor(Shape{n, n}, std::move(summary));
  return out;
}

void write_attention_summary_csv(std::ostream& out, const AttentionExport& exported) {
  out << "query_id,key_id,influence\n";
  const std::size_t n = exported.ids.size();
  const auto s = exported.summary.data();
  out.precision(17);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out << exported.ids[i] << "," << exported.ids[j] << "," << s[i * n + j] << "\n";
  }
}

}  // namespace mmtraj
