#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "mmtraj/config.hpp"
#include "mmtraj/data.hpp"
#include "mmtraj/params.hpp"
#include "mmtraj/tensor.hpp"

namespace mmtraj {

/// One spatial-attention head at one history frame. Indices run over the
/// vehicles that have an observed history (see AttentionExport::ids).
struct AttentionRecord {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t t = 0;
  Tensor weights;      // [N, N]; rows of absent queries are 0
  Tensor value_norms;  // [N]; 0 for absent vehicles
  Tensor influence;    // [N, N] weights * value_norms, renormalized per row
};

struct AttentionExport {
  std::vector<long> ids;
  std::vector<AttentionRecord> records;
  /// Influence rows averaged over layers, heads and the frames where the query is present.
  Tensor summary;  // [N, N]
};

AttentionExport export_attention(const data::Scene& scene, const ModelParams& params, const ModelConfig& config);

void write_attention_summary_csv(std::ostream& out, const AttentionExport& exported);

struct CounterfactualRow {
  long removed_id = 0;
  long vehicle_id = 0;
  double horizon_s = 0.0;
  double delta_m = 0.0;  // L2 change of the selected trajectory at the horizon
  double prob_tv = 0.0;  // total-variation change of the mode probabilities
};

/// Re-predicts with vehicle `removed` masked out of the already normalized
/// scene and reports the change for every other vehicle with a history.
std::vector<CounterfactualRow> counterfactual_remove(const data::Scene& scene, std::size_t removed,
                                                     const ModelParams& params, const ModelConfig& config,
                                                     const std::vector<double>& horizons_s);

void write_counterfactual_csv(std::ostream& out, const std::vector<CounterfactualRow>& rows);

}  // namespace mmtraj
