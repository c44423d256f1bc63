#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "mmtraj/data.hpp"

namespace mmtraj::data {

struct CorpusOptions {
  std::uint64_t seed = 0;
  std::size_t scenes = 100;
  std::size_t vehicles = 6;
  std::size_t lanes = 3;
  ManeuverMix mix{0.4, 0.2, 0.2, 0.2};
  SynthOptions synth;
  /// Fraction of scenes held out for testing (the last ones generated).
  double test_fraction = 0.2;
};

/// Scene i is synth_highway(seed * 1000003 + i, ...).
DatasetSplit synth_corpus(const CorpusOptions& options);

struct DatasetManifest {
  std::size_t t_hist = 0;
  std::size_t t_pred = 0;
  double sample_rate_hz = 10.0;
  std::size_t train_scenes = 0;
  std::size_t test_scenes = 0;
  nlohmann::json extra;  // generator settings, seed
};

/// Layout: manifest.json, train/scene_%05zu/, test/scene_%05zu/.
void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir, const nlohmann::json& extra = {});
DatasetSplit load_dataset(const std::filesystem::path& dir, DatasetManifest* manifest = nullptr);
DatasetManifest read_manifest(const std::filesystem::path& dir);

}  // namespace mmtraj::data
