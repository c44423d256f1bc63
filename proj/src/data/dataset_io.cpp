#include "mmtraj/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mmtraj/errors.hpp"

namespace mmtraj::data {

namespace {

std::string scene_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu", i);
  return buf;
}

void check_uniform(const std::vector<Scene>& scenes, std::size_t& t_hist, std::size_t& t_pred, bool& seen) {
  for (const auto& s : scenes) {
    if (!seen) {
      t_hist = s.t_hist;
      t_pred = s.t_pred;
      seen = true;
    } else if (s.t_hist != t_hist || s.t_pred != t_pred) {
      throw DataError("scenes in a dataset must share one window length");
    }
  }
}

}  // namespace

DatasetSplit synth_corpus(const CorpusOptions& o) {
  if (o.test_fraction < 0.0 || o.test_fraction > 1.0) throw ConfigError("test_fraction must be in [0, 1]");
  DatasetSplit split;
  split.sample_rate_hz = o.synth.sample_rate_hz;
  const auto n_test = static_cast<std::size_t>(std::llround(o.test_fraction * static_cast<double>(o.scenes)));
  for (std::size_t i = 0; i < o.scenes; ++i) {
    Scene s = synth_highway(o.seed * 1000003ULL + i, o.vehicles, o.lanes, o.mix, o.synth);
    (i < o.scenes - n_test ? split.train : split.test).push_back(std::move(s));
  }
  return split;
}

void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir, const nlohmann::json& extra) {
  std::size_t t_hist = 0, t_pred = 0;
  bool seen = false;
  check_uniform(split.train, t_hist, t_pred, seen);
  check_uniform(split.test, t_hist, t_pred, seen);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < split.train.size(); ++i) save_scene(split.train[i], dir / "train" / scene_dir_name(i));
  for (std::size_t i = 0; i < split.test.size(); ++i) save_scene(split.test[i], dir / "test" / scene_dir_name(i));

  nlohmann::json m = {{"t_hist", t_hist},
                      {"t_pred", t_pred},
                      {"sample_rate_hz", split.sample_rate_hz},
                      {"train_scenes", split.train.size()},
                      {"test_scenes", split.test.size()}};
  if (!extra.is_null()) m["generator"] = extra;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetManifest m;
    m.t_hist = j.at("t_hist").get<std::size_t>();
    m.t_pred = j.at("t_pred").get<std::size_t>();
    m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    m.train_scenes = j.at("train_scenes").get<std::size_t>();
    m.test_scenes = j.at("test_scenes").get<std::size_t>();
    if (j.contains("generator")) m.extra = j["generator"];
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

DatasetSplit load_dataset(const std::filesystem::path& dir, DatasetManifest* manifest) {
  const DatasetManifest m = read_manifest(dir);
  DatasetSplit split;
  split.sample_rate_hz = m.sample_rate_hz;
  for (std::size_t i = 0; i < m.train_scenes; ++i) {
    split.train.push_back(load_scene(dir / "train" / scene_dir_name(i), m.t_hist, m.t_pred, m.sample_rate_hz));
  }
  for (std::size_t i = 0; i < m.test_scenes; ++i) {
    split.test.push_back(load_scene(dir / "test" / scene_dir_name(i), m.t_hist, m.t_pred, m.sample_rate_hz));
  }
  if (manifest) *manifest = m;
  return split;
}

}  // namespace mmtraj::data
