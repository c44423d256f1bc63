#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmtraj/checkpoint.hpp"
#include "mmtraj/config.hpp"
#include "mmtraj/dataset.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/evaluation.hpp"
#include "mmtraj/interpret.hpp"
#include "mmtraj/model.hpp"
#include "mmtraj/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmtraj;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct SynthFlags {
  std::optional<std::size_t> scenes, vehicles, lanes;
  std::optional<double> test_fraction, rate, hist_s, pred_s, partial;
  std::vector<double> mix;
  bool interactive = false;
};

struct TrainFlags {
  std::string data;
  std::optional<std::size_t> epochs, batch, threads, k;
  std::optional<double> lr;
  bool no_spatial = false;
};

struct EvalFlags {
  std::string checkpoint, data, split = "test";
  std::vector<double> horizons;
};

struct InterpretFlags {
  std::string checkpoint, scene;
  std::optional<long> remove_id;
  std::optional<double> rate;
  std::vector<double> horizons;
};

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    json j;
    in >> j;
    if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
    return j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

fs::path out_dir(const Globals& g) {
  fs::path p(g.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void require_dir(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("--") + what + " is required");
  if (!fs::exists(path)) throw IoError(std::string(what) + " path does not exist: " + path);
}

// Writes the merged config and prints its fingerprint with the seed.
void announce(const fs::path& out, const std::string& command, const json& resolved, std::uint64_t seed) {
  json doc = resolved;
  doc["command"] = command;
  write_text(out / "resolved_config.json", doc.dump(2) + "\n");
  std::printf("config %s seed %llu\n", fingerprint(doc).c_str(), static_cast<unsigned long long>(seed));
}

data::CorpusOptions corpus_options(const json& file, const Globals& g, const SynthFlags& f) {
  data::CorpusOptions o;
  const json d = file.value("synth", json::object());
  o.seed = d.value("seed", o.seed);
  o.scenes = d.value("scenes", o.scenes);
  o.vehicles = d.value("vehicles", o.vehicles);
  o.lanes = d.value("lanes", o.lanes);
  o.test_fraction = d.value("test_fraction", o.test_fraction);
  if (d.contains("mix")) {
    const auto m = d["mix"].get<std::vector<double>>();
    if (m.size() != 4) throw ConfigError("synth.mix needs 4 weights: keep,left,right,merge");
    o.mix = {m[0], m[1], m[2], m[3]};
  }
  auto& s = o.synth;
  s.sample_rate_hz = d.value("sample_rate_hz", s.sample_rate_hz);
  s.hist_s = d.value("hist_s", s.hist_s);
  s.pred_s = d.value("pred_s", s.pred_s);
  s.interactive = d.value("interactive", s.interactive);
  s.partial_presence = d.value("partial_presence", s.partial_presence);
  s.intent_cue_m = d.value("intent_cue_m", s.intent_cue_m);

  if (g.seed) o.seed = *g.seed;
  if (f.scenes) o.scenes = *f.scenes;
  if (f.vehicles) o.vehicles = *f.vehicles;
  if (f.lanes) o.lanes = *f.lanes;
  if (f.test_fraction) o.test_fraction = *f.test_fraction;
  if (f.rate) s.sample_rate_hz = *f.rate;
  if (f.hist_s) s.hist_s = *f.hist_s;
  if (f.pred_s) s.pred_s = *f.pred_s;
  if (f.partial) s.partial_presence = *f.partial;
  if (f.interactive) s.interactive = true;
  if (!f.mix.empty()) {
    if (f.mix.size() != 4) throw UsageError("--mix needs 4 weights: keep,left,right,merge");
    o.mix = {f.mix[0], f.mix[1], f.mix[2], f.mix[3]};
  }
  return o;
}

json corpus_json(const data::CorpusOptions& o) {
  return {{"seed", o.seed},
          {"scenes", o.scenes},
          {"vehicles", o.vehicles},
          {"lanes", o.lanes},
          {"test_fraction", o.test_fraction},
          {"mix", {o.mix.keep, o.mix.left, o.mix.right, o.mix.merge}},
          {"sample_rate_hz", o.synth.sample_rate_hz},
          {"hist_s", o.synth.hist_s},
          {"pred_s", o.synth.pred_s},
          {"interactive", o.synth.interactive},
          {"partial_presence", o.synth.partial_presence},
          {"intent_cue_m", o.synth.intent_cue_m}};
}

int cmd_synth(const Globals& g, const SynthFlags& f) {
  const json file = read_config_file(g.config_path);
  const data::CorpusOptions o = corpus_options(file, g, f);
  const fs::path out = out_dir(g);
  const json resolved = {{"synth", corpus_json(o)}};
  announce(out, "synth", resolved, o.seed);
  const data::DatasetSplit split = data::synth_corpus(o);
  data::save_dataset(split, out, corpus_json(o));
  std::printf("wrote %zu train and %zu test scenes to %s\n", split.train.size(), split.test.size(),
              out.string().c_str());
  return 0;
}

struct Configs {
  ModelConfig model;
  TrainConfig train;
};

// File values first, then flags; window lengths always come from the data.
Configs merge_configs(const json& file, const Globals& g, const TrainFlags& f, const data::DatasetManifest& m) {
  Configs c;
  try {
    if (file.contains("model")) c.model = file["model"].get<ModelConfig>();
    if (file.contains("train")) c.train = file["train"].get<TrainConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  if (g.seed) c.model.seed = c.train.seed = *g.seed;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.batch) c.train.batch_scenes = *f.batch;
  if (f.threads) c.train.threads = *f.threads;
  if (f.lr) c.train.learning_rate = *f.lr;
  if (f.k) c.model.K = *f.k;
  if (f.no_spatial) c.model.spatial_enabled = false;
  c.model.t_hist = m.t_hist;
  c.model.t_pred = m.t_pred;
  c.model.validate();
  c.train.validate();
  return c;
}

json configs_json(const Configs& c, const std::string& data_dir) {
  return {{"model", c.model}, {"train", c.train}, {"data", data_dir}};
}

int cmd_train(const Globals& g, const TrainFlags& f) {
  require_dir(f.data, "data");
  data::DatasetManifest manifest;
  const data::DatasetSplit split = data::load_dataset(f.data, &manifest);
  const Configs c = merge_configs(read_config_file(g.config_path), g, f, manifest);
  const fs::path out = out_dir(g);
  announce(out, "train", configs_json(c, f.data), c.train.seed);

  FitOptions options;
  options.out_dir = out;
  options.on_epoch = [](const EpochMetrics& m) {
    std::printf("epoch %zu total %.6g wta %.6g prob %.6g", m.epoch, m.train_total, m.train_wta, m.train_prob);
    if (m.val_rmse_T) std::printf(" val_rmse %.6g val_mae %.6g", *m.val_rmse_T, *m.val_mae_T);
    std::printf("\n");
    std::fflush(stdout);
  };
  fit(split, c.model, c.train, options);
  std::printf("checkpoint %s\n", (out / "model.ckpt").string().c_str());
  return 0;
}

std::vector<double> default_horizons(const ModelConfig& config, double rate) {
  std::vector<double> h;
  const double pred_s = static_cast<double>(config.t_pred) / rate;
  for (double s = 1.0; s <= pred_s + 1e-9; s += 1.0) h.push_back(s);
  if (h.empty() || h.back() < pred_s - 1e-9) h.push_back(pred_s);
  return h;
}

int cmd_eval(const Globals& g, const EvalFlags& f) {
  require_dir(f.checkpoint, "checkpoint");
  require_dir(f.data, "data");
  if (f.split != "train" && f.split != "test") throw UsageError("--split must be train or test");
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  data::DatasetManifest manifest;
  const data::DatasetSplit split = data::load_dataset(f.data, &manifest);
  if (manifest.t_hist != ck.config.t_hist || manifest.t_pred != ck.config.t_pred) {
    throw DimensionError("dataset windows (" + std::to_string(manifest.t_hist) + "+" +
                         std::to_string(manifest.t_pred) + ") differ from the checkpoint's (" +
                         std::to_string(ck.config.t_hist) + "+" + std::to_string(ck.config.t_pred) + ")");
  }
  const auto& scenes = f.split == "train" ? split.train : split.test;
  const std::vector<double> horizons =
      f.horizons.empty() ? default_horizons(ck.config, split.sample_rate_hz) : f.horizons;
  const fs::path out = out_dir(g);
  const json resolved = {{"model", ck.config},
                         {"checkpoint", f.checkpoint},
                         {"data", f.data},
                         {"split", f.split},
                         {"horizons_s", horizons}};
  announce(out, "eval", resolved, ck.config.seed);

  const EvalReport report = evaluate(scenes, ck.params, ck.config, horizons, f.split);
  json j = report;
  j["dataset_hash"] = dataset_hash(scenes);
  write_text(out / "report.json", j.dump(2) + "\n");
  const std::string text = format_report(report);
  write_text(out / "report.txt", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_ablate(const Globals& g, const TrainFlags& f) {
  require_dir(f.data, "data");
  data::DatasetManifest manifest;
  const data::DatasetSplit split = data::load_dataset(f.data, &manifest);
  const Configs c = merge_configs(read_config_file(g.config_path), g, f, manifest);
  const fs::path out = out_dir(g);
  announce(out, "ablate", configs_json(c, f.data), c.train.seed);

  const AblationResult r = run_ablation(split, c.model, c.train, default_horizons(c.model, split.sample_rate_hz));
  json j = {{"train_hash", r.train_hash}, {"test_hash", r.test_hash}, {"reports", r.reports}};
  write_text(out / "ablation.json", j.dump(2) + "\n");
  const std::string table = format_ablation_table(r);
  write_text(out / "ablation_table.txt", table);
  write_text(out / "ablation.csv", format_ablation_csv(r));
  std::printf("train %s test %s\n%s", r.train_hash.c_str(), r.test_hash.c_str(), table.c_str());
  return 0;
}

double scene_rate(const InterpretFlags& f) {
  if (f.rate) return *f.rate;
  // A scene inside a dataset written by `synth`: <root>/<split>/scene_i.
  const fs::path root = fs::path(f.scene).lexically_normal().parent_path().parent_path();
  if (fs::exists(root / "manifest.json")) return data::read_manifest(root).sample_rate_hz;
  throw UsageError("--rate is required when the scene is not inside a dataset directory");
}

int cmd_interpret(const Globals& g, const InterpretFlags& f) {
  require_dir(f.checkpoint, "checkpoint");
  require_dir(f.scene, "scene");
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  const double rate = scene_rate(f);
  const data::Scene raw = data::load_scene(f.scene, ck.config.t_hist, ck.config.t_pred, rate);
  const data::Scene scene = data::normalize_scene(raw).scene;
  const std::vector<double> horizons = f.horizons.empty() ? default_horizons(ck.config, rate) : f.horizons;
  const fs::path out = out_dir(g);
  json resolved = {{"model", ck.config}, {"checkpoint", f.checkpoint}, {"scene", f.scene},
                   {"sample_rate_hz", rate}, {"horizons_s", horizons}};
  if (f.remove_id) resolved["remove_id"] = *f.remove_id;
  announce(out, "interpret", resolved, ck.config.seed);

  if (ck.config.spatial_enabled) {
    const AttentionExport exported = export_attention(scene, ck.params, ck.config);
    std::ofstream csv(out / "attention_summary.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write attention_summary.csv");
    write_attention_summary_csv(csv, exported);
    std::printf("attention summary for %zu vehicles\n", exported.ids.size());
  } else {
    std::printf("spatial attention disabled; no attention export\n");
  }

  std::vector<std::size_t> removals;
  if (f.remove_id) {
    std::size_t idx = scene.ids.size();
    for (std::size_t i = 0; i < scene.ids.size(); ++i) {
      if (scene.ids[i] == *f.remove_id) idx = i;
    }
    if (idx == scene.ids.size()) throw UsageError("vehicle " + std::to_string(*f.remove_id) + " not in scene");
    removals.push_back(idx);
  } else if (scene.num_vehicles() >= 2) {
    for (std::size_t i = 0; i < scene.num_vehicles(); ++i) removals.push_back(i);
  }
  std::vector<CounterfactualRow> rows;
  for (std::size_t j : removals) {
    const auto part = counterfactual_remove(scene, j, ck.params, ck.config, horizons);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::ofstream csv(out / "counterfactual.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write counterfactual.csv");
  write_counterfactual_csv(csv, rows);
  std::printf("%zu counterfactual rows\n", rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal trajectory prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON config with model/train/synth sections");
  app.add_option("--seed", g.seed, "overrides every seed in the config");
  app.add_option("--out", g.out, "output directory")->required();

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "generate a synthetic highway dataset");
  synth->add_option("--scenes", sf.scenes);
  synth->add_option("--vehicles", sf.vehicles);
  synth->add_option("--lanes", sf.lanes);
  synth->add_option("--test-fraction", sf.test_fraction);
  synth->add_option("--rate", sf.rate, "sample rate, Hz");
  synth->add_option("--hist", sf.hist_s, "history length, s");
  synth->add_option("--pred", sf.pred_s, "prediction length, s");
  synth->add_option("--partial", sf.partial, "probability of partial presence");
  synth->add_option("--mix", sf.mix, "keep,left,right,merge weights")->delimiter(',');
  synth->add_flag("--interactive", sf.interactive);

  TrainFlags tf;
  auto add_train_flags = [&tf](CLI::App* cmd) {
    cmd->add_option("--data", tf.data, "dataset directory written by synth")->required();
    cmd->add_option("--epochs", tf.epochs);
    cmd->add_option("--batch", tf.batch);
    cmd->add_option("--threads", tf.threads);
    cmd->add_option("--lr", tf.lr);
    cmd->add_option("--modes", tf.k);
    cmd->add_flag("--no-spatial", tf.no_spatial);
  };
  auto* train = app.add_subcommand("train", "train a model");
  add_train_flags(train);
  auto* ablate = app.add_subcommand("ablate", "train and compare OV_1, OV_K, MV_K");
  add_train_flags(ablate);

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ef.checkpoint)->required();
  eval->add_option("--data", ef.data)->required();
  eval->add_option("--split", ef.split);
  eval->add_option("--horizons", ef.horizons)->delimiter(',');

  InterpretFlags inf;
  auto* interpret = app.add_subcommand("interpret", "attention export and counterfactual removal");
  interpret->add_option("--checkpoint", inf.checkpoint)->required();
  interpret->add_option("--scene", inf.scene, "scene directory")->required();
  interpret->add_option("--remove", inf.remove_id, "vehicle id to remove; default all");
  interpret->add_option("--rate", inf.rate, "sample rate when the scene has no manifest");
  interpret->add_option("--horizons", inf.horizons)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }

  try {
    if (*synth) return cmd_synth(g, sf);
    if (*train) return cmd_train(g, tf);
    if (*ablate) return cmd_ablate(g, tf);
    if (*eval) return cmd_eval(g, ef);
    if (*interpret) return cmd_interpret(g, inf);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
    return 1;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 1;
}
