#include "mmtraj/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include "mmtraj/checkpoint.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/evaluation.hpp"
#include "mmtraj/loss.hpp"
#include "mmtraj/model.hpp"

namespace mmtraj {

namespace {

struct NonFiniteLoss : NumericError {
  NonFiniteLoss(std::size_t position, StepStats s)
      : NumericError("non-finite loss on batch entry " + std::to_string(position)), index(position), stats(s) {}
  std::size_t index;
  StepStats stats;
};

struct SceneResult {
  std::vector<std::vector<double>> grads;
  StepStats stats;
};

SceneResult scene_gradients(ModelParams& params, const data::Scene& scene, const ModelConfig& config,
                            std::size_t position) {
  params.zero_grad();
  SceneResult r;
  {
    Tape tape;
    const ModePrediction pred = forward(scene, params, config);
    const LossBreakdown loss = compute_loss(pred, scene, config);
    r.stats = {loss.total.item(), loss.wta.item(), loss.prob.item(), 0.0};
    if (!std::isfinite(r.stats.total)) throw NonFiniteLoss(position, r.stats);
    tape.backward(loss.total);
  }
  params.for_each([&](const std::string&, const Tensor& t) {
    if (t.has_grad()) {
      r.grads.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      r.grads.emplace_back(t.numel(), 0.0);
    }
  });
  return r;
}

std::size_t worker_count(const TrainConfig& config, std::size_t batch) {
  std::size_t n = config.threads;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return std::min(n, batch);
}

}  // namespace

nlohmann::json metrics_record(const EpochMetrics& m) {
  nlohmann::json j = {{"epoch", m.epoch},
                      {"train_total", m.train_total},
                      {"train_wta", m.train_wta},
                      {"train_prob", m.train_prob}};
  j["val_rmse_T"] = m.val_rmse_T ? nlohmann::json(*m.val_rmse_T) : nlohmann::json(nullptr);
  j["val_mae_T"] = m.val_mae_T ? nlohmann::json(*m.val_mae_T) : nlohmann::json(nullptr);
  return j;
}

StepStats train_step(ModelParams& params, Adam& optimizer, const std::vector<const data::Scene*>& batch,
                     const ModelConfig& model_config, const TrainConfig& train_config) {
  if (batch.empty()) throw UsageError("empty batch");
  const std::size_t workers = worker_count(train_config, batch.size());
  std::vector<SceneResult> results(batch.size());

  if (workers == 1) {
    for (std::size_t b = 0; b < batch.size(); ++b) results[b] = scene_gradients(params, *batch[b], model_config, b);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          ModelParams local = params.clone();
          for (std::size_t b = w; b < batch.size(); b += workers) {
            results[b] = scene_gradients(local, *batch[b], model_config, b);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Fixed-order reduction so results do not depend on the worker count.
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<std::vector<double>> grads = results[0].grads;
  for (std::size_t b = 1; b < batch.size(); ++b) {
    for (std::size_t p = 0; p < grads.size(); ++p) {
      for (std::size_t i = 0; i < grads[p].size(); ++i) grads[p][i] += results[b].grads[p][i];
    }
  }
  StepStats stats;
  for (auto& g : grads) {
    for (double& v : g) {
      v *= inv;
    }
  }
  for (const auto& r : results) {
    stats.total += r.stats.total * inv;
    stats.wta += r.stats.wta * inv;
    stats.prob += r.stats.prob * inv;
  }
  for (const auto& g : grads) {
    for (double v : g) {
      if (!std::isfinite(v)) throw NonFiniteLoss(0, stats);
    }
  }
  stats.grad_norm = optimizer.step(params, grads);
  params.zero_grad();
  return stats;
}

FitResult fit(const data::DatasetSplit& split, const ModelConfig& model_config, const TrainConfig& train_config,
              const FitOptions& options) {
  model_config.validate();
  train_config.validate();
  if (split.train.empty()) throw UsageError("training split is empty");

  std::vector<data::Scene> train;
  train.reserve(split.train.size());
  for (const auto& s : split.train) train.push_back(data::normalize_scene(s).scene);

  std::ofstream metrics_log, timing_log;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    metrics_log.open(*options.out_dir / "metrics.jsonl", std::ios::trunc);
    timing_log.open(*options.out_dir / "timing.jsonl", std::ios::trunc);
    if (!metrics_log || !timing_log) throw IoError("cannot write logs under " + options.out_dir->string());
  }

  FitResult result{ModelParams::init(model_config), {}, {}};
  Adam optimizer(train_config);
  std::mt19937_64 shuffle_rng(train_config.seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const double final_horizon = static_cast<double>(model_config.t_pred) / split.sample_rate_hz;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);
    EpochMetrics m;
    m.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += train_config.batch_scenes) {
      const std::size_t end = std::min(order.size(), start + train_config.batch_scenes);
      std::vector<const data::Scene*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      StepStats s;
      try {
        s = train_step(result.params, optimizer, batch, model_config, train_config);
      } catch (const NonFiniteLoss& e) {
        nlohmann::json dump = {{"epoch", epoch},
                               {"batch_entry", e.index},
                               {"total", e.stats.total},
                               {"wta", e.stats.wta},
                               {"prob", e.stats.prob}};
        for (const auto* sc : batch) {
          dump["scenes"].push_back({{"source", sc->meta.source}, {"chunk_offset", sc->meta.chunk_offset},
                                    {"ids", sc->ids}});
        }
        std::string where = "stderr";
        if (options.out_dir) {
          const auto path = *options.out_dir / "nan_dump.json";
          std::ofstream(path) << dump.dump(2) << "\n";
          where = path.string();
        } else {
          std::fprintf(stderr, "%s\n", dump.dump().c_str());
        }
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + "; batch dumped to " +
                           where);
      }
      result.steps.push_back(s);
      const double w = static_cast<double>(batch.size()) / static_cast<double>(order.size());
      m.train_total += s.total * w;
      m.train_wta += s.wta * w;
      m.train_prob += s.prob * w;
    }
    if (options.validate && !split.test.empty()) {
      const EvalReport r = evaluate(split.test, result.params, model_config, {final_horizon});
      m.val_rmse_T = r.final_rmse();
      m.val_mae_T = r.final_mae();
    }
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(m);

    if (options.out_dir) {
      metrics_log << metrics_record(m).dump() << "\n" << std::flush;
      timing_log << nlohmann::json{{"epoch", epoch}, {"wall_time_s", m.wall_time_s}}.dump() << "\n" << std::flush;
      if (train_config.checkpoint_every > 0 && epoch % train_config.checkpoint_every == 0) {
        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_epoch_%04zu.ckpt", epoch);
        save_checkpoint(*options.out_dir / name, model_config, result.params);
      }
    }
    if (options.on_epoch) options.on_epoch(m);
  }
  if (options.out_dir) save_checkpoint(*options.out_dir / "model.ckpt", model_config, result.params);
  return result;
}

}  // namespace mmtraj
