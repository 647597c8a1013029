#pragma once

// Config -> data -> model -> report, shared by the CLI and the acceptance run.

#include <cstdint>
#include <optional>

#include "silenzio/config.hpp"
#include "silenzio/data.hpp"
#include "silenzio/float_reference.hpp"
#include "silenzio/nn.hpp"
#include "silenzio/report.hpp"

namespace silenzio {

struct RunOutput {
  MlpModel model;
  RunReport report;
};

/// Data prepared and every precondition checked; nothing trained yet.
struct PreparedRun {
  TrainConfig config;
  PreparedData data;
  std::vector<std::size_t> dims;
};

inline PreparedRun prepare_run(const TrainConfig& cfg) {
  validate_config(cfg);
  PreparedRun run{cfg, prepare_data(cfg), {}};
  const std::size_t features = run.data.train.feature_count();
  validate_config(cfg, features);
  run.dims = resolved_dims(cfg, features);
  if (run.data.train.classes != run.dims.back()) {
    throw ConfigError("architecture has " + std::to_string(run.dims.back()) + " outputs but the data has " +
                      std::to_string(run.data.train.classes) + " classes");
  }
  return run;
}

inline RunOutput run_training(const PreparedRun& run, bool float_baseline) {
  const auto& cfg = run.config;
  RunOutput out{MlpModel::initialize(run.dims, cfg.hyper, cfg.seed), {}};
  TrainOptions opt;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.seed = cfg.seed;
  opt.scaling = cfg.scaling;

  auto& r = out.report;
  r.config = cfg.echo();
  r.seed = cfg.seed;
  r.split_seed = effective_split_seed(cfg);
  r.dims = run.dims;
  r.train_size = run.data.train.size();
  r.test_size = run.data.test.size();
  r.classes = run.dims.back();
  r.feature_names = run.data.feature_names;
  r.warnings = run.data.warnings;
  r.integer = train(out.model, run.data.train, run.data.test, opt);
  r.circuits = circuit_shares(r.integer.batch_circuits);
  r.scaling = summarize_scaling(r.integer, cfg.hyper.gamma);
  double sum = 0;
  std::size_t n = 0;
  for (const auto& [layer, s] : r.integer.scaling_errors) {
    sum += s.error_sum;
    n += s.elements;
    r.overall_max_scaling_error = std::max(r.overall_max_scaling_error, s.max_abs_error);
  }
  r.overall_mean_scaling_error = n ? sum / static_cast<double>(n) : 0.0;

  if (float_baseline) {
    FloatMlp fm(run.dims, cfg.seed);
    r.float_run = float_reference_train(fm, run.data.train, run.data.test, cfg.epochs, cfg.batch_size, cfg.seed);
  }
  return out;
}

inline RunOutput run_training(const TrainConfig& cfg) {
  return run_training(prepare_run(cfg), cfg.float_baseline);
}

/// Circuits of the first training batch of a freshly initialized model.
inline std::vector<CircuitStats> bench_batch(const PreparedRun& run) {
  const auto& cfg = run.config;
  auto model = MlpModel::initialize(run.dims, cfg.hyper, cfg.seed);
  const auto batches = epoch_batches(run.data.train.size(), cfg.batch_size, cfg.seed, 0);
  if (batches.empty()) throw EmptySplit("training split is smaller than one batch");
  PassOptions pass;
  pass.scaling = cfg.scaling;
  pass.record_matmuls = false;
  pass.record_scaling_error = false;
  const auto trace = train_step(model, batch_features(run.data.train, batches.front()),
                                batch_labels(run.data.train, batches.front(), model.classes()), pass);
  return trace.circuits;
}

}  // namespace silenzio
