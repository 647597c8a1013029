// silenzio: train / eval / verify / bench front end.
//
// Exit codes: 0 success, 1 config error, 2 verification failure (oracle
// mismatch), 3 runtime error, 4 verification guard violation, 5 verification
// anchor mismatch.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "silenzio/silenzio.hpp"

namespace fs = std::filesystem;
using namespace silenzio;

namespace {

enum Exit { ok = 0, config_error = 1, verify_failed = 2, runtime_error = 3, verify_guard = 4, verify_anchor = 5 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string float_baseline;  // "", on, off
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file")->required();
  cmd->add_option("--seed", c.seed, "run seed (init, batching, and the split unless fixed)");
  cmd->add_option("--data", c.data, "dataset CSV, overrides the config");
  cmd->add_option("--float-baseline", c.float_baseline, "train the float32 reference too")
      ->check(CLI::IsMember({"on", "off"}));
}

TrainConfig load(const Common& c) {
  TrainConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.data.empty()) set_config_key(cfg, "dataset", c.data, fs::current_path());
  if (!c.float_baseline.empty()) cfg.float_baseline = c.float_baseline == "on";
  return cfg;
}

/// Writes through a temporary file so readers never see partial output.
void write_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

int cmd_train(const Common& c, const std::string& out, const std::string& report) {
  const auto cfg = load(c);
  auto run = prepare_run(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_training(run, cfg.float_baseline);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_report(std::cout, res.report);
  std::cout << "wall time " << secs << " s\n";
  if (!out.empty()) write_atomic(out, model_to_string(res.model));
  if (!report.empty()) write_atomic(report, to_json(res.report).dump(2) + "\n");
  return ok;
}

int cmd_eval(const Common& c, const std::string& model_path, const std::string& logits_path,
             const std::string& split) {
  const auto cfg = load(c);
  std::ifstream in(model_path);
  if (!in) throw ConfigError("cannot open model " + model_path);
  const MlpModel model = load_model(in);
  const auto run = prepare_run(cfg);
  if (model.dims() != run.dims) throw ConfigError("model architecture does not match the config");
  const auto& set = split == "train" ? run.data.train : run.data.test;
  const auto logits = predict_logits(model, set.features, cfg.batch_size, cfg.scaling);
  const auto pred = argmax_rows(logits);
  std::cout << split << " accuracy " << accuracy(pred, set.labels) << " over " << set.size() << " samples\n";
  if (!logits_path.empty()) {
    std::ostringstream os;
    for (std::size_t c2 = 0; c2 < logits.cols(); ++c2) os << "logit" << c2 << ',';
    os << "predicted,label\n";
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      for (std::size_t c2 = 0; c2 < logits.cols(); ++c2) os << logits(r, c2) << ',';
      os << pred[r] << ',' << set.labels[r] << '\n';
    }
    write_atomic(logits_path, os.str());
  }
  return ok;
}

int cmd_verify(const std::string& scope) {
  const auto suites = run_verification(scope);
  std::size_t oracle = 0, guard = 0, anchor = 0;
  for (const auto& s : suites) {
    std::cout << "[" << s.name << "] " << (s.passed() ? "PASS" : "FAIL") << " (" << s.checks << " checks)\n";
    for (const auto& l : s.lines) std::cout << "  " << l << '\n';
    oracle += s.oracle_mismatches;
    guard += s.guard_violations;
    anchor += s.anchor_mismatches;
  }
  std::cout << "oracle mismatches " << oracle << ", guard violations " << guard << ", anchor mismatches "
            << anchor << '\n';
  if (anchor) return verify_anchor;
  if (guard) return verify_guard;
  if (oracle) return verify_failed;
  return ok;
}

int cmd_bench(const Common& c, const std::string& csv) {
  const auto cfg = load(c);
  const auto run = prepare_run(cfg);
  const auto shares = circuit_shares(bench_batch(run));
  std::cout << cfg.name << ": op counts for one training batch of " << cfg.batch_size << '\n';
  write_circuit_table(std::cout, shares);
  std::cout << "\nby circuit kind\n";
  write_circuit_table(std::cout, shares_by_kind(shares));
  std::ostringstream os;
  write_circuit_csv(os, shares);
  if (csv.empty()) {
    std::cout << '\n' << os.str();
  } else {
    write_atomic(csv, os.str());
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integer MLP training over RNS gadgets"};
  app.require_subcommand(1);

  Common train_c, eval_c, bench_c;
  std::string out, report, model_path, logits_path, split = "test", scope = "all", csv;

  auto* train = app.add_subcommand("train", "train a model and write the report");
  add_common(train, train_c);
  train->add_option("--out", out, "model file to write");
  train->add_option("--report", report, "JSON report to write");

  auto* eval = app.add_subcommand("eval", "evaluate a saved model");
  add_common(eval, eval_c);
  eval->add_option("--model", model_path, "model file")->required();
  eval->add_option("--split", split, "which split to score")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--logits", logits_path, "CSV dump of the logits");

  auto* verify = app.add_subcommand("verify", "run the oracle suites");
  verify->add_option("scope", scope, "all | conversions | matmul | scaling | loss")
      ->check(CLI::IsMember({"all", "conversions", "matmul", "scaling", "loss"}));

  auto* bench = app.add_subcommand("bench", "op-count distribution of one training batch");
  add_common(bench, bench_c);
  bench->add_option("--out", csv, "CSV file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*train) return cmd_train(train_c, out, report);
    if (*eval) return cmd_eval(eval_c, model_path, logits_path, split);
    if (*verify) return cmd_verify(scope);
    if (*bench) return cmd_bench(bench_c, csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return config_error;
  } catch (const CapacityError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runtime_error;
  }
  return ok;
}
