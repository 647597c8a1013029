#pragma once

#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "silenzio/config.hpp"
#include "silenzio/float_reference.hpp"
#include "silenzio/nn.hpp"

namespace silenzio {

struct CircuitShare {
  std::string name;
  std::string kind;  // forward, activation, loss, gradient, error, update
  std::uint64_t lookups = 0;
  std::uint64_t linear = 0;
  double lookup_share = 0;  // fraction of all lookups of the batch
  double linear_share = 0;
  std::map<std::string, OpCounts, std::less<>> per_gadget;
};

inline std::string circuit_kind(const std::string& name) {
  const auto b = name.find('[');
  return b == std::string::npos ? name : name.substr(0, b);
}

inline std::vector<CircuitShare> circuit_shares(const std::vector<CircuitStats>& circuits) {
  std::uint64_t lookups = 0, linear = 0;
  for (const auto& c : circuits) {
    lookups += c.stats.lookup_count;
    linear += c.stats.linear_op_count;
  }
  std::vector<CircuitShare> out;
  for (const auto& c : circuits) {
    CircuitShare s{c.name, circuit_kind(c.name), c.stats.lookup_count, c.stats.linear_op_count,
                   lookups ? static_cast<double>(c.stats.lookup_count) / static_cast<double>(lookups) : 0,
                   linear ? static_cast<double>(c.stats.linear_op_count) / static_cast<double>(linear) : 0,
                   c.stats.per_gadget};
    out.push_back(std::move(s));
  }
  return out;
}

/// Shares summed per circuit kind, in first-seen order.
inline std::vector<CircuitShare> shares_by_kind(const std::vector<CircuitShare>& shares) {
  std::vector<CircuitShare> out;
  for (const auto& s : shares) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CircuitShare& o) { return o.kind == s.kind; });
    if (it == out.end()) {
      out.push_back({s.kind, s.kind, 0, 0, 0, 0, {}});
      it = out.end() - 1;
    }
    it->lookups += s.lookups;
    it->linear += s.linear;
    it->lookup_share += s.lookup_share;
    it->linear_share += s.linear_share;
  }
  return out;
}

struct LayerScaling {
  std::string layer;
  double mean_abs_error = 0;
  std::int64_t max_abs_error = 0;
  double relative_mean = 0;  // over 2^(Gamma-1)
  double relative_max = 0;
  std::size_t calls = 0;
};

struct RunReport {
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::vector<std::size_t> dims;
  std::size_t train_size = 0, test_size = 0, classes = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> warnings;
  TrainResult integer;
  std::optional<FloatResult> float_run;
  std::vector<CircuitShare> circuits;
  std::vector<LayerScaling> scaling;
  double overall_mean_scaling_error = 0;
  std::int64_t overall_max_scaling_error = 0;
};

inline std::vector<LayerScaling> summarize_scaling(const TrainResult& r, unsigned gamma) {
  const double unit = std::ldexp(1.0, static_cast<int>(gamma) - 1);
  std::vector<LayerScaling> out;
  for (const auto& [layer, s] : r.scaling_errors) {
    out.push_back({layer, s.mean_abs_error(), s.max_abs_error, s.mean_abs_error() / unit,
                   static_cast<double>(s.max_abs_error) / unit, s.calls});
  }
  return out;
}

inline nlohmann::ordered_json to_json(const RunReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "silenzio-report 1";
  j["seed"] = r.seed;
  j["split_seed"] = r.split_seed;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  j["dataset"] = {{"train_samples", r.train_size},
                  {"test_samples", r.test_size},
                  {"classes", r.classes},
                  {"features", r.feature_names},
                  {"warnings", r.warnings}};
  j["architecture"] = r.dims;

  ordered_json integer;
  integer["best_test_accuracy"] = r.integer.best_test_accuracy;
  integer["best_epoch"] = r.integer.best_epoch;
  integer["batches"] = r.integer.batches;
  ordered_json epochs = ordered_json::array();
  for (const auto& e : r.integer.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_accuracy", e.train_accuracy}, {"test_accuracy", e.test_accuracy}});
  }
  integer["epochs"] = epochs;
  integer["matmuls"] = r.integer.matmuls;
  integer["unsound_matmuls"] = r.integer.unsound_matmuls.size();
  j["integer"] = integer;

  if (r.float_run) {
    ordered_json fl;
    fl["best_test_accuracy"] = r.float_run->best_test_accuracy;
    fl["best_epoch"] = r.float_run->best_epoch;
    ordered_json fe = ordered_json::array();
    for (const auto& e : r.float_run->epochs) {
      fe.push_back({{"epoch", e.epoch}, {"train_accuracy", e.train_accuracy}, {"test_accuracy", e.test_accuracy}});
    }
    fl["epochs"] = fe;
    j["float_baseline"] = fl;
  } else {
    j["float_baseline"] = nullptr;
  }

  ordered_json sc;
  sc["overall_mean_abs_error"] = r.overall_mean_scaling_error;
  sc["overall_max_abs_error"] = r.overall_max_scaling_error;
  ordered_json layers = ordered_json::array();
  for (const auto& l : r.scaling) {
    layers.push_back({{"layer", l.layer},
                      {"mean_abs_error", l.mean_abs_error},
                      {"max_abs_error", l.max_abs_error},
                      {"relative_mean", l.relative_mean},
                      {"relative_max", l.relative_max},
                      {"calls", l.calls}});
  }
  sc["layers"] = layers;
  j["scaling_error"] = sc;

  ordered_json circuits = ordered_json::array();
  for (const auto& c : r.circuits) {
    ordered_json gadgets = ordered_json::object();
    for (const auto& [g, counts] : c.per_gadget) {
      gadgets[g] = {{"lookups", counts.lookups}, {"linear", counts.linear}, {"peak", counts.peak}};
    }
    circuits.push_back({{"circuit", c.name},
                        {"lookups", c.lookups},
                        {"linear_ops", c.linear},
                        {"lookup_share", c.lookup_share},
                        {"linear_share", c.linear_share},
                        {"gadgets", gadgets}});
  }
  j["op_counts_per_batch"] = circuits;
  j["op_counts_total"] = {{"lookups", r.integer.total.lookup_count},
                          {"linear_ops", r.integer.total.linear_op_count}};
  return j;
}

/// Aligned per-circuit table with percentage shares.
inline void write_circuit_table(std::ostream& os, const std::vector<CircuitShare>& shares) {
  std::size_t w = 8;
  for (const auto& s : shares) w = std::max(w, s.name.size());
  os << std::left << std::setw(static_cast<int>(w)) << "circuit" << std::right << std::setw(12)
     << "lookups" << std::setw(9) << "share" << std::setw(12) << "linear" << std::setw(9) << "share"
     << '\n';
  std::uint64_t tl = 0, tn = 0;
  for (const auto& s : shares) {
    os << std::left << std::setw(static_cast<int>(w)) << s.name << std::right << std::setw(12) << s.lookups
       << std::setw(8) << std::fixed << std::setprecision(2) << 100 * s.lookup_share << '%' << std::setw(12)
       << s.linear << std::setw(8) << 100 * s.linear_share << "%\n";
    tl += s.lookups;
    tn += s.linear;
  }
  os << std::left << std::setw(static_cast<int>(w)) << "total" << std::right << std::setw(12) << tl
     << std::setw(9) << "" << std::setw(12) << tn << '\n';
  os.unsetf(std::ios::fixed);
}

inline void write_circuit_csv(std::ostream& os, const std::vector<CircuitShare>& shares) {
  os << "circuit,lookups,linear_ops,lookup_share_pct,linear_share_pct\n";
  for (const auto& s : shares) {
    std::ostringstream a, b;
    a << std::fixed << std::setprecision(4) << 100 * s.lookup_share;
    b << std::fixed << std::setprecision(4) << 100 * s.linear_share;
    os << s.name << ',' << s.lookups << ',' << s.linear << ',' << a.str() << ',' << b.str() << '\n';
  }
}

/// Human-readable summary of a run.
inline void write_text_report(std::ostream& os, const RunReport& r) {
  const auto name = r.config.count("name") ? r.config.at("name") : std::string("run");
  os << name << "  seed " << r.seed << "  split seed " << r.split_seed << "  architecture ";
  for (std::size_t i = 0; i < r.dims.size(); ++i) os << (i ? "-" : "") << r.dims[i];
  os << "\ntrain " << r.train_size << "  test " << r.test_size << "  classes " << r.classes << '\n';
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  os << '\n' << std::setw(6) << "epoch" << std::setw(12) << "int train" << std::setw(12) << "int test";
  if (r.float_run) os << std::setw(12) << "f32 train" << std::setw(12) << "f32 test";
  os << '\n' << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < r.integer.epochs.size(); ++i) {
    const auto& e = r.integer.epochs[i];
    os << std::setw(6) << e.epoch << std::setw(12) << e.train_accuracy << std::setw(12) << e.test_accuracy;
    if (r.float_run && i < r.float_run->epochs.size()) {
      os << std::setw(12) << r.float_run->epochs[i].train_accuracy << std::setw(12)
         << r.float_run->epochs[i].test_accuracy;
    }
    os << '\n';
  }
  os << "\nbest integer test accuracy " << r.integer.best_test_accuracy << " (epoch " << r.integer.best_epoch
     << ")\n";
  if (r.float_run) {
    os << "best float32 test accuracy " << r.float_run->best_test_accuracy << " (epoch "
       << r.float_run->best_epoch << ")\n";
  }
  if (!r.scaling.empty()) {
    os << "\nscaling error (approximate vs exact block scaling)\n";
    for (const auto& l : r.scaling) {
      os << "  " << std::left << std::setw(12) << l.layer << std::right << " mean " << std::setw(8) << l.mean_abs_error
         << "  max " << std::setw(4) << l.max_abs_error << "  mean/2^(G-1) " << l.relative_mean << '\n';
    }
    os << "  overall mean " << r.overall_mean_scaling_error << "  max " << r.overall_max_scaling_error << '\n';
  }
  os.unsetf(std::ios::fixed);
  os << "\nop counts for one training batch\n";
  write_circuit_table(os, r.circuits);
  os << "\nunsound matmuls: " << r.integer.unsound_matmuls.size() << " of " << r.integer.matmuls << '\n';
}

}  // namespace silenzio
