#pragma once

// Experiment configuration: a flat `key = value` file, `#` starts a comment.
// Unknown keys are errors. Relative paths resolve against the file's folder.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "silenzio/data.hpp"
#include "silenzio/errors.hpp"
#include "silenzio/nn.hpp"

namespace silenzio {

struct TrainConfig {
  std::string name;
  std::string dataset;  // resolved path
  std::string label_column;
  PreprocessSpec preprocess;
  /// Split seed; unset means "use the run seed".
  std::optional<std::uint64_t> split_seed;
  /// Layer widths; 0 in front means "number of encoded features".
  std::vector<std::size_t> architecture;
  Hyperparams hyper;
  std::size_t epochs = 25;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  ScalingMode scaling = ScalingMode::approximate;
  bool float_baseline = true;

  /// Every key as written (after overrides), for report echoes.
  std::map<std::string, std::string> echo() const;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) throw ConfigError("'" + key + "' needs a non-negative integer, got '" + v + "'");
  return x;
}

inline unsigned parse_small(const std::string& key, const std::string& v) {
  const auto x = parse_uint(key, v);
  if (x > 1000) throw ConfigError("'" + key + "' is out of range: " + v);
  return static_cast<unsigned>(x);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("'" + key + "' needs on/off, got '" + v + "'");
}

}  // namespace detail

inline ScalingMode parse_scaling_mode(const std::string& v) {
  if (v == "approximate") return ScalingMode::approximate;
  if (v == "exact") return ScalingMode::exact;
  throw ConfigError("scaling must be 'approximate' or 'exact', got '" + v + "'");
}

inline std::vector<std::size_t> parse_architecture(const std::string& v) {
  std::vector<std::size_t> dims;
  const auto parts = detail::split_list(v, '-');
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i == 0 && parts[i] == "auto") {
      dims.push_back(0);
      continue;
    }
    const auto d = detail::parse_uint("architecture", parts[i]);
    if (d == 0) throw ConfigError("architecture widths must be positive");
    dims.push_back(d);
  }
  if (dims.size() < 2) throw ConfigError("architecture needs at least two layers, e.g. 13-8-3");
  return dims;
}

/// Applies one key. Shared by the file parser and command-line overrides.
inline void set_config_key(TrainConfig& c, const std::string& key, const std::string& v,
                           const std::filesystem::path& base_dir) {
  using namespace detail;
  if (key == "name") c.name = v;
  else if (key == "dataset") {
    const std::filesystem::path p(v);
    c.dataset = (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
  } else if (key == "label_column") c.label_column = v;
  else if (key == "categorical") c.preprocess.categorical = split_list(v, ',');
  else if (key == "zero_as_missing") c.preprocess.zero_as_missing = split_list(v, ',');
  else if (key == "center") c.preprocess.center = split_list(v, ',');
  else if (key == "beta") c.hyper.beta = c.preprocess.beta = parse_small(key, v);
  else if (key == "quantiles") c.preprocess.quantiles = parse_uint(key, v);
  else if (key == "test_fraction") {
    try {
      std::size_t pos = 0;
      c.preprocess.test_fraction = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw ConfigError("'test_fraction' needs a number, got '" + v + "'");
    }
  } else if (key == "split_seed") {
    if (v == "run") c.split_seed.reset();
    else c.split_seed = parse_uint(key, v);
  } else if (key == "architecture") c.architecture = parse_architecture(v);
  else if (key == "alpha") c.hyper.alpha = parse_small(key, v);
  else if (key == "gamma") c.hyper.gamma = parse_small(key, v);
  else if (key == "relu_cap") c.hyper.relu_cap = parse_small(key, v);
  else if (key == "kappa") c.hyper.kappa = parse_small(key, v);
  else if (key == "moduli_width") c.hyper.moduli_width = parse_small(key, v);
  else if (key == "weight_clip") c.hyper.weight_clip = parse_weight_clip(v);
  else if (key == "epochs") c.epochs = parse_uint(key, v);
  else if (key == "batch_size") c.batch_size = parse_uint(key, v);
  else if (key == "seed") c.seed = parse_uint(key, v);
  else if (key == "scaling") c.scaling = parse_scaling_mode(v);
  else if (key == "float_baseline") c.float_baseline = parse_bool(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline TrainConfig parse_config(std::istream& is, const std::filesystem::path& base_dir = ".") {
  TrainConfig c;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw ConfigError("config line " + std::to_string(line_no) + ": '" + key +
                        "' already set on line " + std::to_string(it->second));
    }
    try {
      set_config_key(c, key, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (const char* required : {"dataset", "label_column", "architecture"}) {
    if (!seen.count(required)) throw ConfigError(std::string("config is missing '") + required + "'");
  }
  return c;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  auto c = parse_config(in, std::filesystem::path(path).parent_path());
  if (c.name.empty()) c.name = std::filesystem::path(path).stem().string();
  return c;
}

inline std::uint64_t effective_split_seed(const TrainConfig& c) {
  return c.split_seed ? *c.split_seed : c.seed;
}

/// Checks everything that can be checked without the data: hyperparameters,
/// class bound, batch size and base capacity of every layer.
inline void validate_config(const TrainConfig& c, std::size_t input_dim = 0) {
  c.preprocess.validate();
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.batch_size > 255) throw ConfigError("batch_size must be at most 255");
  auto dims = c.architecture;
  if (dims.empty()) throw ConfigError("architecture missing");
  if (dims.front() == 0) dims.front() = input_dim ? input_dim : 1;
  if (input_dim && dims.front() != input_dim) {
    throw ConfigError("architecture expects " + std::to_string(dims.front()) +
                      " inputs but preprocessing produced " + std::to_string(input_dim));
  }
  validate(c.hyper, dims);
  try {
    plan_bases(MlpModel(dims, c.hyper), c.batch_size);
  } catch (const CapacityError& e) {
    throw ConfigError(std::string("layer does not fit any RNS base: ") + e.what());
  }
}

inline std::map<std::string, std::string> TrainConfig::echo() const {
  std::map<std::string, std::string> m;
  m["name"] = name;
  m["dataset"] = dataset;
  m["label_column"] = label_column;
  m["categorical"] = detail::join(preprocess.categorical, ",");
  m["zero_as_missing"] = detail::join(preprocess.zero_as_missing, ",");
  m["center"] = detail::join(preprocess.center, ",");
  m["beta"] = std::to_string(hyper.beta);
  m["quantiles"] = std::to_string(preprocess.quantiles);
  std::ostringstream tf;
  tf << preprocess.test_fraction;
  m["test_fraction"] = tf.str();
  m["split_seed"] = split_seed ? std::to_string(*split_seed) : "run";
  std::string arch;
  for (std::size_t i = 0; i < architecture.size(); ++i) {
    arch += (i ? "-" : "") + (architecture[i] ? std::to_string(architecture[i]) : std::string("auto"));
  }
  m["architecture"] = arch;
  m["alpha"] = std::to_string(hyper.alpha);
  m["gamma"] = std::to_string(hyper.gamma);
  m["relu_cap"] = std::to_string(hyper.relu_cap);
  m["kappa"] = std::to_string(hyper.kappa);
  m["moduli_width"] = std::to_string(hyper.moduli_width);
  m["weight_clip"] = to_string(hyper.weight_clip);
  m["epochs"] = std::to_string(epochs);
  m["batch_size"] = std::to_string(batch_size);
  m["seed"] = std::to_string(seed);
  m["scaling"] = to_string(scaling);
  m["float_baseline"] = float_baseline ? "on" : "off";
  return m;
}

/// Loads and preprocesses the configured dataset.
inline PreparedData prepare_data(const TrainConfig& c) {
  auto spec = c.preprocess;
  spec.beta = c.hyper.beta;
  spec.split_seed = effective_split_seed(c);
  const auto raw = load_csv(c.dataset, c.label_column, spec.categorical);
  return preprocess(raw, spec);
}

/// Architecture with "auto" resolved.
inline std::vector<std::size_t> resolved_dims(const TrainConfig& c, std::size_t input_dim) {
  auto dims = c.architecture;
  if (dims.front() == 0) dims.front() = input_dim;
  return dims;
}

}  // namespace silenzio
