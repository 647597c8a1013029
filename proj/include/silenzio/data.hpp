#pragma once

// Tabular ingestion and the integer preprocessing pipeline:
//   split -> impute -> quantile transform (fit on train) -> signed beta-bit grid,
// categoricals one-hot, labels as class indices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "silenzio/dataset.hpp"
#include "silenzio/errors.hpp"
#include "silenzio/matrix.hpp"
#include "silenzio/random.hpp"

namespace silenzio {

struct Column {
  std::string name;
  bool categorical = false;
  std::vector<double> numeric;     // NaN marks a missing cell
  std::vector<std::string> text;   // categorical cells
};

struct RawDataset {
  std::vector<Column> columns;     // features only
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t rows() const noexcept { return labels.size(); }
  std::size_t classes() const noexcept { return class_names.size(); }
  std::size_t feature_count() const noexcept { return columns.size(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(cell));
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "?" || s == "NA" || s == "nan"; }

inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads a CSV with a header row. Columns listed in `categorical` or holding
/// any non-numeric, non-missing cell become categorical. Labels are mapped to
/// class indices in sorted order (numerically if all labels are numbers).
inline RawDataset parse_csv(std::istream& is, const std::string& label_column,
                            const std::vector<std::string>& categorical = {}) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty CSV input: header row missing");
  const auto header = detail::split_csv_line(line, 1);
  std::vector<std::string> names;
  for (const auto& h : header) names.push_back(detail::trim(h));
  const auto label_it = std::find(names.begin(), names.end(), label_column);
  if (label_it == names.end()) throw ParseError("label column '" + label_column + "' not found");
  const auto label_idx = static_cast<std::size_t>(label_it - names.begin());
  for (const auto& c : categorical) {
    if (std::find(names.begin(), names.end(), c) == names.end()) {
      throw ParseError("categorical column '" + c + "' not found");
    }
  }

  std::vector<std::vector<std::string>> cells(names.size());
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto row = detail::split_csv_line(line, line_no);
    if (row.size() != names.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(names.size()) + " cells, got " + std::to_string(row.size()));
    }
    if (detail::is_missing(detail::trim(row[label_idx]))) {
      throw ParseError("line " + std::to_string(line_no) + ", column '" + label_column +
                       "': missing label");
    }
    for (std::size_t c = 0; c < row.size(); ++c) cells[c].push_back(detail::trim(row[c]));
  }

  RawDataset ds;
  // Labels.
  const auto& raw_labels = cells[label_idx];
  std::vector<std::string> classes(raw_labels.begin(), raw_labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  bool numeric_labels = true;
  for (const auto& c : classes) {
    double d;
    numeric_labels = numeric_labels && detail::parse_number(c, d);
  }
  if (numeric_labels) {
    std::stable_sort(classes.begin(), classes.end(),
                     [](const std::string& a, const std::string& b) { return std::stod(a) < std::stod(b); });
  }
  ds.class_names = classes;
  for (const auto& l : raw_labels) {
    ds.labels.push_back(static_cast<int>(std::find(classes.begin(), classes.end(), l) - classes.begin()));
  }

  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c == label_idx) continue;
    Column col;
    col.name = names[c];
    col.categorical = std::find(categorical.begin(), categorical.end(), names[c]) != categorical.end();
    if (!col.categorical) {
      for (const auto& v : cells[c]) {
        double d;
        if (!detail::is_missing(v) && !detail::parse_number(v, d)) {
          col.categorical = true;
          break;
        }
      }
    }
    if (col.categorical) {
      col.text = cells[c];
    } else {
      for (const auto& v : cells[c]) {
        double d = std::numeric_limits<double>::quiet_NaN();
        if (!detail::is_missing(v)) detail::parse_number(v, d);
        col.numeric.push_back(d);
      }
    }
    ds.columns.push_back(std::move(col));
  }
  return ds;
}

inline RawDataset load_csv(const std::string& path, const std::string& label_column,
                           const std::vector<std::string>& categorical = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return parse_csv(in, label_column, categorical);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

struct PreprocessSpec {
  std::vector<std::string> zero_as_missing;
  std::vector<std::string> categorical;
  /// Columns scaled linearly around their training mean instead of the
  /// quantile transform.
  std::vector<std::string> center;
  unsigned beta = 4;
  std::size_t quantiles = 0;  // 0: min(#train, 1000)
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;

  void validate() const {
    if (beta < 1 || beta > 8) throw ConfigError("beta must be in [1, 8]");
    if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test_fraction must be in (0, 1)");
    if (quantiles == 1) throw ConfigError("quantiles must be at least 2");
  }
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Shuffled split; the test side gets ceil(fraction * n) rows.
inline SplitIndices split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1)) throw ConfigError("test fraction must be in (0, 1)");
  const auto n_test = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  if (n_test == 0 || n_test >= n) {
    throw EmptySplit("splitting " + std::to_string(n) + " rows leaves an empty side");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  SplitIndices s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  return s;
}

struct SplitPlan {
  SplitIndices split;
  std::vector<std::vector<std::size_t>> batches;  // first epoch, positions into split.train
};

inline SplitPlan split_and_batch(std::size_t n, double fraction, std::uint64_t seed,
                                 std::size_t batch_size = 8) {
  SplitPlan p{split_indices(n, fraction, seed), {}};
  p.batches = epoch_batches(p.split.train.size(), batch_size, seed, 0);
  return p;
}

/// Empirical-CDF transform to [0, 1], with the tie handling of the usual
/// quantile transformer: the forward and backward interpolations are averaged.
class QuantileTransform {
 public:
  QuantileTransform() = default;

  QuantileTransform(std::vector<double> values, std::size_t n_quantiles) {
    if (values.empty()) throw EmptySplit("quantile transform needs at least one value");
    std::sort(values.begin(), values.end());
    n_quantiles = std::max<std::size_t>(2, std::min(n_quantiles, values.size()));
    for (std::size_t q = 0; q < n_quantiles; ++q) {
      const double p = static_cast<double>(q) / static_cast<double>(n_quantiles - 1);
      refs_.push_back(p);
      // Linear interpolation between order statistics.
      const double pos = p * static_cast<double>(values.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, values.size() - 1);
      quantiles_.push_back(values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo)));
    }
  }

  double operator()(double x) const {
    if (x <= quantiles_.front()) return 0.0;
    if (x >= quantiles_.back()) return 1.0;
    const double fwd = interp(x, quantiles_, refs_);
    // Backward: interpolate -x over the reversed, negated knots.
    std::vector<double> nq(quantiles_.rbegin(), quantiles_.rend()), nr(refs_.rbegin(), refs_.rend());
    for (auto& v : nq) v = -v;
    for (auto& v : nr) v = -v;
    const double bwd = -interp(-x, nq, nr);
    return std::clamp(0.5 * (fwd + bwd), 0.0, 1.0);
  }

  const std::vector<double>& quantiles() const noexcept { return quantiles_; }

 private:
  /// Piecewise-linear interpolation over ascending knots; equal knots take
  /// the rightmost value.
  static double interp(double x, const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    if (it == xs.begin()) return ys.front();
    if (it == xs.end()) return ys.back();
    const auto j = static_cast<std::size_t>(it - xs.begin());
    const double x0 = xs[j - 1], x1 = xs[j];
    if (x1 == x0) return ys[j];
    return ys[j - 1] + (ys[j] - ys[j - 1]) * (x - x0) / (x1 - x0);
  }

  std::vector<double> quantiles_;
  std::vector<double> refs_;
};

/// u in [0, 1] -> round(u * (2^beta - 1)) - 2^(beta-1).
inline std::int64_t to_grid(double u, unsigned beta) {
  const double top = std::ldexp(1.0, static_cast<int>(beta)) - 1;
  return static_cast<std::int64_t>(std::nearbyint(std::clamp(u, 0.0, 1.0) * top)) -
         (std::int64_t{1} << (beta - 1));
}

struct PreparedData {
  EncodedSplit train;
  EncodedSplit test;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;
  SplitIndices split;
};

namespace detail {

/// One fitted input column, possibly expanding to several encoded columns.
struct FittedColumn {
  std::size_t source = 0;
  bool categorical = false;
  bool linear = false;
  bool zero_missing = false;
  double mean = 0;
  double scale = 1;
  QuantileTransform quantile;
  std::vector<std::string> categories;
};

inline bool listed(const std::vector<std::string>& names, const std::string& n) {
  return std::find(names.begin(), names.end(), n) != names.end();
}

inline double cleaned(const FittedColumn& f, double v) {
  if (f.zero_missing && v == 0.0) v = std::numeric_limits<double>::quiet_NaN();
  return std::isnan(v) ? f.mean : v;
}

}  // namespace detail

/// The full pipeline. Everything is fitted on the training rows only.
inline PreparedData preprocess(const RawDataset& ds, const PreprocessSpec& spec) {
  spec.validate();
  if (ds.classes() < 2) throw ConfigError("need at least two classes");
  for (const auto& names : {spec.zero_as_missing, spec.center, spec.categorical}) {
    for (const auto& n : names) {
      const bool found = std::any_of(ds.columns.begin(), ds.columns.end(),
                                     [&](const Column& c) { return c.name == n; });
      if (!found) throw ConfigError("unknown column '" + n + "' in preprocessing spec");
    }
  }
  PreparedData out;
  out.class_names = ds.class_names;
  out.split = split_indices(ds.rows(), spec.test_fraction, spec.split_seed);
  const auto& train_rows = out.split.train;
  const std::size_t n_q = spec.quantiles ? spec.quantiles : std::min<std::size_t>(train_rows.size(), 1000);

  std::vector<detail::FittedColumn> fitted;
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    const auto& col = ds.columns[c];
    detail::FittedColumn f;
    f.source = c;
    if (col.categorical) {
      f.categorical = true;
      std::set<std::string> cats;
      for (auto r : train_rows) cats.insert(col.text[r]);
      f.categories.assign(cats.begin(), cats.end());
      if (f.categories.size() < 2) {
        out.warnings.push_back("dropped constant column '" + col.name + "'");
        continue;
      }
      if (spec.beta < 2) throw ConfigError("one-hot columns need beta >= 2");
      fitted.push_back(std::move(f));
      continue;
    }
    f.zero_missing = detail::listed(spec.zero_as_missing, col.name);
    f.linear = detail::listed(spec.center, col.name);
    double sum = 0;
    std::size_t cnt = 0;
    for (auto r : train_rows) {
      double v = col.numeric[r];
      if (f.zero_missing && v == 0.0) continue;
      if (std::isnan(v)) continue;
      sum += v;
      ++cnt;
    }
    if (cnt == 0) {
      out.warnings.push_back("dropped column '" + col.name + "' with no observed values");
      continue;
    }
    f.mean = sum / static_cast<double>(cnt);
    std::vector<double> vals;
    for (auto r : train_rows) vals.push_back(detail::cleaned(f, col.numeric[r]));
    const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    if (*mn == *mx) {
      out.warnings.push_back("dropped constant column '" + col.name + "'");
      continue;
    }
    if (f.linear) {
      f.scale = std::max(std::abs(*mx - f.mean), std::abs(*mn - f.mean));
    } else {
      f.quantile = QuantileTransform(vals, n_q);
    }
    fitted.push_back(std::move(f));
  }
  if (fitted.empty()) throw DegenerateFeature("every feature column is constant");

  for (const auto& f : fitted) {
    const auto& name = ds.columns[f.source].name;
    if (f.categorical) {
      for (const auto& cat : f.categories) out.feature_names.push_back(name + "=" + cat);
    } else {
      out.feature_names.push_back(name);
    }
  }

  auto encode = [&](const std::vector<std::size_t>& rows) {
    EncodedSplit s;
    s.classes = ds.classes();
    const std::size_t width = out.feature_names.size();
    s.features = Matrix<std::int64_t>(rows.size(), width);
    s.real_features = Matrix<float>(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = rows[i];
      std::size_t c = 0;
      for (const auto& f : fitted) {
        const auto& col = ds.columns[f.source];
        if (f.categorical) {
          for (const auto& cat : f.categories) {
            const bool hit = col.text[r] == cat;
            s.features(i, c) = hit;
            s.real_features(i, c) = hit ? 1.0f : 0.0f;
            ++c;
          }
          continue;
        }
        const double v = detail::cleaned(f, col.numeric[r]);
        const double u = f.linear ? std::clamp(0.5 + (v - f.mean) / (2 * f.scale), 0.0, 1.0) : f.quantile(v);
        s.features(i, c) = to_grid(u, spec.beta);
        // Centered like the grid; the bias-free float model needs inputs of both signs.
        s.real_features(i, c) = static_cast<float>(u - 0.5);
        ++c;
      }
      s.labels.push_back(ds.labels[r]);
    }
    return s;
  };
  out.train = encode(out.split.train);
  out.test = encode(out.split.test);
  return out;
}

/// Integer dataset dump for inspection: features then the class index.
inline void write_integer_csv(std::ostream& os, const EncodedSplit& s,
                              const std::vector<std::string>& names) {
  for (const auto& n : names) os << n << ',';
  os << "label\n";
  for (std::size_t r = 0; r < s.size(); ++r) {
    for (std::size_t c = 0; c < s.feature_count(); ++c) os << s.features(r, c) << ',';
    os << s.labels[r] << '\n';
  }
}

}  // namespace silenzio
