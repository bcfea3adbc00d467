#pragma once

#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridflow/io.hpp"
#include "gridflow/rng.hpp"
#include "gridflow/tensor.hpp"

namespace gridflow {

// One scenario sample ready for the model: raw (unnormalized) features and
// targets. Target layout matches the model head: [v_1..v_n, d_1..d_n].
struct Sample {
  Tensor x;  // n_bus x 7
  Tensor y;  // 1 x 2*n_bus
};

struct Dataset {
  int n_bus = 0;
  std::vector<Sample> samples;

  bool empty() const { return samples.empty(); }
  int size() const { return static_cast<int>(samples.size()); }
};

inline Dataset load_dataset_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty dataset file: " + path.string());

  struct Row {
    int sample_id, bus_id;
    double f[9];
  };
  std::vector<Row> rows;
  int max_bus = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    Row r;
    std::istringstream ls(line);
    std::string cell;
    int col = 0;
    while (std::getline(ls, cell, ',')) {
      if (col == 0) r.sample_id = std::stoi(cell);
      else if (col == 1) r.bus_id = std::stoi(cell);
      else if (col <= 10) r.f[col - 2] = std::stod(cell);
      ++col;
    }
    if (col != 11)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 11 columns, got " + std::to_string(col));
    max_bus = std::max(max_bus, r.bus_id);
    rows.push_back(r);
  }
  Dataset ds;
  ds.n_bus = max_bus + 1;
  if (ds.n_bus <= 0) throw std::runtime_error("no data rows in " + path.string());
  if (rows.size() % ds.n_bus != 0)
    throw std::runtime_error("row count not a multiple of bus count in " +
                             path.string());
  const int n_samples = static_cast<int>(rows.size()) / ds.n_bus;
  ds.samples.resize(n_samples);
  for (Sample& s : ds.samples) {
    s.x = Tensor{ds.n_bus, 7};
    s.y = Tensor{1, 2 * ds.n_bus};
  }
  int sample_idx = -1;
  int last_sample_id = -1;
  for (const Row& r : rows) {
    if (r.sample_id != last_sample_id) {
      ++sample_idx;
      last_sample_id = r.sample_id;
    }
    Sample& s = ds.samples[sample_idx];
    for (int c = 0; c < 7; ++c) s.x.at(r.bus_id, c) = r.f[c];
    s.y.at(0, r.bus_id) = r.f[7];                // v target
    s.y.at(0, ds.n_bus + r.bus_id) = r.f[8];     // delta target
  }
  return ds;
}

// z-score statistics; the one-hot columns stay categorical.
struct NormStats {
  double feat_mean[4] = {0, 0, 0, 0};
  double feat_std[4] = {1, 1, 1, 1};
  double tgt_mean[2] = {0, 0};  // v, delta
  double tgt_std[2] = {1, 1};

  bool operator==(const NormStats&) const = default;
};

inline constexpr double kStdFloor = 1e-8;

inline NormStats compute_norm_stats(const Dataset& train) {
  if (train.empty()) throw std::invalid_argument("compute_norm_stats: empty split");
  NormStats st;
  const int n = train.n_bus;
  const long rows = static_cast<long>(train.size()) * n;
  for (int c = 0; c < 4; ++c) {
    double sum = 0.0, sq = 0.0;
    for (const Sample& s : train.samples)
      for (int i = 0; i < n; ++i) {
        const double v = s.x.at(i, c);
        sum += v;
        sq += v * v;
      }
    const double mean = sum / rows;
    st.feat_mean[c] = mean;
    st.feat_std[c] = std::max(std::sqrt(std::max(sq / rows - mean * mean, 0.0)),
                              kStdFloor);
  }
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    for (const Sample& s : train.samples)
      for (int i = 0; i < n; ++i) {
        const double v = s.y.at(0, c * n + i);
        sum += v;
        sq += v * v;
      }
    const double mean = sum / rows;
    st.tgt_mean[c] = mean;
    st.tgt_std[c] = std::max(std::sqrt(std::max(sq / rows - mean * mean, 0.0)),
                             kStdFloor);
  }
  return st;
}

inline Tensor normalize_features(const Tensor& x, const NormStats& st) {
  Tensor out = x;
  for (int i = 0; i < x.rows(); ++i)
    for (int c = 0; c < 4; ++c)
      out.at(i, c) = (x.at(i, c) - st.feat_mean[c]) / st.feat_std[c];
  return out;
}

inline Tensor normalize_targets(const Tensor& y, const NormStats& st) {
  Tensor out = y;
  const int n = static_cast<int>(y.size()) / 2;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < n; ++i)
      out.data[c * n + i] = (y.data[c * n + i] - st.tgt_mean[c]) / st.tgt_std[c];
  return out;
}

inline Tensor denormalize_targets(const Tensor& y, const NormStats& st) {
  Tensor out = y;
  const int n = static_cast<int>(y.size()) / 2;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < n; ++i)
      out.data[c * n + i] = y.data[c * n + i] * st.tgt_std[c] + st.tgt_mean[c];
  return out;
}

// Deterministic seeded shuffle, then the first fraction of samples.
inline Dataset select_fraction(const Dataset& ds, double fraction,
                               std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("fraction must be in (0, 1]");
  std::vector<int> idx(ds.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  Rng rng(seed);
  shuffle(idx, rng);
  const int keep = std::max(1, static_cast<int>(ds.samples.size() * fraction));
  Dataset out;
  out.n_bus = ds.n_bus;
  for (int i = 0; i < keep; ++i) out.samples.push_back(ds.samples[idx[i]]);
  return out;
}

}  // namespace gridflow
