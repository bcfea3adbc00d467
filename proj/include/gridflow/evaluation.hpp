#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridflow/dataset.hpp"
#include "gridflow/gnn.hpp"
#include "gridflow/io.hpp"

namespace gridflow {

// Per-column regression metrics. NRMSE is RMSE over the truth range; it is
// absent when the truth column is constant (range zero).
struct ColumnMetrics {
  double mse = 0.0;
  double rmse = 0.0;
  std::optional<double> nrmse;
  double mae = 0.0;
  double r2 = 0.0;
};

struct MetricReport {
  ColumnMetrics v;      // voltage magnitude targets
  ColumnMetrics delta;  // voltage angle targets
  double mse = 0.0;     // pooled over both target blocks
  double rmse = 0.0;
  std::optional<double> nrmse;  // mean of the per-column values present
  double mae = 0.0;
  double r2 = 0.0;
};

namespace detail {

inline ColumnMetrics column_metrics(const std::vector<double>& truth,
                                    const std::vector<double>& pred) {
  if (truth.size() != pred.size() || truth.empty())
    throw std::invalid_argument("column_metrics: size mismatch or empty");
  const double n = static_cast<double>(truth.size());
  double se = 0.0, ae = 0.0, sum = 0.0;
  double lo = truth[0], hi = truth[0];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = pred[i] - truth[i];
    se += d * d;
    ae += std::abs(d);
    sum += truth[i];
    lo = std::min(lo, truth[i]);
    hi = std::max(hi, truth[i]);
  }
  const double mean = sum / n;
  double sstot = 0.0;
  for (double t : truth) sstot += (t - mean) * (t - mean);
  ColumnMetrics m;
  m.mse = se / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / n;
  if (hi > lo) m.nrmse = m.rmse / (hi - lo);
  m.r2 = sstot > 0.0 ? 1.0 - se / sstot
                     : (se == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity());
  return m;
}

}  // namespace detail

// truth/pred rows are [v_1..v_n, delta_1..delta_n] in physical units.
inline MetricReport metrics(const std::vector<Tensor>& truth,
                            const std::vector<Tensor>& pred) {
  if (truth.size() != pred.size() || truth.empty())
    throw std::invalid_argument("metrics: sample count mismatch or empty");
  const int n = static_cast<int>(truth[0].size()) / 2;
  std::vector<double> tv, pv, td, pd;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (truth[s].size() != pred[s].size() || truth[s].size() != 2 * n)
      throw std::invalid_argument("metrics: row width mismatch");
    for (int i = 0; i < n; ++i) {
      tv.push_back(truth[s].data[i]);
      pv.push_back(pred[s].data[i]);
      td.push_back(truth[s].data[n + i]);
      pd.push_back(pred[s].data[n + i]);
    }
  }
  MetricReport r;
  r.v = detail::column_metrics(tv, pv);
  r.delta = detail::column_metrics(td, pd);
  std::vector<double> all_t(tv), all_p(pv);
  all_t.insert(all_t.end(), td.begin(), td.end());
  all_p.insert(all_p.end(), pd.begin(), pd.end());
  const ColumnMetrics pooled = detail::column_metrics(all_t, all_p);
  r.mse = pooled.mse;
  r.rmse = pooled.rmse;
  r.mae = pooled.mae;
  r.r2 = pooled.r2;
  double nsum = 0.0;
  int ncount = 0;
  if (r.v.nrmse) { nsum += *r.v.nrmse; ++ncount; }
  if (r.delta.nrmse) { nsum += *r.delta.nrmse; ++ncount; }
  if (ncount) r.nrmse = nsum / ncount;
  return r;
}

// Runs the model in eval mode on every sample and scores the denormalized
// predictions against the raw targets.
inline MetricReport evaluate(ModelParams& params, const GraphTopology& topo,
                             const Dataset& ds, const NormStats& st) {
  if (ds.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<Tensor> truth, pred;
  for (const Sample& s : ds.samples) {
    truth.push_back(s.y);
    const Tensor out = model_forward(normalize_features(s.x, st), topo, params);
    pred.push_back(denormalize_targets(out, st));
  }
  return metrics(truth, pred);
}

inline nlohmann::json metrics_json(const MetricReport& r) {
  const auto col = [](const ColumnMetrics& c) {
    nlohmann::json j{{"mse", c.mse}, {"rmse", c.rmse}, {"mae", c.mae}, {"r2", c.r2}};
    if (c.nrmse) j["nrmse"] = *c.nrmse;
    return j;
  };
  nlohmann::json j{{"v", col(r.v)},
                   {"delta", col(r.delta)},
                   {"mse", r.mse},
                   {"rmse", r.rmse},
                   {"mae", r.mae},
                   {"r2", r.r2}};
  if (r.nrmse) j["nrmse"] = *r.nrmse;
  j["nrmse_normalizer"] = "truth_range";
  return j;
}

// One row of a cross-run comparison: a (case, arch, seed) evaluation.
struct RunResult {
  std::string case_name;
  std::string arch;
  std::uint64_t seed = 0;
  MetricReport test;
  double test_loss = 0.0;  // normalized MSE
};

struct SummaryRow {
  std::string case_name;
  std::string arch;
  int runs = 0;
  double mean_nrmse = 0.0, min_nrmse = 0.0, max_nrmse = 0.0;
  double mean_r2 = 0.0, min_r2 = 0.0, max_r2 = 0.0;
  double mean_test_loss = 0.0;
};

inline std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs) {
  std::map<std::pair<std::string, std::string>, std::vector<const RunResult*>> by;
  for (const RunResult& r : runs) by[{r.case_name, r.arch}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, group] : by) {
    SummaryRow row;
    row.case_name = key.first;
    row.arch = key.second;
    row.runs = static_cast<int>(group.size());
    row.min_nrmse = row.min_r2 = std::numeric_limits<double>::infinity();
    row.max_nrmse = row.max_r2 = -std::numeric_limits<double>::infinity();
    for (const RunResult* r : group) {
      const double n = r->test.nrmse.value_or(0.0);
      row.mean_nrmse += n;
      row.min_nrmse = std::min(row.min_nrmse, n);
      row.max_nrmse = std::max(row.max_nrmse, n);
      row.mean_r2 += r->test.r2;
      row.min_r2 = std::min(row.min_r2, r->test.r2);
      row.max_r2 = std::max(row.max_r2, r->test.r2);
      row.mean_test_loss += r->test_loss;
    }
    row.mean_nrmse /= row.runs;
    row.mean_r2 /= row.runs;
    row.mean_test_loss /= row.runs;
    out.push_back(row);
  }
  return out;
}

inline std::string runs_csv(const std::vector<RunResult>& runs) {
  std::ostringstream out;
  out << "case,arch,seed,test_loss,mse,rmse,nrmse,mae,r2,"
         "v_rmse,v_nrmse,v_r2,delta_rmse,delta_nrmse,delta_r2\n";
  const auto opt = [](const std::optional<double>& v) {
    return v ? fmt_double(*v) : std::string("");
  };
  for (const RunResult& r : runs)
    out << r.case_name << ',' << r.arch << ',' << r.seed << ','
        << fmt_double(r.test_loss) << ',' << fmt_double(r.test.mse) << ','
        << fmt_double(r.test.rmse) << ',' << opt(r.test.nrmse) << ','
        << fmt_double(r.test.mae) << ',' << fmt_double(r.test.r2) << ','
        << fmt_double(r.test.v.rmse) << ',' << opt(r.test.v.nrmse) << ','
        << fmt_double(r.test.v.r2) << ',' << fmt_double(r.test.delta.rmse) << ','
        << opt(r.test.delta.nrmse) << ',' << fmt_double(r.test.delta.r2) << '\n';
  return out.str();
}

inline nlohmann::json summary_json(const std::vector<SummaryRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const SummaryRow& r : rows)
    arr.push_back({{"case", r.case_name},
                   {"arch", r.arch},
                   {"runs", r.runs},
                   {"nrmse", {{"mean", r.mean_nrmse}, {"min", r.min_nrmse}, {"max", r.max_nrmse}}},
                   {"r2", {{"mean", r.mean_r2}, {"min", r.min_r2}, {"max", r.max_r2}}},
                   {"test_loss_mean", r.mean_test_loss}});
  return nlohmann::json{{"results", arr}};
}

}  // namespace gridflow
