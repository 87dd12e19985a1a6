#include "s2v/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "s2v/csv.hpp"
#include "s2v/errors.hpp"

namespace s2v::metrics {

namespace {

std::string describe(const ForecastRecord& r) {
  return "series '" + r.series_id + "' on " + data::format_date(r.date);
}

}  // namespace

MetricReport compute_metrics(const ForecastSet& fs) {
  if (fs.empty()) throw MetricError("cannot compute metrics over an empty forecast set");
  double se = 0.0, ae = 0.0, ape = 0.0, spe = 0.0;
  for (const auto& r : fs) {
    if (!std::isfinite(r.y) || !std::isfinite(r.y_hat)) throw MetricError("non-finite value for " + describe(r));
    if (std::fabs(r.y) <= kPercentEps) {
      throw MetricError("percentage metrics undefined: |y| <= 1e-12 for " + describe(r));
    }
    const double e = r.y - r.y_hat;
    const double p = e / r.y;
    se += e * e;
    ae += std::fabs(e);
    ape += std::fabs(p);
    spe += p * p;
  }
  const double H = static_cast<double>(fs.size());
  MetricReport m;
  m.count = fs.size();
  m.rmse = std::sqrt(se / H);
  m.mae = ae / H;
  m.mape = 100.0 * ape / H;
  m.rmspe = 100.0 * std::sqrt(spe / H);
  m.dist = error_distribution(fs);
  return m;
}

std::map<std::string, MetricReport> aggregate(const ForecastSet& fs, GroupBy by) {
  std::map<std::string, ForecastSet> parts;
  for (const auto& r : fs) parts[by == GroupBy::series ? r.series_id : r.group].push_back(r);
  std::map<std::string, MetricReport> out;
  for (const auto& [key, part] : parts) out.emplace(key, compute_metrics(part));
  return out;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw MetricError("quantile of an empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ErrorDistribution error_distribution(const ForecastSet& fs) {
  if (fs.empty()) throw MetricError("error distribution of an empty forecast set");
  std::vector<double> abs_err;
  abs_err.reserve(fs.size());
  for (const auto& r : fs) abs_err.push_back(std::fabs(r.y - r.y_hat));
  std::sort(abs_err.begin(), abs_err.end());
  return {quantile_sorted(abs_err, 0.5), quantile_sorted(abs_err, 0.75) - quantile_sorted(abs_err, 0.25)};
}

void write_report_csv(std::ostream& out, const std::vector<std::pair<std::string, MetricReport>>& rows) {
  csv::write_row(out, {"key", "rmse", "mae", "mape", "rmspe", "H", "median_abs_err", "iqr"});
  for (const auto& [key, m] : rows) {
    csv::write_row(out, {key, csv::format_double(m.rmse), csv::format_double(m.mae), csv::format_double(m.mape),
                         csv::format_double(m.rmspe), std::to_string(m.count),
                         csv::format_double(m.dist.median_abs_err), csv::format_double(m.dist.iqr)});
  }
}

void print_report_table(std::ostream& out, const std::string& title,
                        const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::size_t w = 5;
  for (const auto& [key, m] : rows) w = std::max(w, key.size());
  out << title << '\n';
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %9s %9s %7s %12s\n", static_cast<int>(w), "key", "RMSE", "MAE",
                "MAPE", "RMSPE", "H", "median(IQR)");
  out << buf;
  for (const auto& [key, m] : rows) {
    char dist[64];
    std::snprintf(dist, sizeof dist, "%.2f (%.2f)", m.dist.median_abs_err, m.dist.iqr);
    std::snprintf(buf, sizeof buf, "%-*s %10.4f %10.4f %9.4f %9.4f %7zu %12s\n", static_cast<int>(w), key.c_str(),
                  m.rmse, m.mae, m.mape, m.rmspe, m.count, dist);
    out << buf;
  }
}

void write_predictions_csv(std::ostream& out, const ForecastSet& fs) {
  csv::write_row(out, {"date", "series_id", "group", "y", "y_hat"});
  for (const auto& r : fs) {
    csv::write_row(out, {data::format_date(r.date), r.series_id, r.group, csv::format_double(r.y),
                         csv::format_double(r.y_hat)});
  }
}

}  // namespace s2v::metrics
