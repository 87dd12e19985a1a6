#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "s2v/dataset.hpp"

namespace s2v::metrics {

struct ForecastRecord {
  std::string series_id;
  std::string group;
  data::Date date;
  double y = 0.0;
  double y_hat = 0.0;
};

using ForecastSet = std::vector<ForecastRecord>;

struct ErrorDistribution {
  double median_abs_err = 0.0;
  double iqr = 0.0;
};

struct MetricReport {
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;   // percent
  double rmspe = 0.0;  // percent
  std::size_t count = 0;
  ErrorDistribution dist;
};

inline constexpr double kPercentEps = 1e-12;

// Throws MetricError for an empty set, a non-finite value, or |y| <= 1e-12.
MetricReport compute_metrics(const ForecastSet& fs);

enum class GroupBy { series, group };
std::map<std::string, MetricReport> aggregate(const ForecastSet& fs, GroupBy by);

// Linear-interpolation (type 7) quantile of a sorted sample, q in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double q);
ErrorDistribution error_distribution(const ForecastSet& fs);

// `key,rmse,mae,mape,rmspe,H,median_abs_err,iqr`
void write_report_csv(std::ostream& out, const std::vector<std::pair<std::string, MetricReport>>& rows);
// Fixed-width table with one row per key.
void print_report_table(std::ostream& out, const std::string& title,
                        const std::vector<std::pair<std::string, MetricReport>>& rows);

// `date,series_id,group,y,y_hat`
void write_predictions_csv(std::ostream& out, const ForecastSet& fs);

}  // namespace s2v::metrics
