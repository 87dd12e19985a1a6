#pragma once

#include <cstdint>

#include "s2v/dataset.hpp"

namespace s2v::data {

// Synthetic market. Series i belongs to group i % G. Daily log return:
//   r_i[t] = beta_i * f_g[t] + a_i[t] + noise
//   f_g[t] = cal_g[weekday of day t-1] + factor_vol * z
//   a_i[t] = ar_coef * a_i[t-1] + ar_vol * u
// The trading calendar is weekdays minus random holidays, so the weekday
// effect is visible through the row's day_of_week but not as a fixed period
// in the price history alone. noise_scale multiplies the AR innovation and
// the idiosyncratic noise.
struct SyntheticConfig {
  std::size_t series = 20;
  std::size_t groups = 4;
  std::size_t days = 750;
  std::uint64_t seed = 0;
  double factor_vol = 0.003;
  double calendar_scale = 0.015;
  double ar_coef = -0.8;
  double ar_vol = 0.01;
  double noise_vol = 0.002;
  double noise_scale = 1.0;
  double holiday_rate = 0.15;
  double base_min = 50.0;
  double base_max = 150.0;
  Date start = Date{std::chrono::year{2015} / 1 / 5};
};

// Raw simulated paths, before tabulation.
struct SyntheticPaths {
  std::vector<Date> dates;                  // trading days
  std::vector<std::vector<double>> prices;  // [series][day]
  std::vector<std::size_t> group_of;        // [series]
  std::vector<std::vector<double>> factor;  // [group][day] log-return of the group factor
};

SyntheticPaths simulate(const SyntheticConfig& cfg);

// Schema of the generated table: categorical {symbol, group, day_of_week,
// month}, continuous {lag1_price, ma5, ma20}, group column "group".
Schema synthetic_schema();

// One row per series and trading day t in [19, days-2]; target is the price
// on day t+1, lag1_price the price on day t.
TabularDataset gen_synthetic(const SyntheticConfig& cfg);

std::string symbol_name(std::size_t i);
std::string group_name(std::size_t g);

}  // namespace s2v::data
