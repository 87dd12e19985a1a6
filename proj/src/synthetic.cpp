#include "s2v/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "s2v/errors.hpp"
#include "s2v/rng.hpp"

namespace s2v::data {

namespace {

const char* const kWeekdays[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};

unsigned iso_weekday(Date d) { return std::chrono::weekday{d}.iso_encoding() - 1; }

}  // namespace

std::string symbol_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%03zu", i);
  return buf;
}

std::string group_name(std::size_t g) { return "G" + std::to_string(g); }

SyntheticPaths simulate(const SyntheticConfig& cfg) {
  if (cfg.groups < 1 || cfg.series < cfg.groups) throw ContractError("synthetic: need series >= groups >= 1");
  if (cfg.days < 30) throw ContractError("synthetic: need days >= 30");
  if (!(cfg.holiday_rate >= 0.0 && cfg.holiday_rate < 1.0)) throw ContractError("synthetic: holiday_rate must be in [0, 1)");
  if (!(cfg.base_min > 0.0 && cfg.base_max >= cfg.base_min)) throw ContractError("synthetic: invalid base price range");

  const std::size_t K = cfg.series, G = cfg.groups, N = cfg.days;
  Rng cal_rng(sub_seed(cfg.seed, "synthetic.calendar"));
  Rng fac_rng(sub_seed(cfg.seed, "synthetic.factor"));
  Rng ser_rng(sub_seed(cfg.seed, "synthetic.series"));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticPaths p;
  for (Date d = cfg.start; p.dates.size() < N; d += std::chrono::days{1}) {
    if (iso_weekday(d) >= 5) continue;
    if (unif(cal_rng) < cfg.holiday_rate) continue;
    p.dates.push_back(d);
  }

  // Per-group weekday effect, centred over Mon..Fri.
  std::vector<std::array<double, 5>> cal(G);
  for (auto& c : cal) {
    double mean = 0.0;
    for (double& v : c) {
      v = cfg.calendar_scale * normal(fac_rng);
      mean += v;
    }
    for (double& v : c) v -= mean / 5.0;
  }
  p.factor.assign(G, std::vector<double>(N, 0.0));
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t t = 1; t < N; ++t)
      p.factor[g][t] = cal[g][iso_weekday(p.dates[t - 1])] + cfg.factor_vol * normal(fac_rng);

  p.group_of.resize(K);
  p.prices.assign(K, std::vector<double>(N));
  for (std::size_t i = 0; i < K; ++i) {
    const std::size_t g = i % G;
    p.group_of[i] = g;
    const double beta = 0.8 + 0.4 * unif(ser_rng);
    const double base = cfg.base_min + (cfg.base_max - cfg.base_min) * unif(ser_rng);
    double logp = std::log(base);
    double a = 0.0;
    p.prices[i][0] = base;
    for (std::size_t t = 1; t < N; ++t) {
      const double u = normal(ser_rng);
      const double e = normal(ser_rng);
      a = cfg.ar_coef * a + cfg.noise_scale * cfg.ar_vol * u;
      logp += beta * p.factor[g][t] + a + cfg.noise_scale * cfg.noise_vol * e;
      p.prices[i][t] = std::exp(logp);
    }
  }
  return p;
}

Schema synthetic_schema() {
  return Schema{{"symbol", "group", "day_of_week", "month"}, {"lag1_price", "ma5", "ma20"}, "group"};
}

TabularDataset gen_synthetic(const SyntheticConfig& cfg) {
  const SyntheticPaths p = simulate(cfg);
  TabularDataset ds;
  ds.schema = synthetic_schema();
  const std::size_t N = cfg.days;
  for (std::size_t i = 0; i < cfg.series; ++i) {
    const auto& px = p.prices[i];
    for (std::size_t t = 19; t + 1 < N; ++t) {
      Row r;
      r.date = p.dates[t];
      r.series_id = symbol_name(i);
      r.group = group_name(p.group_of[i]);
      const std::chrono::year_month_day ymd{r.date};
      char month[4];
      std::snprintf(month, sizeof month, "%02u", static_cast<unsigned>(ymd.month()));
      r.cats = {r.series_id, r.group, kWeekdays[iso_weekday(r.date)], month};
      double ma5 = 0.0, ma20 = 0.0;
      for (std::size_t k = 0; k < 20; ++k) {
        ma20 += px[t - k];
        if (k < 5) ma5 += px[t - k];
      }
      r.conts = {px[t], ma5 / 5.0, ma20 / 20.0};
      r.target = px[t + 1];
      ds.rows.push_back(std::move(r));
    }
  }
  finalize(ds);
  return ds;
}

}  // namespace s2v::data
