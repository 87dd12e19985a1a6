#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "s2v/models.hpp"

namespace s2v::data {

using Date = std::chrono::sys_days;

// ISO-8601 calendar date (YYYY-MM-DD).
Date parse_date(const std::string& text);
std::string format_date(Date d);

struct Schema {
  std::vector<std::string> categorical;
  std::vector<std::string> continuous;
  // Optional column used for per-group reporting; need not be a feature.
  std::string group_column;
};

struct Row {
  Date date;
  std::string series_id;
  std::vector<std::string> cats;
  std::vector<double> conts;
  double target = 0.0;
  std::string group;
};

// Sorted label set; index == position. Unknown labels map to unk() == size().
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  std::int32_t unk() const { return static_cast<std::int32_t>(labels_.size()); }
  std::int32_t lookup(const std::string& label) const;
  bool contains(const std::string& label) const { return index_.contains(label); }
  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const Vocabulary& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Rows ordered by (series_id, date).
struct TabularDataset {
  Schema schema;
  std::vector<Row> rows;
  std::vector<Vocabulary> vocabularies;  // one per categorical column
  std::size_t dropped_missing = 0;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

// Sorts rows, checks (series_id, date) uniqueness and rebuilds vocabularies.
void finalize(TabularDataset& ds);

// Header must contain date, series_id, every schema column and target.
// Rows with a missing (empty) continuous or target value are dropped and
// counted. Unknown extra columns are ignored.
TabularDataset load_csv(const std::string& path, const Schema& schema);
TabularDataset read_csv(std::istream& in, const Schema& schema, const std::string& source = "<stream>");
void write_csv(const TabularDataset& ds, const std::string& path);
void write_csv(const TabularDataset& ds, std::ostream& out);

struct Split {
  TabularDataset train, valid, test;
};

// Partition by date: [.., valid_start) train, [valid_start, test_start) valid,
// [test_start, ..) test. Every partition carries the training vocabularies.
Split chrono_split(const TabularDataset& ds, Date valid_start, Date test_start);

struct ColumnScaler {
  double mean = 0.0;
  double std = 1.0;  // floored at 1e-12

  static ColumnScaler fit(const std::vector<double>& values);
  double transform(double v) const { return (v - mean) / std; }
  double inverse(double v) const { return v * std + mean; }
};

// How targets and history values are scaled for the network.
//   level  : (y - mean) / std over training targets
//   change : (y - anchor - mean) / std over training one-step changes, where
//            the anchor is the series' last observed value before the row's
//            target (the row's own lag-1 value). History values become
//            (h - anchor) / std. Predictions are mapped back to price units.
enum class TargetMode { level, change };

std::string to_string(TargetMode mode);
TargetMode parse_target_mode(const std::string& name);

// Everything fitted on the training split: vocabularies and scalers.
struct Encoder {
  Schema schema;
  std::vector<Vocabulary> vocabularies;
  std::vector<ColumnScaler> continuous;
  TargetMode mode = TargetMode::change;
  ColumnScaler target;

  double encode_target(double y, double anchor) const;
  double decode_target(double scaled, double anchor) const;
  double encode_history(double h, double anchor) const;

  static Encoder fit(const TabularDataset& train, TargetMode mode = TargetMode::change);
  nlohmann::json to_json() const;
  static Encoder from_json(const nlohmann::json& j);
};

struct WindowedSample {
  std::string series_id;
  std::string group;
  Date date;                      // row date; the history ends here
  std::vector<std::int32_t> cats;
  std::vector<double> conts;      // scaled
  std::vector<double> history;    // scaled past target values, length == window
  double target = 0.0;            // scaled
  double target_raw = 0.0;
  double anchor = 0.0;            // last observed raw value (history's final entry)
  bool padded = false;
};

// One sample per row that has at least one earlier row in its series. The
// history of row j holds the targets of rows j-window .. j-1 (the series'
// values up to and including row j's date); shorter histories are
// left-padded with the earliest available value and flagged.
std::vector<WindowedSample> make_windows(const TabularDataset& ds, std::size_t window,
                                         const Encoder& encoder);

// Samples with valid_start <= date < end (Date::max() for open end).
std::vector<WindowedSample> select_dates(const std::vector<WindowedSample>& samples, Date begin,
                                         Date end);

template <class T>
nn::Batch<T> make_batch(const std::vector<WindowedSample>& samples,
                        const std::vector<std::size_t>& indices, std::size_t window);

// ModelSpec categorical/continuous fields derived from a fitted encoder.
ModelSpec spec_for(ModelKind kind, const Encoder& encoder, std::size_t embedding_max_dim = 50);

}  // namespace s2v::data
