#include "s2v/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "s2v/csv.hpp"
#include "s2v/errors.hpp"

namespace s2v::data {

Date parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  auto bad = [&] { return LoadError("invalid ISO-8601 date '" + text + "'"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    auto r = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    if (r.ec != std::errc() || r.ptr != text.data() + pos + len) throw bad();
  };
  num(0, 4, y);
  num(5, 2, m);
  num(8, 2, d);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw bad();
  return Date{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

Vocabulary::Vocabulary(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  labels_ = std::move(labels);
  for (std::size_t i = 0; i < labels_.size(); ++i) index_[labels_[i]] = static_cast<std::int32_t>(i);
}

std::int32_t Vocabulary::lookup(const std::string& label) const {
  auto it = index_.find(label);
  return it == index_.end() ? unk() : it->second;
}

void finalize(TabularDataset& ds) {
  std::stable_sort(ds.rows.begin(), ds.rows.end(), [](const Row& a, const Row& b) {
    return a.series_id != b.series_id ? a.series_id < b.series_id : a.date < b.date;
  });
  for (std::size_t i = 1; i < ds.rows.size(); ++i) {
    if (ds.rows[i].series_id == ds.rows[i - 1].series_id && ds.rows[i].date == ds.rows[i - 1].date) {
      throw LoadError("duplicate row for series '" + ds.rows[i].series_id + "' on " +
                      format_date(ds.rows[i].date));
    }
  }
  ds.vocabularies.clear();
  for (std::size_t f = 0; f < ds.schema.categorical.size(); ++f) {
    std::vector<std::string> labels;
    labels.reserve(ds.rows.size());
    for (const auto& r : ds.rows) labels.push_back(r.cats[f]);
    ds.vocabularies.emplace_back(std::move(labels));
  }
}

namespace {

double parse_number(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && e[-1] == ' ') --e;
  if (b < e && *b == '+') ++b;
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e || !std::isfinite(v)) {
    throw LoadError("line " + std::to_string(line) + ": column '" + column +
                    "' has unparseable value '" + s + "'");
  }
  return v;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' '; });
}

}  // namespace

TabularDataset read_csv(std::istream& in, const Schema& schema, const std::string& source) {
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw DataError(source + ": empty dataset (no header)");
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw LoadError(source + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t date_col = column("date");
  const std::size_t id_col = column("series_id");
  const std::size_t target_col = column("target");
  std::vector<std::size_t> cat_cols, cont_cols;
  for (const auto& c : schema.categorical) cat_cols.push_back(column(c));
  for (const auto& c : schema.continuous) cont_cols.push_back(column(c));
  const bool has_group = !schema.group_column.empty();
  const std::size_t group_col = has_group ? column(schema.group_column) : 0;

  TabularDataset ds;
  ds.schema = schema;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::size_t line = reader.line();
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      throw LoadError(source + ": line " + std::to_string(line) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    Row row;
    try {
      row.date = parse_date(fields[date_col]);
    } catch (const LoadError& e) {
      throw LoadError(source + ": line " + std::to_string(line) + ": " + e.what());
    }
    row.series_id = fields[id_col];
    if (row.series_id.empty()) {
      throw LoadError(source + ": line " + std::to_string(line) + ": empty series_id");
    }
    bool missing = is_blank(fields[target_col]);
    for (std::size_t c : cont_cols) missing = missing || is_blank(fields[c]);
    if (missing) {
      ++ds.dropped_missing;
      continue;
    }
    for (std::size_t c : cat_cols) row.cats.push_back(fields[c]);
    for (std::size_t k = 0; k < cont_cols.size(); ++k)
      row.conts.push_back(parse_number(fields[cont_cols[k]], line, schema.continuous[k]));
    row.target = parse_number(fields[target_col], line, "target");
    if (has_group) row.group = fields[group_col];
    ds.rows.push_back(std::move(row));
  }
  if (ds.rows.empty()) throw DataError(source + ": empty dataset (no data rows)");
  finalize(ds);
  return ds;
}

TabularDataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_csv(in, schema, path);
}

void write_csv(const TabularDataset& ds, std::ostream& out) {
  std::vector<std::string> header{"date", "series_id"};
  for (const auto& c : ds.schema.categorical) header.push_back(c);
  const bool group_extra =
      !ds.schema.group_column.empty() &&
      std::find(ds.schema.categorical.begin(), ds.schema.categorical.end(),
                ds.schema.group_column) == ds.schema.categorical.end();
  if (group_extra) header.push_back(ds.schema.group_column);
  for (const auto& c : ds.schema.continuous) header.push_back(c);
  header.push_back("target");
  csv::write_row(out, header);
  std::vector<std::string> fields;
  for (const auto& r : ds.rows) {
    fields.clear();
    fields.push_back(format_date(r.date));
    fields.push_back(r.series_id);
    for (const auto& c : r.cats) fields.push_back(c);
    if (group_extra) fields.push_back(r.group);
    for (double v : r.conts) fields.push_back(csv::format_double(v));
    fields.push_back(csv::format_double(r.target));
    csv::write_row(out, fields);
  }
}

void write_csv(const TabularDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(ds, out);
  if (!out) throw IoError("write failed for '" + path + "'");
}

Split chrono_split(const TabularDataset& ds, Date valid_start, Date test_start) {
  if (!(valid_start < test_start)) {
    throw SplitError("valid_start " + format_date(valid_start) + " must precede test_start " +
                     format_date(test_start));
  }
  Split s;
  for (auto* part : {&s.train, &s.valid, &s.test}) part->schema = ds.schema;
  for (const auto& r : ds.rows) {
    if (r.date < valid_start) s.train.rows.push_back(r);
    else if (r.date < test_start) s.valid.rows.push_back(r);
    else s.test.rows.push_back(r);
  }
  const char* names[] = {"train", "valid", "test"};
  int k = 0;
  for (auto* part : {&s.train, &s.valid, &s.test}) {
    if (part->rows.empty()) {
      throw SplitError(std::string(names[k]) + " partition is empty (valid_start " +
                       format_date(valid_start) + ", test_start " + format_date(test_start) + ")");
    }
    ++k;
  }
  finalize(s.train);
  s.valid.vocabularies = s.train.vocabularies;
  s.test.vocabularies = s.train.vocabularies;
  return s;
}

ColumnScaler ColumnScaler::fit(const std::vector<double>& values) {
  ColumnScaler s;
  if (values.empty()) return s;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  s.mean = mean;
  s.std = std::max(std::sqrt(var), 1e-12);
  return s;
}

std::string to_string(TargetMode mode) { return mode == TargetMode::level ? "level" : "change"; }

TargetMode parse_target_mode(const std::string& name) {
  if (name == "level") return TargetMode::level;
  if (name == "change") return TargetMode::change;
  throw ConfigError("unknown target mode '" + name + "' (expected level or change)");
}

double Encoder::encode_target(double y, double anchor) const {
  return target.transform(mode == TargetMode::change ? y - anchor : y);
}

double Encoder::decode_target(double scaled, double anchor) const {
  const double v = target.inverse(scaled);
  return mode == TargetMode::change ? v + anchor : v;
}

double Encoder::encode_history(double h, double anchor) const {
  return mode == TargetMode::change ? (h - anchor) / target.std : target.transform(h);
}

Encoder Encoder::fit(const TabularDataset& train, TargetMode mode) {
  if (train.empty()) throw DataError("cannot fit encoder on an empty training split");
  Encoder e;
  e.mode = mode;
  e.schema = train.schema;
  e.vocabularies = train.vocabularies;
  if (e.vocabularies.size() != train.schema.categorical.size()) {
    TabularDataset copy = train;
    finalize(copy);
    e.vocabularies = copy.vocabularies;
  }
  for (std::size_t c = 0; c < train.schema.continuous.size(); ++c) {
    std::vector<double> col;
    col.reserve(train.rows.size());
    for (const auto& r : train.rows) col.push_back(r.conts[c]);
    e.continuous.push_back(ColumnScaler::fit(col));
  }
  std::vector<double> targets;
  if (mode == TargetMode::level) {
    for (const auto& r : train.rows) targets.push_back(r.target);
  } else {
    // Rows are ordered by (series, date) after finalize.
    for (std::size_t i = 1; i < train.rows.size(); ++i)
      if (train.rows[i].series_id == train.rows[i - 1].series_id)
        targets.push_back(train.rows[i].target - train.rows[i - 1].target);
    if (targets.empty()) throw DataError("change targets need at least two rows of one series in training");
  }
  e.target = ColumnScaler::fit(targets);
  return e;
}

nlohmann::json Encoder::to_json() const {
  nlohmann::json vocabs = nlohmann::json::array();
  for (const auto& v : vocabularies) vocabs.push_back(v.labels());
  nlohmann::json conts = nlohmann::json::array();
  for (const auto& s : continuous) conts.push_back({s.mean, s.std});
  return {{"categorical", schema.categorical},
          {"continuous", schema.continuous},
          {"group_column", schema.group_column},
          {"vocabularies", vocabs},
          {"continuous_scalers", conts},
          {"target_mode", to_string(mode)},
          {"target_scaler", {target.mean, target.std}}};
}

Encoder Encoder::from_json(const nlohmann::json& j) {
  try {
    Encoder e;
    e.schema.categorical = j.at("categorical").get<std::vector<std::string>>();
    e.schema.continuous = j.at("continuous").get<std::vector<std::string>>();
    e.schema.group_column = j.at("group_column").get<std::string>();
    for (const auto& v : j.at("vocabularies")) e.vocabularies.emplace_back(v.get<std::vector<std::string>>());
    for (const auto& s : j.at("continuous_scalers"))
      e.continuous.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    e.target = {j.at("target_scaler").at(0).get<double>(), j.at("target_scaler").at(1).get<double>()};
    e.mode = parse_target_mode(j.at("target_mode").get<std::string>());
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed encoder metadata: ") + ex.what());
  }
}

std::vector<WindowedSample> make_windows(const TabularDataset& ds, std::size_t window,
                                         const Encoder& encoder) {
  if (window == 0) throw ContractError("window length must be >= 1");
  if (encoder.schema.categorical != ds.schema.categorical ||
      encoder.schema.continuous != ds.schema.continuous) {
    throw SchemaError("dataset columns do not match the fitted encoder");
  }
  // Rows may come from any source; order them by (series, date) first.
  std::vector<std::size_t> order(ds.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Row& ra = ds.rows[a];
    const Row& rb = ds.rows[b];
    return ra.series_id != rb.series_id ? ra.series_id < rb.series_id : ra.date < rb.date;
  });

  std::vector<WindowedSample> out;
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start;
    while (end < order.size() && ds.rows[order[end]].series_id == ds.rows[order[start]].series_id) ++end;
    for (std::size_t j = 1; j < end - start; ++j) {
      const Row& row = ds.rows[order[start + j]];
      const double anchor = ds.rows[order[start + j - 1]].target;
      WindowedSample s;
      s.series_id = row.series_id;
      s.group = row.group;
      s.date = row.date;
      for (std::size_t f = 0; f < row.cats.size(); ++f)
        s.cats.push_back(encoder.vocabularies[f].lookup(row.cats[f]));
      for (std::size_t c = 0; c < row.conts.size(); ++c)
        s.conts.push_back(encoder.continuous[c].transform(row.conts[c]));
      const std::size_t avail = std::min(j, window);
      s.history.assign(window, encoder.encode_history(ds.rows[order[start]].target, anchor));
      for (std::size_t k = 0; k < avail; ++k)
        s.history[window - avail + k] = encoder.encode_history(ds.rows[order[start + j - avail + k]].target, anchor);
      s.padded = j < window;
      s.anchor = anchor;
      s.target_raw = row.target;
      s.target = encoder.encode_target(row.target, anchor);
      out.push_back(std::move(s));
    }
    start = end;
  }
  return out;
}

std::vector<WindowedSample> select_dates(const std::vector<WindowedSample>& samples, Date begin,
                                         Date end) {
  std::vector<WindowedSample> out;
  for (const auto& s : samples)
    if (!(s.date < begin) && s.date < end) out.push_back(s);
  return out;
}

template <class T>
nn::Batch<T> make_batch(const std::vector<WindowedSample>& samples,
                        const std::vector<std::size_t>& indices, std::size_t window) {
  nn::Batch<T> b;
  const std::size_t B = indices.size();
  const std::size_t n_cat = B ? samples[indices[0]].cats.size() : 0;
  const std::size_t n_cont = B ? samples[indices[0]].conts.size() : 0;
  b.cats.assign(n_cat, std::vector<std::int32_t>(B));
  std::vector<T> conts(B * n_cont), hist(B * window), target(B);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& s = samples[indices[i]];
    if (s.history.size() != window) throw WindowError("sample history length != window");
    for (std::size_t f = 0; f < n_cat; ++f) b.cats[f][i] = s.cats[f];
    for (std::size_t c = 0; c < n_cont; ++c) conts[i * n_cont + c] = static_cast<T>(s.conts[c]);
    for (std::size_t t = 0; t < window; ++t) hist[i * window + t] = static_cast<T>(s.history[t]);
    target[i] = static_cast<T>(s.target);
  }
  b.conts = nn::Tensor<T>({B, n_cont}, std::move(conts));
  b.history = nn::Tensor<T>({B, 1, window}, std::move(hist));
  b.target = nn::Tensor<T>({B, 1}, std::move(target));
  return b;
}

ModelSpec spec_for(ModelKind kind, const Encoder& encoder, std::size_t embedding_max_dim) {
  ModelSpec s;
  s.kind = kind;
  for (std::size_t f = 0; f < encoder.schema.categorical.size(); ++f) {
    const std::size_t card = encoder.vocabularies.at(f).size();
    s.categoricals.push_back({encoder.schema.categorical[f], card, embedding_dim(card, embedding_max_dim)});
  }
  s.num_continuous = encoder.schema.continuous.size();
  s.history_channels = 1;
  return s;
}

template nn::Batch<float> make_batch<float>(const std::vector<WindowedSample>&,
                                            const std::vector<std::size_t>&, std::size_t);
template nn::Batch<double> make_batch<double>(const std::vector<WindowedSample>&,
                                              const std::vector<std::size_t>&, std::size_t);

}  // namespace s2v::data
