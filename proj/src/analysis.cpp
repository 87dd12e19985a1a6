#include "s2v/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "s2v/csv.hpp"
#include "s2v/errors.hpp"

namespace s2v::analysis {

std::size_t EmbeddingMatrix::index_of(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw LookupError("label '" + label + "' not found in embedding '" + feature + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

template <class T>
EmbeddingMatrix extract_embeddings(const nn::ForecastModel<T>& model, const std::string& feature,
                                   const std::vector<std::string>& labels) {
  const nn::Embedding<T>* emb = model.embedding(feature);
  if (!emb) {
    std::string names;
    for (const auto& e : model.embeddings()) names += (names.empty() ? "" : ", ") + e.feature();
    throw LookupError("no embedding for feature '" + feature + "'; available: " +
                      (names.empty() ? std::string("(none)") : names));
  }
  if (labels.size() + 1 != emb->rows()) {
    throw SchemaError("embedding '" + feature + "' has " + std::to_string(emb->rows()) + " rows but " +
                      std::to_string(labels.size()) + " labels were given");
  }
  EmbeddingMatrix em;
  em.feature = feature;
  em.labels = labels;
  em.dim = emb->dim();
  const auto& w = emb->weight().data();
  em.values.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(labels.size() * em.dim));
  return em;
}

template EmbeddingMatrix extract_embeddings<float>(const nn::ForecastModel<float>&, const std::string&,
                                                   const std::vector<std::string>&);
template EmbeddingMatrix extract_embeddings<double>(const nn::ForecastModel<double>&, const std::string&,
                                                    const std::vector<std::string>&);

SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tol, std::size_t max_sweeps) {
  if (a.size() != n * n) throw DimensionError("jacobi_eigen: matrix is not n x n");
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto off = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a[i * n + j] * a[i * n + j];
    return std::sqrt(s);
  };
  SymmetricEigen out;
  while (out.sweeps < max_sweeps && off() > tol) {
    ++out.sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {  // A <- A J
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {  // A <- J^T A
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {  // V <- V J
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    out.values[r] = a[order[r] * n + order[r]];
    for (std::size_t k = 0; k < n; ++k) out.vectors[r * n + k] = v[k * n + order[r]];
  }
  return out;
}

PCAResult pca(const EmbeddingMatrix& em) {
  const std::size_t n = em.rows(), d = em.dim;
  if (n < 2) throw ContractError("pca needs at least 2 rows, got " + std::to_string(n));
  if (d == 0) throw ContractError("pca on zero-dimensional vectors");
  PCAResult r;
  r.dim = d;
  r.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) r.mean[j] += em.row(i)[j];
  for (double& m : r.mean) m /= static_cast<double>(n);
  std::vector<double> centred(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centred[i * d + j] = em.row(i)[j] - r.mean[j];
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += centred[i * d + a] * centred[i * d + b];
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] /= static_cast<double>(n - 1);
      cov[b * d + a] = cov[a * d + b];
    }
  double trace = 0.0;
  for (std::size_t a = 0; a < d; ++a) trace += cov[a * d + a];

  SymmetricEigen eig = jacobi_eigen(cov, d);
  r.eigenvalues = eig.values;
  r.components = eig.vectors;
  for (std::size_t k = 0; k < d; ++k) {
    double* row = r.components.data() + k * d;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::fabs(row[j]) > std::fabs(row[arg])) arg = j;
    if (row[arg] < 0)
      for (std::size_t j = 0; j < d; ++j) row[j] = -row[j];
  }
  r.ratios.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    // Round-off can leave tiny negative eigenvalues for rank-deficient data.
    const double lam = std::max(r.eigenvalues[k], 0.0);
    r.ratios[k] = trace > 0 ? lam / trace : 1.0 / static_cast<double>(d);
  }
  const double total = std::accumulate(r.ratios.begin(), r.ratios.end(), 0.0);
  if (total > 0)
    for (double& x : r.ratios) x /= total;
  r.projections.assign(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += centred[i * d + j] * r.components[k * d + j];
      r.projections[i * d + k] = s;
    }
  return r;
}

double cosine_distance(const double* u, const double* v, std::size_t dim) {
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    uv += u[j] * v[j];
    uu += u[j] * u[j];
    vv += v[j] * v[j];
  }
  if (uu == 0.0 || vv == 0.0) throw DegenerateVectorError("cosine distance of a zero-norm vector");
  // Symmetric by construction: the product of norms commutes exactly.
  return 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingMatrix& em, const std::string& label, std::size_t k) {
  const std::size_t q = em.index_of(label);
  if (k >= em.rows()) {
    throw ContractError("k = " + std::to_string(k) + " must be smaller than the " + std::to_string(em.rows()) +
                        " labels");
  }
  std::vector<Neighbor> all;
  all.reserve(em.rows() - 1);
  for (std::size_t i = 0; i < em.rows(); ++i) {
    if (i == q) continue;
    try {
      all.push_back({em.labels[i], cosine_distance(em.row(q), em.row(i), em.dim)});
    } catch (const DegenerateVectorError&) {
      throw DegenerateVectorError("zero-norm embedding among '" + label + "' and '" + em.labels[i] + "'");
    }
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.label < b.label;
  });
  all.resize(k);
  return all;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  return out;
}

void check(std::ofstream& out, const std::filesystem::path& p) {
  out.flush();
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

}  // namespace

void export_report(const std::filesystem::path& dir, const EmbeddingMatrix& em, const PCAResult& result,
                   const std::map<std::string, std::string>& group_of, const std::vector<NeighborTable>& neighbors) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  const std::size_t d = result.dim;

  const auto proj_path = dir / "projections.csv";
  auto proj = open_out(proj_path);
  std::vector<std::string> fields{"label", "group"};
  for (std::size_t k = 0; k < d; ++k) fields.push_back("pc" + std::to_string(k + 1));
  csv::write_row(proj, fields);
  for (std::size_t i = 0; i < em.rows(); ++i) {
    fields.clear();
    fields.push_back(em.labels[i]);
    auto it = group_of.find(em.labels[i]);
    fields.push_back(it == group_of.end() ? "" : it->second);
    for (std::size_t k = 0; k < d; ++k) fields.push_back(csv::format_double(result.projections[i * d + k]));
    csv::write_row(proj, fields);
  }
  check(proj, proj_path);

  const auto var_path = dir / "variance.csv";
  auto var = open_out(var_path);
  csv::write_row(var, {"component", "ratio", "cumulative"});
  double cum = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    cum += result.ratios[k];
    csv::write_row(var, {std::to_string(k + 1), csv::format_double(result.ratios[k]), csv::format_double(cum)});
  }
  check(var, var_path);

  const auto nb_path = dir / "neighbors.csv";
  auto nb = open_out(nb_path);
  csv::write_row(nb, {"query", "rank", "neighbor", "distance"});
  for (const auto& t : neighbors)
    for (std::size_t r = 0; r < t.neighbors.size(); ++r)
      csv::write_row(nb, {t.query, std::to_string(r + 1), t.neighbors[r].label,
                          csv::format_double(t.neighbors[r].distance)});
  check(nb, nb_path);
}

}  // namespace s2v::analysis
