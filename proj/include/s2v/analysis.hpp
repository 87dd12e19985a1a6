#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "s2v/models.hpp"

namespace s2v::analysis {

// Row-major |labels| x dim matrix.
struct EmbeddingMatrix {
  std::string feature;
  std::vector<std::string> labels;
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t rows() const { return labels.size(); }
  const double* row(std::size_t i) const { return values.data() + i * dim; }
  std::size_t index_of(const std::string& label) const;  // LookupError if absent
};

// Rows in vocabulary order; the reserved unknown-category row is excluded.
template <class T>
EmbeddingMatrix extract_embeddings(const nn::ForecastModel<T>& model, const std::string& feature,
                                   const std::vector<std::string>& labels);

struct SymmetricEigen {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // row-major, row k is the eigenvector of values[k]
  std::size_t sweeps = 0;
};

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is below `tol`.
SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tol = 1e-10, std::size_t max_sweeps = 100);

struct PCAResult {
  std::size_t dim = 0;
  std::vector<double> mean;
  std::vector<double> eigenvalues;
  std::vector<double> components;   // dim x dim, orthonormal rows
  std::vector<double> ratios;       // explained variance ratio per component
  std::vector<double> projections;  // rows x dim
};

// Sample covariance (divisor n-1) of the centred rows. Each component's
// largest-magnitude entry is made positive. Throws ContractError if rows < 2.
PCAResult pca(const EmbeddingMatrix& em);

double cosine_distance(const double* u, const double* v, std::size_t dim);

struct Neighbor {
  std::string label;
  double distance = 0.0;
};

// k nearest labels by cosine distance, ascending; ties by label.
std::vector<Neighbor> nearest_neighbors(const EmbeddingMatrix& em, const std::string& label, std::size_t k);

struct NeighborTable {
  std::string query;
  std::vector<Neighbor> neighbors;
};

// projections.csv (label, group, pc1..pcD), variance.csv (component, ratio,
// cumulative), neighbors.csv (query, rank, neighbor, distance).
void export_report(const std::filesystem::path& dir, const EmbeddingMatrix& em, const PCAResult& result,
                   const std::map<std::string, std::string>& group_of, const std::vector<NeighborTable>& neighbors);

}  // namespace s2v::analysis
