#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "../support/oracles.hpp"
#include "../support/toy.hpp"
#include "s2v/analysis.hpp"
#include "s2v/checkpoint.hpp"
#include "s2v/errors.hpp"

using namespace s2v;
using namespace s2v::analysis;

namespace {

EmbeddingMatrix matrix(std::vector<std::string> labels, std::size_t dim, std::vector<double> values) {
  EmbeddingMatrix em;
  em.feature = "f";
  em.labels = std::move(labels);
  em.dim = dim;
  em.values = std::move(values);
  return em;
}

EmbeddingMatrix random_matrix(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::vector<std::string> labels;
  std::vector<double> v;
  for (std::size_t i = 0; i < rows; ++i) labels.push_back("L" + std::to_string(i));
  for (std::size_t i = 0; i < rows * dim; ++i) v.push_back(n(rng));
  return matrix(labels, dim, v);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("s2v_analysis_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

// ---------------------------------------------------------------- extraction

TEST(Extract, FreshModelRowsAreTheInitialWeights) {
  const nn::ForecastModel<float> m(s2v::testing::toy_spec(ModelKind::stock2vec), 11);
  const auto em = extract_embeddings(m, "symbol", {"AAA", "BBB", "CCC"});
  const auto* emb = m.embedding("symbol");
  ASSERT_EQ(em.rows(), 3u);
  EXPECT_EQ(em.dim, emb->dim());
  for (std::size_t i = 0; i < em.rows() * em.dim; ++i)
    EXPECT_EQ(em.values[i], static_cast<double>(emb->weight().data()[i]));
  EXPECT_EQ(em.index_of("BBB"), 1u);
  EXPECT_THROW(em.index_of("ZZZ"), LookupError);
}

TEST(Extract, UnknownFeatureListsTheAvailableOnes) {
  const nn::ForecastModel<float> m(s2v::testing::toy_spec(ModelKind::stock2vec), 11);
  try {
    extract_embeddings(m, "sector", {"a"});
    FAIL();
  } catch (const LookupError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("symbol"), std::string::npos);
    EXPECT_NE(msg.find("day"), std::string::npos);
  }
  EXPECT_THROW(extract_embeddings(m, "symbol", {"a"}), SchemaError);
  const nn::ForecastModel<float> ts(s2v::testing::toy_spec(ModelKind::ts_tcn), 11);
  EXPECT_THROW(extract_embeddings(ts, "symbol", {"a", "b", "c"}), LookupError);
}

TEST(Extract, FiveHundredThreeSymbolsAtFiftyDims) {
  ModelSpec s = s2v::testing::toy_spec(ModelKind::stock2vec);
  s.categoricals = {{"symbol", 503, embedding_dim(503)}};
  const nn::ForecastModel<float> m(s, 1);
  std::vector<std::string> labels;
  for (int i = 0; i < 503; ++i) labels.push_back("T" + std::to_string(i));
  const auto em = extract_embeddings(m, "symbol", labels);
  EXPECT_EQ(em.rows(), 503u);
  EXPECT_EQ(em.dim, 50u);
}

TEST(Extract, CheckpointRoundTripIsBitIdentical) {
  const nn::ForecastModel<float> m(s2v::testing::toy_spec(ModelKind::tcn_stock2vec), 12);
  const auto c = ckpt::deserialize(ckpt::serialize(ckpt::make_checkpoint(m, nullptr, 0, 0.0, {})));
  const auto m2 = ckpt::model_from_checkpoint<float>(c);
  const auto a = extract_embeddings(m, "day", {"Mon", "Tue", "Wed", "Thu"});
  const auto b = extract_embeddings(m2, "day", {"Mon", "Tue", "Wed", "Thu"});
  EXPECT_EQ(a.values, b.values);
}

// ---------------------------------------------------------------- eigen / pca

TEST(Jacobi, DiagonalMatrixNeedsNoSweeps) {
  const auto e = jacobi_eigen({3, 0, 0, 0, 1, 0, 0, 0, 2}, 3);
  EXPECT_EQ(e.sweeps, 0u);
  EXPECT_EQ(e.values, (std::vector<double>{3, 2, 1}));
}

TEST(Jacobi, TwoByTwoByHand) {
  // [[2,1],[1,2]] has eigenvalues 3 and 1 with eigenvectors (1,1)/√2, (1,-1)/√2
  const auto e = jacobi_eigen({2, 1, 1, 2}, 2);
  EXPECT_NEAR(e.values[0], 3.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
  EXPECT_NEAR(std::fabs(e.vectors[0]), std::sqrt(0.5), 1e-14);
  EXPECT_NEAR(e.vectors[0], e.vectors[1], 1e-14);
  EXPECT_THROW(jacobi_eigen({1, 2, 3}, 2), DimensionError);
}

TEST(Jacobi, MatchesReferenceSolverOnRandomSymmetricMatrices) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 12;
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) a[i * n + j] = a[j * n + i] = g(rng);
    const auto e = jacobi_eigen(a, n);
    const auto ref = s2v::testing::reference_eigenvalues(a, n);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(e.values[k], ref[k], 1e-8) << "n=" << n;
    // A v = λ v for every returned pair
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        double av = 0.0;
        for (std::size_t j = 0; j < n; ++j) av += a[i * n + j] * e.vectors[k * n + j];
        EXPECT_NEAR(av, e.values[k] * e.vectors[k * n + i], 1e-8);
      }
  }
}

TEST(Pca, PointsOnALine) {
  const auto r = pca(matrix({"a", "b", "c", "d"}, 2, {0, 0, 1, 2, 2, 4, -3, -6}));
  EXPECT_NEAR(r.ratios[0], 1.0, 1e-12);
  EXPECT_NEAR(r.ratios[1], 0.0, 1e-12);
  EXPECT_NEAR(r.components[0], 1 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(r.components[1], 2 / std::sqrt(5.0), 1e-12);
}

TEST(Pca, IsotropicCloudHasNearlyUniformRatios) {
  std::mt19937_64 rng(4);
  const auto r = pca(random_matrix(10000, 4, rng));
  for (double x : r.ratios) EXPECT_NEAR(x, 0.25, 0.02);
}

TEST(Pca, RatioLawOrthonormalityAndReconstruction) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 2 + trial % 20, dim = 1 + trial % 9;
    const auto em = random_matrix(rows, dim, rng);
    const auto r = pca(em);
    EXPECT_NEAR(std::accumulate(r.ratios.begin(), r.ratios.end(), 0.0), 1.0, 1e-9);
    for (std::size_t k = 0; k < dim; ++k) {
      EXPECT_GE(r.ratios[k], 0.0);
      if (k) EXPECT_LE(r.ratios[k], r.ratios[k - 1]);
      for (std::size_t l = 0; l < dim; ++l) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dim; ++j) dot += r.components[k * dim + j] * r.components[l * dim + j];
        EXPECT_NEAR(dot, k == l ? 1.0 : 0.0, 1e-8);
      }
      std::size_t arg = 0;
      for (std::size_t j = 1; j < dim; ++j)
        if (std::fabs(r.components[k * dim + j]) > std::fabs(r.components[k * dim + arg])) arg = j;
      EXPECT_GT(r.components[k * dim + arg], 0.0);
    }
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        double x = r.mean[j];
        for (std::size_t k = 0; k < dim; ++k) x += r.projections[i * dim + k] * r.components[k * dim + j];
        EXPECT_NEAR(x, em.row(i)[j], 1e-6);
      }
  }
}

TEST(Pca, EigenvaluesMatchReferenceCovarianceSpectrum) {
  std::mt19937_64 rng(6);
  const auto em = random_matrix(30, 7, rng);
  Eigen::MatrixXd x(30, 7);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 7; ++j) x(i, j) = em.row(i)[j];
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / 29.0;
  std::vector<double> flat(cov.data(), cov.data() + 49);
  const auto ref = s2v::testing::reference_eigenvalues(flat, 7);
  const auto r = pca(em);
  for (int k = 0; k < 7; ++k) EXPECT_NEAR(r.eigenvalues[k], ref[k], 1e-8);
}

TEST(Pca, TooFewRowsIsContractError) {
  EXPECT_THROW(pca(matrix({"a"}, 2, {1, 2})), ContractError);
}

// ---------------------------------------------------------------- neighbours

TEST(Cosine, HandValues) {
  const double a[] = {1, 0}, b[] = {1, 1}, c[] = {2, 2}, z[] = {0, 0};
  EXPECT_NEAR(cosine_distance(a, b, 2), 1 - std::sqrt(2.0) / 2, 1e-15);
  EXPECT_NEAR(cosine_distance(a, b, 2), 0.29289, 1e-5);
  EXPECT_NEAR(cosine_distance(b, c, 2), 0.0, 1e-15);
  EXPECT_EQ(cosine_distance(a, a, 2), 0.0);
  EXPECT_THROW(cosine_distance(a, z, 2), DegenerateVectorError);
}

TEST(Cosine, SymmetricAndRotationInvariant) {
  std::mt19937_64 rng(7);
  const auto em = random_matrix(12, 5, rng);
  Eigen::MatrixXd g = Eigen::MatrixXd::NullaryExpr(5, 5, [&] { return std::normal_distribution<double>()(rng); });
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  auto rotated = em;
  for (std::size_t i = 0; i < em.rows(); ++i) {
    Eigen::Map<const Eigen::VectorXd> v(em.row(i), 5);
    Eigen::VectorXd w = q * v;
    std::copy(w.data(), w.data() + 5, rotated.values.begin() + static_cast<std::ptrdiff_t>(i * 5));
  }
  for (std::size_t i = 0; i < em.rows(); ++i)
    for (std::size_t j = 0; j < em.rows(); ++j) {
      EXPECT_EQ(cosine_distance(em.row(i), em.row(j), 5), cosine_distance(em.row(j), em.row(i), 5));
      EXPECT_NEAR(cosine_distance(em.row(i), em.row(j), 5), cosine_distance(rotated.row(i), rotated.row(j), 5), 1e-9);
    }
}

TEST(Neighbors, DuplicateComesFirstAndTiesAreByLabel) {
  const auto em = matrix({"q", "far", "twin", "b_scaled", "a_scaled"}, 2, {1, 0, 0, 1, 1, 0, 3, 0, 0.5, 0});
  const auto nb = nearest_neighbors(em, "q", 4);
  ASSERT_EQ(nb.size(), 4u);
  EXPECT_EQ(nb[0].label, "a_scaled");
  EXPECT_EQ(nb[1].label, "b_scaled");
  EXPECT_EQ(nb[2].label, "twin");
  EXPECT_EQ(nb[3].label, "far");
  EXPECT_EQ(nb[0].distance, 0.0);
  EXPECT_NEAR(nb[3].distance, 1.0, 1e-15);
}

TEST(Neighbors, AscendingAndExcludesTheQuery) {
  std::mt19937_64 rng(8);
  const auto em = random_matrix(20, 6, rng);
  for (const auto& label : em.labels) {
    const auto nb = nearest_neighbors(em, label, 6);
    ASSERT_EQ(nb.size(), 6u);
    for (std::size_t r = 0; r < nb.size(); ++r) {
      EXPECT_NE(nb[r].label, label);
      if (r) EXPECT_LE(nb[r - 1].distance, nb[r].distance);
    }
  }
}

TEST(Neighbors, Errors) {
  const auto em = matrix({"a", "b", "z"}, 2, {1, 0, 0, 1, 0, 0});
  EXPECT_THROW(nearest_neighbors(em, "a", 2), DegenerateVectorError);
  EXPECT_THROW(nearest_neighbors(em, "a", 3), ContractError);
  EXPECT_THROW(nearest_neighbors(em, "nope", 1), LookupError);
}

// ---------------------------------------------------------------- export

TEST(Export, FilesAreStableAndConsistent) {
  std::mt19937_64 rng(9);
  const auto em = random_matrix(7, 3, rng);
  const auto r = pca(em);
  std::vector<NeighborTable> tables{{"L0", nearest_neighbors(em, "L0", 3)}};
  const std::map<std::string, std::string> groups{{"L0", "g0"}, {"L1", "g1"}};
  const auto d1 = scratch("a"), d2 = scratch("b");
  export_report(d1, em, r, groups, tables);
  export_report(d2, em, r, groups, tables);
  for (const char* f : {"projections.csv", "variance.csv", "neighbors.csv"}) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f));

  std::istringstream proj(slurp(d1 / "projections.csv"));
  std::string line;
  std::getline(proj, line);
  EXPECT_EQ(line, "label,group,pc1,pc2,pc3");
  std::size_t rows = 0;
  while (std::getline(proj, line)) ++rows;
  EXPECT_EQ(rows, em.rows());

  std::istringstream var(slurp(d1 / "variance.csv"));
  std::string last;
  while (std::getline(var, line)) last = line;
  EXPECT_NEAR(std::stod(last.substr(last.rfind(',') + 1)), 1.0, 1e-9);

  std::istringstream nb(slurp(d1 / "neighbors.csv"));
  std::getline(nb, line);
  EXPECT_EQ(line, "query,rank,neighbor,distance");
  std::getline(nb, line);
  EXPECT_EQ(line.rfind("L0,1,", 0), 0u);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(Export, UnwritableDirectoryIsIoError) {
  std::mt19937_64 rng(10);
  const auto em = random_matrix(3, 2, rng);
  const auto blocker = scratch("file");
  std::ofstream(blocker) << "x";
  try {
    export_report(blocker / "sub", em, pca(em), {}, {});
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(blocker.string()), std::string::npos);
  }
  std::filesystem::remove_all(blocker);
}
