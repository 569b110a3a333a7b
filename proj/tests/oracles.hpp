#pragma once

// Independent test oracles: dense linear algebra, brute-force statistics and
// classic iterative schemes used to pin the sparse/Laplace implementations.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "coxmap/model.hpp"
#include "coxmap/rng.hpp"

namespace oracles {

// log-determinant through dense partial-pivoting LU
inline double dense_log_det(const Eigen::MatrixXd& m) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) sum += std::log(std::fabs(lu.matrixLU()(i, i)));
  return sum;
}

// conditional mean/variance of component l given the rest, from the precision
inline std::pair<double, double> dense_conditional(const Eigen::MatrixXd& precision,
                                                   const Eigen::VectorXd& x, int l) {
  double acc = 0.0;
  for (Eigen::Index m = 0; m < x.size(); ++m)
    if (m != l) acc += precision(l, m) * x[m];
  return {-acc / precision(l, l), 1.0 / precision(l, l)};
}

// conditional Gaussian mean under A x = e from dense covariance algebra
inline Eigen::VectorXd dense_constrained_mean(const Eigen::VectorXd& mean,
                                              const Eigen::MatrixXd& precision,
                                              const Eigen::MatrixXd& a,
                                              const Eigen::VectorXd& e) {
  const Eigen::MatrixXd sigma = precision.inverse();
  const Eigen::MatrixXd sat = sigma * a.transpose();
  const Eigen::MatrixXd asat = a * sat;
  return mean - sat * asat.ldlt().solve(a * mean - e);
}

// O(n^2) pairwise concordance with ties at 0.5
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double concordant = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        concordant += 1.0;
      else if (scores[i] == scores[j])
        concordant += 0.5;
    }
  }
  return concordant / static_cast<double>(pairs);
}

// Poisson GLM maximum likelihood by iteratively reweighted least squares
inline Eigen::VectorXd irls_poisson(const Eigen::MatrixXd& design,
                                    const std::vector<int>& counts, double offset_log,
                                    int max_iter = 200) {
  const Eigen::Index p = design.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = std::exp(eta[i] + offset_log);
    Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      score += (counts[i] - mu[i]) * design.row(i).transpose();
      xtwx += mu[i] * design.row(i).transpose() * design.row(i);
    }
    const Eigen::VectorXd step = xtwx.ldlt().solve(score);
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-12) break;
  }
  return beta;
}

// scalar root on [lo, hi] by bisection
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double tol = 1e-12) {
  double flo = f(lo);
  for (int i = 0; i < 200 && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = f(mid);
    if ((flo <= 0.0) == (fmid <= 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// random connected graph: random spanning tree plus extra random edges
inline coxmap::AdjacencyGraph random_connected_graph(int n, coxmap::CounterRng& rng,
                                                     int extra_edges = 4) {
  std::vector<std::pair<int, int>> edges;
  for (int v = 1; v < n; ++v)
    edges.emplace_back(v, static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(v)));
  for (int t = 0; t < extra_edges; ++t) {
    const int a = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n));
    const int b = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n));
    if (a != b) edges.emplace_back(a, b);
  }
  return coxmap::AdjacencyGraph::from_edges(n, edges);
}

// random symmetric positive definite matrix with unit-scale eigenvalues
inline Eigen::MatrixXd random_spd(int n, coxmap::CounterRng& rng) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.normal();
  return m * m.transpose() / static_cast<double>(n) + Eigen::MatrixXd::Identity(n, n) * 0.5;
}

// small pixel table with the given covariate columns and counts
inline coxmap::PixelTable make_table(const std::vector<int>& counts,
                                     const std::vector<int>& units,
                                     const std::vector<std::string>& cov_names,
                                     const std::vector<std::vector<double>>& cov_columns,
                                     double cell_area = 1.0) {
  coxmap::PixelTable t;
  const std::size_t n = counts.size();
  t.cell_area = cell_area;
  t.count = counts;
  t.unit_id = units;
  t.pixel_id.resize(n);
  t.x.assign(n, 0.0);
  t.y.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) t.pixel_id[i] = static_cast<long long>(i);
  t.covariate_names = cov_names;
  t.covariates = cov_columns;
  return t;
}

}  // namespace oracles
