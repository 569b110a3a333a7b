#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <memory>
#include <vector>

#include "coxmap/error.hpp"

namespace coxmap {

struct SparseEntry {
  int row;
  int col;
  double value;
};

/// Symmetric sparse matrix storing only the upper triangle (row <= col),
/// entries sorted column-major. Immutable after construction.
class SparseSymmetric {
 public:
  SparseSymmetric() = default;

  /// Sorts, merges duplicates, drops explicit zeros, validates finiteness.
  /// Entries may arrive in either triangle; they are folded to the upper one.
  static SparseSymmetric from_triplets(int dim, std::vector<SparseEntry> entries);

  int dim() const { return dim_; }
  const std::vector<SparseEntry>& entries() const { return entries_; }

  Eigen::SparseMatrix<double> to_eigen_full() const;
  Eigen::MatrixXd to_dense() const;
  std::vector<double> row_sums() const;

  SparseSymmetric scaled(double factor) const;
  /// Adds eps to every diagonal position (inserting missing diagonals).
  SparseSymmetric with_jitter(double eps) const;
  /// sa*a + sb*b over the union pattern.
  static SparseSymmetric add(const SparseSymmetric& a, double sa, const SparseSymmetric& b,
                             double sb);

 private:
  int dim_ = 0;
  std::vector<SparseEntry> entries_;
};

/// Hard equality constraints A x = e with dense rows.
struct LinearConstraint {
  Eigen::MatrixXd rows;  // c x n
  Eigen::VectorXd rhs;   // c

  int count() const { return static_cast<int>(rows.rows()); }
  bool empty() const { return rows.rows() == 0; }
  static LinearConstraint none() { return LinearConstraint{Eigen::MatrixXd(), Eigen::VectorXd()}; }
  /// Stack rows of two constraint sets over the same dimension.
  static LinearConstraint stack(const LinearConstraint& a, const LinearConstraint& b);
};

/// Simplicial sparse Cholesky P Q P^T = L L^T with AMD fill-reducing ordering.
/// analyze() is pattern-only and reusable across values with the same pattern
/// (refactorization across hyperparameter values reuses the symbolic step).
class SparseCholesky {
 public:
  SparseCholesky() = default;

  void analyze(const SparseSymmetric& pattern);
  /// Numeric factorization; q must have the analyzed pattern.
  void factorize(const SparseSymmetric& q);
  /// Same, from a raw value array aligned with the analyzed pattern's entry order.
  void factorize_values(const double* values, std::size_t count);

  bool analyzed() const { return n_ > 0; }
  bool factorized() const { return factorized_; }
  int dim() const { return n_; }
  double log_determinant() const;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve_matrix(const Eigen::MatrixXd& b) const;
  /// x with covariance Q^{-1} from a standard normal vector z.
  Eigen::VectorXd sample(const Eigen::VectorXd& std_normal) const;

  /// permutation()[original] = position in the factor ordering.
  const std::vector<int>& permutation() const { return perm_; }

  /// Entries of Q^{-1} on the filled factor pattern (Takahashi recursion).
  /// Lookups are in ORIGINAL index space; all pairs (i,j) present in the
  /// factorized matrix's pattern are available, the diagonal always is.
  class PartialInverse {
   public:
    double diagonal(int i) const;
    double operator()(int i, int j) const;

   private:
    friend class SparseCholesky;
    const SparseCholesky* owner_ = nullptr;
    std::vector<double> values_;  // aligned with L's storage
    double lookup_permuted(int pi, int pj) const;
  };
  PartialInverse partial_inverse() const;

 private:
  int n_ = 0;
  bool factorized_ = false;
  std::vector<int> perm_;   // original -> permuted
  std::vector<int> iperm_;  // permuted -> original
  // permuted upper-triangular input pattern (CSC, diagonal included)
  std::vector<int> ap_col_ptr_, ap_row_;
  std::vector<int> ap_slot_of_entry_;  // input entry order -> ap slot
  std::vector<double> ap_values_;
  int pattern_entry_count_ = 0;
  // elimination tree and factor (CSC, diagonal first in each column)
  std::vector<int> etree_;
  std::vector<int> l_col_ptr_, l_row_;
  std::vector<double> l_values_;

  int ereach(int k, std::vector<int>& visit_mark, std::vector<int>& stack,
             std::vector<int>& out) const;
  void forward_solve(double* x) const;
  void backward_solve(double* x) const;
  int find_in_column(int col, int row) const;  // index into l storage, -1 if absent
};

/// Convenience analyze+factorize.
SparseCholesky factorize(const SparseSymmetric& q);

/// Precomputed pieces of the conditioning-by-kriging correction for a fixed
/// factor and constraint set: V = Q^{-1} A^T and M = A V.
class ConstraintSolve {
 public:
  ConstraintSolve(const SparseCholesky& factor, const LinearConstraint& constraint);

  const LinearConstraint& constraint() const { return constraint_; }
  /// m - V M^{-1} (A m - e)
  Eigen::VectorXd correct_mean(const Eigen::VectorXd& mean) const;
  /// Reduction of the marginal variance of component i under the constraint.
  double variance_reduction(int i) const;
  /// Same for a sparse linear functional sum_k w_k x_{idx_k}.
  double variance_reduction(const std::vector<std::pair<int, double>>& functional) const;
  /// 0.5 * logdet(A Q^{-1} A^T)
  double half_log_det() const { return half_log_det_; }

 private:
  LinearConstraint constraint_;
  Eigen::MatrixXd v_;  // n x c
  Eigen::LDLT<Eigen::MatrixXd> m_ldlt_;
  double half_log_det_ = 0.0;
};

/// Conditioning by kriging: returns m - Q^{-1}A^T (A Q^{-1} A^T)^{-1} (A m - e).
Eigen::VectorXd constrain_mean(const Eigen::VectorXd& mean, const SparseCholesky& factor,
                               const LinearConstraint& constraint);

}  // namespace coxmap
