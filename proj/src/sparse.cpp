#include "coxmap/sparse.hpp"

#include <Eigen/OrderingMethods>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace coxmap {

SparseSymmetric SparseSymmetric::from_triplets(int dim, std::vector<SparseEntry> entries) {
  if (dim <= 0) throw Error("E_SPARSE", "matrix dimension must be positive");
  for (auto& e : entries) {
    if (e.row < 0 || e.col < 0 || e.row >= dim || e.col >= dim)
      throw Error("E_SPARSE", "entry index out of range");
    if (!std::isfinite(e.value)) throw Error("E_SPARSE", "non-finite matrix entry");
    if (e.row > e.col) std::swap(e.row, e.col);
  }
  std::sort(entries.begin(), entries.end(), [](const SparseEntry& a, const SparseEntry& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  SparseSymmetric out;
  out.dim_ = dim;
  out.entries_.reserve(entries.size());
  for (const auto& e : entries) {
    if (!out.entries_.empty() && out.entries_.back().row == e.row &&
        out.entries_.back().col == e.col) {
      out.entries_.back().value += e.value;
    } else {
      out.entries_.push_back(e);
    }
  }
  std::erase_if(out.entries_, [](const SparseEntry& e) { return e.value == 0.0; });
  return out;
}

Eigen::SparseMatrix<double> SparseSymmetric::to_eigen_full() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(entries_.size() * 2);
  for (const auto& e : entries_) {
    trips.emplace_back(e.row, e.col, e.value);
    if (e.row != e.col) trips.emplace_back(e.col, e.row, e.value);
  }
  Eigen::SparseMatrix<double> m(dim_, dim_);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

Eigen::MatrixXd SparseSymmetric::to_dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& e : entries_) {
    m(e.row, e.col) = e.value;
    m(e.col, e.row) = e.value;
  }
  return m;
}

std::vector<double> SparseSymmetric::row_sums() const {
  std::vector<double> sums(dim_, 0.0);
  for (const auto& e : entries_) {
    sums[e.row] += e.value;
    if (e.row != e.col) sums[e.col] += e.value;
  }
  return sums;
}

SparseSymmetric SparseSymmetric::scaled(double factor) const {
  SparseSymmetric out = *this;
  for (auto& e : out.entries_) e.value *= factor;
  std::erase_if(out.entries_, [](const SparseEntry& e) { return e.value == 0.0; });
  return out;
}

SparseSymmetric SparseSymmetric::with_jitter(double eps) const {
  std::vector<SparseEntry> entries = entries_;
  for (int i = 0; i < dim_; ++i) entries.push_back({i, i, eps});
  return from_triplets(dim_, std::move(entries));
}

SparseSymmetric SparseSymmetric::add(const SparseSymmetric& a, double sa, const SparseSymmetric& b,
                                     double sb) {
  if (a.dim_ != 0 && b.dim_ != 0 && a.dim_ != b.dim_)
    throw Error("E_SPARSE", "dimension mismatch in sparse add");
  int dim = std::max(a.dim_, b.dim_);
  std::vector<SparseEntry> entries;
  entries.reserve(a.entries_.size() + b.entries_.size());
  for (const auto& e : a.entries_) entries.push_back({e.row, e.col, sa * e.value});
  for (const auto& e : b.entries_) entries.push_back({e.row, e.col, sb * e.value});
  return from_triplets(dim, std::move(entries));
}

LinearConstraint LinearConstraint::stack(const LinearConstraint& a, const LinearConstraint& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.rows.cols() != b.rows.cols())
    throw Error("E_CONSTRAINT", "constraint dimension mismatch");
  LinearConstraint out;
  out.rows.resize(a.count() + b.count(), a.rows.cols());
  out.rows << a.rows, b.rows;
  out.rhs.resize(a.count() + b.count());
  out.rhs << a.rhs, b.rhs;
  return out;
}

// ---------------------------------------------------------------------------
// Symbolic analysis: AMD ordering, elimination tree, column counts.
// ---------------------------------------------------------------------------

void SparseCholesky::analyze(const SparseSymmetric& pattern) {
  n_ = pattern.dim();
  factorized_ = false;
  pattern_entry_count_ = static_cast<int>(pattern.entries().size());

  // AMD on the full symmetric pattern.
  {
    Eigen::SparseMatrix<double> full = pattern.to_eigen_full();
    Eigen::AMDOrdering<int> amd;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p;
    amd(full, p);
    perm_.assign(n_, 0);
    iperm_.assign(n_, 0);
    // Eigen convention: (P A P^T)(p(i), p(j)) = A(i, j) with p = indices().
    for (int i = 0; i < n_; ++i) perm_[i] = p.indices()[i];
    for (int i = 0; i < n_; ++i) iperm_[perm_[i]] = i;
  }

  // Permuted upper pattern with the diagonal forced present.
  struct Pos {
    int row, col, source;  // source: input entry index, or -1 for inserted diagonal
  };
  std::vector<Pos> pos;
  pos.reserve(pattern.entries().size() + n_);
  {
    const auto& entries = pattern.entries();
    for (int k = 0; k < static_cast<int>(entries.size()); ++k) {
      int r = perm_[entries[k].row];
      int c = perm_[entries[k].col];
      if (r > c) std::swap(r, c);
      pos.push_back({r, c, k});
    }
    for (int i = 0; i < n_; ++i) pos.push_back({i, i, -1});
  }
  std::sort(pos.begin(), pos.end(), [](const Pos& a, const Pos& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });

  ap_col_ptr_.assign(n_ + 1, 0);
  ap_row_.clear();
  ap_slot_of_entry_.assign(pattern.entries().size(), -1);
  for (std::size_t k = 0; k < pos.size(); ++k) {
    const bool duplicate = !ap_row_.empty() && k > 0 && pos[k].col == pos[k - 1].col &&
                           pos[k].row == pos[k - 1].row;
    if (!duplicate) {
      ap_row_.push_back(pos[k].row);
      ap_col_ptr_[pos[k].col + 1] += 1;
    }
    if (pos[k].source >= 0) ap_slot_of_entry_[pos[k].source] = static_cast<int>(ap_row_.size()) - 1;
  }
  for (int c = 0; c < n_; ++c) ap_col_ptr_[c + 1] += ap_col_ptr_[c];
  ap_values_.assign(ap_row_.size(), 0.0);

  // Elimination tree from the upper pattern (path compression via ancestors).
  etree_.assign(n_, -1);
  std::vector<int> ancestor(n_, -1);
  for (int k = 0; k < n_; ++k) {
    for (int p = ap_col_ptr_[k]; p < ap_col_ptr_[k + 1]; ++p) {
      int i = ap_row_[p];
      while (i != -1 && i < k) {
        int next = ancestor[i];
        ancestor[i] = k;
        if (next == -1) etree_[i] = k;
        i = next;
      }
    }
  }

  // Column counts of L via row subtree traversal (ereach per row).
  std::vector<int> counts(n_, 1);  // diagonal
  {
    std::vector<int> mark(n_, -1), stack(n_), reach(n_);
    for (int k = 0; k < n_; ++k) {
      int len = ereach(k, mark, stack, reach);
      for (int t = 0; t < len; ++t) counts[reach[t]] += 1;
    }
  }
  l_col_ptr_.assign(n_ + 1, 0);
  for (int c = 0; c < n_; ++c) l_col_ptr_[c + 1] = l_col_ptr_[c] + counts[c];
  l_row_.assign(l_col_ptr_[n_], 0);
  l_values_.assign(l_col_ptr_[n_], 0.0);
}

// Pattern of row k of L (excluding the diagonal), i.e. nonzero columns j < k,
// returned in topological order with respect to the elimination tree.
int SparseCholesky::ereach(int k, std::vector<int>& visit_mark, std::vector<int>& stack,
                           std::vector<int>& out) const {
  int top = n_;
  visit_mark[k] = k;
  for (int p = ap_col_ptr_[k]; p < ap_col_ptr_[k + 1]; ++p) {
    int i = ap_row_[p];
    if (i >= k) continue;
    int len = 0;
    while (visit_mark[i] != k) {
      stack[len++] = i;
      visit_mark[i] = k;
      i = etree_[i];
    }
    while (len > 0) out[--top] = stack[--len];
  }
  const int count = n_ - top;
  // compact to the front of `out`, preserving order
  if (top != 0) std::memmove(out.data(), out.data() + top, count * sizeof(int));
  return count;
}

// ---------------------------------------------------------------------------
// Numeric factorization (up-looking).
// ---------------------------------------------------------------------------

void SparseCholesky::factorize(const SparseSymmetric& q) {
  if (!analyzed()) analyze(q);
  if (q.dim() != n_ || static_cast<int>(q.entries().size()) != pattern_entry_count_)
    throw Error("E_SPARSE", "factorize: pattern does not match the analyzed one");
  std::vector<double> vals(q.entries().size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = q.entries()[i].value;
  factorize_values(vals.data(), vals.size());
}

void SparseCholesky::factorize_values(const double* values, std::size_t count) {
  if (!analyzed()) throw Error("E_SPARSE", "factorize_values before analyze");
  if (static_cast<int>(count) != pattern_entry_count_)
    throw Error("E_SPARSE", "factorize_values: entry count mismatch");

  std::fill(ap_values_.begin(), ap_values_.end(), 0.0);
  for (std::size_t k = 0; k < count; ++k) ap_values_[ap_slot_of_entry_[k]] += values[k];

  std::vector<int> cursor(n_);
  for (int c = 0; c < n_; ++c) {
    cursor[c] = l_col_ptr_[c] + 1;  // slot 0 of each column is the diagonal
    l_row_[l_col_ptr_[c]] = c;
  }
  std::vector<int> mark(n_, -1), stack(n_), reach(n_);
  std::vector<double> x(n_, 0.0);

  for (int k = 0; k < n_; ++k) {
    // scatter column k of the permuted upper input
    double d = 0.0;
    for (int p = ap_col_ptr_[k]; p < ap_col_ptr_[k + 1]; ++p) {
      if (ap_row_[p] == k)
        d = ap_values_[p];
      else
        x[ap_row_[p]] = ap_values_[p];
    }
    const int len = ereach(k, mark, stack, reach);
    for (int t = 0; t < len; ++t) {
      const int j = reach[t];
      const double ljj = l_values_[l_col_ptr_[j]];
      const double lkj = x[j] / ljj;
      x[j] = 0.0;
      for (int p = l_col_ptr_[j] + 1; p < cursor[j]; ++p) x[l_row_[p]] -= l_values_[p] * lkj;
      d -= lkj * lkj;
      l_row_[cursor[j]] = k;
      l_values_[cursor[j]] = lkj;
      cursor[j] += 1;
    }
    if (!(d > 0.0) || !std::isfinite(d))
      throw NotPositiveDefiniteError(k, iperm_[k],
                                     "non-positive-definite pivot at index " +
                                         std::to_string(iperm_[k]) + " (ordering position " +
                                         std::to_string(k) + ")");
    l_values_[l_col_ptr_[k]] = std::sqrt(d);
  }
  factorized_ = true;
}

double SparseCholesky::log_determinant() const {
  if (!factorized_) throw Error("E_SPARSE", "log_determinant before factorize");
  double sum = 0.0;
  for (int c = 0; c < n_; ++c) sum += std::log(l_values_[l_col_ptr_[c]]);
  return 2.0 * sum;
}

void SparseCholesky::forward_solve(double* x) const {
  for (int j = 0; j < n_; ++j) {
    x[j] /= l_values_[l_col_ptr_[j]];
    for (int p = l_col_ptr_[j] + 1; p < l_col_ptr_[j + 1]; ++p)
      x[l_row_[p]] -= l_values_[p] * x[j];
  }
}

void SparseCholesky::backward_solve(double* x) const {
  for (int j = n_ - 1; j >= 0; --j) {
    for (int p = l_col_ptr_[j] + 1; p < l_col_ptr_[j + 1]; ++p)
      x[j] -= l_values_[p] * x[l_row_[p]];
    x[j] /= l_values_[l_col_ptr_[j]];
  }
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const {
  if (!factorized_) throw Error("E_SPARSE", "solve before factorize");
  if (b.size() != n_) throw Error("E_SPARSE", "solve: size mismatch");
  Eigen::VectorXd work(n_), out(n_);
  for (int i = 0; i < n_; ++i) work[perm_[i]] = b[i];
  forward_solve(work.data());
  backward_solve(work.data());
  for (int i = 0; i < n_; ++i) out[i] = work[perm_[i]];
  return out;
}

Eigen::MatrixXd SparseCholesky::solve_matrix(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd out(b.rows(), b.cols());
  for (Eigen::Index c = 0; c < b.cols(); ++c) out.col(c) = solve(b.col(c));
  return out;
}

Eigen::VectorXd SparseCholesky::sample(const Eigen::VectorXd& std_normal) const {
  if (!factorized_) throw Error("E_SPARSE", "sample before factorize");
  if (std_normal.size() != n_) throw Error("E_SPARSE", "sample: size mismatch");
  Eigen::VectorXd work = std_normal;
  backward_solve(work.data());
  Eigen::VectorXd out(n_);
  for (int i = 0; i < n_; ++i) out[i] = work[perm_[i]];
  return out;
}

int SparseCholesky::find_in_column(int col, int row) const {
  const int lo = l_col_ptr_[col], hi = l_col_ptr_[col + 1];
  const int* first = l_row_.data() + lo;
  const int* last = l_row_.data() + hi;
  const int* it = std::lower_bound(first, last, row);
  if (it == last || *it != row) return -1;
  return static_cast<int>(it - l_row_.data());
}

// ---------------------------------------------------------------------------
// Takahashi partial inversion over the factor pattern.
// ---------------------------------------------------------------------------

SparseCholesky::PartialInverse SparseCholesky::partial_inverse() const {
  if (!factorized_) throw Error("E_SPARSE", "partial_inverse before factorize");
  PartialInverse out;
  out.owner_ = this;
  out.values_.assign(l_values_.size(), 0.0);

  // Sigma_ij (j >= i) = (delta_ij / L_ii - sum_{k>i} L_ki Sigma_kj) / L_ii,
  // swept for i = n-1..0 over the fill pattern, which is closed under the
  // pairs the recursion touches.
  auto lookup = [&](int a, int b) -> double {  // a >= b, both > current i
    const int p = find_in_column(b, a);
    return out.values_[p];
  };

  for (int i = n_ - 1; i >= 0; --i) {
    const int lo = l_col_ptr_[i], hi = l_col_ptr_[i + 1];
    const double lii = l_values_[lo];
    for (int t = hi - 1; t > lo; --t) {
      const int j = l_row_[t];
      double s = 0.0;
      for (int u = lo + 1; u < hi; ++u) {
        const int k = l_row_[u];
        s += l_values_[u] * (k >= j ? lookup(k, j) : lookup(j, k));
      }
      out.values_[t] = -s / lii;
    }
    double s = 0.0;
    for (int u = lo + 1; u < hi; ++u) s += l_values_[u] * out.values_[u];
    out.values_[lo] = (1.0 / lii - s) / lii;
  }
  return out;
}

double SparseCholesky::PartialInverse::lookup_permuted(int pi, int pj) const {
  if (pi < pj) std::swap(pi, pj);
  const int p = owner_->find_in_column(pj, pi);
  if (p < 0)
    throw Error("E_SPARSE", "partial inverse entry outside the factor pattern");
  return values_[p];
}

double SparseCholesky::PartialInverse::diagonal(int i) const {
  const int pi = owner_->perm_[i];
  return values_[owner_->l_col_ptr_[pi]];
}

double SparseCholesky::PartialInverse::operator()(int i, int j) const {
  return lookup_permuted(owner_->perm_[i], owner_->perm_[j]);
}

SparseCholesky factorize(const SparseSymmetric& q) {
  SparseCholesky chol;
  chol.analyze(q);
  chol.factorize(q);
  return chol;
}

// ---------------------------------------------------------------------------
// Constraint handling (conditioning by kriging).
// ---------------------------------------------------------------------------

ConstraintSolve::ConstraintSolve(const SparseCholesky& factor, const LinearConstraint& constraint)
    : constraint_(constraint) {
  if (constraint.empty()) return;
  if (constraint.rows.cols() != factor.dim())
    throw Error("E_CONSTRAINT", "constraint dimension mismatch");
  v_ = factor.solve_matrix(constraint.rows.transpose());
  Eigen::MatrixXd m = constraint.rows * v_;
  m_ldlt_.compute(m);
  const Eigen::VectorXd d = m_ldlt_.vectorD();
  const double dmax = d.maxCoeff();
  if (!(dmax > 0.0) || d.minCoeff() <= dmax * 1e-12)
    throw Error("E_CONSTRAINT", "redundant constraints");
  half_log_det_ = 0.5 * d.array().log().sum();
}

Eigen::VectorXd ConstraintSolve::correct_mean(const Eigen::VectorXd& mean) const {
  if (constraint_.empty()) return mean;
  Eigen::VectorXd residual = constraint_.rows * mean - constraint_.rhs;
  return mean - v_ * m_ldlt_.solve(residual);
}

double ConstraintSolve::variance_reduction(int i) const {
  if (constraint_.empty()) return 0.0;
  Eigen::VectorXd vi = v_.row(i).transpose();
  return vi.dot(m_ldlt_.solve(vi));
}

double ConstraintSolve::variance_reduction(
    const std::vector<std::pair<int, double>>& functional) const {
  if (constraint_.empty()) return 0.0;
  Eigen::VectorXd va = Eigen::VectorXd::Zero(v_.cols());
  for (const auto& [idx, w] : functional) va += w * v_.row(idx).transpose();
  return va.dot(m_ldlt_.solve(va));
}

Eigen::VectorXd constrain_mean(const Eigen::VectorXd& mean, const SparseCholesky& factor,
                               const LinearConstraint& constraint) {
  ConstraintSolve cs(factor, constraint);
  return cs.correct_mean(mean);
}

}  // namespace coxmap
