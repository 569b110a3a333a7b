#pragma once

#include "coxmap/graph.hpp"
#include "coxmap/sparse.hpp"

namespace coxmap {

/// Intrinsic CAR precision Q = tau * (D - A): Q_ll = n_l * tau,
/// Q_lm = -tau iff m is a neighbor of l. Rank n - n_components.
SparseSymmetric build_car_precision(const AdjacencyGraph& graph, double tau);

/// First-order random-walk precision, tau times the second-difference matrix.
/// Non-cyclic: tridiagonal with diagonal pattern (1, 2, ..., 2, 1).
/// Cyclic: circulant with diagonal 2 and -1 on the wrap-around off-diagonals.
/// Either way rank n_bins - 1.
SparseSymmetric build_rw1_precision(int n_bins, double tau, bool cyclic);

/// Relative diagonal jitter applied when an intrinsic block must be
/// factorized standalone (see gmrf design notes).
inline constexpr double kIntrinsicJitter = 1e-5;

}  // namespace coxmap
