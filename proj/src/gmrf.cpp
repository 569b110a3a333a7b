#include "coxmap/gmrf.hpp"

#include <string>

namespace coxmap {

SparseSymmetric build_car_precision(const AdjacencyGraph& graph, double tau) {
  if (!(tau > 0.0)) throw Error("E_GMRF", "CAR precision requires tau > 0");
  const int n = graph.n_units();
  std::vector<SparseEntry> entries;
  for (int l = 0; l < n; ++l) {
    const int deg = graph.degree(l);
    if (deg == 0)
      throw Error("E_GMRF", "unit with no neighbors: " + std::to_string(l));
    entries.push_back({l, l, deg * tau});
    for (int m : graph.neighbors(l))
      if (l < m) entries.push_back({l, m, -tau});
  }
  return SparseSymmetric::from_triplets(n, std::move(entries));
}

SparseSymmetric build_rw1_precision(int n_bins, double tau, bool cyclic) {
  if (n_bins < 2) throw Error("E_GMRF", "degenerate random walk: n_bins < 2");
  if (cyclic && n_bins < 3) throw Error("E_GMRF", "cyclic random walk requires n_bins >= 3");
  if (!(tau > 0.0)) throw Error("E_GMRF", "RW1 precision requires tau > 0");
  std::vector<SparseEntry> entries;
  if (cyclic) {
    for (int i = 0; i < n_bins; ++i) entries.push_back({i, i, 2.0 * tau});
    for (int i = 0; i + 1 < n_bins; ++i) entries.push_back({i, i + 1, -tau});
    entries.push_back({0, n_bins - 1, -tau});
  } else {
    for (int i = 0; i < n_bins; ++i)
      entries.push_back({i, i, (i == 0 || i == n_bins - 1) ? tau : 2.0 * tau});
    for (int i = 0; i + 1 < n_bins; ++i) entries.push_back({i, i + 1, -tau});
  }
  return SparseSymmetric::from_triplets(n_bins, std::move(entries));
}

}  // namespace coxmap
