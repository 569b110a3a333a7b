#pragma once

#include <string>
#include <utility>
#include <vector>

namespace coxmap {

/// Areal-unit neighborhood structure: symmetric, no self-loops, sorted
/// neighbor lists. Immutable after construction.
class AdjacencyGraph {
 public:
  AdjacencyGraph() = default;

  /// Validates indices, rejects self-loops, symmetrizes, deduplicates.
  static AdjacencyGraph from_edges(int n_units, const std::vector<std::pair<int, int>>& edges);
  /// Rook-neighborhood lattice of tiles_x * tiles_y units (row-major ids).
  static AdjacencyGraph tile_grid(int tiles_x, int tiles_y);

  int n_units() const { return n_units_; }
  const std::vector<int>& neighbors(int unit) const { return neighbors_[unit]; }
  int degree(int unit) const { return static_cast<int>(neighbors_[unit].size()); }

  /// Connected-component label per unit (labels 0..n_components-1).
  std::vector<int> component_labels() const;
  int n_components() const;

 private:
  int n_units_ = 0;
  std::vector<std::vector<int>> neighbors_;
};

/// CSV with header `unit_id,neighbor_id`, one undirected edge per line.
/// n_units = -1 infers max index + 1.
AdjacencyGraph load_adjacency_csv(const std::string& path, int n_units = -1);
void save_adjacency_csv(const std::string& path, const AdjacencyGraph& graph);

}  // namespace coxmap
