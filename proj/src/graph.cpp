#include "coxmap/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "coxmap/error.hpp"

namespace coxmap {

AdjacencyGraph AdjacencyGraph::from_edges(int n_units,
                                          const std::vector<std::pair<int, int>>& edges) {
  if (n_units <= 0) throw Error("E_GRAPH", "graph must have at least one unit");
  AdjacencyGraph g;
  g.n_units_ = n_units;
  g.neighbors_.assign(n_units, {});
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_units || b >= n_units)
      throw Error("E_GRAPH", "edge references unit outside [0, n_units)");
    if (a == b) throw Error("E_GRAPH", "self-loop on unit " + std::to_string(a));
    g.neighbors_[a].push_back(b);
    g.neighbors_[b].push_back(a);
  }
  for (auto& nb : g.neighbors_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return g;
}

AdjacencyGraph AdjacencyGraph::tile_grid(int tiles_x, int tiles_y) {
  if (tiles_x <= 0 || tiles_y <= 0) throw Error("E_GRAPH", "tile grid dimensions must be positive");
  std::vector<std::pair<int, int>> edges;
  for (int y = 0; y < tiles_y; ++y) {
    for (int x = 0; x < tiles_x; ++x) {
      const int id = y * tiles_x + x;
      if (x + 1 < tiles_x) edges.emplace_back(id, id + 1);
      if (y + 1 < tiles_y) edges.emplace_back(id, id + tiles_x);
    }
  }
  return from_edges(tiles_x * tiles_y, edges);
}

std::vector<int> AdjacencyGraph::component_labels() const {
  std::vector<int> label(n_units_, -1);
  std::vector<int> queue;
  int next = 0;
  for (int start = 0; start < n_units_; ++start) {
    if (label[start] != -1) continue;
    label[start] = next;
    queue.assign(1, start);
    while (!queue.empty()) {
      int u = queue.back();
      queue.pop_back();
      for (int v : neighbors_[u]) {
        if (label[v] == -1) {
          label[v] = next;
          queue.push_back(v);
        }
      }
    }
    ++next;
  }
  return label;
}

int AdjacencyGraph::n_components() const {
  auto labels = component_labels();
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

static int parse_int_field(const std::string& field, const std::string& path, std::size_t line) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw Error("E_GRAPH", path + ": non-integer field at line " + std::to_string(line));
  return value;
}

AdjacencyGraph load_adjacency_csv(const std::string& path, int n_units) {
  std::ifstream in(path);
  if (!in) throw Error("E_IO", "cannot open adjacency file " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("E_GRAPH", path + ": empty adjacency file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "unit_id,neighbor_id")
    throw Error("E_GRAPH", path + ": expected header `unit_id,neighbor_id`");
  std::vector<std::pair<int, int>> edges;
  std::size_t line_no = 1;
  int max_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error("E_GRAPH", path + ": missing comma at line " + std::to_string(line_no));
    int a = parse_int_field(line.substr(0, comma), path, line_no);
    int b = parse_int_field(line.substr(comma + 1), path, line_no);
    max_id = std::max({max_id, a, b});
    edges.emplace_back(a, b);
  }
  if (n_units < 0) n_units = max_id + 1;
  return AdjacencyGraph::from_edges(n_units, edges);
}

void save_adjacency_csv(const std::string& path, const AdjacencyGraph& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("E_IO", "cannot write adjacency file " + path);
  out << "unit_id,neighbor_id\n";
  for (int u = 0; u < graph.n_units(); ++u)
    for (int v : graph.neighbors(u))
      if (u < v) out << u << ',' << v << '\n';
}

}  // namespace coxmap
