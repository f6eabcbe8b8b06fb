#pragma once

// Graph view of a triangular mesh: neighborhoods, degrees, geometric edge
// weights e_ij and degree normalizers c_ij = sqrt(|N(i)|) * sqrt(|N(j)|).

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/mesh.hpp"

namespace icegcn {

enum class EdgeKernel {
  inverse_exp,  // exp(-1/d): grows with distance
  exp_decay,    // exp(-d): shrinks with distance
};

inline std::string_view to_string(EdgeKernel k) {
  return k == EdgeKernel::inverse_exp ? "inverse-exp" : "exp-decay";
}

inline EdgeKernel parse_kernel(std::string_view s) {
  if (s == "inverse-exp") return EdgeKernel::inverse_exp;
  if (s == "exp-decay") return EdgeKernel::exp_decay;
  throw ConfigError("unknown edge kernel '" + std::string(s) + "'");
}

/// Edge weight for two distinct nodes `distance_km` apart.
inline double edge_weight(double distance_km, EdgeKernel kernel) {
  if (!(distance_km > 0.0) || !std::isfinite(distance_km)) {
    throw DegenerateEdgeError("edge weight needs a positive finite distance");
  }
  return kernel == EdgeKernel::inverse_exp ? std::exp(-1.0 / distance_km) : std::exp(-distance_km);
}

struct GraphOptions {
  bool self_loops = true;
  EdgeKernel kernel = EdgeKernel::inverse_exp;
};

/// Immutable CSR adjacency over mesh nodes. Neighbor lists are sorted;
/// with self-loops on, i is in N(i), counted in the degree, and e_ii = 1.
class MeshGraph {
 public:
  MeshGraph(Mesh mesh, GraphOptions options = {}) : mesh_(std::move(mesh)), options_(options) {
    build();
  }

  const Mesh& mesh() const noexcept { return mesh_; }
  const GraphOptions& options() const noexcept { return options_; }
  std::size_t node_count() const noexcept { return mesh_.node_count(); }
  std::size_t directed_edge_count() const noexcept { return indices_.size(); }

  std::size_t degree(std::size_t i) const { return offsets_.at(i + 1) - offsets_[i]; }
  std::span<const std::size_t> neighbors(std::size_t i) const { return slice(indices_, i); }
  std::span<const double> edge_weights(std::size_t i) const { return slice(weights_, i); }
  std::span<const double> normalizers(std::size_t i) const { return slice(normalizers_, i); }
  /// Propagation coefficients e_ij / c_ij.
  std::span<const double> coefficients(std::size_t i) const { return slice(coefficients_, i); }

 private:
  template <class T>
  std::span<const T> slice(const std::vector<T>& v, std::size_t i) const {
    return std::span<const T>(v).subspan(offsets_.at(i), offsets_.at(i + 1) - offsets_[i]);
  }

  void build() {
    const std::size_t n = mesh_.node_count();
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& t : mesh_.elements()) {
      for (int k = 0; k < 3; ++k) {
        adj[t[k]].push_back(t[(k + 1) % 3]);
        adj[t[(k + 1) % 3]].push_back(t[k]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (options_.self_loops) adj[i].push_back(i);
      std::sort(adj[i].begin(), adj[i].end());
      adj[i].erase(std::unique(adj[i].begin(), adj[i].end()), adj[i].end());
    }

    offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + adj[i].size();
    indices_.reserve(offsets_[n]);
    weights_.reserve(offsets_[n]);
    normalizers_.reserve(offsets_[n]);
    coefficients_.reserve(offsets_[n]);
    const auto nodes = mesh_.nodes();
    for (std::size_t i = 0; i < n; ++i) {
      const double di = std::sqrt(static_cast<double>(adj[i].size()));
      for (std::size_t j : adj[i]) {
        double e = 1.0;
        if (j != i) {
          const double d = std::hypot(nodes[i].x - nodes[j].x, nodes[i].y - nodes[j].y);
          if (!(d > 0.0)) {
            throw DegenerateEdgeError("connected nodes " + std::to_string(i) + " and " +
                                      std::to_string(j) + " coincide");
          }
          e = edge_weight(d, options_.kernel);
        }
        const double c = di * std::sqrt(static_cast<double>(adj[j].size()));
        indices_.push_back(j);
        weights_.push_back(e);
        normalizers_.push_back(c);
        coefficients_.push_back(e / c);
      }
    }
  }

  Mesh mesh_;
  GraphOptions options_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> indices_;
  std::vector<double> weights_;
  std::vector<double> normalizers_;
  std::vector<double> coefficients_;
};

inline MeshGraph build_graph(const Mesh& mesh, GraphOptions options = {}) {
  return MeshGraph(mesh, options);
}

}  // namespace icegcn
