#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "icegcn/graph.hpp"
#include "icegcn/matrix.hpp"
#include "icegcn/mesh.hpp"

namespace icegcn::ref {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = u(rng);
  return m;
}

/// Row-major triple loop, summing over k in ascending order.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

/// Every unordered node pair that shares an element.
inline std::set<std::pair<std::size_t, std::size_t>> brute_force_edges(const Mesh& mesh) {
  std::set<std::pair<std::size_t, std::size_t>> e;
  for (const auto& t : mesh.elements()) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        if (a != b) e.insert({t[a], t[b]});
      }
    }
  }
  return e;
}

/// Dense propagation matrix A_ij = e_ij / c_ij rebuilt from coordinates and
/// brute-force adjacency, independent of MeshGraph.
inline Matrix dense_propagation(const Mesh& mesh, const GraphOptions& o) {
  const std::size_t n = mesh.node_count();
  auto edges = brute_force_edges(mesh);
  if (o.self_loops) {
    for (std::size_t i = 0; i < n; ++i) edges.insert({i, i});
  }
  std::vector<double> deg(n, 0.0);
  for (const auto& [i, j] : edges) deg[i] += 1.0;
  Matrix a(n, n);
  for (const auto& [i, j] : edges) {
    double e = 1.0;
    if (i != j) {
      const double d = std::hypot(mesh.node(i).x - mesh.node(j).x, mesh.node(i).y - mesh.node(j).y);
      e = o.kernel == EdgeKernel::inverse_exp ? std::exp(-1.0 / d) : std::exp(-d);
    }
    a(i, j) = e / (std::sqrt(deg[i]) * std::sqrt(deg[j]));
  }
  return a;
}

/// Median-dual areas from element areas, one third to each vertex.
inline std::vector<double> dual_areas(const Mesh& mesh) {
  std::vector<double> a(mesh.node_count(), 0.0);
  for (const auto& t : mesh.elements()) {
    const Point p = mesh.node(t[0]), q = mesh.node(t[1]), r = mesh.node(t[2]);
    const double area = 0.5 * std::abs((q.x - p.x) * (r.y - p.y) - (r.x - p.x) * (q.y - p.y));
    for (auto i : t) a[i] += area / 3.0;
  }
  return a;
}

/// Graph distance (edges of the mesh) from `source` to every node.
inline std::vector<std::size_t> hop_distance(const Mesh& mesh, std::size_t source) {
  const auto edges = brute_force_edges(mesh);
  std::vector<std::size_t> d(mesh.node_count(), static_cast<std::size_t>(-1));
  d[source] = 0;
  std::vector<std::size_t> frontier{source};
  while (!frontier.empty()) {
    std::vector<std::size_t> next;
    for (const auto& [i, j] : edges) {
      if (d[i] != static_cast<std::size_t>(-1) && d[j] == static_cast<std::size_t>(-1) &&
          std::find(frontier.begin(), frontier.end(), i) != frontier.end()) {
        d[j] = d[i] + 1;
        next.push_back(j);
      }
    }
    frontier = std::move(next);
  }
  return d;
}

}  // namespace icegcn::ref
