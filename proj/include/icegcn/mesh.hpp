#pragma once

// Triangular meshes on a planar projection (coordinates in kilometers).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/text_io.hpp"

namespace icegcn {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Triangle = std::array<std::size_t, 3>;

struct BoundingBox {
  double min_x, min_y, max_x, max_y;
};

namespace detail {

inline double signed_area(Point a, Point b, Point c) {
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

}  // namespace detail

/// Validated, immutable triangular mesh.
///
/// Elements are counter-clockwise node triples. Every edge is shared by at
/// most two elements (one on the boundary), every node is referenced by some
/// element, and no two nodes lie within 1e-9 km of each other.
class Mesh {
 public:
  static constexpr double kDuplicateTolerance = 1e-9;

  Mesh() = default;

  Mesh(std::vector<Point> nodes, std::vector<Triangle> elements)
      : nodes_(std::move(nodes)), elements_(std::move(elements)) {
    validate_and_derive();
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t element_count() const noexcept { return elements_.size(); }
  std::span<const Point> nodes() const noexcept { return nodes_; }
  std::span<const Triangle> elements() const noexcept { return elements_; }
  const Point& node(std::size_t i) const { return nodes_.at(i); }
  const Triangle& element(std::size_t e) const { return elements_.at(e); }

  double element_area(std::size_t e) const {
    const auto& t = elements_.at(e);
    return detail::signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
  }

  /// Median-dual control-volume areas (one third of each incident element).
  std::span<const double> dual_areas() const noexcept { return dual_areas_; }
  double total_area() const noexcept { return total_area_; }

  /// Sorted list of nodes lying on a boundary edge.
  std::span<const std::size_t> boundary_nodes() const noexcept { return boundary_nodes_; }
  bool is_boundary(std::size_t i) const { return is_boundary_.at(i) != 0; }

  /// Undirected edges (lo, hi) with lo < hi, sorted.
  std::span<const std::pair<std::size_t, std::size_t>> edges() const noexcept { return edges_; }

  double min_edge_length() const noexcept { return min_edge_length_; }
  const BoundingBox& bounds() const noexcept { return bounds_; }

 private:
  void validate_and_derive() {
    const std::size_t n = nodes_.size();
    if (n < 3 || elements_.empty()) throw ValidationError("mesh needs at least one element");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(nodes_[i].x) || !std::isfinite(nodes_[i].y)) {
        throw ValidationError("node " + std::to_string(i) + " has non-finite coordinates");
      }
    }
    check_duplicates();

    std::vector<unsigned char> referenced(n, 0);
    std::map<std::pair<std::size_t, std::size_t>, int> edge_use;  // undirected use count
    std::map<std::pair<std::size_t, std::size_t>, int> directed;
    dual_areas_.assign(n, 0.0);
    total_area_ = 0.0;
    for (std::size_t e = 0; e < elements_.size(); ++e) {
      const auto& t = elements_[e];
      for (auto idx : t) {
        if (idx >= n) {
          throw ValidationError("element " + std::to_string(e) + " references node " +
                                std::to_string(idx) + " >= node count");
        }
        referenced[idx] = 1;
      }
      if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
        throw ValidationError("element " + std::to_string(e) + " repeats a node");
      }
      const double area = detail::signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
      const double scale = std::max({edge_length(t[0], t[1]), edge_length(t[1], t[2]),
                                     edge_length(t[2], t[0])});
      if (!(std::abs(area) > 1e-12 * scale * scale)) {
        throw ValidationError("element " + std::to_string(e) + " is degenerate (zero area)");
      }
      if (area < 0.0) {
        throw ValidationError("element " + std::to_string(e) + " is not counter-clockwise");
      }
      for (int k = 0; k < 3; ++k) {
        const std::size_t a = t[k];
        const std::size_t b = t[(k + 1) % 3];
        if (++directed[{a, b}] > 1) {
          throw ValidationError("edge " + std::to_string(a) + "-" + std::to_string(b) +
                                " has inconsistent orientation");
        }
        if (++edge_use[{std::min(a, b), std::max(a, b)}] > 2) {
          throw ValidationError("edge " + std::to_string(a) + "-" + std::to_string(b) +
                                " is shared by more than two elements");
        }
        dual_areas_[a] += area / 3.0;
      }
      total_area_ += area;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!referenced[i]) {
        throw ValidationError("node " + std::to_string(i) + " is not used by any element");
      }
    }

    is_boundary_.assign(n, 0);
    edges_.clear();
    edges_.reserve(edge_use.size());
    min_edge_length_ = std::numeric_limits<double>::infinity();
    for (const auto& [edge, count] : edge_use) {
      edges_.push_back(edge);
      min_edge_length_ = std::min(min_edge_length_, edge_length(edge.first, edge.second));
      if (count == 1) {
        is_boundary_[edge.first] = 1;
        is_boundary_[edge.second] = 1;
      }
    }
    boundary_nodes_.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (is_boundary_[i]) boundary_nodes_.push_back(i);
    }

    bounds_ = {nodes_[0].x, nodes_[0].y, nodes_[0].x, nodes_[0].y};
    for (const auto& p : nodes_) {
      bounds_.min_x = std::min(bounds_.min_x, p.x);
      bounds_.min_y = std::min(bounds_.min_y, p.y);
      bounds_.max_x = std::max(bounds_.max_x, p.x);
      bounds_.max_y = std::max(bounds_.max_y, p.y);
    }
  }

  void check_duplicates() const {
    std::vector<std::size_t> order(nodes_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return nodes_[a].x < nodes_[b].x; });
    for (std::size_t a = 0; a < order.size(); ++a) {
      const Point& p = nodes_[order[a]];
      for (std::size_t b = a + 1; b < order.size(); ++b) {
        const Point& q = nodes_[order[b]];
        if (q.x - p.x > kDuplicateTolerance) break;
        if (std::hypot(q.x - p.x, q.y - p.y) <= kDuplicateTolerance) {
          throw ValidationError("nodes " + std::to_string(order[a]) + " and " +
                                std::to_string(order[b]) + " coincide");
        }
      }
    }
  }

  double edge_length(std::size_t a, std::size_t b) const {
    return std::hypot(nodes_[a].x - nodes_[b].x, nodes_[a].y - nodes_[b].y);
  }

  std::vector<Point> nodes_;
  std::vector<Triangle> elements_;
  std::vector<double> dual_areas_;
  double total_area_ = 0.0;
  std::vector<unsigned char> is_boundary_;
  std::vector<std::size_t> boundary_nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  double min_edge_length_ = 0.0;
  BoundingBox bounds_{};
};

/// Structured triangulation of [0, width] x [0, height].
///
/// Interior nodes are displaced by a random vector of length at most
/// `jitter_fraction * spacing`; boundary nodes stay on the rectangle. Each
/// cell is split along its lower-left to upper-right diagonal.
inline Mesh triangulate_rectangle(double spacing_km, double width_km, double height_km,
                                  double jitter_fraction, std::uint64_t seed) {
  if (!(spacing_km > 0.0) || !(width_km > 0.0) || !(height_km > 0.0)) {
    throw ConfigError("mesh spacing and extents must be positive");
  }
  if (!(jitter_fraction >= 0.0 && jitter_fraction < 0.3)) {
    throw ConfigError("jitter fraction must lie in [0, 0.3)");
  }
  const auto nx = static_cast<std::size_t>(std::floor(width_km / spacing_km + 1e-9));
  const auto ny = static_cast<std::size_t>(std::floor(height_km / spacing_km + 1e-9));
  if (nx < 2 || ny < 2) throw ConfigError("spacing must give at least 2 intervals per axis");
  const double dx = width_km / static_cast<double>(nx);
  const double dy = height_km / static_cast<double>(ny);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double radius = jitter_fraction * spacing_km;

  std::vector<Point> nodes;
  nodes.reserve((nx + 1) * (ny + 1));
  for (std::size_t j = 0; j <= ny; ++j) {
    for (std::size_t i = 0; i <= nx; ++i) {
      Point p{static_cast<double>(i) * dx, static_cast<double>(j) * dy};
      if (i == nx) p.x = width_km;
      if (j == ny) p.y = height_km;
      const bool interior = i > 0 && i < nx && j > 0 && j < ny;
      if (interior && radius > 0.0) {
        double ox = 0.0;
        double oy = 0.0;
        do {
          ox = unit(rng);
          oy = unit(rng);
        } while (ox * ox + oy * oy > 1.0);
        p.x += radius * ox;
        p.y += radius * oy;
      }
      nodes.push_back(p);
    }
  }

  std::vector<Triangle> elements;
  elements.reserve(2 * nx * ny);
  const auto id = [nx](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      elements.push_back({a, b, c});
      elements.push_back({a, c, d});
    }
  }
  return Mesh(std::move(nodes), std::move(elements));
}

/// Barycentric weights of `p` with respect to triangle (a, b, c).
inline std::array<double, 3> barycentric(Point a, Point b, Point c, Point p) {
  const double det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
  const double w0 = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / det;
  const double w1 = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / det;
  return {w0, w1, 1.0 - w0 - w1};
}

struct PointLocation {
  std::size_t element;
  std::array<double, 3> weights;
};

/// Finds the containing element; the lowest element index wins on shared
/// edges and nodes. Returns nullopt outside the mesh.
inline std::optional<PointLocation> locate_point(const Mesh& mesh, Point p) {
  constexpr double kTol = 1e-12;
  const auto& b = mesh.bounds();
  const double pad = 1e-9 * std::max(1.0, std::max(b.max_x - b.min_x, b.max_y - b.min_y));
  if (p.x < b.min_x - pad || p.x > b.max_x + pad || p.y < b.min_y - pad || p.y > b.max_y + pad) {
    return std::nullopt;
  }
  const auto nodes = mesh.nodes();
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& t = mesh.element(e);
    const Point &a = nodes[t[0]], &bb = nodes[t[1]], &c = nodes[t[2]];
    if (p.x < std::min({a.x, bb.x, c.x}) - pad || p.x > std::max({a.x, bb.x, c.x}) + pad ||
        p.y < std::min({a.y, bb.y, c.y}) - pad || p.y > std::max({a.y, bb.y, c.y}) + pad) {
      continue;
    }
    const auto w = barycentric(a, bb, c, p);
    if (w[0] >= -kTol && w[1] >= -kTol && w[2] >= -kTol) return PointLocation{e, w};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Mesh file format:
//   # mesh v1 units=km
//   nodes
//   <id>,<x>,<y>
//   elements
//   <id>,<n0>,<n1>,<n2>

inline void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << "# mesh v1 units=km\nnodes\n";
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const auto& p = mesh.node(i);
    os << i << ',' << text::format_double(p.x) << ',' << text::format_double(p.y) << '\n';
  }
  os << "elements\n";
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& t = mesh.element(e);
    os << e << ',' << t[0] << ',' << t[1] << ',' << t[2] << '\n';
  }
}

inline Mesh read_mesh(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ValidationError("empty mesh file");
  ++line_no;
  const auto header = text::trim(line);
  if (header.rfind("# mesh ", 0) != 0) throw ValidationError("line 1: missing '# mesh' header");
  const auto tokens = text::split(header, ' ');
  if (tokens.size() < 3 || tokens[2] != "v1") {
    throw ValidationError("line 1: unsupported mesh version '" +
                          std::string(tokens.size() > 2 ? tokens[2] : "") + "'");
  }
  const auto units = text::header_field(header, "units");
  if (units != "km") throw ValidationError("line 1: mesh units must be km, got '" + units + "'");

  enum class Section { none, nodes, elements } section = Section::none;
  std::vector<Point> nodes;
  std::vector<Triangle> elements;
  while (std::getline(is, line)) {
    ++line_no;
    const auto row = text::trim(line);
    if (row.empty() || row.front() == '#') continue;
    if (row == "nodes") {
      section = Section::nodes;
      continue;
    }
    if (row == "elements") {
      section = Section::elements;
      continue;
    }
    const auto cols = text::split(row, ',');
    const auto where = "line " + std::to_string(line_no);
    if (section == Section::nodes) {
      if (cols.size() != 3) throw ValidationError(where + ": node rows need id,x,y");
      if (text::parse_index(cols[0], line_no) != nodes.size()) {
        throw ValidationError(where + ": node ids must be consecutive from 0");
      }
      nodes.push_back({text::parse_double(cols[1], line_no), text::parse_double(cols[2], line_no)});
    } else if (section == Section::elements) {
      if (cols.size() != 4) throw ValidationError(where + ": element rows need id,n0,n1,n2");
      if (text::parse_index(cols[0], line_no) != elements.size()) {
        throw ValidationError(where + ": element ids must be consecutive from 0");
      }
      elements.push_back({text::parse_index(cols[1], line_no), text::parse_index(cols[2], line_no),
                          text::parse_index(cols[3], line_no)});
    } else {
      throw ValidationError(where + ": data before any section");
    }
  }
  return Mesh(std::move(nodes), std::move(elements));
}

}  // namespace icegcn
