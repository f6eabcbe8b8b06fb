#pragma once

// Regular rasters over a mesh: barycentric mesh->grid interpolation and
// bilinear grid->mesh resampling.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/matrix.hpp"
#include "icegcn/mesh.hpp"

namespace icegcn {

/// Cell (i, j) has center (origin_x + (i + 0.5) s, origin_y + (j + 0.5) s)
/// and flat index j * nx + i.
struct GridSpec {
  std::size_t nx = 64;
  std::size_t ny = 64;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double spacing = 1.0;

  std::size_t cell_count() const noexcept { return nx * ny; }
  std::size_t cell(std::size_t i, std::size_t j) const noexcept { return j * nx + i; }
  Point center(std::size_t i, std::size_t j) const noexcept {
    return {origin_x + (static_cast<double>(i) + 0.5) * spacing,
            origin_y + (static_cast<double>(j) + 0.5) * spacing};
  }
  Point center(std::size_t c) const noexcept { return center(c % nx, c / nx); }

  void validate() const {
    if (nx == 0 || ny == 0) throw ConfigError("grid needs at least one cell per axis");
    if (!(spacing > 0.0) || !std::isfinite(spacing)) throw ConfigError("grid spacing must be positive");
  }

  /// Square cells covering the mesh bounding box with nx x ny cells.
  static GridSpec covering(const Mesh& mesh, std::size_t nx, std::size_t ny) {
    const auto& b = mesh.bounds();
    GridSpec g;
    g.nx = nx;
    g.ny = ny;
    g.origin_x = b.min_x;
    g.origin_y = b.min_y;
    g.spacing = std::max((b.max_x - b.min_x) / static_cast<double>(nx),
                         (b.max_y - b.min_y) / static_cast<double>(ny));
    g.validate();
    return g;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Raster with per-cell channel rows and a validity mask.
struct Grid {
  GridSpec spec;
  std::vector<unsigned char> mask;  // 1 when the cell center lies in the mesh
  Matrix channels;                  // cell_count x C
};

/// Precomputed mesh -> grid interpolation for one mesh/grid pair.
class RasterPlan {
 public:
  RasterPlan() = default;
  RasterPlan(const Mesh& mesh, GridSpec spec) : spec_(spec), node_count_(mesh.node_count()) {
    spec_.validate();
    const std::size_t cells = spec_.cell_count();
    mask_.assign(cells, 0);
    stencil_.resize(cells);
    fill_from_.assign(cells, 0);
    std::vector<std::size_t> valid;
    for (std::size_t c = 0; c < cells; ++c) {
      if (auto loc = locate_point(mesh, spec_.center(c))) {
        mask_[c] = 1;
        const auto& t = mesh.element(loc->element);
        stencil_[c] = {t, loc->weights};
        valid.push_back(c);
      }
    }
    if (valid.empty()) throw ValidationError("no grid cell center lies inside the mesh");
    for (std::size_t c = 0; c < cells; ++c) {
      if (mask_[c]) {
        fill_from_[c] = c;
        continue;
      }
      const Point p = spec_.center(c);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t v : valid) {
        const Point q = spec_.center(v);
        const double d = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
        if (d < best) {
          best = d;
          fill_from_[c] = v;
        }
      }
    }
  }

  const GridSpec& spec() const noexcept { return spec_; }
  std::span<const unsigned char> mask() const noexcept { return mask_; }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto m : mask_) n += m;
    return n;
  }
  /// Nearest valid cell for each cell (itself when valid).
  std::span<const std::size_t> fill_sources() const noexcept { return fill_from_; }

  /// Interpolates node values (N x C) at cell centers; invalid cells copy
  /// their nearest valid cell.
  Matrix rasterize(const Matrix& node_values) const {
    if (node_values.rows() != node_count_) throw ShapeError("rasterize: node count mismatch");
    const std::size_t ch = node_values.cols();
    Matrix out(spec_.cell_count(), ch);
    for (std::size_t c = 0; c < spec_.cell_count(); ++c) {
      if (!mask_[c]) continue;
      const auto& [nodes, w] = stencil_[c];
      for (std::size_t k = 0; k < ch; ++k) {
        out(c, k) = w[0] * node_values(nodes[0], k) + w[1] * node_values(nodes[1], k) +
                    w[2] * node_values(nodes[2], k);
      }
    }
    for (std::size_t c = 0; c < spec_.cell_count(); ++c) {
      if (mask_[c]) continue;
      for (std::size_t k = 0; k < ch; ++k) out(c, k) = out(fill_from_[c], k);
    }
    return out;
  }

  Grid rasterize_grid(const Matrix& node_values) const {
    return Grid{spec_, mask_, rasterize(node_values)};
  }

 private:
  struct Stencil {
    Triangle nodes{};
    std::array<double, 3> weights{};
  };

  GridSpec spec_;
  std::size_t node_count_ = 0;
  std::vector<unsigned char> mask_;
  std::vector<Stencil> stencil_;
  std::vector<std::size_t> fill_from_;
};

/// Precomputed grid -> mesh resampling: bilinear over the four surrounding
/// cell centers when all four are valid, nearest valid cell otherwise.
class ResamplePlan {
 public:
  ResamplePlan() = default;
  ResamplePlan(const Mesh& mesh, const GridSpec& spec, std::span<const unsigned char> mask)
      : spec_(spec) {
    spec_.validate();
    if (mask.size() != spec_.cell_count()) throw ShapeError("resample: mask size mismatch");
    stencil_.resize(mesh.node_count());
    bilinear_.assign(mesh.node_count(), 0);
    for (std::size_t n = 0; n < mesh.node_count(); ++n) {
      const Point p = mesh.node(n);
      const double fx = (p.x - spec_.origin_x) / spec_.spacing - 0.5;
      const double fy = (p.y - spec_.origin_y) / spec_.spacing - 0.5;
      const double i0 = std::floor(fx);
      const double j0 = std::floor(fy);
      const bool inside = i0 >= 0.0 && j0 >= 0.0 && i0 + 1.0 < static_cast<double>(spec_.nx) &&
                          j0 + 1.0 < static_cast<double>(spec_.ny);
      if (inside) {
        const auto i = static_cast<std::size_t>(i0);
        const auto j = static_cast<std::size_t>(j0);
        const std::array<std::size_t, 4> cells{spec_.cell(i, j), spec_.cell(i + 1, j),
                                               spec_.cell(i, j + 1), spec_.cell(i + 1, j + 1)};
        if (mask[cells[0]] && mask[cells[1]] && mask[cells[2]] && mask[cells[3]]) {
          const double tx = fx - i0;
          const double ty = fy - j0;
          stencil_[n] = {cells, {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty}};
          bilinear_[n] = 1;
          continue;
        }
      }
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_cell = spec_.cell_count();
      for (std::size_t c = 0; c < spec_.cell_count(); ++c) {
        if (!mask[c]) continue;
        const Point q = spec_.center(c);
        const double d = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
        if (d < best) {
          best = d;
          best_cell = c;
        }
      }
      if (best_cell == spec_.cell_count()) throw ValidationError("grid has no valid cells");
      stencil_[n] = {{best_cell, best_cell, best_cell, best_cell}, {1.0, 0.0, 0.0, 0.0}};
    }
  }

  /// True when node n is interpolated bilinearly (not by nearest cell).
  bool bilinear(std::size_t n) const { return bilinear_.at(n) != 0; }

  Matrix to_mesh(const Matrix& cell_values) const {
    if (cell_values.rows() != spec_.cell_count()) throw ShapeError("grid_to_mesh: cell count mismatch");
    Matrix out(stencil_.size(), cell_values.cols());
    for (std::size_t n = 0; n < stencil_.size(); ++n) {
      const auto& [cells, w] = stencil_[n];
      for (std::size_t k = 0; k < cell_values.cols(); ++k) {
        out(n, k) = w[0] * cell_values(cells[0], k) + w[1] * cell_values(cells[1], k) +
                    w[2] * cell_values(cells[2], k) + w[3] * cell_values(cells[3], k);
      }
    }
    return out;
  }

 private:
  struct Stencil {
    std::array<std::size_t, 4> cells{};
    std::array<double, 4> weights{};
  };

  GridSpec spec_;
  std::vector<Stencil> stencil_;
  std::vector<unsigned char> bilinear_;
};

inline Grid rasterize(const Mesh& mesh, const Matrix& node_values, const GridSpec& spec) {
  return RasterPlan(mesh, spec).rasterize_grid(node_values);
}

inline Matrix grid_to_mesh(const Grid& grid, const Mesh& mesh) {
  return ResamplePlan(mesh, grid.spec, grid.mask).to_mesh(grid.channels);
}

}  // namespace icegcn
