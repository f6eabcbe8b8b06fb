#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "icegcn/fcn.hpp"
#include "icegcn/grid.hpp"
#include "icegcn/oracle.hpp"
#include "support.hpp"

using namespace icegcn;
using ref::random_matrix;

namespace {

/// Six nested loops over output channel, pixel, tap and input channel.
Matrix naive_conv(const Matrix& in, RasterShape s, const Matrix& kernel, const Matrix& bias) {
  const std::size_t cin = in.cols(), cout = kernel.rows();
  Matrix out(s.cells(), cout);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t y = 0; y < s.ny; ++y) {
      for (std::size_t x = 0; x < s.nx; ++x) {
        double acc = bias(0, o);
        for (int ky = -1; ky <= 1; ++ky) {
          for (int kx = -1; kx <= 1; ++kx) {
            const long sy = static_cast<long>(y) + ky, sx = static_cast<long>(x) + kx;
            if (sy < 0 || sx < 0 || sy >= static_cast<long>(s.ny) || sx >= static_cast<long>(s.nx)) continue;
            for (std::size_t c = 0; c < cin; ++c) {
              const std::size_t tap = static_cast<std::size_t>((ky + 1) * 3 + (kx + 1));
              acc += kernel(o, tap * cin + c) * in(static_cast<std::size_t>(sy) * s.nx + static_cast<std::size_t>(sx), c);
            }
          }
        }
        out(y * s.nx + x, o) = acc;
      }
    }
  }
  return out;
}

Matrix ones_kernel(double v) {
  Matrix k(1, 9);
  for (double& x : k.values()) x = v;
  return k;
}

bool inside_triangle(Point p, Point a, Point b, Point c) {
  const auto cross = [](Point o, Point u, Point v) { return (u.x - o.x) * (v.y - o.y) - (v.x - o.x) * (u.y - o.y); };
  const double d1 = cross(a, b, p), d2 = cross(b, c, p), d3 = cross(c, a, p);
  return d1 >= 0 && d2 >= 0 && d3 >= 0;
}

Matrix oracle_nodes(const Mesh& mesh, double t, double m) {
  const OracleConfig c;
  Matrix v(mesh.node_count(), 3);
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const auto f = analytic_fields(c, mesh.node(i).x, mesh.node(i).y, t, m);
    v(i, 0) = f.vx;
    v(i, 1) = f.vy;
    v(i, 2) = f.thickness;
  }
  return v;
}

}  // namespace

TEST(Conv2d, IdentityKernelCopiesInput) {
  const RasterShape s{5, 4};
  std::mt19937_64 rng(1);
  const Matrix in = random_matrix(s.cells(), 1, rng);
  Matrix k(1, 9);
  k(0, 4) = 1.0;
  EXPECT_EQ(conv2d_forward(in, s, k, Matrix(1, 1), false, 0.01, nullptr), in);
}

TEST(Conv2d, AveragingKernelOnConstantImage) {
  const RasterShape s{5, 5};
  Matrix in(s.cells(), 1, 2.0);
  const Matrix out = conv2d_forward(in, s, ones_kernel(1.0 / 9.0), Matrix(1, 1), false, 0.01, nullptr);
  EXPECT_NEAR(out(0, 0), 2.0 * 4.0 / 9.0, 1e-15);              // corner
  EXPECT_NEAR(out(2, 0), 2.0 * 6.0 / 9.0, 1e-15);              // edge
  EXPECT_NEAR(out(2 * 5 + 2, 0), 2.0, 1e-15);                  // interior
  EXPECT_NEAR(out(s.cells() - 1, 0), 2.0 * 4.0 / 9.0, 1e-15);  // opposite corner
}

TEST(Conv2d, MatchesNaiveLoops) {
  std::mt19937_64 rng(2);
  for (std::size_t nx = 1; nx <= 8; nx += 3) {
    for (std::size_t ny = 1; ny <= 8; ny += 2) {
      const RasterShape s{nx, ny};
      const Matrix in = random_matrix(s.cells(), 3, rng);
      const Matrix k = random_matrix(4, 27, rng), b = random_matrix(1, 4, rng);
      EXPECT_LE(max_abs_diff(conv2d_forward(in, s, k, b, false, 0.01, nullptr), naive_conv(in, s, k, b)), 1e-12)
          << nx << "x" << ny;
    }
  }
}

TEST(Conv2d, TranslationEquivariantAwayFromBorder) {
  const RasterShape s{10, 9};
  std::mt19937_64 rng(3);
  const Matrix in = random_matrix(s.cells(), 2, rng);
  Matrix shifted(s.cells(), 2);
  for (std::size_t y = 0; y < s.ny; ++y) {
    for (std::size_t x = 1; x < s.nx; ++x) {
      for (std::size_t c = 0; c < 2; ++c) shifted(y * s.nx + x, c) = in(y * s.nx + x - 1, c);
    }
  }
  const Matrix k = random_matrix(3, 18, rng), b = random_matrix(1, 3, rng);
  const Matrix a = conv2d_forward(in, s, k, b, true, 0.01, nullptr);
  const Matrix sa = conv2d_forward(shifted, s, k, b, true, 0.01, nullptr);
  for (std::size_t y = 1; y + 1 < s.ny; ++y) {
    for (std::size_t x = 2; x + 1 < s.nx; ++x) {
      for (std::size_t o = 0; o < 3; ++o) EXPECT_EQ(sa(y * s.nx + x, o), a(y * s.nx + x - 1, o));
    }
  }
}

TEST(Conv2d, Im2colAdjointOfCol2im) {
  // <im2col(u), v> == <u, col2im(v)>
  const RasterShape s{6, 4};
  std::mt19937_64 rng(4);
  const Matrix u = random_matrix(s.cells(), 3, rng), v = random_matrix(s.cells(), 27, rng);
  const Matrix a = im2col3x3(u, s), b = col2im3x3(v, s, 3);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) lhs += a.values()[i] * v.values()[i];
  for (std::size_t i = 0; i < b.size(); ++i) rhs += u.values()[i] * b.values()[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(FcnModel, ZeroWeightsGiveBiasMap) {
  FcnConfig cfg;
  cfg.hidden_width = 4;
  ModelParams p = init_fcn_params(cfg, 0);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = Matrix(p[i].rows(), p[i].cols());
  p[p.size() - 1] = Matrix::from_rows({{0.25, -3.0, 9.0}});
  const FcnModel model(cfg, p);
  const RasterShape s{7, 6};
  std::mt19937_64 rng(5);
  const Matrix y = model.forward(random_matrix(s.cells(), 4, rng), s);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    EXPECT_EQ(y(i, 0), 0.25);
    EXPECT_EQ(y(i, 1), -3.0);
    EXPECT_EQ(y(i, 2), 9.0);
  }
}

TEST(FcnModel, DefaultArchitectureShapes) {
  const FcnConfig cfg;
  EXPECT_EQ(cfg.num_layers, 6u);
  const ModelParams p = init_fcn_params(cfg, 0);
  ASSERT_EQ(p.size(), 12u);
  std::size_t in = 4;
  for (std::size_t l = 0; l < 6; ++l) {
    const std::size_t out = l == 5 ? 3 : 128;
    EXPECT_EQ(p.name(2 * l), "conv" + std::to_string(l) + ".kernel");
    EXPECT_EQ(p[2 * l].rows(), out);
    EXPECT_EQ(p[2 * l].cols(), 9 * in);
    EXPECT_EQ(p[2 * l + 1], Matrix(1, out));
    const double bound = std::sqrt(6.0 / static_cast<double>(9 * in + 9 * out));
    for (double v : p[2 * l].values()) EXPECT_LE(std::abs(v), bound);
    in = out;
  }
  EXPECT_EQ(init_fcn_params(cfg, 3), init_fcn_params(cfg, 3));
  EXPECT_NE(init_fcn_params(cfg, 3), init_fcn_params(cfg, 4));
}

TEST(FcnModel, FinalLayerIsLinear) {
  // A negative bias on the last layer must pass through unclipped.
  FcnConfig cfg;
  cfg.hidden_width = 4;
  ModelParams p = init_fcn_params(cfg, 0);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = Matrix(p[i].rows(), p[i].cols());
  p[p.size() - 1] = Matrix::from_rows({{-100.0, -1.0, -0.5}});
  const Matrix y = FcnModel(cfg, p).forward(Matrix(4, 4), {2, 2});
  EXPECT_EQ(y(0, 0), -100.0);
}

TEST(FcnModel, MaskedLossIgnoresInvalidCells) {
  FcnConfig cfg;
  cfg.hidden_width = 4;
  const FcnModel model(cfg, 1);
  const RasterShape s{5, 5};
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(s.cells(), 4, rng);
  Matrix target = random_matrix(s.cells(), 3, rng);
  std::vector<unsigned char> mask(s.cells(), 1);
  mask[0] = mask[7] = mask[24] = 0;
  ModelParams g1, g2;
  const double l1 = model.loss(x, s, target, mask, &g1);
  target(7, 1) = 1e9;
  target(24, 0) = -5.0;
  const double l2 = model.loss(x, s, target, mask, &g2);
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(g1, g2);
}

TEST(Rasterize, LinearFieldIsExactAtValidCells) {
  const Mesh mesh = triangulate_rectangle(10.0, 100.0, 100.0, 0.25, 2);
  const GridSpec spec = GridSpec::covering(mesh, 23, 23);
  Matrix f(mesh.node_count(), 2);
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    f(i, 0) = 3.0 * mesh.node(i).x - 2.0 * mesh.node(i).y + 7.0;
    f(i, 1) = -5.0;
  }
  const Grid g = rasterize(mesh, f, spec);
  std::size_t valid = 0;
  for (std::size_t c = 0; c < spec.cell_count(); ++c) {
    EXPECT_NEAR(g.channels(c, 1), -5.0, 1e-12);
    if (!g.mask[c]) continue;
    ++valid;
    const Point p = spec.center(c);
    EXPECT_NEAR(g.channels(c, 0), 3.0 * p.x - 2.0 * p.y + 7.0, 1e-10);
  }
  EXPECT_EQ(valid, spec.cell_count());
}

TEST(Rasterize, MaskMatchesPointInTriangle) {
  const Mesh mesh({{0, 0}, {30, 0}, {0, 40}, {30, 40}, {60, 0}},
                  {{0, 1, 2}, {1, 4, 3}});
  GridSpec spec;
  spec.nx = 12;
  spec.ny = 8;
  spec.spacing = 5.0;
  const RasterPlan plan(mesh, spec);
  std::size_t valid = 0;
  for (std::size_t c = 0; c < spec.cell_count(); ++c) {
    const Point p = spec.center(c);
    const bool in = inside_triangle(p, mesh.node(0), mesh.node(1), mesh.node(2)) ||
                    inside_triangle(p, mesh.node(1), mesh.node(4), mesh.node(3));
    EXPECT_EQ(plan.mask()[c] != 0, in) << "cell " << c;
    valid += in;
    // Filled cells copy a valid cell.
    EXPECT_TRUE(plan.mask()[plan.fill_sources()[c]]);
  }
  EXPECT_EQ(plan.valid_count(), valid);
  EXPECT_GT(valid, 0u);
  EXPECT_LT(valid, spec.cell_count());
}

TEST(GridToMesh, ConstantAndBilinearFields) {
  const Mesh mesh = triangulate_rectangle(10.0, 100.0, 100.0, 0.2, 5);
  const GridSpec spec = GridSpec::covering(mesh, 20, 20);
  const std::vector<unsigned char> mask(spec.cell_count(), 1);
  const ResamplePlan plan(mesh, spec, mask);
  Matrix cells(spec.cell_count(), 2);
  for (std::size_t c = 0; c < spec.cell_count(); ++c) {
    const Point p = spec.center(c);
    cells(c, 0) = 4.0;
    cells(c, 1) = 2.0 * p.x - p.y + 0.01 * p.x * p.y;
  }
  const Matrix nodes = plan.to_mesh(cells);
  std::size_t bilinear = 0;
  for (std::size_t n = 0; n < mesh.node_count(); ++n) {
    EXPECT_NEAR(nodes(n, 0), 4.0, 1e-12);
    if (!plan.bilinear(n)) continue;
    ++bilinear;
    const Point p = mesh.node(n);
    EXPECT_NEAR(nodes(n, 1), 2.0 * p.x - p.y + 0.01 * p.x * p.y, 1e-10);
  }
  EXPECT_GT(bilinear, mesh.node_count() / 2);
}

double max_interior_error_ratio(const Mesh& mesh, const Matrix& f, const Matrix& back, std::size_t k) {
  double lo = f(0, k), hi = f(0, k), err = 0.0;
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    lo = std::min(lo, f(i, k));
    hi = std::max(hi, f(i, k));
    if (!mesh.is_boundary(i)) err = std::max(err, std::abs(back(i, k) - f(i, k)));
  }
  return err / (hi - lo);
}

struct RoundTripCase {
  std::size_t grid;
  double spacing;
  double smooth_bound;  // measured worst channel, rounded up
};

class RasterRoundTrip : public ::testing::TestWithParam<RoundTripCase> {};

TEST_P(RasterRoundTrip, LinearFieldsSurviveExactly) {
  const auto c = GetParam();
  const Mesh mesh = triangulate_rectangle(c.spacing, 100.0, 100.0, 0.2, 0);
  Matrix f(mesh.node_count(), 3);
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const Point p = mesh.node(i);
    f(i, 0) = 3.0 * p.x - 2.0 * p.y + 7.0;
    f(i, 1) = -p.x + 0.5 * p.y;
    f(i, 2) = 1000.0 + 4.0 * p.y;
  }
  const Matrix back = grid_to_mesh(rasterize(mesh, f, GridSpec::covering(mesh, c.grid, c.grid)), mesh);
  for (std::size_t k = 0; k < 3; ++k) {
    const double ratio = max_interior_error_ratio(mesh, f, back, k);
    EXPECT_LE(ratio, 0.02);
    EXPECT_LE(ratio, 1e-12);
  }
}

TEST_P(RasterRoundTrip, SmoothOracleFieldsStayWithinMeasuredBound) {
  const auto c = GetParam();
  const Mesh mesh = triangulate_rectangle(c.spacing, 100.0, 100.0, 0.2, 0);
  const GridSpec spec = GridSpec::covering(mesh, c.grid, c.grid);
  for (double m : {0.0, 70.0}) {
    const Matrix f = oracle_nodes(mesh, 5.0, m);
    const Matrix back = grid_to_mesh(rasterize(mesh, f, spec), mesh);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_LE(max_interior_error_ratio(mesh, f, back, k), c.smooth_bound) << "channel " << k << " m " << m;
    }
  }
}

// Measured worst channel (vx): 2.011% on 20x20, 0.570% on 64x64 over the
// 5 km mesh, 0.301% on 64x64 over the 2 km mesh.
INSTANTIATE_TEST_SUITE_P(Grids, RasterRoundTrip,
                         ::testing::Values(RoundTripCase{20, 5.0, 0.025}, RoundTripCase{64, 5.0, 0.0075},
                                           RoundTripCase{64, 2.0, 0.004}),
                         [](const auto& info) {
                           return "grid" + std::to_string(info.param.grid) + "_mesh" +
                                  std::to_string(static_cast<int>(info.param.spacing)) + "km";
                         });
