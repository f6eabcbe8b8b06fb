#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "icegcn/gcn.hpp"
#include "icegcn/gradcheck.hpp"
#include "support.hpp"

using namespace icegcn;
using ref::random_matrix;

namespace {

Mesh single_triangle() { return Mesh({{0, 0}, {3, 0}, {0, 4}}, {{0, 1, 2}}); }

Matrix column(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::copy(v.begin(), v.end(), m.values().begin());
  return m;
}

/// Same mesh with node i relabelled perm[i].
Mesh permuted(const Mesh& m, const std::vector<std::size_t>& perm) {
  std::vector<Point> nodes(m.node_count());
  for (std::size_t i = 0; i < perm.size(); ++i) nodes[perm[i]] = m.node(i);
  std::vector<Triangle> elements;
  for (const auto& t : m.elements()) elements.push_back({perm[t[0]], perm[t[1]], perm[t[2]]});
  return Mesh(std::move(nodes), std::move(elements));
}

}  // namespace

TEST(Propagate, TriangleWithoutSelfLoops) {
  const MeshGraph g(single_triangle(), {false, EdgeKernel::inverse_exp});
  const Matrix out = propagate(g, column({1, 2, 3}));
  const double e01 = std::exp(-1.0 / 3.0), e02 = std::exp(-1.0 / 4.0), e12 = std::exp(-1.0 / 5.0);
  EXPECT_NEAR(out(0, 0), (e01 * 2 + e02 * 3) / 2.0, 1e-15);
  EXPECT_NEAR(out(1, 0), (e01 * 1 + e12 * 3) / 2.0, 1e-15);
  EXPECT_NEAR(out(2, 0), (e02 * 1 + e12 * 2) / 2.0, 1e-15);
}

TEST(Propagate, TriangleWithSelfLoops) {
  const MeshGraph g(single_triangle(), {true, EdgeKernel::inverse_exp});
  const Matrix out = propagate(g, column({1, 2, 3}));
  const double e01 = std::exp(-1.0 / 3.0), e02 = std::exp(-1.0 / 4.0);
  EXPECT_NEAR(out(0, 0), (1.0 + e01 * 2 + e02 * 3) / 3.0, 1e-15);
}

TEST(Propagate, LayerOnConstantWeightedTriangle) {
  // With a 1x1 weight w the layer is leaky(w * A h).
  const MeshGraph g(single_triangle(), {true, EdgeKernel::exp_decay});
  const Matrix h = column({1, -1, 2});
  const Matrix a = propagate(g, h);
  const Matrix out = gcn_layer_forward(g, h, Matrix::from_rows({{-2.0}}), true, 0.01, nullptr);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(out(i, 0), leaky_relu(-2.0 * a(i, 0), 0.01));
}

TEST(Propagate, MatchesDenseOracleOnRandomMeshes) {
  std::mt19937_64 rng(11);
  for (std::uint64_t k = 0; k < 20; ++k) {
    const double w = 10.0 * static_cast<double>(2 + k % 5), h = 10.0 * static_cast<double>(2 + k % 4);
    const Mesh mesh = triangulate_rectangle(10.0, w, h, 0.25, k);
    ASSERT_LE(mesh.node_count(), 50u);
    const GraphOptions o{k % 2 == 0, k % 3 == 0 ? EdgeKernel::exp_decay : EdgeKernel::inverse_exp};
    const MeshGraph g(mesh, o);
    const Matrix x = random_matrix(mesh.node_count(), 6, rng);
    const Matrix weight = random_matrix(5, 6, rng);
    const Matrix dense = ref::naive_matmul(ref::dense_propagation(mesh, o), x);
    EXPECT_LE(max_abs_diff(propagate(g, x), dense), 1e-12) << "mesh " << k;
    const Matrix layer = gcn_layer_forward(g, x, weight, false, 0.01, nullptr);
    EXPECT_LE(max_abs_diff(layer, ref::naive_matmul(dense, transpose(weight))), 1e-12) << "mesh " << k;
  }
}

TEST(GcnModel, PermutationEquivariant) {
  const Mesh mesh = triangulate_rectangle(10.0, 60.0, 40.0, 0.2, 3);
  std::vector<std::size_t> perm(mesh.node_count());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
  const MeshGraph g(mesh), gp(permuted(mesh, perm));

  GcnConfig cfg;
  cfg.hidden_width = 16;
  const GcnModel model(cfg, 5);
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(mesh.node_count(), 4, rng);
  Matrix xp(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) xp(perm[i], j) = x(i, j);
  }
  const Matrix y = model.forward(g, x), yp = model.forward(gp, xp);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(yp(perm[i], j), y(i, j), 1e-12);
  }
}

TEST(GcnModel, ReceptiveFieldIsLayerCountHops) {
  const Mesh mesh = triangulate_rectangle(10.0, 100.0, 100.0, 0.0, 0);
  const MeshGraph g(mesh);
  GcnConfig cfg;
  cfg.hidden_width = 8;
  const GcnModel model(cfg, 2);
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(mesh.node_count(), 4, rng);
  const std::size_t source = 60;
  Matrix x2 = x;
  for (std::size_t j = 0; j < 4; ++j) x2(source, j) += 0.5;
  const Matrix y = model.forward(g, x), y2 = model.forward(g, x2);
  const auto hops = ref::hop_distance(mesh, source);
  std::size_t near_changed = 0, near = 0;
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    bool same = true;
    for (std::size_t j = 0; j < 3; ++j) same = same && y(i, j) == y2(i, j);
    if (hops[i] > cfg.num_graph_layers) {
      EXPECT_TRUE(same) << "node " << i << " at " << hops[i] << " hops";
    } else {
      ++near;
      near_changed += !same;
    }
  }
  EXPECT_EQ(near_changed, near);
  EXPECT_LT(near, mesh.node_count());
}

TEST(GcnModel, ZeroWeightsGiveHeadBias) {
  const MeshGraph g(triangulate_rectangle(10.0, 30.0, 20.0, 0.1, 1));
  GcnConfig cfg;
  cfg.hidden_width = 8;
  ModelParams p = init_gcn_params(cfg, 0);
  for (std::size_t l = 0; l < cfg.num_graph_layers; ++l) p[l] = Matrix(p[l].rows(), p[l].cols());
  p[cfg.num_graph_layers + 1] = Matrix::from_rows({{1.5, -2.0, 7.0}});
  const GcnModel model(cfg, p);
  std::mt19937_64 rng(1);
  const Matrix y = model.forward(g, random_matrix(g.node_count(), 4, rng));
  for (std::size_t i = 0; i < y.rows(); ++i) {
    EXPECT_EQ(y(i, 0), 1.5);
    EXPECT_EQ(y(i, 1), -2.0);
    EXPECT_EQ(y(i, 2), 7.0);
  }
}

TEST(GcnModel, DefaultArchitectureShapes) {
  const GcnConfig cfg;
  EXPECT_EQ(cfg.num_graph_layers, 5u);
  EXPECT_EQ(cfg.hidden_width, 128u);
  EXPECT_EQ(cfg.leaky_slope, 0.01);
  const ModelParams p = init_gcn_params(cfg, 0);
  ASSERT_EQ(p.size(), 7u);
  EXPECT_EQ(p.name(0), "graph0.weight");
  EXPECT_EQ(p[0].rows(), 128u);
  EXPECT_EQ(p[0].cols(), 4u);
  for (std::size_t l = 1; l < 5; ++l) {
    EXPECT_EQ(p[l].rows(), 128u);
    EXPECT_EQ(p[l].cols(), 128u);
  }
  EXPECT_EQ(p.name(5), "head.weight");
  EXPECT_EQ(p[5].rows(), 3u);
  EXPECT_EQ(p[5].cols(), 128u);
  EXPECT_EQ(p.name(6), "head.bias");
  EXPECT_EQ(p[6], Matrix(1, 3));
}

TEST(GcnModel, InitIsSeededAndWithinGlorotBounds) {
  const GcnConfig cfg;
  const ModelParams a = init_gcn_params(cfg, 42), b = init_gcn_params(cfg, 42), c = init_gcn_params(cfg, 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (std::size_t l = 0; l < 6; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(a[l].rows() + a[l].cols()));
    for (double v : a[l].values()) EXPECT_LE(std::abs(v), bound);
  }
  EXPECT_THROW(GcnModel(cfg, init_gcn_params(GcnConfig{4, 3, 64, 5}, 0)), ShapeError);
}

TEST(GcnModel, ZeroUpstreamGivesZeroGradients) {
  const MeshGraph g(triangulate_rectangle(10.0, 30.0, 20.0, 0.1, 1));
  GcnConfig cfg;
  cfg.hidden_width = 8;
  const GcnModel model(cfg, 1);
  std::mt19937_64 rng(2);
  GcnModel::Tape tape;
  const Matrix y = model.forward(g, random_matrix(g.node_count(), 4, rng), &tape);
  const ModelParams grads = model.backward(g, tape, Matrix(y.rows(), y.cols()));
  EXPECT_EQ(grads, model.params().zeros_like());
}

TEST(GcnModel, FiniteAcrossMeltRange) {
  const Mesh mesh = triangulate_rectangle(5.0, 100.0, 100.0, 0.2, 0);
  const MeshGraph g(mesh);
  const GcnModel model(GcnConfig{}, 0);
  for (double m = 0.0; m <= 70.0; m += 10.0) {
    Matrix x(mesh.node_count(), 4);
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
      x(i, 0) = mesh.node(i).x / 100.0;
      x(i, 1) = mesh.node(i).y / 100.0;
      x(i, 2) = 1.0;
      x(i, 3) = m / 70.0;
    }
    EXPECT_TRUE(all_finite(model.forward(g, x))) << "m = " << m;
  }
}

TEST(GcnModel, GradientsMatchFiniteDifferencesForEveryGraphOption) {
  const Mesh mesh = triangulate_rectangle(5.0, 15.0, 10.0, 0.2, 7);
  GcnConfig cfg;
  cfg.hidden_width = 8;
  cfg.num_graph_layers = 3;
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(mesh.node_count(), 4, rng);
  for (bool loops : {true, false}) {
    for (EdgeKernel k : {EdgeKernel::inverse_exp, EdgeKernel::exp_decay}) {
      const MeshGraph g(mesh, {loops, k});
      const ModelParams start = init_gcn_params(cfg, 9);
      const Matrix target = detail::targets_near(GcnModel(cfg, start).forward(g, x), rng);
      const auto loss = [&](const ModelParams& q, ModelParams* grads, KinkPattern* kinks) {
        const GcnModel model(cfg, q);
        GcnModel::Tape tape;
        auto l = mse(model.forward(g, x, &tape), target);
        for (const auto& layer : tape.layers) append_kink_pattern(*kinks, layer.pre_activation);
        if (grads) *grads = model.backward(g, tape, l.gradient);
        return l.loss;
      };
      const auto r = finite_diff_check(loss, start, 64, 1e-5, 10);
      EXPECT_LE(r.max_relative_error, 1e-5) << loops << " " << to_string(k);
      EXPECT_LE(r.max_unresolved_ratio, 1.0);
      EXPECT_GE(r.probes, 48u) << "unresolved " << r.unresolved << " kinks " << r.kink_skips;
    }
  }
}
