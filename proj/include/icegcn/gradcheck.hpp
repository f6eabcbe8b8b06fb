#pragma once

// Finite-difference suites for every differentiable piece: each layer type
// on its own (inputs included as probed tensors) and both full losses.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "icegcn/fcn.hpp"
#include "icegcn/gcn.hpp"
#include "icegcn/graph.hpp"
#include "icegcn/mesh.hpp"
#include "icegcn/nn.hpp"

namespace icegcn {

struct GradCheckSuite {
  std::string name;
  GradCheckResult result;
  /// Unresolved probes must still agree within the round-off bound.
  bool passed(double tol, std::size_t min_probes) const {
    return result.max_relative_error <= tol && result.probes >= min_probes &&
           result.max_unresolved_ratio <= 1.0;
  }
};

struct GradCheckOptions {
  std::size_t probes = 64;
  double step = 1e-5;
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
  /// Perturbs the analytic gradient of the first tensor in every suite, to
  /// demonstrate that the check catches a wrong backward pass.
  bool corrupt = false;
};

namespace detail {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = u(rng);
  return m;
}

/// Targets at the prediction's own scale, so the loss is not dominated by
/// a residual the probed weights can barely move.
inline Matrix targets_near(const Matrix& pred, std::mt19937_64& rng) {
  double scale = 0.0;
  for (double v : pred.values()) scale = std::max(scale, std::abs(v));
  Matrix t = random_matrix(pred.rows(), pred.cols(), rng, scale);
  for (std::size_t i = 0; i < t.size(); ++i) t.values()[i] += pred.values()[i];
  return t;
}

template <class LossFn>
GradCheckSuite run_suite(std::string name, LossFn loss_fn, const ModelParams& params,
                         const GradCheckOptions& o, std::uint64_t salt) {
  auto wrapped = [&](const ModelParams& p, ModelParams* g, KinkPattern* kinks) {
    const double l = loss_fn(p, g, kinks);
    if (g && o.corrupt) {
      for (double& v : (*g)[0].values()) v *= 1.0 + 1e-3;
    }
    return l;
  };
  return {std::move(name), finite_diff_check(wrapped, params, o.probes, o.step, o.seed + salt, o.tolerance)};
}

}  // namespace detail

/// 12-node jittered mesh at the working 5 km spacing.
inline MeshGraph gradcheck_graph() {
  static const Mesh mesh = triangulate_rectangle(5.0, 15.0, 10.0, 0.2, 7);
  return MeshGraph(mesh, GraphOptions{});
}

inline std::vector<GradCheckSuite> run_gradcheck(const GradCheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::vector<GradCheckSuite> suites;
  const MeshGraph graph = gradcheck_graph();
  const std::size_t n = graph.node_count();

  {  // leaky ReLU through an MSE
    ModelParams p;
    p.add("input", detail::random_matrix(n, 6, rng));
    const Matrix target = detail::random_matrix(n, 6, rng);
    suites.push_back(detail::run_suite(
        "leaky_relu",
        [&](const ModelParams& q, ModelParams* g, KinkPattern* kinks) {
          Matrix a = q[0];
          append_kink_pattern(*kinks, a);
          apply_leaky_relu(a, kLeakySlope);
          auto l = mse(a, target);
          if (g) (*g)[0] = leaky_relu_backward(q[0], l.gradient, kLeakySlope);
          return l.loss;
        },
        p, o, 1));
  }
  {  // MSE and masked MSE with respect to predictions
    ModelParams p;
    p.add("prediction", detail::random_matrix(n, 6, rng));
    const Matrix target = detail::random_matrix(n, 6, rng);
    suites.push_back(detail::run_suite(
        "mse",
        [&](const ModelParams& q, ModelParams* g, KinkPattern* kinks) {
          (void)kinks;
          auto l = mse(q[0], target);
          if (g) (*g)[0] = l.gradient;
          return l.loss;
        },
        p, o, 2));
    // Masked rows have exactly zero gradient, so give this one more rows.
    ModelParams pm;
    pm.add("prediction", detail::random_matrix(3 * n, 3, rng));
    const Matrix masked_target = detail::random_matrix(3 * n, 3, rng);
    std::vector<unsigned char> mask(3 * n);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 != 0;
    suites.push_back(detail::run_suite(
        "masked_mse",
        [&](const ModelParams& q, ModelParams* g, KinkPattern* kinks) {
          (void)kinks;
          auto l = masked_mse(q[0], masked_target, mask);
          if (g) (*g)[0] = l.gradient;
          return l.loss;
        },
        pm, o, 3));
  }
  {  // one graph convolution layer
    ModelParams p;
    p.add("weight", detail::random_matrix(5, 4, rng));
    p.add("input", detail::random_matrix(n, 4, rng));
    const Matrix target = detail::random_matrix(n, 5, rng);
    suites.push_back(detail::run_suite(
        "gcn_layer",
        [&](const ModelParams& q, ModelParams* g, KinkPattern* kinks) {
          GcnLayerCache cache;
          const Matrix out = gcn_layer_forward(graph, q[1], q[0], true, kLeakySlope, &cache);
          append_kink_pattern(*kinks, cache.pre_activation);
          auto l = mse(out, target);
          if (g) {
            auto lg = gcn_layer_backward(graph, q[0], cache, l.gradient, kLeakySlope);
            (*g)[0] = std::move(lg.weight);
            (*g)[1] = std::move(lg.input);
          }
          return l.loss;
        },
        p, o, 4));
  }
  {  // node-wise affine head
    ModelParams p;
    p.add("weight", detail::random_matrix(3, 6, rng));
    p.add("bias", detail::random_matrix(1, 3, rng));
    p.add("input", detail::random_matrix(n, 6, rng));
    const Matrix target = detail::random_matrix(n, 3, rng);
    suites.push_back(detail::run_suite(
        "dense_head",
        [&](const ModelParams& q, ModelParams* g, KinkPattern* kinks) {
          (void)kinks;
          Matrix out = matmul_bt(q[2], q[0]);
          add_row_bias(out, q[1]);
          auto l = mse(out, target);
          if (g) {
            (*g)[0] = matmul_at(l.gradient, q[2]);
            (*g)[1] = column_sums(l.gradient);
            (*g)[2] = matmul(l.gradient, q[0]);
          }
          return l.loss;
        },
        p, o, 5));
  }
  {  // one 3x3 convolution
    const RasterShape shape{5, 4};
    ModelParams p;
    p.add("kernel", detail::random_matrix(3, 18, rng, 0.5));
    p.add("bias", detail::random_matrix(1, 3, rng));
    p.add("input", detail::random_matrix(shape.cells(), 2, rng));
    const Matrix target = detail::random_matrix(shape.cells(), 3, rng);
    suites.push_back(detail::run_suite(
        "conv2d",
        [&](const ModelParams& q, ModelParams* g, KinkPattern* kinks) {
          Conv2dCache cache;
          const Matrix out = conv2d_forward(q[2], shape, q[0], q[1], true, kLeakySlope, &cache);
          append_kink_pattern(*kinks, cache.pre_activation);
          auto l = mse(out, target);
          if (g) {
            auto cg = conv2d_backward(cache, shape, q[0], l.gradient, kLeakySlope);
            (*g)[0] = std::move(cg.kernel);
            (*g)[1] = std::move(cg.bias);
            (*g)[2] = std::move(cg.input);
          }
          return l.loss;
        },
        p, o, 6));
  }
  {  // full GCN loss
    GcnConfig cfg;
    cfg.hidden_width = 8;
    const GcnModel base(cfg, o.seed + 11);
    const Matrix x = detail::random_matrix(n, 4, rng);
    const Matrix target = detail::targets_near(base.forward(graph, x), rng);
    suites.push_back(detail::run_suite(
        "gcn_model",
        [&](const ModelParams& q, ModelParams* g, KinkPattern* kinks) {
          const GcnModel model(cfg, q);
          GcnModel::Tape tape;
          auto l = mse(model.forward(graph, x, &tape), target);
          for (const auto& layer : tape.layers) append_kink_pattern(*kinks, layer.pre_activation);
          if (g) *g = model.backward(graph, tape, l.gradient);
          return l.loss;
        },
        base.params(), o, 7));
  }
  {  // full FCN masked loss
    FcnConfig cfg;
    cfg.hidden_width = 4;
    const RasterShape shape{6, 5};
    const FcnModel base(cfg, o.seed + 13);
    const Matrix x = detail::random_matrix(shape.cells(), 4, rng);
    const Matrix target = detail::targets_near(base.forward(x, shape), rng);
    std::vector<unsigned char> mask(shape.cells());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 7 != 0;
    suites.push_back(detail::run_suite(
        "fcn_model",
        [&](const ModelParams& q, ModelParams* g, KinkPattern* kinks) {
          const FcnModel model(cfg, q);
          FcnModel::Tape tape;
          auto l = masked_mse(model.forward(x, shape, &tape), target, mask);
          for (const auto& layer : tape) {
            if (layer.activated) append_kink_pattern(*kinks, layer.pre_activation);
          }
          if (g) *g = model.backward(tape, shape, l.gradient);
          return l.loss;
        },
        base.params(), o, 8));
  }
  return suites;
}

}  // namespace icegcn
