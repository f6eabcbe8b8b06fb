#pragma once

// Graph convolutional emulator: a stack of graph-convolution layers
//   h_i' = sigma( sum_{j in N(i)} (e_ij / c_ij) W h_j )
// followed by a node-wise affine head.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/graph.hpp"
#include "icegcn/matrix.hpp"
#include "icegcn/nn.hpp"

namespace icegcn {

struct GcnConfig {
  std::size_t input_features = 4;   // x, y, t, m
  std::size_t output_features = 3;  // vx, vy, H
  std::size_t hidden_width = 128;
  std::size_t num_graph_layers = 5;
  double leaky_slope = kLeakySlope;

  void validate() const {
    if (input_features == 0 || output_features == 0 || hidden_width == 0) {
      throw ConfigError("GCN widths must be >= 1");
    }
    if (num_graph_layers == 0) throw ConfigError("GCN needs at least one graph layer");
  }

  friend bool operator==(const GcnConfig&, const GcnConfig&) = default;
};

/// Sparse propagation: out_i = sum_{j in N(i)} (e_ij / c_ij) h_j.
///
/// The coefficient matrix is symmetric, so this also applies its transpose.
inline Matrix propagate(const MeshGraph& graph, const Matrix& h) {
  if (h.rows() != graph.node_count()) {
    throw ShapeError("propagate: " + std::to_string(h.rows()) + " rows for " +
                     std::to_string(graph.node_count()) + " nodes");
  }
  const std::size_t f = h.cols();
  Matrix out(h.rows(), f);
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    const auto nbrs = graph.neighbors(i);
    const auto coef = graph.coefficients(i);
    double* __restrict o = out.row(i).data();
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const double a = coef[k];
      const double* __restrict hj = h.row(nbrs[k]).data();
      for (std::size_t c = 0; c < f; ++c) o[c] += a * hj[c];
    }
  }
  return out;
}

struct GcnLayerCache {
  Matrix propagated;      // A h_in
  Matrix pre_activation;  // (A h_in) W^T
  bool activated = true;
};

/// One graph-convolution layer. `weight` is F_out x F_in.
inline Matrix gcn_layer_forward(const MeshGraph& graph, const Matrix& h_in, const Matrix& weight,
                                bool activate, double slope, GcnLayerCache* cache = nullptr) {
  if (weight.cols() != h_in.cols()) {
    throw ShapeError("gcn layer: weight " + shape_string(weight) + " vs input " +
                     shape_string(h_in));
  }
  Matrix propagated = propagate(graph, h_in);
  Matrix pre = matmul_bt(propagated, weight);
  Matrix out = pre;
  if (activate) apply_leaky_relu(out, slope);
  if (cache) {
    cache->propagated = std::move(propagated);
    cache->pre_activation = std::move(pre);
    cache->activated = activate;
  }
  return out;
}

struct GcnLayerGrads {
  Matrix input;
  Matrix weight;
};

inline GcnLayerGrads gcn_layer_backward(const MeshGraph& graph, const Matrix& weight,
                                        const GcnLayerCache& cache, const Matrix& upstream,
                                        double slope) {
  if (!upstream.same_shape(cache.pre_activation)) {
    throw ShapeError("gcn layer backward: upstream " + shape_string(upstream));
  }
  const Matrix d_pre =
      cache.activated ? leaky_relu_backward(cache.pre_activation, upstream, slope) : upstream;
  GcnLayerGrads g;
  g.weight = matmul_at(d_pre, cache.propagated);
  g.input = propagate(graph, matmul(d_pre, weight));
  return g;
}

/// Glorot-uniform graph weights and head weight, zero head bias.
inline ModelParams init_gcn_params(const GcnConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  std::size_t in = config.input_features;
  for (std::size_t l = 0; l < config.num_graph_layers; ++l) {
    p.add("graph" + std::to_string(l) + ".weight",
          glorot_uniform(config.hidden_width, in, in, config.hidden_width, rng));
    in = config.hidden_width;
  }
  p.add("head.weight", glorot_uniform(config.output_features, in, in, config.output_features, rng));
  p.add("head.bias", Matrix(1, config.output_features));
  return p;
}

class GcnModel {
 public:
  struct Tape {
    std::vector<GcnLayerCache> layers;
    Matrix head_input;
  };

  GcnModel() = default;
  GcnModel(GcnConfig config, std::uint64_t seed)
      : config_(config), params_(init_gcn_params(config, seed)) {}
  GcnModel(GcnConfig config, ModelParams params) : config_(config), params_(std::move(params)) {
    config_.validate();
    if (!params_.same_layout(init_gcn_params(config_, 0))) {
      throw ShapeError("GCN parameters do not match the configuration");
    }
  }

  const GcnConfig& config() const noexcept { return config_; }
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }

  Matrix forward(const MeshGraph& graph, const Matrix& x, Tape* tape = nullptr) const {
    if (x.cols() != config_.input_features) {
      throw ShapeError("GCN input has " + std::to_string(x.cols()) + " features, expected " +
                       std::to_string(config_.input_features));
    }
    if (tape) tape->layers.assign(config_.num_graph_layers, {});
    Matrix h = x;
    for (std::size_t l = 0; l < config_.num_graph_layers; ++l) {
      h = gcn_layer_forward(graph, h, params_[l], true, config_.leaky_slope,
                            tape ? &tape->layers[l] : nullptr);
    }
    Matrix out = matmul_bt(h, params_[head_index()]);
    add_row_bias(out, params_[head_index() + 1]);
    if (tape) tape->head_input = std::move(h);
    return out;
  }

  /// Gradients of a scalar loss with respect to every parameter, given
  /// d loss / d output.
  ModelParams backward(const MeshGraph& graph, const Tape& tape, const Matrix& d_out) const {
    ModelParams grads = params_.zeros_like();
    const std::size_t head = head_index();
    grads[head] = matmul_at(d_out, tape.head_input);
    grads[head + 1] = column_sums(d_out);
    Matrix upstream = matmul(d_out, params_[head]);
    for (std::size_t l = config_.num_graph_layers; l-- > 0;) {
      auto g = gcn_layer_backward(graph, params_[l], tape.layers[l], upstream, config_.leaky_slope);
      grads[l] = std::move(g.weight);
      if (l > 0) upstream = std::move(g.input);
    }
    return grads;
  }

  /// MSE against `target`; fills `grads` when non-null.
  double loss(const MeshGraph& graph, const Matrix& x, const Matrix& target,
              ModelParams* grads = nullptr) const {
    Tape tape;
    const Matrix pred = forward(graph, x, grads ? &tape : nullptr);
    auto l = mse(pred, target);
    if (grads) *grads = backward(graph, tape, l.gradient);
    return l.loss;
  }

 private:
  std::size_t head_index() const noexcept { return config_.num_graph_layers; }

  GcnConfig config_;
  ModelParams params_;
};

}  // namespace icegcn
