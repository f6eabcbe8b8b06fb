#pragma once

// Fully convolutional raster baseline. Rasters are stored as Matrix with one
// row per cell (flat index j * nx + i) and one column per channel.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/matrix.hpp"
#include "icegcn/nn.hpp"

namespace icegcn {

struct RasterShape {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t cells() const noexcept { return nx * ny; }
};

/// 3x3 patches with zero padding: row c holds, for tap (ky, kx) and input
/// channel ci, in(y + ky - 1, x + kx - 1, ci) at column (ky * 3 + kx) * C + ci.
inline Matrix im2col3x3(const Matrix& in, RasterShape shape) {
  if (in.rows() != shape.cells()) throw ShapeError("im2col: cell count mismatch");
  const std::size_t ch = in.cols();
  Matrix col(shape.cells(), 9 * ch);
  for (std::size_t y = 0; y < shape.ny; ++y) {
    for (std::size_t x = 0; x < shape.nx; ++x) {
      double* dst = col.row(y * shape.nx + x).data();
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(shape.ny)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(shape.nx)) continue;
          const double* src = in.row(static_cast<std::size_t>(sy) * shape.nx + static_cast<std::size_t>(sx)).data();
          std::copy(src, src + ch, dst + (ky * 3 + kx) * ch);
        }
      }
    }
  }
  return col;
}

/// Adjoint of im2col3x3: scatters patch gradients back onto the raster.
inline Matrix col2im3x3(const Matrix& col, RasterShape shape, std::size_t channels) {
  if (col.rows() != shape.cells() || col.cols() != 9 * channels) {
    throw ShapeError("col2im: shape mismatch");
  }
  Matrix out(shape.cells(), channels);
  for (std::size_t y = 0; y < shape.ny; ++y) {
    for (std::size_t x = 0; x < shape.nx; ++x) {
      const double* src = col.row(y * shape.nx + x).data();
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(shape.ny)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(shape.nx)) continue;
          double* dst = out.row(static_cast<std::size_t>(sy) * shape.nx + static_cast<std::size_t>(sx)).data();
          const double* s = src + (ky * 3 + kx) * channels;
          for (std::size_t c = 0; c < channels; ++c) dst[c] += s[c];
        }
      }
    }
  }
  return out;
}

struct Conv2dCache {
  Matrix columns;  // im2col of the layer input
  Matrix pre_activation;
  bool activated = false;
};

/// Stride-1, same-padded 3x3 convolution (cross-correlation).
/// `kernel` is C_out x (9 * C_in), `bias` is 1 x C_out.
inline Matrix conv2d_forward(const Matrix& in, RasterShape shape, const Matrix& kernel,
                             const Matrix& bias, bool activate = false,
                             double slope = kLeakySlope, Conv2dCache* cache = nullptr) {
  if (kernel.cols() != 9 * in.cols()) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel) + " for " +
                     std::to_string(in.cols()) + " input channels");
  }
  Matrix columns = im2col3x3(in, shape);
  Matrix pre = matmul_bt(columns, kernel);
  add_row_bias(pre, bias);
  Matrix out = pre;
  if (activate) apply_leaky_relu(out, slope);
  if (cache) {
    cache->columns = std::move(columns);
    cache->pre_activation = std::move(pre);
    cache->activated = activate;
  }
  return out;
}

struct Conv2dGrads {
  Matrix input;
  Matrix kernel;
  Matrix bias;
};

inline Conv2dGrads conv2d_backward(const Conv2dCache& cache, RasterShape shape,
                                   const Matrix& kernel, const Matrix& upstream,
                                   double slope = kLeakySlope) {
  if (!upstream.same_shape(cache.pre_activation)) throw ShapeError("conv2d backward: upstream shape");
  const Matrix d_pre =
      cache.activated ? leaky_relu_backward(cache.pre_activation, upstream, slope) : upstream;
  Conv2dGrads g;
  g.kernel = matmul_at(d_pre, cache.columns);
  g.bias = column_sums(d_pre);
  g.input = col2im3x3(matmul(d_pre, kernel), shape, kernel.cols() / 9);
  return g;
}

struct FcnConfig {
  std::size_t input_channels = 4;   // x, y ramps; t, m planes
  std::size_t output_channels = 3;  // vx, vy, H
  std::size_t hidden_width = 128;
  std::size_t num_layers = 6;
  double leaky_slope = kLeakySlope;

  void validate() const {
    if (input_channels == 0 || output_channels == 0 || hidden_width == 0) {
      throw ConfigError("FCN widths must be >= 1");
    }
    if (num_layers < 2) throw ConfigError("FCN needs at least two convolution layers");
  }

  friend bool operator==(const FcnConfig&, const FcnConfig&) = default;
};

inline ModelParams init_fcn_params(const FcnConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  std::size_t in = config.input_channels;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t out = l + 1 == config.num_layers ? config.output_channels : config.hidden_width;
    p.add("conv" + std::to_string(l) + ".kernel", glorot_uniform(out, 9 * in, 9 * in, 9 * out, rng));
    p.add("conv" + std::to_string(l) + ".bias", Matrix(1, out));
    in = out;
  }
  return p;
}

/// Convolution stack with leaky-ReLU after every layer but the last.
class FcnModel {
 public:
  using Tape = std::vector<Conv2dCache>;

  FcnModel() = default;
  FcnModel(FcnConfig config, std::uint64_t seed)
      : config_(config), params_(init_fcn_params(config, seed)) {}
  FcnModel(FcnConfig config, ModelParams params) : config_(config), params_(std::move(params)) {
    config_.validate();
    if (!params_.same_layout(init_fcn_params(config_, 0))) {
      throw ShapeError("FCN parameters do not match the configuration");
    }
  }

  const FcnConfig& config() const noexcept { return config_; }
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }

  Matrix forward(const Matrix& x, RasterShape shape, Tape* tape = nullptr) const {
    if (x.cols() != config_.input_channels) throw ShapeError("FCN input channel mismatch");
    if (tape) tape->assign(config_.num_layers, {});
    Matrix h = x;
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
      const bool act = l + 1 < config_.num_layers;
      h = conv2d_forward(h, shape, params_[2 * l], params_[2 * l + 1], act, config_.leaky_slope,
                         tape ? &(*tape)[l] : nullptr);
    }
    return h;
  }

  ModelParams backward(const Tape& tape, RasterShape shape, const Matrix& d_out) const {
    ModelParams grads = params_.zeros_like();
    Matrix upstream = d_out;
    for (std::size_t l = config_.num_layers; l-- > 0;) {
      auto g = conv2d_backward(tape[l], shape, params_[2 * l], upstream, config_.leaky_slope);
      grads[2 * l] = std::move(g.kernel);
      grads[2 * l + 1] = std::move(g.bias);
      if (l > 0) upstream = std::move(g.input);
    }
    return grads;
  }

  /// Masked MSE over valid cells; fills `grads` when non-null.
  double loss(const Matrix& x, RasterShape shape, const Matrix& target,
              std::span<const unsigned char> mask, ModelParams* grads = nullptr) const {
    Tape tape;
    const Matrix pred = forward(x, shape, grads ? &tape : nullptr);
    auto l = masked_mse(pred, target, mask);
    if (grads) *grads = backward(tape, shape, l.gradient);
    return l.loss;
  }

 private:
  FcnConfig config_;
  ModelParams params_;
};

}  // namespace icegcn
