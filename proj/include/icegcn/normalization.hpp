#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/matrix.hpp"

namespace icegcn {

/// Per-column z-score transform.
struct ZScore {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t size() const noexcept { return mean.size(); }

  /// Fits on the rows of `samples`; a constant column is an error.
  static ZScore fit(const Matrix& samples, std::span<const std::string> names = {}) {
    ZScore z;
    const std::size_t n = samples.rows();
    const std::size_t c = samples.cols();
    z.mean.assign(c, 0.0);
    z.stddev.assign(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) z.mean[j] += samples(i, j);
    }
    for (auto& m : z.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double d = samples(i, j) - z.mean[j];
        z.stddev[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      z.stddev[j] = std::sqrt(z.stddev[j] / static_cast<double>(n));
    }
    z.check(names);
    return z;
  }

  void check(std::span<const std::string> names = {}) const {
    for (std::size_t j = 0; j < mean.size(); ++j) {
      if (!(stddev[j] > 1e-12 * std::max(1.0, std::abs(mean[j]))) || !std::isfinite(stddev[j])) {
        const std::string label = j < names.size() ? names[j] : "column " + std::to_string(j);
        throw ValidationError("feature '" + label + "' is constant on the training data");
      }
    }
  }

  double apply(std::size_t j, double v) const { return (v - mean[j]) / stddev[j]; }
  double invert(std::size_t j, double v) const { return v * stddev[j] + mean[j]; }

  void apply(Matrix& m) const {
    if (m.cols() != size()) throw ShapeError("z-score: column count mismatch");
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = apply(j, m(i, j));
    }
  }
  void invert(Matrix& m) const {
    if (m.cols() != size()) throw ShapeError("z-score: column count mismatch");
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = invert(j, m(i, j));
    }
  }

  friend bool operator==(const ZScore&, const ZScore&) = default;
};

/// Input statistics (x, y, t, m) and target statistics (vx, vy, H), fit on
/// training frames only.
struct NormStats {
  ZScore inputs;
  ZScore outputs;

  /// Unit transform; used when training statistics are supplied externally.
  static NormStats identity(std::size_t in = 4, std::size_t out = 3) {
    NormStats s;
    s.inputs = {std::vector<double>(in, 0.0), std::vector<double>(in, 1.0)};
    s.outputs = {std::vector<double>(out, 0.0), std::vector<double>(out, 1.0)};
    return s;
  }

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

}  // namespace icegcn
