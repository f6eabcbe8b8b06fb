#pragma once

// Parameter containers, activation, loss, Adam and finite-difference checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/matrix.hpp"

namespace icegcn {

/// Ordered, named collection of trainable tensors.
class ModelParams {
 public:
  void add(std::string name, Matrix value) {
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
  }

  std::size_t size() const noexcept { return tensors_.size(); }
  Matrix& operator[](std::size_t i) { return tensors_.at(i); }
  const Matrix& operator[](std::size_t i) const { return tensors_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  ModelParams zeros_like() const {
    ModelParams z;
    for (std::size_t i = 0; i < size(); ++i) z.add(names_[i], Matrix(tensors_[i].rows(), tensors_[i].cols()));
    return z;
  }

  bool same_layout(const ModelParams& o) const {
    if (o.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!tensors_[i].same_shape(o.tensors_[i])) return false;
    }
    return true;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> tensors_;
};

// --- activation -------------------------------------------------------------

inline constexpr double kLeakySlope = 0.01;

inline double leaky_relu(double x, double slope = kLeakySlope) { return x >= 0.0 ? x : slope * x; }

/// Derivative; defined as 1 at x == 0.
inline double leaky_relu_derivative(double x, double slope = kLeakySlope) {
  return x >= 0.0 ? 1.0 : slope;
}

inline void apply_leaky_relu(Matrix& m, double slope) {
  for (auto& v : m.values()) v = leaky_relu(v, slope);
}

/// upstream * sigma'(pre), elementwise.
inline Matrix leaky_relu_backward(const Matrix& pre, const Matrix& upstream, double slope) {
  if (!pre.same_shape(upstream)) throw ShapeError("activation backward: shape mismatch");
  Matrix g = upstream;
  auto gv = g.values();
  const auto pv = pre.values();
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= leaky_relu_derivative(pv[i], slope);
  return g;
}

// --- loss -------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Matrix gradient;
};

/// Mean squared error over all entries, with gradient 2 (pred - target) / count.
inline LossResult mse(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) throw ShapeError("mse: shape mismatch");
  LossResult r{0.0, Matrix(pred.rows(), pred.cols())};
  const auto p = pred.values();
  const auto t = target.values();
  auto g = r.gradient.values();
  const double count = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    r.loss += d * d;
    g[i] = 2.0 * d / count;
  }
  r.loss /= count;
  return r;
}

/// MSE over rows whose mask entry is nonzero; masked rows get zero gradient.
inline LossResult masked_mse(const Matrix& pred, const Matrix& target,
                             std::span<const unsigned char> row_mask) {
  if (!pred.same_shape(target) || row_mask.size() != pred.rows()) {
    throw ShapeError("masked_mse: shape mismatch");
  }
  std::size_t valid_rows = 0;
  for (auto m : row_mask) valid_rows += m ? 1 : 0;
  if (valid_rows == 0) throw ValidationError("masked_mse: no valid rows");
  const double count = static_cast<double>(valid_rows * pred.cols());
  LossResult r{0.0, Matrix(pred.rows(), pred.cols())};
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    if (!row_mask[i]) continue;
    for (std::size_t j = 0; j < pred.cols(); ++j) {
      const double d = pred(i, j) - target(i, j);
      r.loss += d * d;
      r.gradient(i, j) = 2.0 * d / count;
    }
  }
  r.loss /= count;
  return r;
}

// --- initialization -----------------------------------------------------------

/// Glorot-uniform entries on +-sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                             std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

// --- Adam ---------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ModelParams first_moment;
  ModelParams second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, const ModelParams& params)
      : config(cfg), first_moment(params.zeros_like()), second_moment(params.zeros_like()) {}
};

/// One bias-corrected Adam update, elementwise over every tensor.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state) {
  if (!params.same_layout(grads) || !params.same_layout(state.first_moment)) {
    throw ShapeError("adam_step: parameter/gradient/state layout mismatch");
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].values();
    const auto g = grads[k].values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

// --- finite-difference gradient check ----------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  /// Smallest nonzero max(|analytic|, |numeric|) over the probes; near the
  /// 1e-12 denominator floor the relative error stops being informative.
  double min_gradient_magnitude = std::numeric_limits<double>::infinity();
  /// Max relative error per tensor; tensors that were not probed report 0.
  std::vector<double> per_tensor;
  std::vector<std::size_t> per_tensor_probes;
  std::vector<std::string> names;
  /// Probes discarded because the +-h evaluations crossed an activation kink.
  std::size_t kink_skips = 0;
  /// Probes whose gradient is below the round-off resolution of the central
  /// difference; they are held to the absolute bound instead and do not
  /// count towards `probes`.
  std::size_t unresolved = 0;
  /// Largest |analytic - numeric| / round-off bound over unresolved probes.
  double max_unresolved_ratio = 0.0;
};

/// Round-off bound on a central difference from loss values `up`, `down`.
/// The factor covers accumulated rounding in the loss evaluation.
inline double central_difference_noise(double up, double down, double h) {
  constexpr double k = 16.0;
  return k * std::numeric_limits<double>::epsilon() * (std::abs(up) + std::abs(down)) / (2.0 * h);
}

/// Sign pattern of leaky-ReLU inputs, one entry per activated value.
using KinkPattern = std::vector<unsigned char>;

inline void append_kink_pattern(KinkPattern& out, const Matrix& pre_activation) {
  for (double v : pre_activation.values()) out.push_back(v >= 0.0);
}

/// Central-difference check of an analytic gradient.
///
/// `loss_fn(params, grad_or_null)` returns the loss and, when the second
/// argument is non-null, writes the analytic gradient into it. Coordinates
/// are drawn without replacement across all tensors. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-12).
///
/// A coordinate whose analytic and numeric values are both below
/// noise / tolerance cannot be resolved to `tolerance` relative; it must
/// instead agree within the round-off bound and is replaced by another.
///
/// A loss callable as `loss_fn(params, grad_or_null, KinkPattern*)` also
/// reports its activation signs. A probe whose +h or -h evaluation flips
/// any sign straddles a kink, where central differences do not estimate
/// the derivative; it is counted in `kink_skips` and the next coordinate
/// is drawn instead.
template <class LossFn>
GradCheckResult finite_diff_check(LossFn&& loss_fn, const ModelParams& params,
                                  std::size_t probe_count, double h, std::uint64_t seed,
                                  double tolerance = 1e-5) {
  constexpr bool kinks = std::is_invocable_v<LossFn&, const ModelParams&, ModelParams*, KinkPattern*>;
  const auto eval = [&](const ModelParams& p, ModelParams* g, KinkPattern* pattern) {
    if constexpr (kinks) {
      return loss_fn(p, g, pattern);
    } else {
      (void)pattern;
      return loss_fn(p, g);
    }
  };

  ModelParams analytic = params.zeros_like();
  KinkPattern base_pattern;
  eval(params, &analytic, &base_pattern);

  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (tensor, flat index)
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) coords.emplace_back(k, i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);

  GradCheckResult r;
  r.per_tensor.assign(params.size(), 0.0);
  r.per_tensor_probes.assign(params.size(), 0);
  for (std::size_t k = 0; k < params.size(); ++k) r.names.push_back(params.name(k));

  ModelParams probe = params;
  KinkPattern up_pattern, down_pattern;
  for (const auto& [k, i] : coords) {
    if (r.probes == probe_count) break;
    const double original = probe[k].values()[i];
    up_pattern.clear();
    down_pattern.clear();
    probe[k].values()[i] = original + h;
    const double up = eval(probe, nullptr, &up_pattern);
    probe[k].values()[i] = original - h;
    const double down = eval(probe, nullptr, &down_pattern);
    probe[k].values()[i] = original;
    if (up_pattern != base_pattern || down_pattern != base_pattern) {
      ++r.kink_skips;
      continue;
    }
    const double numeric = (up - down) / (2.0 * h);
    const double exact = analytic[k].values()[i];
    const double noise = central_difference_noise(up, down, h);
    if (std::max(std::abs(exact), std::abs(numeric)) * tolerance < noise) {
      ++r.unresolved;
      r.max_unresolved_ratio = std::max(r.max_unresolved_ratio, std::abs(exact - numeric) / noise);
      continue;
    }
    const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-12});
    double err = std::abs(exact - numeric) / denom;
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    r.per_tensor[k] = std::max(r.per_tensor[k], err);
    r.per_tensor_probes[k] += 1;
    r.max_relative_error = std::max(r.max_relative_error, err);
    if (const double mag = std::max(std::abs(exact), std::abs(numeric)); mag > 0.0) {
      r.min_gradient_magnitude = std::min(r.min_gradient_magnitude, mag);
    }
    ++r.probes;
  }
  return r;
}

}  // namespace icegcn
