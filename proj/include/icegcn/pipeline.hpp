#pragma once

// Melting-rate split, normalization fitting, training loops and metrics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "icegcn/emulator.hpp"
#include "icegcn/error.hpp"
#include "icegcn/nn.hpp"
#include "icegcn/oracle.hpp"
#include "icegcn/text_io.hpp"

namespace icegcn {

// --- split --------------------------------------------------------------------

struct SplitSpec {
  std::vector<double> validation_rates{10.0, 30.0, 50.0, 70.0};
  std::vector<double> test_rates{0.0, 20.0, 40.0, 60.0};
};

/// Frames of one set selected by index (ascending).
struct FrameSubset {
  const FrameSet* source = nullptr;
  std::vector<std::size_t> frames;

  std::size_t size() const noexcept { return frames.size(); }
  bool empty() const noexcept { return frames.empty(); }
  FrameKey key(std::size_t k) const { return source->key(frames[k]); }
  const FrameFields& fields(std::size_t k) const { return source->frame(frames[k]); }
  /// Distinct rates, ascending.
  std::vector<double> rates() const {
    std::vector<double> r;
    for (auto f : frames) {
      const double rate = source->key(f).rate;
      if (r.empty() || r.back() != rate) r.push_back(rate);
    }
    return r;
  }
};

struct Split {
  FrameSubset train;
  FrameSubset validation;
  FrameSubset test;
};

namespace pipeline_detail {
inline bool contains_rate(std::span<const double> rates, double r) {
  return std::any_of(rates.begin(), rates.end(), [r](double x) { return std::abs(x - r) <= 1e-9; });
}
}  // namespace pipeline_detail

/// Partitions frames by melting rate; every month of a rate lands in the
/// same partition. An empty training partition is an error.
inline Split split_frames(const FrameSet& frames, const SplitSpec& spec) {
  for (double v : spec.validation_rates) {
    if (pipeline_detail::contains_rate(spec.test_rates, v)) {
      throw ConfigError("rate " + text::format_double(v) + " is both validation and test");
    }
  }
  Split s{{&frames, {}}, {&frames, {}}, {&frames, {}}};
  for (std::size_t f = 0; f < frames.frame_count(); ++f) {
    const double rate = frames.key(f).rate;
    if (pipeline_detail::contains_rate(spec.test_rates, rate)) {
      s.test.frames.push_back(f);
    } else if (pipeline_detail::contains_rate(spec.validation_rates, rate)) {
      s.validation.frames.push_back(f);
    } else {
      s.train.frames.push_back(f);
    }
  }
  if (s.train.empty()) throw ValidationError("training split is empty");
  return s;
}

// --- normalization ------------------------------------------------------------

/// Z-score statistics of node inputs (x, y, t, m) and targets (vx, vy, H)
/// pooled over every node of every training frame.
inline NormStats fit_normalization(const Mesh& mesh, const FrameSubset& train) {
  if (train.empty()) throw ValidationError("cannot fit normalization on an empty set");
  const std::size_t n = mesh.node_count();
  if (train.source->node_count() != n) throw ValidationError("frames do not match mesh");
  const double count = static_cast<double>(n * train.size());
  std::array<double, 4> in_mean{}, in_var{};
  std::array<double, 3> out_mean{}, out_var{};
  for (std::size_t i = 0; i < n; ++i) {
    in_mean[0] += mesh.node(i).x;
    in_mean[1] += mesh.node(i).y;
  }
  in_mean[0] /= static_cast<double>(n);
  in_mean[1] /= static_cast<double>(n);
  for (std::size_t k = 0; k < train.size(); ++k) {
    in_mean[2] += train.key(k).years();
    in_mean[3] += train.key(k).rate;
    const auto& f = train.fields(k);
    for (std::size_t i = 0; i < n; ++i) {
      out_mean[0] += f.vx[i];
      out_mean[1] += f.vy[i];
      out_mean[2] += f.thickness[i];
    }
  }
  in_mean[2] /= static_cast<double>(train.size());
  in_mean[3] /= static_cast<double>(train.size());
  for (auto& m : out_mean) m /= count;
  for (std::size_t i = 0; i < n; ++i) {
    in_var[0] += (mesh.node(i).x - in_mean[0]) * (mesh.node(i).x - in_mean[0]);
    in_var[1] += (mesh.node(i).y - in_mean[1]) * (mesh.node(i).y - in_mean[1]);
  }
  in_var[0] /= static_cast<double>(n);
  in_var[1] /= static_cast<double>(n);
  for (std::size_t k = 0; k < train.size(); ++k) {
    const double dt = train.key(k).years() - in_mean[2];
    const double dm = train.key(k).rate - in_mean[3];
    in_var[2] += dt * dt;
    in_var[3] += dm * dm;
    const auto& f = train.fields(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = f.vx[i] - out_mean[0];
      const double b = f.vy[i] - out_mean[1];
      const double c = f.thickness[i] - out_mean[2];
      out_var[0] += a * a;
      out_var[1] += b * b;
      out_var[2] += c * c;
    }
  }
  in_var[2] /= static_cast<double>(train.size());
  in_var[3] /= static_cast<double>(train.size());
  NormStats s;
  s.inputs.mean.assign(in_mean.begin(), in_mean.end());
  s.outputs.mean.assign(out_mean.begin(), out_mean.end());
  for (double v : in_var) s.inputs.stddev.push_back(std::sqrt(v));
  for (double v : out_var) s.outputs.stddev.push_back(std::sqrt(v / count));
  s.inputs.check(input_feature_names());
  s.outputs.check(output_names());
  return s;
}

// --- training -----------------------------------------------------------------

struct TrainConfig {
  ModelKind kind = ModelKind::gcn;
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  std::optional<double> fcn_learning_rate;  // FCN only; defaults to learning_rate
  std::uint64_t seed = 0;
  bool early_stop = false;
  std::size_t patience = 20;
  std::size_t hidden_width = 128;
  std::size_t gcn_layers = 5;
  std::size_t fcn_layers = 6;
  GraphOptions graph;
  std::size_t grid_nx = 64;
  std::size_t grid_ny = 64;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  Emulator emulator;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  /// Rates whose frames were seen by the optimizer or normalization fit.
  std::vector<double> observed_rates;
};

inline Emulator make_emulator(const TrainConfig& cfg, const Mesh& mesh, NormStats norm) {
  Emulator e;
  e.norm = std::move(norm);
  if (cfg.kind == ModelKind::gcn) {
    GcnConfig g;
    g.hidden_width = cfg.hidden_width;
    g.num_graph_layers = cfg.gcn_layers;
    e.model = GcnEmulator{GcnModel(g, cfg.seed), cfg.graph};
  } else {
    FcnConfig f;
    f.hidden_width = cfg.hidden_width;
    f.num_layers = cfg.fcn_layers;
    e.model = FcnEmulator{FcnModel(f, cfg.seed), GridSpec::covering(mesh, cfg.grid_nx, cfg.grid_ny)};
  }
  return e;
}

/// Loss of one frame in the model's native training space (mesh nodes for
/// GCN, valid raster cells for FCN); fills `grads` when non-null.
inline double frame_loss(const BoundEmulator& bound, const Emulator& e, const FrameKey& key,
                         const FrameFields& fields, ModelParams* grads) {
  const Matrix targets = encode_targets(fields, e.norm.outputs);
  if (const auto* g = std::get_if<GcnEmulator>(&e.model)) {
    return g->model.loss(bound.graph(), bound.node_encoder().encode(key), targets, grads);
  }
  const auto& f = std::get<FcnEmulator>(e.model);
  return f.model.loss(bound.raster_inputs(key), bound.raster_shape(),
                      bound.raster().rasterize(targets), bound.raster().mask(), grads);
}

/// Per-frame Adam training with a seeded shuffle each epoch; keeps the
/// parameters with the lowest validation loss (training loss when there is
/// no validation set). `norm` overrides the statistics fit on `train`.
inline TrainResult train(const Mesh& mesh, const FrameSubset& train_set,
                         const FrameSubset& validation, const TrainConfig& cfg,
                         std::optional<NormStats> norm = std::nullopt,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (train_set.empty()) throw ValidationError("training split is empty");
  if (cfg.epochs == 0) throw ConfigError("epochs must be >= 1");
  const double lr = cfg.kind == ModelKind::fcn && cfg.fcn_learning_rate ? *cfg.fcn_learning_rate : cfg.learning_rate;
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");

  TrainResult result;
  result.observed_rates = train_set.rates();
  result.emulator = make_emulator(cfg, mesh, norm ? *norm : fit_normalization(mesh, train_set));
  Emulator& e = result.emulator;
  const BoundEmulator bound(e, mesh);

  AdamConfig adam;
  adam.learning_rate = lr;
  AdamState state(adam, e.params());
  ModelParams best = e.params();
  double best_loss = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> frame_losses(train_set.size());
  const auto start = std::chrono::steady_clock::now();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    ModelParams grads;
    for (std::size_t k : order) {
      const double l = frame_loss(bound, e, train_set.key(k), train_set.fields(k), &grads);
      if (!std::isfinite(l)) throw DivergenceError(epoch);
      frame_losses[k] = l;
      adam_step(e.params(), grads, state);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = std::accumulate(frame_losses.begin(), frame_losses.end(), 0.0) /
                     static_cast<double>(frame_losses.size());
    if (!validation.empty()) {
      double sum = 0.0;
      for (std::size_t k = 0; k < validation.size(); ++k) {
        sum += frame_loss(bound, e, validation.key(k), validation.fields(k), nullptr);
      }
      rec.val_loss = sum / static_cast<double>(validation.size());
    } else {
      rec.val_loss = rec.train_loss;
    }
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) throw DivergenceError(epoch);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      best = e.params();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.early_stop && ++since_best >= cfg.patience) {
      break;
    }
  }
  e.params() = std::move(best);
  return result;
}

inline void write_history_csv(std::ostream& os, std::span<const EpochRecord> history) {
  os << "epoch,train_loss,val_loss,wall_seconds\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << text::format_double(r.train_loss) << ','
       << text::format_double(r.val_loss) << ',' << text::format_double(r.wall_seconds) << '\n';
  }
}

// --- metrics ------------------------------------------------------------------

/// Sample Pearson correlation; nullopt when either input has zero variance.
inline std::optional<double> pearson_r(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson_r: length mismatch");
  if (a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

inline double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("rmse: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

struct VariableScores {
  double rmse = 0.0;
  std::optional<double> r;
};

struct RateMetrics {
  double rate = 0.0;
  VariableScores velocity;
  VariableScores thickness;
};

struct Metrics {
  VariableScores velocity;   // on speed magnitude, m/year
  VariableScores thickness;  // m
  double rmse_vx = 0.0;
  double rmse_vy = 0.0;
  /// Mean of per-frame correlations (frames with undefined R skipped).
  std::optional<double> velocity_r_per_frame;
  std::optional<double> thickness_r_per_frame;
  std::vector<RateMetrics> per_rate;
  std::size_t frames = 0;
  std::size_t samples = 0;
};

/// Scores predictions against the frames they were made for. Frames are
/// processed in ascending index order, so the result is independent of the
/// order in `subset`.
template <class Predict>
Metrics evaluate_predictions(const FrameSubset& subset, Predict&& predict) {
  if (subset.empty()) throw ValidationError("cannot evaluate an empty frame set");
  std::vector<std::size_t> order = subset.frames;
  std::sort(order.begin(), order.end());
  const FrameSet& src = *subset.source;

  std::vector<double> speed_true, speed_pred, h_true, h_pred, vx_t, vx_p, vy_t, vy_p;
  std::vector<double> frame_rv, frame_rh;
  Metrics m;
  std::vector<std::size_t> rate_start;  // sample offset at which each rate begins
  std::vector<double> rate_values;
  for (std::size_t f : order) {
    const FrameKey key = src.key(f);
    const FrameFields& truth = src.frame(f);
    const FrameFields pred = predict(f, key);
    if (pred.node_count() != truth.node_count()) throw ShapeError("prediction node count mismatch");
    if (rate_values.empty() || rate_values.back() != key.rate) {
      rate_values.push_back(key.rate);
      rate_start.push_back(speed_true.size());
    }
    const std::size_t begin = speed_true.size();
    for (std::size_t i = 0; i < truth.node_count(); ++i) {
      speed_true.push_back(std::hypot(truth.vx[i], truth.vy[i]));
      speed_pred.push_back(std::hypot(pred.vx[i], pred.vy[i]));
      h_true.push_back(truth.thickness[i]);
      h_pred.push_back(pred.thickness[i]);
      vx_t.push_back(truth.vx[i]);
      vx_p.push_back(pred.vx[i]);
      vy_t.push_back(truth.vy[i]);
      vy_p.push_back(pred.vy[i]);
    }
    const std::size_t len = speed_true.size() - begin;
    const auto sub = [&](const std::vector<double>& v) {
      return std::span<const double>(v).subspan(begin, len);
    };
    if (auto r = pearson_r(sub(speed_true), sub(speed_pred))) frame_rv.push_back(*r);
    if (auto r = pearson_r(sub(h_true), sub(h_pred))) frame_rh.push_back(*r);
    ++m.frames;
  }
  rate_start.push_back(speed_true.size());

  m.samples = speed_true.size();
  m.velocity = {rmse(speed_true, speed_pred), pearson_r(speed_true, speed_pred)};
  m.thickness = {rmse(h_true, h_pred), pearson_r(h_true, h_pred)};
  m.rmse_vx = rmse(vx_t, vx_p);
  m.rmse_vy = rmse(vy_t, vy_p);
  const auto mean_of = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  m.velocity_r_per_frame = mean_of(frame_rv);
  m.thickness_r_per_frame = mean_of(frame_rh);
  for (std::size_t r = 0; r < rate_values.size(); ++r) {
    const std::size_t b = rate_start[r];
    const std::size_t len = rate_start[r + 1] - b;
    const auto sub = [&](const std::vector<double>& v) {
      return std::span<const double>(v).subspan(b, len);
    };
    m.per_rate.push_back({rate_values[r],
                          {rmse(sub(speed_true), sub(speed_pred)), pearson_r(sub(speed_true), sub(speed_pred))},
                          {rmse(sub(h_true), sub(h_pred)), pearson_r(sub(h_true), sub(h_pred))}});
  }
  return m;
}

/// Evaluates an emulator on mesh nodes in physical units. FCN outputs are
/// resampled from the raster to the mesh before scoring.
inline Metrics evaluate(const Emulator& emulator, const Mesh& mesh, const FrameSubset& subset) {
  const BoundEmulator bound(emulator, mesh);
  return evaluate_predictions(subset, [&](std::size_t, const FrameKey& key) { return bound.predict(key); });
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? text::format_double(*v) : std::string("undefined");
}

/// Key-value text report.
inline void write_metrics_report(std::ostream& os, const Metrics& m, std::string_view label) {
  os << "model = " << label << '\n'
     << "frames = " << m.frames << '\n'
     << "samples = " << m.samples << '\n'
     << "rmse_velocity = " << text::format_double(m.velocity.rmse) << '\n'
     << "pearson_r_velocity = " << format_optional(m.velocity.r) << '\n'
     << "rmse_thickness = " << text::format_double(m.thickness.rmse) << '\n'
     << "pearson_r_thickness = " << format_optional(m.thickness.r) << '\n'
     << "rmse_vx = " << text::format_double(m.rmse_vx) << '\n'
     << "rmse_vy = " << text::format_double(m.rmse_vy) << '\n'
     << "pearson_r_velocity_per_frame_mean = " << format_optional(m.velocity_r_per_frame) << '\n'
     << "pearson_r_thickness_per_frame_mean = " << format_optional(m.thickness_r_per_frame) << '\n';
  if (!m.velocity.r || !m.thickness.r) os << "warning = correlation undefined for constant series\n";
}

/// Machine-readable table: pooled rows first, then one row per rate.
inline void write_metrics_csv(std::ostream& os, const Metrics& m) {
  os << "scope,rate,variable,rmse,r\n";
  os << "pooled,all,velocity," << text::format_double(m.velocity.rmse) << ',' << format_optional(m.velocity.r) << '\n';
  os << "pooled,all,thickness," << text::format_double(m.thickness.rmse) << ',' << format_optional(m.thickness.r) << '\n';
  os << "pooled,all,vx," << text::format_double(m.rmse_vx) << ",\n";
  os << "pooled,all,vy," << text::format_double(m.rmse_vy) << ",\n";
  for (const auto& r : m.per_rate) {
    const auto rate = text::format_double(r.rate);
    os << "rate," << rate << ",velocity," << text::format_double(r.velocity.rmse) << ','
       << format_optional(r.velocity.r) << '\n';
    os << "rate," << rate << ",thickness," << text::format_double(r.thickness.rmse) << ','
       << format_optional(r.thickness.r) << '\n';
  }
}

}  // namespace icegcn
