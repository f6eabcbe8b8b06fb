#pragma once

// A trained surrogate (GCN or FCN) plus everything needed to run it on a
// mesh: normalization statistics, graph options or raster spec.

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "icegcn/fcn.hpp"
#include "icegcn/gcn.hpp"
#include "icegcn/graph.hpp"
#include "icegcn/grid.hpp"
#include "icegcn/mesh.hpp"
#include "icegcn/normalization.hpp"
#include "icegcn/oracle.hpp"

namespace icegcn {

enum class ModelKind { gcn, fcn };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::gcn ? "gcn" : "fcn"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "gcn") return ModelKind::gcn;
  if (s == "fcn") return ModelKind::fcn;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

inline const std::vector<std::string>& input_feature_names() {
  static const std::vector<std::string> names{"x", "y", "t", "m"};
  return names;
}
inline const std::vector<std::string>& output_names() {
  static const std::vector<std::string> names{"vx", "vy", "H"};
  return names;
}

struct GcnEmulator {
  GcnModel model;
  GraphOptions graph;
};

struct FcnEmulator {
  FcnModel model;
  GridSpec grid;
};

struct Emulator {
  std::variant<GcnEmulator, FcnEmulator> model;
  NormStats norm;

  ModelKind kind() const noexcept {
    return std::holds_alternative<GcnEmulator>(model) ? ModelKind::gcn : ModelKind::fcn;
  }
  const ModelParams& params() const {
    return std::visit([](const auto& m) -> const ModelParams& { return m.model.params(); }, model);
  }
  ModelParams& params() {
    return std::visit([](auto& m) -> ModelParams& { return m.model.params(); }, model);
  }
};

/// Builds normalized (x, y, t, m) inputs for every node of a mesh.
class FeatureEncoder {
 public:
  FeatureEncoder(std::span<const Point> points, const ZScore& inputs)
      : base_(points.size(), 4), inputs_(inputs) {
    if (inputs.size() != 4) throw ShapeError("expected 4 input statistics");
    for (std::size_t i = 0; i < points.size(); ++i) {
      base_(i, 0) = inputs.apply(0, points[i].x);
      base_(i, 1) = inputs.apply(1, points[i].y);
    }
  }

  Matrix encode(const FrameKey& key) const {
    Matrix x = base_;
    const double t = inputs_.apply(2, key.years());
    const double m = inputs_.apply(3, key.rate);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      x(i, 2) = t;
      x(i, 3) = m;
    }
    return x;
  }

 private:
  Matrix base_;
  ZScore inputs_;
};

/// Normalized target matrix (N x 3) for one frame.
inline Matrix encode_targets(const FrameFields& f, const ZScore& outputs) {
  Matrix y(f.node_count(), 3);
  for (std::size_t i = 0; i < f.node_count(); ++i) {
    y(i, 0) = outputs.apply(0, f.vx[i]);
    y(i, 1) = outputs.apply(1, f.vy[i]);
    y(i, 2) = outputs.apply(2, f.thickness[i]);
  }
  return y;
}

inline FrameFields decode_outputs(const Matrix& y, const ZScore& outputs) {
  FrameFields f(y.rows());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    f.vx[i] = outputs.invert(0, y(i, 0));
    f.vy[i] = outputs.invert(1, y(i, 1));
    f.thickness[i] = outputs.invert(2, y(i, 2));
  }
  return f;
}

/// An emulator bound to a mesh, with the graph or raster plans prebuilt.
class BoundEmulator {
 public:
  BoundEmulator(const Emulator& emulator, const Mesh& mesh)
      : emulator_(&emulator), mesh_(&mesh), nodes_(mesh.nodes(), emulator.norm.inputs) {
    if (const auto* g = std::get_if<GcnEmulator>(&emulator.model)) {
      graph_.emplace(mesh, g->graph);
    } else {
      const auto& f = std::get<FcnEmulator>(emulator.model);
      raster_ = RasterPlan(mesh, f.grid);
      resample_ = ResamplePlan(mesh, f.grid, raster_.mask());
    }
  }

  const Emulator& emulator() const noexcept { return *emulator_; }
  const Mesh& mesh() const noexcept { return *mesh_; }
  const MeshGraph& graph() const { return graph_.value(); }
  const RasterPlan& raster() const noexcept { return raster_; }
  const ResamplePlan& resample() const noexcept { return resample_; }
  RasterShape raster_shape() const noexcept { return {raster_.spec().nx, raster_.spec().ny}; }
  const FeatureEncoder& node_encoder() const noexcept { return nodes_; }

  /// FCN input raster: node inputs interpolated to cell centers, with
  /// out-of-mesh cells copying their nearest valid cell.
  Matrix raster_inputs(const FrameKey& key) const { return raster_.rasterize(nodes_.encode(key)); }

  /// Normalized prediction on mesh nodes (N x 3).
  Matrix predict_normalized(const FrameKey& key) const {
    if (const auto* g = std::get_if<GcnEmulator>(&emulator_->model)) {
      return g->model.forward(*graph_, nodes_.encode(key));
    }
    const auto& f = std::get<FcnEmulator>(emulator_->model);
    return resample_.to_mesh(f.model.forward(raster_inputs(key), raster_shape()));
  }

  /// Prediction in physical units.
  FrameFields predict(const FrameKey& key) const {
    return decode_outputs(predict_normalized(key), emulator_->norm.outputs);
  }

 private:
  const Emulator* emulator_;
  const Mesh* mesh_;
  FeatureEncoder nodes_;
  std::optional<MeshGraph> graph_;
  RasterPlan raster_;
  ResamplePlan resample_;
};

}  // namespace icegcn
