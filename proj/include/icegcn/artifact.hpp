#pragma once

// Model artifact (binary, little-endian):
//   "GEMU1"
//   u32 kind length, kind bytes ("gcn" | "fcn")
//   gcn: u32 in, out, hidden, layers; f64 slope; u8 self_loops; u8 kernel
//   fcn: u32 in, out, hidden, layers; f64 slope; u32 nx, ny; f64 origin_x, origin_y, spacing
//   u32 tensor count; per tensor: u32 rows, u32 cols, rows*cols f64 (row-major)
//   normalization: u32 n_in, n_in means, n_in stds, u32 n_out, n_out means, n_out stds

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "icegcn/emulator.hpp"
#include "icegcn/error.hpp"

namespace icegcn {

namespace artifact_detail {

static_assert(std::endian::native == std::endian::little, "artifact I/O assumes a little-endian host");

inline constexpr std::array<char, 5> kMagic{'G', 'E', 'M', 'U', '1'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint64_t v) {
    if (v > 0xffffffffu) throw Error("artifact field exceeds 32 bits");
    const auto w = static_cast<std::uint32_t>(v);
    bytes(&w, 4);
  }
  void f64(double v) { bytes(&v, 8); }
  void f64s(std::span<const double> v) { bytes(v.data(), v.size() * 8); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw ValidationError("truncated model artifact");
  }
  std::uint8_t u8() {
    std::uint8_t v = 0;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    bytes(&v, 4);
    return v;
  }
  double f64() {
    double v = 0;
    bytes(&v, 8);
    return v;
  }

 private:
  std::istream& is_;
};

inline void write_zscore(Writer& w, const ZScore& z) {
  w.u32(z.size());
  w.f64s(z.mean);
  w.f64s(z.stddev);
}

inline ZScore read_zscore(Reader& r) {
  ZScore z;
  const auto n = r.u32();
  if (n == 0 || n > 64) throw ValidationError("artifact: bad normalization size");
  z.mean.resize(n);
  z.stddev.resize(n);
  r.bytes(z.mean.data(), n * 8);
  r.bytes(z.stddev.data(), n * 8);
  return z;
}

}  // namespace artifact_detail

inline void save_emulator(std::ostream& os, const Emulator& e) {
  artifact_detail::Writer w(os);
  w.bytes(artifact_detail::kMagic.data(), artifact_detail::kMagic.size());
  const auto kind = to_string(e.kind());
  w.u32(kind.size());
  w.bytes(kind.data(), kind.size());
  if (const auto* g = std::get_if<GcnEmulator>(&e.model)) {
    const auto& c = g->model.config();
    w.u32(c.input_features);
    w.u32(c.output_features);
    w.u32(c.hidden_width);
    w.u32(c.num_graph_layers);
    w.f64(c.leaky_slope);
    w.u8(g->graph.self_loops ? 1 : 0);
    w.u8(g->graph.kernel == EdgeKernel::inverse_exp ? 0 : 1);
  } else {
    const auto& f = std::get<FcnEmulator>(e.model);
    const auto& c = f.model.config();
    w.u32(c.input_channels);
    w.u32(c.output_channels);
    w.u32(c.hidden_width);
    w.u32(c.num_layers);
    w.f64(c.leaky_slope);
    w.u32(f.grid.nx);
    w.u32(f.grid.ny);
    w.f64(f.grid.origin_x);
    w.f64(f.grid.origin_y);
    w.f64(f.grid.spacing);
  }
  const auto& params = e.params();
  w.u32(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    w.u32(params[k].rows());
    w.u32(params[k].cols());
    w.f64s(params[k].values());
  }
  artifact_detail::write_zscore(w, e.norm.inputs);
  artifact_detail::write_zscore(w, e.norm.outputs);
  if (!os) throw Error("failed writing model artifact");
}

inline Emulator load_emulator(std::istream& is) {
  artifact_detail::Reader r(is);
  std::array<char, 5> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != artifact_detail::kMagic) throw ValidationError("not a model artifact (bad magic)");
  const auto kind_len = r.u32();
  if (kind_len == 0 || kind_len > 16) throw ValidationError("artifact: bad kind tag");
  std::string kind(kind_len, '\0');
  r.bytes(kind.data(), kind_len);
  const ModelKind mk = parse_model_kind(kind);

  GcnConfig gcfg;
  GraphOptions gopts;
  FcnConfig fcfg;
  GridSpec grid;
  if (mk == ModelKind::gcn) {
    gcfg.input_features = r.u32();
    gcfg.output_features = r.u32();
    gcfg.hidden_width = r.u32();
    gcfg.num_graph_layers = r.u32();
    gcfg.leaky_slope = r.f64();
    gopts.self_loops = r.u8() != 0;
    gopts.kernel = r.u8() == 0 ? EdgeKernel::inverse_exp : EdgeKernel::exp_decay;
  } else {
    fcfg.input_channels = r.u32();
    fcfg.output_channels = r.u32();
    fcfg.hidden_width = r.u32();
    fcfg.num_layers = r.u32();
    fcfg.leaky_slope = r.f64();
    grid.nx = r.u32();
    grid.ny = r.u32();
    grid.origin_x = r.f64();
    grid.origin_y = r.f64();
    grid.spacing = r.f64();
  }
  ModelParams params;
  const auto count = r.u32();
  if (count > 1024) throw ValidationError("artifact: implausible tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) {
      throw ValidationError("artifact: bad tensor shape");
    }
    Matrix m(rows, cols);
    r.bytes(m.values().data(), m.size() * 8);
    params.add("", std::move(m));
  }
  Emulator e;
  e.norm.inputs = artifact_detail::read_zscore(r);
  e.norm.outputs = artifact_detail::read_zscore(r);
  // Restore parameter names from a freshly initialized layout.
  if (mk == ModelKind::gcn) {
    auto named = init_gcn_params(gcfg, 0);
    if (!named.same_layout(params)) throw ValidationError("artifact: tensors do not match GCN config");
    for (std::size_t k = 0; k < named.size(); ++k) named[k] = std::move(params[k]);
    e.model = GcnEmulator{GcnModel(gcfg, std::move(named)), gopts};
  } else {
    grid.validate();
    auto named = init_fcn_params(fcfg, 0);
    if (!named.same_layout(params)) throw ValidationError("artifact: tensors do not match FCN config");
    for (std::size_t k = 0; k < named.size(); ++k) named[k] = std::move(params[k]);
    e.model = FcnEmulator{FcnModel(fcfg, std::move(named)), grid};
  }
  return e;
}

}  // namespace icegcn
