#pragma once

// Wall-clock comparison of producing every (rate, month) frame with the
// transport oracle and with each emulator. Report-only.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "icegcn/emulator.hpp"
#include "icegcn/oracle.hpp"
#include "icegcn/text_io.hpp"

namespace icegcn {

struct BenchRow {
  std::string model;
  std::string phase;
  std::vector<double> seconds;
  double median() const {
    std::vector<double> s = seconds;
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  }
};

struct BenchReport {
  std::string hardware;
  std::size_t repetitions = 0;
  std::size_t rates = 0;
  std::size_t months = 0;
  std::vector<BenchRow> rows;

  const BenchRow* find(std::string_view model, std::string_view phase = "total") const {
    for (const auto& r : rows) {
      if (r.model == model && r.phase == phase) return &r;
    }
    return nullptr;
  }
};

inline std::string hardware_description() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) cpu = std::string(text::trim(std::string_view(line).substr(pos + 1)));
      break;
    }
  }
  return cpu + "; " + std::to_string(std::thread::hardware_concurrency()) +
         " hardware threads; single-threaded CPU execution";
}

/// Times all-rate, all-month generation. Emulators that are null are
/// skipped. FCN time is itemized into input rasterization, network
/// inference and resampling to the mesh.
inline BenchReport run_bench(const Mesh& mesh, const OracleConfig& oracle, std::span<const double> rates,
                             std::size_t months, std::size_t repetitions, const Emulator* gcn,
                             const Emulator* fcn) {
  if (repetitions == 0) throw ConfigError("repetitions must be >= 1");
  if (months == 0 || rates.empty()) throw ConfigError("benchmark needs rates and months");
  using clock = std::chrono::steady_clock;
  const auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };

  BenchReport report;
  report.hardware = hardware_description();
  report.repetitions = repetitions;
  report.rates = rates.size();
  report.months = months;

  BenchRow transport{"oracle-transport", "total", {}};
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    const auto t0 = clock::now();
    for (double rate : rates) {
      volatile auto frames = run_transport(mesh, oracle, rate, months).frame_count();
      (void)frames;
    }
    transport.seconds.push_back(seconds(t0, clock::now()));
  }
  report.rows.push_back(std::move(transport));

  double sink = 0.0;
  if (gcn) {
    const BoundEmulator bound(*gcn, mesh);
    BenchRow total{"gcn", "total", {}};
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      const auto t0 = clock::now();
      for (double rate : rates) {
        for (std::size_t m = 0; m < months; ++m) sink += bound.predict({rate, m}).thickness[0];
      }
      total.seconds.push_back(seconds(t0, clock::now()));
    }
    report.rows.push_back(std::move(total));
  }
  if (fcn) {
    const BoundEmulator bound(*fcn, mesh);
    const auto& model = std::get<FcnEmulator>(fcn->model).model;
    BenchRow total{"fcn", "total", {}}, raster{"fcn", "rasterize", {}}, infer{"fcn", "infer", {}},
        resample{"fcn", "resample", {}};
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      double tr = 0.0, ti = 0.0, ts = 0.0;
      for (double rate : rates) {
        for (std::size_t m = 0; m < months; ++m) {
          const auto a = clock::now();
          const Matrix x = bound.raster_inputs({rate, m});
          const auto b = clock::now();
          const Matrix y = model.forward(x, bound.raster_shape());
          const auto c = clock::now();
          const FrameFields f = decode_outputs(bound.resample().to_mesh(y), fcn->norm.outputs);
          const auto d = clock::now();
          sink += f.thickness[0];
          tr += seconds(a, b);
          ti += seconds(b, c);
          ts += seconds(c, d);
        }
      }
      raster.seconds.push_back(tr);
      infer.seconds.push_back(ti);
      resample.seconds.push_back(ts);
      total.seconds.push_back(tr + ti + ts);
    }
    for (auto* row : {&total, &raster, &infer, &resample}) report.rows.push_back(std::move(*row));
  }
  volatile double keep = sink;
  (void)keep;
  return report;
}

inline void write_bench_csv(std::ostream& os, const BenchReport& r) {
  os << "model,phase,median_seconds,repetitions,frames\n";
  for (const auto& row : r.rows) {
    os << row.model << ',' << row.phase << ',' << text::format_double(row.median()) << ','
       << row.seconds.size() << ',' << r.rates * r.months << '\n';
  }
}

inline void write_bench_report(std::ostream& os, const BenchReport& r) {
  os << "hardware = " << r.hardware << '\n'
     << "repetitions = " << r.repetitions << '\n'
     << "frames = " << r.rates * r.months << " (" << r.rates << " rates x " << r.months << " months)\n";
  const BenchRow* base = r.find("oracle-transport");
  for (const auto& row : r.rows) {
    os << row.model << '/' << row.phase << " median_seconds = " << row.median();
    if (base && row.phase == "total" && row.model != base->model && row.median() > 0.0) {
      os << " (" << 100.0 * row.median() / base->median() << "% of oracle-transport)";
    }
    os << '\n';
  }
  os << "note = timings cover computation only (no file I/O); report-only, no speed assertion\n";
}

}  // namespace icegcn
