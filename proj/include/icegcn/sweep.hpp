#pragma once

// Melting-rate sensitivity sweep: area-weighted mean speed and thickness
// trajectories, ice mass change and sea-level equivalent per rate.

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "icegcn/emulator.hpp"
#include "icegcn/error.hpp"
#include "icegcn/oracle.hpp"
#include "icegcn/text_io.hpp"

namespace icegcn {

inline constexpr double kIceDensity = 917.0;   // kg/m^3
inline constexpr double kGtPerMmSle = 362.5;   // Gt of ice per mm global mean sea level

struct SweepSeries {
  double rate = 0.0;
  std::vector<double> mean_speed;       // area-weighted, m/year
  std::vector<double> mean_thickness;   // area-weighted, m
  std::vector<double> flat_mean_speed;  // unweighted node average
  std::vector<double> flat_mean_thickness;
  double mass_change_gt = 0.0;  // final month minus month 0
  double sle_mm = 0.0;          // sea-level rise equivalent of the mass loss

  double thickness_change() const { return mean_thickness.back() - mean_thickness.front(); }
  double speed_change() const { return mean_speed.back() - mean_speed.front(); }
};

struct SweepReport {
  std::size_t months = 0;
  std::vector<SweepSeries> emulator;
  std::vector<SweepSeries> oracle;
};

/// Mass change in Gt for thickness change `dh` (m) over node areas (km^2).
inline double mass_change_gt(const Mesh& mesh, std::span<const double> h0, std::span<const double> h1) {
  const auto areas = mesh.dual_areas();
  double volume_km2_m = 0.0;
  for (std::size_t i = 0; i < mesh.node_count(); ++i) volume_km2_m += areas[i] * (h1[i] - h0[i]);
  // km^2 m -> m^3 is 1e6; kg -> Gt is 1e-12.
  return kIceDensity * volume_km2_m * 1e6 * 1e-12;
}

/// `predict(key)` returns fields at every node for one (rate, month).
inline SweepSeries sweep_series(const Mesh& mesh, double rate, std::size_t months,
                                const std::function<FrameFields(const FrameKey&)>& predict) {
  if (months == 0) throw ConfigError("sweep horizon must be at least one month");
  SweepSeries s;
  s.rate = rate;
  const auto areas = mesh.dual_areas();
  const double total = mesh.total_area();
  const double n = static_cast<double>(mesh.node_count());
  FrameFields first;
  FrameFields last;
  for (std::size_t month = 0; month < months; ++month) {
    FrameFields f = predict({rate, month});
    if (f.node_count() != mesh.node_count()) throw ShapeError("sweep: prediction node count");
    double ws = 0.0, wh = 0.0, fs = 0.0, fh = 0.0;
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
      const double speed = std::hypot(f.vx[i], f.vy[i]);
      ws += areas[i] * speed;
      wh += areas[i] * f.thickness[i];
      fs += speed;
      fh += f.thickness[i];
    }
    s.mean_speed.push_back(ws / total);
    s.mean_thickness.push_back(wh / total);
    s.flat_mean_speed.push_back(fs / n);
    s.flat_mean_thickness.push_back(fh / n);
    if (month == 0) first = f;
    if (month + 1 == months) last = std::move(f);
  }
  s.mass_change_gt = mass_change_gt(mesh, first.thickness, last.thickness);
  s.sle_mm = -s.mass_change_gt / kGtPerMmSle;
  return s;
}

/// Emulator curves alongside analytic-oracle curves for the same rates.
inline SweepReport run_sweep(const BoundEmulator& emulator, const OracleConfig& oracle,
                             std::vector<double> rates, std::size_t months) {
  if (months == 0) throw ConfigError("sweep horizon must be at least one month");
  rates = sorted_rates(std::move(rates));
  const Mesh& mesh = emulator.mesh();
  SweepReport r;
  r.months = months;
  for (double rate : rates) {
    r.emulator.push_back(sweep_series(mesh, rate, months, [&](const FrameKey& k) { return emulator.predict(k); }));
    r.oracle.push_back(sweep_series(mesh, rate, months, [&](const FrameKey& k) {
      FrameFields f(mesh.node_count());
      for (std::size_t i = 0; i < mesh.node_count(); ++i) {
        const auto s = analytic_fields(oracle, mesh.node(i).x, mesh.node(i).y, k.years(), k.rate);
        f.vx[i] = s.vx;
        f.vy[i] = s.vy;
        f.thickness[i] = s.thickness;
      }
      return f;
    }));
  }
  return r;
}

inline void write_sweep_csv(std::ostream& os, const SweepReport& r) {
  os << "source,rate,month,mean_speed,mean_thickness,flat_mean_speed,flat_mean_thickness\n";
  const auto emit = [&](const char* source, const std::vector<SweepSeries>& series) {
    for (const auto& s : series) {
      for (std::size_t m = 0; m < s.mean_speed.size(); ++m) {
        os << source << ',' << text::format_double(s.rate) << ',' << m << ','
           << text::format_double(s.mean_speed[m]) << ',' << text::format_double(s.mean_thickness[m]) << ','
           << text::format_double(s.flat_mean_speed[m]) << ','
           << text::format_double(s.flat_mean_thickness[m]) << '\n';
      }
    }
  };
  emit("emulator", r.emulator);
  emit("oracle", r.oracle);
}

inline void write_sweep_summary_csv(std::ostream& os, const SweepReport& r) {
  os << "source,rate,mean_thickness_change_m,mean_speed_change,mass_change_gt,sle_mm\n";
  const auto emit = [&](const char* source, const std::vector<SweepSeries>& series) {
    for (const auto& s : series) {
      os << source << ',' << text::format_double(s.rate) << ',' << text::format_double(s.thickness_change())
         << ',' << text::format_double(s.speed_change()) << ',' << text::format_double(s.mass_change_gt)
         << ',' << text::format_double(s.sle_mm) << '\n';
    }
  };
  emit("emulator", r.emulator);
  emit("oracle", r.oracle);
}

inline void write_sweep_report(std::ostream& os, const SweepReport& r) {
  os << "months = " << r.months << '\n';
  for (std::size_t k = 0; k < r.emulator.size(); ++k) {
    const auto& e = r.emulator[k];
    const auto& o = r.oracle[k];
    os << "rate " << text::format_double(e.rate) << ": emulator dH = " << e.thickness_change()
       << " m (oracle " << o.thickness_change() << "), dV = " << e.speed_change() << " m/year (oracle "
       << o.speed_change() << "), mass change = " << e.mass_change_gt << " Gt, SLE = " << e.sle_mm
       << " mm\n";
  }
  os << "\nnote: mass uses ice density " << kIceDensity << " kg/m^3 over median-dual node areas; "
     << "sea-level equivalent uses " << kGtPerMmSle
     << " Gt per mm.\n";
}

}  // namespace icegcn
