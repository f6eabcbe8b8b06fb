#pragma once

// Ground-truth frames for the emulators: a calibrated analytic field family,
// an upwind finite-volume thickness stepper, and frame-file import/export.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/mesh.hpp"
#include "icegcn/text_io.hpp"

namespace icegcn {

inline constexpr double kMonthsPerYear = 12.0;

/// Synthetic glacier on [0, width] x [0, height] km flowing in +x toward a
/// terminus point beyond the east edge. Thickness, speed and the floating
/// mask are smooth shape functions; the scale constants come from
/// calibrate_oracle().
struct OracleConfig {
  double width_km = 100.0;
  double height_km = 100.0;

  // H_base = front + (divide - front) (1 - xi^2) + trough * exp(-(eta/w)^2),
  // xi = x / width, eta = (y - height/2) / height.
  double thickness_front_m = 400.0;
  double thickness_divide_m = 1400.0;
  double trough_thickness_m = 300.0;
  double trough_width = 0.25;

  // V0 = speed_scale * (speed_floor + xi^2 exp(-(eta/w)^2)).
  double speed_scale = 1000.0;
  double speed_floor = 0.25;
  double stream_width = 0.25;

  // Floating fraction: logistic in (x - grounding_line) / grounding_width.
  double grounding_line_fraction = 0.6;
  double grounding_width_fraction = 0.05;
  bool sharp_mask = false;

  double terminus_x_km = 125.0;
  double terminus_y_km = 50.0;

  double growth_rate = 1.0;        // c_g, m/year
  double melt_sensitivity = 0.05;  // c_m, m/year of thinning per m/year of melt
  double speedup = 0.006;          // gamma, per m/year of melt over the horizon
  double horizon_years = 20.0;
  std::optional<double> accumulation;  // m/year; defaults to c_g * mean(Phi)

  void validate() const {
    if (!(width_km > 0.0) || !(height_km > 0.0)) throw ConfigError("oracle domain must be positive");
    if (!(growth_rate > 0.0) || !(melt_sensitivity > 0.0) || !(speedup > 0.0)) {
      throw ConfigError("oracle constants c_g, c_m and gamma must be positive");
    }
    if (!(horizon_years > 0.0)) throw ConfigError("oracle horizon must be positive");
    if (!(grounding_width_fraction > 0.0)) throw ConfigError("grounding width must be positive");
    if (terminus_x_km >= 0.0 && terminus_x_km <= width_km && terminus_y_km >= 0.0 &&
        terminus_y_km <= height_km) {
      throw ConfigError("terminus point must lie outside the domain");
    }
  }
};

struct FieldSample {
  double vx = 0.0;
  double vy = 0.0;
  double thickness = 0.0;
};

namespace oracle_detail {

inline void check_domain(const OracleConfig& c, double x, double y) {
  const double tol = 1e-9 * std::max(c.width_km, c.height_km);
  if (!(x >= -tol && x <= c.width_km + tol && y >= -tol && y <= c.height_km + tol)) {
    throw DomainError("point (" + std::to_string(x) + ", " + std::to_string(y) +
                      ") outside the oracle domain");
  }
}

}  // namespace oracle_detail

inline double floating_fraction(const OracleConfig& c, double x, double /*y*/) {
  const double x_gl = c.grounding_line_fraction * c.width_km;
  if (c.sharp_mask) return x >= x_gl ? 1.0 : 0.0;
  return 1.0 / (1.0 + std::exp(-(x - x_gl) / (c.grounding_width_fraction * c.width_km)));
}

inline double base_thickness(const OracleConfig& c, double x, double y) {
  const double xi = x / c.width_km;
  const double eta = (y - 0.5 * c.height_km) / c.height_km;
  return c.thickness_front_m + (c.thickness_divide_m - c.thickness_front_m) * (1.0 - xi * xi) +
         c.trough_thickness_m * std::exp(-(eta / c.trough_width) * (eta / c.trough_width));
}

inline double base_speed(const OracleConfig& c, double x, double y) {
  const double xi = x / c.width_km;
  const double eta = (y - 0.5 * c.height_km) / c.height_km;
  return c.speed_scale *
         (c.speed_floor + xi * xi * std::exp(-(eta / c.stream_width) * (eta / c.stream_width)));
}

/// (vx, vy, H) at (x, y) km, time t years, basal melt m m/year.
inline FieldSample analytic_fields(const OracleConfig& c, double x, double y, double t, double m) {
  oracle_detail::check_domain(c, x, y);
  if (!(t >= 0.0)) throw DomainError("time must be non-negative");
  if (!(m >= 0.0)) throw DomainError("melting rate must be non-negative");
  const double phi = floating_fraction(c, x, y);
  const double thickness =
      base_thickness(c, x, y) + (c.growth_rate - c.melt_sensitivity * m) * t * phi;
  const double speed = base_speed(c, x, y) * (1.0 + c.speedup * m * (t / c.horizon_years));
  const double dx = c.terminus_x_km - x;
  const double dy = c.terminus_y_km - y;
  const double len = std::hypot(dx, dy);
  return {speed * dx / len, speed * dy / len, std::max(thickness, 0.0)};
}

/// Area-weighted (median-dual) mean of a per-node quantity.
template <class F>
double mesh_mean(const Mesh& mesh, F&& f) {
  const auto areas = mesh.dual_areas();
  double sum = 0.0;
  for (std::size_t i = 0; i < mesh.node_count(); ++i) sum += areas[i] * f(mesh.node(i));
  return sum / mesh.total_area();
}

inline double accumulation_rate(const OracleConfig& c, const Mesh& mesh) {
  if (c.accumulation) return *c.accumulation;
  return c.growth_rate *
         mesh_mean(mesh, [&](Point p) { return floating_fraction(c, p.x, p.y); });
}

/// Aggregate trends the analytic family is tuned to reproduce over the horizon.
struct CalibrationTargets {
  double mean_thickening_m = 25.0;  // mean dH at m = 0, t = horizon
  double mean_thinning_m = -50.0;   // mean dH at m = reference_rate, t = horizon
  double mean_speed = 525.0;        // m/year, mean speed at m = 0
  double mean_speedup = 200.0;      // m/year, mean speed gain at m = reference_rate, t = horizon
  double reference_rate = 60.0;
};

/// Sets c_g, c_m, gamma and the speed scale so that area-weighted means over
/// `mesh` hit the targets exactly.
inline OracleConfig calibrate_oracle(OracleConfig c, const Mesh& mesh,
                                     const CalibrationTargets& t = {}) {
  const double mean_phi =
      mesh_mean(mesh, [&](Point p) { return floating_fraction(c, p.x, p.y); });
  if (!(mean_phi > 0.0)) throw ConfigError("floating mask has zero mean over the mesh");
  if (!(t.mean_thickening_m > 0.0) || !(t.mean_thinning_m < t.mean_thickening_m) ||
      !(t.reference_rate > 0.0) || !(t.mean_speed > 0.0) || !(t.mean_speedup > 0.0)) {
    throw ConfigError("inconsistent calibration targets");
  }
  const double exposure = c.horizon_years * mean_phi;
  c.growth_rate = t.mean_thickening_m / exposure;
  c.melt_sensitivity = (t.mean_thickening_m - t.mean_thinning_m) / (exposure * t.reference_rate);
  c.speed_scale = 1.0;
  const double shape_mean = mesh_mean(mesh, [&](Point p) { return base_speed(c, p.x, p.y); });
  c.speed_scale = t.mean_speed / shape_mean;
  c.speedup = t.mean_speedup / (t.reference_rate * t.mean_speed);
  c.validate();
  return c;
}

// --- frame sets ---------------------------------------------------------------

enum class Provenance { analytic, transport, imported };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::analytic: return "analytic";
    case Provenance::transport: return "transport";
    case Provenance::imported: return "imported";
  }
  return "unknown";
}

struct FrameFields {
  std::vector<double> vx, vy, thickness;

  FrameFields() = default;
  explicit FrameFields(std::size_t nodes) : vx(nodes, 0.0), vy(nodes, 0.0), thickness(nodes, 0.0) {}
  std::size_t node_count() const noexcept { return thickness.size(); }
  friend bool operator==(const FrameFields&, const FrameFields&) = default;
};

struct FrameKey {
  double rate = 0.0;
  std::size_t month = 0;
  double years() const noexcept { return static_cast<double>(month) / kMonthsPerYear; }
};

/// Mass budget of one transport step (mass in km^2 m).
struct StepBudget {
  double rate = 0.0;
  std::size_t step = 0;
  double dt = 0.0;
  double mass_before = 0.0;
  double mass_after = 0.0;
  double sources = 0.0;           // sum_i A_i (a - m Phi_i)
  double boundary_outflux = 0.0;  // net flux leaving through the boundary
  std::size_t clamped = 0;
};

/// Frames for every (rate, month) pair, rate-major, rates strictly ascending.
class FrameSet {
 public:
  FrameSet() = default;
  FrameSet(std::vector<double> rates, std::size_t months, std::size_t nodes, Provenance provenance)
      : rates_(std::move(rates)), months_(months), nodes_(nodes), provenance_(provenance) {
    if (rates_.empty()) throw ConfigError("at least one melting rate is required");
    if (months_ == 0) throw ConfigError("horizon must be at least one month");
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      if (!(rates_[r] >= 0.0) || !std::isfinite(rates_[r])) {
        throw ConfigError("melting rates must be finite and non-negative");
      }
      if (r > 0 && !(rates_[r] > rates_[r - 1])) {
        throw ConfigError("melting rates must be strictly ascending");
      }
    }
    frames_.assign(rates_.size() * months_, FrameFields(nodes_));
  }

  std::span<const double> rates() const noexcept { return rates_; }
  std::size_t months() const noexcept { return months_; }
  std::size_t node_count() const noexcept { return nodes_; }
  std::size_t frame_count() const noexcept { return frames_.size(); }
  Provenance provenance() const noexcept { return provenance_; }
  void set_provenance(Provenance p) noexcept { provenance_ = p; }

  std::size_t index(std::size_t rate_index, std::size_t month) const {
    if (rate_index >= rates_.size() || month >= months_) throw std::out_of_range("frame index");
    return rate_index * months_ + month;
  }
  std::optional<std::size_t> rate_index(double rate) const {
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      if (std::abs(rates_[r] - rate) <= 1e-9) return r;
    }
    return std::nullopt;
  }
  FrameKey key(std::size_t frame) const {
    return {rates_.at(frame / months_), frame % months_};
  }
  FrameFields& frame(std::size_t i) { return frames_.at(i); }
  const FrameFields& frame(std::size_t i) const { return frames_.at(i); }
  FrameFields& at(std::size_t rate_index, std::size_t month) { return frames_[index(rate_index, month)]; }
  const FrameFields& at(std::size_t rate_index, std::size_t month) const {
    return frames_[index(rate_index, month)];
  }

  std::vector<StepBudget>& budget() noexcept { return budget_; }
  const std::vector<StepBudget>& budget() const noexcept { return budget_; }

  friend bool operator==(const FrameSet& a, const FrameSet& b) {
    return a.rates_ == b.rates_ && a.months_ == b.months_ && a.nodes_ == b.nodes_ &&
           a.frames_ == b.frames_;
  }

 private:
  std::vector<double> rates_;
  std::size_t months_ = 0;
  std::size_t nodes_ = 0;
  Provenance provenance_ = Provenance::analytic;
  std::vector<FrameFields> frames_;
  std::vector<StepBudget> budget_;
};

inline std::vector<double> sorted_rates(std::vector<double> rates) {
  std::sort(rates.begin(), rates.end());
  if (std::adjacent_find(rates.begin(), rates.end()) != rates.end()) {
    throw ConfigError("duplicate melting rate");
  }
  return rates;
}

/// Evaluates the analytic family at every node for every (rate, month).
inline FrameSet generate_dataset(const Mesh& mesh, const OracleConfig& config,
                                 std::vector<double> rates, std::size_t months) {
  config.validate();
  FrameSet set(sorted_rates(std::move(rates)), months, mesh.node_count(), Provenance::analytic);
  for (std::size_t f = 0; f < set.frame_count(); ++f) {
    const FrameKey k = set.key(f);
    auto& fields = set.frame(f);
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
      const Point p = mesh.node(i);
      const auto s = analytic_fields(config, p.x, p.y, k.years(), k.rate);
      fields.vx[i] = s.vx;
      fields.vy[i] = s.vy;
      fields.thickness[i] = s.thickness;
    }
  }
  return set;
}

// --- transport stepper --------------------------------------------------------

/// Node-centered first-order upwind transport on median-dual control volumes.
///
/// Interior dual faces run from each element-edge midpoint to the element
/// centroid; boundary faces are the two half-edges of each boundary edge.
/// Face velocity is the mean of the two node velocities (the node velocity on
/// boundary faces). Velocities are m/year, lengths km, thickness m.
class TransportStepper {
 public:
  struct Result {
    FrameFields state;
    StepBudget budget;
  };

  TransportStepper(const Mesh& mesh, const OracleConfig& config)
      : areas_(mesh.dual_areas().begin(), mesh.dual_areas().end()),
        min_edge_(mesh.min_edge_length()),
        accumulation_(accumulation_rate(config, mesh)) {
    phi_.reserve(mesh.node_count());
    for (const auto& p : mesh.nodes()) phi_.push_back(floating_fraction(config, p.x, p.y));

    std::map<std::pair<std::size_t, std::size_t>, int> edge_use;
    for (const auto& t : mesh.elements()) {
      for (int k = 0; k < 3; ++k) ++edge_use[{std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])}];
    }
    for (const auto& t : mesh.elements()) {
      const Point a = mesh.node(t[0]), b = mesh.node(t[1]), c = mesh.node(t[2]);
      const Point centroid{(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0};
      for (int k = 0; k < 3; ++k) {
        const std::size_t i = t[k];
        const std::size_t j = t[(k + 1) % 3];
        const Point pi = mesh.node(i), pj = mesh.node(j);
        const Point mid{0.5 * (pi.x + pj.x), 0.5 * (pi.y + pj.y)};
        // Normal of the segment mid -> centroid, scaled by its length, pointing i -> j.
        double nx = centroid.y - mid.y;
        double ny = -(centroid.x - mid.x);
        if (nx * (pj.x - pi.x) + ny * (pj.y - pi.y) < 0.0) {
          nx = -nx;
          ny = -ny;
        }
        interior_.push_back({i, j, nx, ny});
        const auto key = std::make_pair(std::min(i, j), std::max(i, j));
        if (edge_use[key] == 1) {
          // Elements are CCW, so the outward normal of edge i -> j is (dy, -dx).
          const double ox = 0.5 * (pj.y - pi.y);
          const double oy = -0.5 * (pj.x - pi.x);
          boundary_.push_back({i, ox, oy});
          boundary_.push_back({j, ox, oy});
        }
      }
    }
  }

  double accumulation() const noexcept { return accumulation_; }

  /// Largest stable step, 0.5 * min_edge_length / max_speed (years).
  double max_stable_dt(const FrameFields& s) const {
    double vmax = 0.0;
    for (std::size_t i = 0; i < s.node_count(); ++i) vmax = std::max(vmax, std::hypot(s.vx[i], s.vy[i]));
    vmax /= 1000.0;  // km/year
    return vmax > 0.0 ? 0.5 * min_edge_ / vmax : std::numeric_limits<double>::infinity();
  }

  double mass(const FrameFields& s) const {
    double m = 0.0;
    for (std::size_t i = 0; i < areas_.size(); ++i) m += areas_[i] * s.thickness[i];
    return m;
  }

  Result step(const FrameFields& state, double dt, double melt_rate) const {
    if (state.node_count() != areas_.size()) throw ShapeError("transport: node count mismatch");
    if (!(dt > 0.0)) throw StabilityError("time step must be positive");
    const double dt_max = max_stable_dt(state);
    if (dt > dt_max) {
      throw StabilityError("time step " + std::to_string(dt) + " exceeds CFL bound " +
                           std::to_string(dt_max));
    }
    const std::size_t n = areas_.size();
    const auto& h = state.thickness;
    std::vector<double> outflow(n, 0.0);
    for (const auto& f : interior_) {
      const double vx = 0.5 * (state.vx[f.i] + state.vx[f.j]) / 1000.0;
      const double vy = 0.5 * (state.vy[f.i] + state.vy[f.j]) / 1000.0;
      const double q = vx * f.nx + vy * f.ny;
      const double flux = q * (q > 0.0 ? h[f.i] : h[f.j]);
      outflow[f.i] += flux;
      outflow[f.j] -= flux;
    }
    double boundary_outflux = 0.0;
    for (const auto& f : boundary_) {
      const double q = (state.vx[f.i] * f.nx + state.vy[f.i] * f.ny) / 1000.0;
      const double flux = q * h[f.i];
      outflow[f.i] += flux;
      boundary_outflux += flux;
    }

    Result r{state, {}};
    r.budget.rate = melt_rate;
    r.budget.dt = dt;
    r.budget.mass_before = mass(state);
    r.budget.boundary_outflux = boundary_outflux;
    for (std::size_t i = 0; i < n; ++i) {
      const double source = accumulation_ - melt_rate * phi_[i];
      r.budget.sources += areas_[i] * source;
      double next = h[i] + dt * (source - outflow[i] / areas_[i]);
      if (next < 0.0) {
        next = 0.0;
        ++r.budget.clamped;
      }
      r.state.thickness[i] = next;
    }
    r.budget.mass_after = mass(r.state);
    return r;
  }

 private:
  struct InteriorFace {
    std::size_t i, j;
    double nx, ny;  // length-scaled normal, km
  };
  struct BoundaryFace {
    std::size_t i;
    double nx, ny;
  };

  std::vector<double> areas_;
  std::vector<double> phi_;
  double min_edge_;
  double accumulation_;
  std::vector<InteriorFace> interior_;
  std::vector<BoundaryFace> boundary_;
};

inline TransportStepper::Result transport_step(const Mesh& mesh, const FrameFields& state, double dt,
                                               double melt_rate, const OracleConfig& config) {
  return TransportStepper(mesh, config).step(state, dt, melt_rate);
}

/// Transport run from the analytic t = 0 state with monthly snapshots.
/// Node velocities are refreshed from analytic_fields at the start of each
/// step; each month is split into equal substeps at half the CFL bound.
inline FrameSet run_transport(const Mesh& mesh, const OracleConfig& config, double melt_rate,
                              std::size_t months) {
  config.validate();
  FrameSet set({melt_rate}, months, mesh.node_count(), Provenance::transport);
  const TransportStepper stepper(mesh, config);
  const auto set_velocity = [&](FrameFields& s, double t) {
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
      const Point p = mesh.node(i);
      const auto f = analytic_fields(config, p.x, p.y, t, melt_rate);
      s.vx[i] = f.vx;
      s.vy[i] = f.vy;
    }
  };
  FrameFields state(mesh.node_count());
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const Point p = mesh.node(i);
    state.thickness[i] = analytic_fields(config, p.x, p.y, 0.0, melt_rate).thickness;
  }
  set_velocity(state, 0.0);
  set.at(0, 0) = state;

  const double month_dt = 1.0 / kMonthsPerYear;
  std::size_t step_index = 0;
  for (std::size_t month = 1; month < months; ++month) {
    const double t0 = static_cast<double>(month - 1) * month_dt;
    // Speeds grow with time, so bound the substep with the end-of-month field.
    FrameFields probe = state;
    set_velocity(probe, t0 + month_dt);
    const double dt_cfl = 0.5 * std::min(stepper.max_stable_dt(state), stepper.max_stable_dt(probe));
    const auto substeps = static_cast<std::size_t>(std::ceil(month_dt / dt_cfl));
    const double dt = month_dt / static_cast<double>(std::max<std::size_t>(substeps, 1));
    for (std::size_t s = 0; s < std::max<std::size_t>(substeps, 1); ++s) {
      set_velocity(state, t0 + static_cast<double>(s) * dt);
      auto r = stepper.step(state, dt, melt_rate);
      r.budget.step = step_index++;
      set.budget().push_back(r.budget);
      state = std::move(r.state);
    }
    set_velocity(state, static_cast<double>(month) * month_dt);
    set.at(0, month) = state;
  }
  return set;
}

struct MassBalanceReport {
  bool conservative_by_construction = true;
  std::string note;
  std::vector<double> residuals;
  std::size_t clamp_events = 0;
  double max_residual() const {
    return residuals.empty() ? 0.0 : *std::max_element(residuals.begin(), residuals.end());
  }
};

/// Per-step residual |dMass - dt (sources - boundary outflux)| / max(|Mass|, 1)
/// for one rate of a transport-mode frame set.
inline MassBalanceReport mass_balance_report(const FrameSet& frames, double rate) {
  MassBalanceReport r;
  if (frames.provenance() != Provenance::transport) {
    r.conservative_by_construction = false;
    r.note = "not conservative by construction (" + std::string(to_string(frames.provenance())) +
             " frames)";
    return r;
  }
  if (!frames.rate_index(rate)) throw ValidationError("rate not present in frame set");
  for (const auto& b : frames.budget()) {
    if (std::abs(b.rate - rate) > 1e-9) continue;
    const double change = b.mass_after - b.mass_before;
    const double expected = b.dt * (b.sources - b.boundary_outflux);
    r.residuals.push_back(std::abs(change - expected) / std::max(std::abs(b.mass_before), 1.0));
    r.clamp_events += b.clamped;
  }
  r.note = r.clamp_events ? "clamping occurred; conservation not guaranteed" : "conservative";
  return r;
}

// --- frames file --------------------------------------------------------------
//   # frames v1 units=m,m/year nodes=<N>
//   rate,month,node_id,vx,vy,H     (sorted by rate, month, node_id)

inline void write_frames(std::ostream& os, const FrameSet& set) {
  os << "# frames v1 units=m,m/year nodes=" << set.node_count() << '\n';
  for (std::size_t f = 0; f < set.frame_count(); ++f) {
    const auto key = set.key(f);
    const auto rate = text::format_double(key.rate);
    const auto& fr = set.frame(f);
    for (std::size_t i = 0; i < set.node_count(); ++i) {
      os << rate << ',' << key.month << ',' << i << ',' << text::format_double(fr.vx[i]) << ','
         << text::format_double(fr.vy[i]) << ',' << text::format_double(fr.thickness[i]) << '\n';
    }
  }
}

/// Reads a frames file for a mesh with `expected_nodes` nodes.
inline FrameSet read_frames(std::istream& is, std::size_t expected_nodes) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("empty frames file");
  const auto header = text::trim(line);
  if (header.rfind("# frames ", 0) != 0) throw ValidationError("line 1: missing '# frames' header");
  const auto tokens = text::split(header, ' ');
  if (tokens.size() < 3 || tokens[2] != "v1") {
    throw ValidationError("line 1: unsupported frames version");
  }
  if (text::header_field(header, "units") != "m,m/year") {
    throw ValidationError("line 1: frames units must be m,m/year");
  }
  const auto nodes_field = text::header_field(header, "nodes");
  if (nodes_field.empty()) throw ValidationError("line 1: missing nodes=<N>");
  const auto nodes = text::parse_index(nodes_field, 1);
  if (nodes != expected_nodes) {
    throw ValidationError("frames file has " + std::to_string(nodes) + " nodes, mesh has " +
                          std::to_string(expected_nodes));
  }

  std::vector<double> rates;
  std::vector<std::vector<FrameFields>> per_rate;
  std::size_t line_no = 1;
  std::size_t expect_node = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto row = text::trim(line);
    if (row.empty() || row.front() == '#') continue;
    const auto cols = text::split(row, ',');
    const std::string where = "line " + std::to_string(line_no);
    if (cols.size() != 6) throw ValidationError(where + ": expected rate,month,node_id,vx,vy,H");
    const double rate = text::parse_double(cols[0], line_no);
    const auto month = text::parse_index(cols[1], line_no);
    const auto node = text::parse_index(cols[2], line_no);
    const double vx = text::parse_double(cols[3], line_no);
    const double vy = text::parse_double(cols[4], line_no);
    const double h = text::parse_double(cols[5], line_no);
    if (!std::isfinite(rate) || !std::isfinite(vx) || !std::isfinite(vy) || !std::isfinite(h)) {
      throw ValidationError(where + ": non-finite value");
    }
    if (h < 0.0) throw ValidationError(where + ": negative thickness");

    if (expect_node == 0) {
      // First row of a new frame.
      if (node != 0) {
        throw ValidationError(where + ": frame must start at node 0");
      }
      if (rates.empty() || rate != rates.back()) {
        if (!rates.empty() && !(rate > rates.back())) {
          throw ValidationError(where + ": rates out of order");
        }
        if (month != 0) {
          throw ValidationError(where + ": rate " + text::format_double(rate) +
                                " is missing months before " + std::to_string(month));
        }
        rates.push_back(rate);
        per_rate.emplace_back();
      } else if (month != per_rate.back().size()) {
        throw ValidationError(where + ": rate " + text::format_double(rate) + " missing month " +
                              std::to_string(per_rate.back().size()));
      }
      per_rate.back().emplace_back(expected_nodes);
    } else if (rate != rates.back() || month + 1 != per_rate.back().size() || node != expect_node) {
      throw ValidationError(where + ": expected node " + std::to_string(expect_node) +
                            " of rate " + text::format_double(rates.back()) + " month " +
                            std::to_string(per_rate.back().size() - 1));
    }
    auto& fr = per_rate.back().back();
    fr.vx[node] = vx;
    fr.vy[node] = vy;
    fr.thickness[node] = h;
    expect_node = (node + 1 == expected_nodes) ? 0 : node + 1;
  }
  if (expect_node != 0) throw ValidationError("frames file ends inside a frame");
  if (rates.empty()) throw ValidationError("frames file has no rows");
  const std::size_t months = per_rate.front().size();
  for (std::size_t r = 0; r < rates.size(); ++r) {
    if (per_rate[r].size() != months) {
      throw ValidationError("rate " + text::format_double(rates[r]) + " has " +
                            std::to_string(per_rate[r].size()) + " months, expected " +
                            std::to_string(months) + " (missing month " +
                            std::to_string(std::min(per_rate[r].size(), months)) + ")");
    }
  }
  FrameSet set(rates, months, expected_nodes, Provenance::imported);
  for (std::size_t r = 0; r < rates.size(); ++r) {
    for (std::size_t m = 0; m < months; ++m) set.at(r, m) = std::move(per_rate[r][m]);
  }
  return set;
}

struct ImportedData {
  Mesh mesh;
  FrameSet frames;
};

inline ImportedData import_frames(std::istream& mesh_file, std::istream& frames_file) {
  Mesh mesh = read_mesh(mesh_file);
  FrameSet frames = read_frames(frames_file, mesh.node_count());
  return {std::move(mesh), std::move(frames)};
}

}  // namespace icegcn
