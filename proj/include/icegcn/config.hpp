#pragma once

// Run configuration: flat `key = value` entries grouped in [sections].

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "icegcn/error.hpp"
#include "icegcn/graph.hpp"
#include "icegcn/oracle.hpp"
#include "icegcn/pipeline.hpp"
#include "icegcn/text_io.hpp"

namespace icegcn {

struct MeshParams {
  double spacing_km = 5.0;
  double width_km = 100.0;
  double height_km = 100.0;
  double jitter = 0.2;
  std::uint64_t seed = 1;
};

/// Parses "a:b:step" (inclusive) or a comma-separated list.
inline std::vector<double> parse_rate_list(std::string_view s) {
  s = text::trim(s);
  std::vector<double> out;
  if (s.find(':') != std::string_view::npos) {
    const auto parts = text::split(s, ':');
    if (parts.size() != 3) throw ConfigError("rate range must be start:stop:step");
    const double a = text::parse_double(parts[0], 0), b = text::parse_double(parts[1], 0),
                 step = text::parse_double(parts[2], 0);
    if (!(step > 0.0) || b < a) throw ConfigError("bad rate range '" + std::string(s) + "'");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) out.push_back(a + static_cast<double>(k) * step);
    return out;
  }
  if (s.empty()) return out;
  for (auto tok : text::split(s, ',')) out.push_back(text::parse_double(tok, 0));
  return out;
}

inline std::string format_rate_list(std::span<const double> rates) {
  std::string s;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (i) s += ',';
    s += text::format_double(rates[i]);
  }
  return s;
}

struct RunConfig {
  MeshParams mesh;
  GraphOptions graph;
  OracleConfig oracle;
  CalibrationTargets calibration;
  std::vector<double> rates = parse_rate_list("0:70:2");
  std::size_t months = 240;
  SplitSpec split;
  TrainConfig train;
  std::size_t bench_repetitions = 3;
  std::vector<double> sweep_rates{0.0, 20.0, 40.0, 60.0};
  std::size_t sweep_months = 0;  // 0: same as `months`
  std::uint64_t seed = 0;
  std::string out = "run";

  std::size_t effective_sweep_months() const { return sweep_months ? sweep_months : months; }

  /// Training options with the run-level seed and graph options folded in.
  TrainConfig resolved_train() const {
    TrainConfig t = train;
    t.seed = seed;
    t.graph = graph;
    return t;
  }

  Mesh build_mesh() const {
    return triangulate_rectangle(mesh.spacing_km, mesh.width_km, mesh.height_km, mesh.jitter, mesh.seed);
  }

  /// Oracle constants calibrated on `m`; the domain follows the mesh extents.
  OracleConfig calibrated_oracle(const Mesh& m) const {
    OracleConfig o = oracle;
    o.width_km = mesh.width_km;
    o.height_km = mesh.height_km;
    return calibrate_oracle(o, m, calibration);
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    for (auto& f : fields()) {
      if (f.section == section && f.key == key) {
        try {
          f.set(std::string(text::trim(value)));
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          throw ConfigError("[" + section + "] " + key + ": " + e.what());
        }
        return;
      }
    }
    throw ConfigError("unknown config key [" + section + "] " + key);
  }

  void load(std::istream& is) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
    for (const auto& [section, entries] : tree) {
      if (entries.empty()) throw ConfigError("config key '" + section + "' outside a section");
      for (const auto& [key, value] : entries) set(section, key, value.data());
    }
    validate();
  }

  void validate() const {
    if (months == 0) throw ConfigError("months must be >= 1");
    if (rates.empty()) throw ConfigError("at least one melting rate is required");
    if (train.epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(train.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (train.fcn_learning_rate && !(*train.fcn_learning_rate >= 0.0)) {
      throw ConfigError("fcn learning rate must be >= 0");
    }
    if (train.hidden_width == 0) throw ConfigError("hidden width must be >= 1");
    if (bench_repetitions == 0) throw ConfigError("bench repetitions must be >= 1");
  }

  /// Every key with its resolved value, in a fixed order.
  std::string dump() const {
    std::ostringstream os;
    std::string current;
    for (const auto& f : const_cast<RunConfig*>(this)->fields()) {
      if (f.section != current) {
        if (!current.empty()) os << '\n';
        os << '[' << f.section << "]\n";
        current = f.section;
      }
      os << f.key << " = " << f.get() << '\n';
    }
    return os.str();
  }

 private:
  struct Field {
    std::string section;
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };

  static double to_double(const std::string& v) { return text::parse_double(v, 0); }
  static std::uint64_t to_index(const std::string& v) { return text::parse_index(v, 0); }
  static bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
  }
  static std::string from_bool(bool b) { return b ? "true" : "false"; }

  std::vector<Field> fields() {
    std::vector<Field> f;
    const auto num = [&f](std::string sec, std::string key, double& ref) {
      f.push_back({sec, key, [&ref](const std::string& v) { ref = to_double(v); },
                   [&ref] { return text::format_double(ref); }});
    };
    const auto idx = [&f](std::string sec, std::string key, auto& ref) {
      f.push_back({sec, key, [&ref](const std::string& v) { ref = static_cast<std::remove_reference_t<decltype(ref)>>(to_index(v)); },
                   [&ref] { return std::to_string(ref); }});
    };
    const auto flag = [&f](std::string sec, std::string key, bool& ref) {
      f.push_back({sec, key, [&ref](const std::string& v) { ref = to_bool(v); },
                   [&ref] { return from_bool(ref); }});
    };
    const auto list = [&f](std::string sec, std::string key, std::vector<double>& ref) {
      f.push_back({sec, key, [&ref](const std::string& v) { ref = parse_rate_list(v); },
                   [&ref] { return format_rate_list(ref); }});
    };

    f.push_back({"run", "seed", [this](const std::string& v) { seed = to_index(v); },
                 [this] { return std::to_string(seed); }});
    f.push_back({"run", "out", [this](const std::string& v) { out = v; }, [this] { return out; }});

    num("mesh", "spacing_km", mesh.spacing_km);
    num("mesh", "width_km", mesh.width_km);
    num("mesh", "height_km", mesh.height_km);
    num("mesh", "jitter", mesh.jitter);
    idx("mesh", "seed", mesh.seed);

    flag("graph", "self_loops", graph.self_loops);
    f.push_back({"graph", "kernel", [this](const std::string& v) { graph.kernel = parse_kernel(v); },
                 [this] { return std::string(to_string(graph.kernel)); }});

    num("oracle", "thickness_front_m", oracle.thickness_front_m);
    num("oracle", "thickness_divide_m", oracle.thickness_divide_m);
    num("oracle", "trough_thickness_m", oracle.trough_thickness_m);
    num("oracle", "trough_width", oracle.trough_width);
    num("oracle", "speed_floor", oracle.speed_floor);
    num("oracle", "stream_width", oracle.stream_width);
    num("oracle", "grounding_line_fraction", oracle.grounding_line_fraction);
    num("oracle", "grounding_width_fraction", oracle.grounding_width_fraction);
    flag("oracle", "sharp_mask", oracle.sharp_mask);
    num("oracle", "terminus_x_km", oracle.terminus_x_km);
    num("oracle", "terminus_y_km", oracle.terminus_y_km);
    num("oracle", "horizon_years", oracle.horizon_years);
    f.push_back({"oracle", "accumulation",
                 [this](const std::string& v) {
                   if (v == "auto") oracle.accumulation.reset();
                   else oracle.accumulation = to_double(v);
                 },
                 [this] { return oracle.accumulation ? text::format_double(*oracle.accumulation) : std::string("auto"); }});
    num("oracle", "target_mean_thickening_m", calibration.mean_thickening_m);
    num("oracle", "target_mean_thinning_m", calibration.mean_thinning_m);
    num("oracle", "target_mean_speed", calibration.mean_speed);
    num("oracle", "target_mean_speedup", calibration.mean_speedup);
    num("oracle", "reference_rate", calibration.reference_rate);

    list("data", "rates", rates);
    idx("data", "months", months);

    list("split", "validation_rates", split.validation_rates);
    list("split", "test_rates", split.test_rates);

    f.push_back({"model", "kind", [this](const std::string& v) { train.kind = parse_model_kind(v); },
                 [this] { return std::string(to_string(train.kind)); }});
    idx("model", "hidden_width", train.hidden_width);
    idx("model", "gcn_layers", train.gcn_layers);
    idx("model", "fcn_layers", train.fcn_layers);
    idx("model", "grid_nx", train.grid_nx);
    idx("model", "grid_ny", train.grid_ny);

    idx("train", "epochs", train.epochs);
    num("train", "learning_rate", train.learning_rate);
    f.push_back({"train", "fcn_learning_rate",
                 [this](const std::string& v) {
                   if (v == "auto") train.fcn_learning_rate.reset();
                   else train.fcn_learning_rate = to_double(v);
                 },
                 [this] { return train.fcn_learning_rate ? text::format_double(*train.fcn_learning_rate) : std::string("auto"); }});
    flag("train", "early_stop", train.early_stop);
    idx("train", "patience", train.patience);

    idx("bench", "repetitions", bench_repetitions);

    list("sweep", "rates", sweep_rates);
    idx("sweep", "months", sweep_months);
    return f;
  }
};

inline RunConfig load_run_config(std::istream& is) {
  RunConfig c;
  c.load(is);
  return c;
}

}  // namespace icegcn
