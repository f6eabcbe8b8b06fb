// icegcn: data generation, training, evaluation, timing and sweeps for the
// mesh emulators.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "icegcn/artifact.hpp"
#include "icegcn/bench.hpp"
#include "icegcn/config.hpp"
#include "icegcn/gradcheck.hpp"
#include "icegcn/pipeline.hpp"
#include "icegcn/plot.hpp"
#include "icegcn/sweep.hpp"

namespace fs = std::filesystem;
using namespace icegcn;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig c;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw ConfigError("cannot open config file '" + g.config_path + "'");
    c.load(in);
  }
  for (const auto& o : g.overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override must look like section.key=value, got '" + o + "'");
    }
    c.set(o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1));
  }
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out = g.out;
  c.validate();
  return c;
}

class Output {
 public:
  Output(const RunConfig& config, bool force) : dir_(config.out), force_(force) {
    fs::create_directories(dir_);
    std::ofstream(dir_ / "config.ini") << config.dump();
  }

  std::ofstream open(const std::string& name, bool binary = false) const {
    const fs::path p = dir_ / name;
    if (fs::exists(p) && !force_) {
      throw ConfigError("output '" + p.string() + "' exists; pass --force to overwrite");
    }
    std::ofstream os(p, binary ? std::ios::binary : std::ios::out);
    if (!os) throw Error("cannot write '" + p.string() + "'");
    return os;
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

 private:
  fs::path dir_;
  bool force_;
};

std::ifstream open_input(const fs::path& p, bool binary = false) {
  std::ifstream in(p, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ConfigError("cannot open '" + p.string() + "'");
  return in;
}

/// Mesh and frames from a gen-data directory, or generated from the config.
ImportedData load_data(const RunConfig& c, const std::string& data_dir) {
  if (!data_dir.empty()) {
    auto mesh_in = open_input(fs::path(data_dir) / "mesh.txt");
    auto frames_in = open_input(fs::path(data_dir) / "frames.csv");
    return import_frames(mesh_in, frames_in);
  }
  Mesh mesh = c.build_mesh();
  FrameSet frames = generate_dataset(mesh, c.calibrated_oracle(mesh), c.rates, c.months);
  return {std::move(mesh), std::move(frames)};
}

Emulator load_model(const std::string& path) {
  auto in = open_input(path, true);
  return load_emulator(in);
}

FrameSubset pick_subset(const Split& split, const FrameSet& frames, const std::string& which) {
  if (which == "test") return split.test;
  if (which == "validation") return split.validation;
  if (which == "train") return split.train;
  if (which == "all") {
    FrameSubset all{&frames, {}};
    for (std::size_t f = 0; f < frames.frame_count(); ++f) all.frames.push_back(f);
    return all;
  }
  throw ConfigError("unknown split '" + which + "'");
}

int cmd_gen_data(const RunConfig& c, bool force, const std::string& mode) {
  const Output out(c, force);
  const Mesh mesh = c.build_mesh();
  const OracleConfig oracle = c.calibrated_oracle(mesh);
  FrameSet frames;
  if (mode == "analytic") {
    frames = generate_dataset(mesh, oracle, c.rates, c.months);
  } else if (mode == "transport") {
    const auto rates = sorted_rates(c.rates);
    frames = FrameSet(rates, c.months, mesh.node_count(), Provenance::transport);
    auto report = out.open("mass_balance.txt");
    for (std::size_t r = 0; r < rates.size(); ++r) {
      const FrameSet run = run_transport(mesh, oracle, rates[r], c.months);
      for (std::size_t m = 0; m < c.months; ++m) frames.at(r, m) = run.at(0, m);
      const auto mb = mass_balance_report(run, rates[r]);
      report << "rate " << text::format_double(rates[r]) << ": steps = " << mb.residuals.size()
             << ", max_relative_residual = " << mb.max_residual() << ", clamp_events = " << mb.clamp_events
             << '\n';
    }
  } else {
    throw ConfigError("unknown generation mode '" + mode + "'");
  }
  auto mesh_out = out.open("mesh.txt");
  auto frames_out = out.open("frames.csv");
  write_mesh(mesh_out, mesh);
  write_frames(frames_out, frames);
  std::cout << "wrote " << mesh.node_count() << " nodes, " << frames.frame_count() << " frames to "
            << c.out << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, bool force, const std::string& data_dir, bool quiet) {
  const Output out(c, force);
  const auto data = load_data(c, data_dir);
  const Split split = split_frames(data.frames, c.split);
  const TrainConfig tc = c.resolved_train();
  const std::string kind(to_string(tc.kind));
  auto model_out = out.open("model-" + kind + ".bin", true);
  auto history_out = out.open("history-" + kind + ".csv");
  const auto result = train(data.mesh, split.train, split.validation, tc, std::nullopt, [&](const EpochRecord& r) {
    if (!quiet) {
      std::cout << kind << " epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << " ("
                << r.wall_seconds << " s)\n"
                << std::flush;
    }
  });
  save_emulator(model_out, result.emulator);
  write_history_csv(history_out, result.history);
  std::cout << "trained " << kind << " on " << split.train.size() << " frames; best epoch "
            << result.best_epoch << '\n';
  return 0;
}

int cmd_eval(const RunConfig& c, bool force, const std::string& model_path, const std::string& data_dir,
             const std::string& which, bool identity) {
  if (identity == !model_path.empty()) throw ConfigError("eval needs exactly one of --model or --identity-stub");
  const Output out(c, force);
  const auto data = load_data(c, data_dir);
  const Split split = split_frames(data.frames, c.split);
  const FrameSubset subset = pick_subset(split, data.frames, which);
  Metrics m;
  std::string label;
  if (identity) {
    label = "identity";
    m = evaluate_predictions(subset, [&](std::size_t f, const FrameKey&) { return data.frames.frame(f); });
  } else {
    const Emulator e = load_model(model_path);
    label = std::string(to_string(e.kind()));
    m = evaluate(e, data.mesh, subset);
  }
  auto report = out.open("metrics-" + label + ".txt");
  auto table = out.open("metrics-" + label + ".csv");
  report << "split = " << which << '\n';
  write_metrics_report(report, m, label);
  write_metrics_csv(table, m);
  write_metrics_report(std::cout, m, label);
  return 0;
}

int cmd_bench(const RunConfig& c, bool force, const std::string& gcn_path, const std::string& fcn_path) {
  const Output out(c, force);
  const Mesh mesh = c.build_mesh();
  const OracleConfig oracle = c.calibrated_oracle(mesh);
  std::optional<Emulator> gcn, fcn;
  if (!gcn_path.empty()) gcn = load_model(gcn_path);
  if (!fcn_path.empty()) fcn = load_model(fcn_path);
  if (gcn && gcn->kind() != ModelKind::gcn) throw ConfigError("--gcn artifact is not a GCN");
  if (fcn && fcn->kind() != ModelKind::fcn) throw ConfigError("--fcn artifact is not an FCN");
  const auto rates = sorted_rates(c.rates);
  const auto report = run_bench(mesh, oracle, rates, c.months, c.bench_repetitions, gcn ? &*gcn : nullptr,
                                fcn ? &*fcn : nullptr);
  auto csv = out.open("bench.csv");
  auto txt = out.open("bench.txt");
  write_bench_csv(csv, report);
  write_bench_report(txt, report);
  write_bench_report(std::cout, report);
  return 0;
}

LinePlot sweep_plot(const SweepReport& r, bool thickness) {
  LinePlot p;
  p.title = thickness ? "Mean ice thickness" : "Mean ice speed";
  p.x_label = "month";
  p.y_label = thickness ? "thickness (m)" : "speed (m/year)";
  for (std::size_t k = 0; k < r.emulator.size(); ++k) {
    const std::string rate = text::format_double(r.emulator[k].rate);
    const auto& e = r.emulator[k];
    const auto& o = r.oracle[k];
    p.series.push_back({"emulator m=" + rate, thickness ? e.mean_thickness : e.mean_speed, plot_color(k), false});
    p.series.push_back({"oracle m=" + rate, thickness ? o.mean_thickness : o.mean_speed, plot_color(k), true});
  }
  return p;
}

int cmd_sweep(const RunConfig& c, bool force, const std::string& model_path) {
  const Output out(c, force);
  const Mesh mesh = c.build_mesh();
  const OracleConfig oracle = c.calibrated_oracle(mesh);
  const Emulator e = load_model(model_path);
  const BoundEmulator bound(e, mesh);
  const auto report = run_sweep(bound, oracle, c.sweep_rates, c.effective_sweep_months());
  auto csv = out.open("sweep.csv");
  auto summary = out.open("sweep_summary.csv");
  auto txt = out.open("sweep.txt");
  auto svg_h = out.open("sweep_thickness.svg");
  auto svg_v = out.open("sweep_speed.svg");
  write_sweep_csv(csv, report);
  write_sweep_summary_csv(summary, report);
  write_sweep_report(txt, report);
  write_svg(svg_h, sweep_plot(report, true));
  write_svg(svg_v, sweep_plot(report, false));
  write_sweep_report(std::cout, report);
  return 0;
}

bool suite_applies(const std::string& suite, const std::string& kind) {
  if (kind == "all") return true;
  if (kind == "gcn") return suite != "conv2d" && suite != "fcn_model" && suite != "masked_mse";
  if (kind == "fcn") return suite != "gcn_layer" && suite != "gcn_model" && suite != "dense_head" && suite != "mse";
  throw ConfigError("gradcheck kind must be gcn, fcn or all");
}

int cmd_gradcheck(const RunConfig& c, bool force, const std::string& kind, bool corrupt) {
  const Output out(c, force);
  GradCheckOptions o;
  o.seed = c.seed;
  o.corrupt = corrupt;
  const auto suites = run_gradcheck(o);
  std::ostringstream report;
  bool ok = true;
  report << "tolerance = " << o.tolerance << ", step = " << o.step << (corrupt ? ", corrupted gradients" : "")
         << '\n';
  for (const auto& s : suites) {
    if (!suite_applies(s.name, kind)) continue;
    const bool pass = s.passed(o.tolerance, o.probes);
    ok = ok && pass;
    report << (pass ? "PASS " : "FAIL ") << s.name << " max_rel_error = " << s.result.max_relative_error
           << " probes = " << s.result.probes << " min_gradient = " << s.result.min_gradient_magnitude
           << " kink_skips = " << s.result.kink_skips << " unresolved = " << s.result.unresolved
           << " unresolved_ratio = " << s.result.max_unresolved_ratio << '\n';
    for (std::size_t k = 0; k < s.result.names.size(); ++k) {
      report << "  " << s.result.names[k] << " max_rel_error = " << s.result.per_tensor[k]
             << " probes = " << s.result.per_tensor_probes[k] << '\n';
    }
  }
  report << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  out.open("gradcheck.txt") << report.str();
  (ok ? std::cout : std::cerr) << report.str();
  return ok ? 0 : static_cast<int>(ExitCode::numerical);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph and convolutional emulators for synthetic ice-sheet meshes"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run seed (overrides run.seed)");
  app.add_option("--out", g.out, "Output directory (overrides run.out)");
  app.add_flag("--force", g.force, "Overwrite existing outputs");
  app.add_option("--set", g.overrides, "Config override section.key=value (repeatable)");

  std::string gen_mode = "analytic";
  auto* gen = app.add_subcommand("gen-data", "Write mesh and frames from the oracle");
  gen->add_option("--mode", gen_mode, "analytic or transport")->check(CLI::IsMember({"analytic", "transport"}));

  std::string data_dir, kind, model_path, split_name = "test", gcn_path, fcn_path, grad_kind = "all";
  bool quiet = false, identity = false, corrupt = false;
  auto* tr = app.add_subcommand("train", "Train an emulator");
  tr->add_option("--kind", kind, "gcn or fcn (overrides model.kind)")->check(CLI::IsMember({"gcn", "fcn"}));
  tr->add_option("--data", data_dir, "gen-data directory (default: generate from config)");
  tr->add_flag("--quiet", quiet, "Suppress per-epoch progress");

  auto* ev = app.add_subcommand("eval", "Score an emulator on a split");
  ev->add_option("--model", model_path, "Model artifact");
  ev->add_option("--data", data_dir, "gen-data directory (default: generate from config)");
  ev->add_option("--split", split_name, "test, validation, train or all")
      ->check(CLI::IsMember({"test", "validation", "train", "all"}));
  ev->add_flag("--identity-stub", identity, "Use the targets as predictions");

  auto* be = app.add_subcommand("bench", "Time all-rate, all-month generation");
  be->add_option("--gcn", gcn_path, "GCN artifact");
  be->add_option("--fcn", fcn_path, "FCN artifact");

  auto* sw = app.add_subcommand("sweep", "Melting-rate sensitivity sweep");
  sw->add_option("--model", model_path, "Model artifact")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--kind", grad_kind, "gcn, fcn or all")->check(CLI::IsMember({"gcn", "fcn", "all"}));
  gc->add_flag("--corrupt", corrupt, "Inject a gradient error to exercise the failure path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  try {
    RunConfig c = resolve_config(g);
    if (!kind.empty()) c.train.kind = parse_model_kind(kind);
    if (*gen) return cmd_gen_data(c, g.force, gen_mode);
    if (*tr) return cmd_train(c, g.force, data_dir, quiet);
    if (*ev) return cmd_eval(c, g.force, model_path, data_dir, split_name, identity);
    if (*be) return cmd_bench(c, g.force, gcn_path, fcn_path);
    if (*sw) return cmd_sweep(c, g.force, model_path);
    if (*gc) return cmd_gradcheck(c, g.force, grad_kind, corrupt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::config);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::validation);
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const StabilityError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::failure);
  }
  return static_cast<int>(ExitCode::failure);
}
