#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "hjflow/error.hpp"
#include "hjflow/flow.hpp"
#include "hjflow/lightcone.hpp"
#include "hjflow/system.hpp"

#ifndef HJFLOW_VERSION
#define HJFLOW_VERSION "dev"
#endif

namespace hjflow::cli {

namespace {

using nlohmann::json;

struct Settings {
  std::uint64_t seed = 42;
  int samples = 20;
  double tol = 1e-9;
  unsigned threads = 1;
};

std::string sci(double v, int digits = 3) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*e", digits, v);
  return buf;
}

json provenance(const Settings& s, const std::string& command) {
  return {
      {"tool", "hjflow"},
      {"version", HJFLOW_VERSION},
      {"command", command},
      {"seed", s.seed},
      {"samples", s.samples},
      {"tol", s.tol},
      {"threads", s.threads},
      {"libraries",
       {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                      "." + std::to_string(EIGEN_MINOR_VERSION)},
        {"fftw", lightcone::fft_library_version()},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
  };
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f << content;
  if (!f) throw Error("failed writing '" + path + "'");
}

json bindings_json(const Bindings& b) {
  json j = json::object();
  for (const auto& [k, v] : b) j[k] = v;
  return j;
}

int run_analyze(const std::string& system_path, const Settings& s, const std::string& report_path,
                std::ostream& out) {
  const auto sys = load_system(read_json_file(system_path));
  const ZeroTestOptions zopts{s.samples, s.seed, s.tol};
  const auto report = integrability_matrix(sys, zopts);
  const auto summary = classify(report);

  out << "system: " << sys.name() << '\n';
  out << "extended hamiltonians:\n";
  json hs = json::object();
  for (const auto& h : build_extended_hamiltonians(sys)) {
    out << "  H'_" << h.parameter << " = " << h.expr.str() << '\n';
    hs[h.parameter] = h.expr.str();
  }
  out << "integrability matrix (identically, on surface):\n";
  json entries = json::array();
  for (std::size_t a = 0; a < report.size(); ++a) {
    for (std::size_t b = 0; b < report.size(); ++b) {
      const auto& e = report.at(a, b);
      out << "  {H'_" << report.parameters[a] << ", H'_" << report.parameters[b]
          << "}: " << (e.identically.zero ? "zero" : "nonzero") << ", "
          << (e.on_surface.zero ? "zero" : "nonzero") << '\n';
      json entry{{"row", report.parameters[a]},
                 {"column", report.parameters[b]},
                 {"bracket", e.bracket.str()},
                 {"identically_zero", e.identically.zero},
                 {"on_surface_zero", e.on_surface.zero},
                 {"worst_ratio", e.identically.worst_ratio}};
      if (e.identically.witness) {
        entry["witness"] = bindings_json(*e.identically.witness);
        entry["witness_value"] = e.identically.witness_value;
      }
      entries.push_back(std::move(entry));
    }
  }
  out << "antisymmetric: " << (report.antisymmetric ? "yes" : "no") << '\n';
  out << summary.text;
  if (!summary.text.empty() && summary.text.back() != '\n') out << '\n';

  if (!report_path.empty()) {
    json doc{{"system", sys.name()},
             {"extended_hamiltonians", hs},
             {"brackets", entries},
             {"antisymmetric", report.antisymmetric},
             {"classification", to_string(summary.classification)},
             {"summary", summary.text},
             {"provenance", provenance(s, "analyze")}};
    write_file(report_path, doc.dump(2) + "\n");
  }
  return summary.classification == Classification::NotIntegrable ? kScientificNegative : kOk;
}

struct EvolveArgs {
  std::string system, initial, path, out, method = "canonical", gauge;
  std::size_t steps = 0;
  bool allow_off_surface = false;
};

int run_evolve(const EvolveArgs& a, const Settings& s, std::ostream& out) {
  const auto sys = load_system(read_json_file(a.system));
  const auto init = load_initial_state(sys, read_json_file(a.initial));
  const auto path = load_path(sys, read_json_file(a.path));

  TrajectoryRecord rec;
  if (a.method == "canonical") {
    if (!a.gauge.empty()) throw PreconditionError("--gauge applies to --method dirac only");
    IntegrateOptions opts;
    opts.allow_off_surface = a.allow_off_surface;
    rec = integrate(sys, init.point, path, a.steps, opts);
  } else {
    if (a.gauge.empty()) throw PreconditionError("--method dirac needs --gauge");
    if (sys.parameters().size() != 2) {
      throw PreconditionError("--method dirac needs exactly one parameter besides " +
                              sys.parameters().front());
    }
    const Expr gauge = parse(a.gauge);
    const Expr constraint = build_extended_hamiltonians(sys)[1].expr;
    if (!a.allow_off_surface) {
      const auto residual = constraint_values(sys, init.point);
      double scale = 1.0;
      for (double v : init.point.conjugates) scale = std::max(scale, std::abs(v));
      for (std::size_t i = 0; i < residual.size(); ++i) {
        if (residual[i] > 1e-12 * scale) {
          throw PreconditionError("initial point is off the constraint surface: H'_" +
                                  sys.parameters()[i] + " = " + sci(residual[i]));
        }
      }
    }
    const auto& w = path.waypoints();
    rec = dirac_reference(sys, constraint, gauge, init.point, w.front()[0], w.back()[0], a.steps);
  }

  std::ostringstream csv;
  write_trajectory_csv(csv, sys, rec);
  write_file(a.out, csv.str());

  const double worst = rec.max_abs_hprime();
  out << "steps: " << rec.steps() << '\n';
  out << "max |H'| along run: " << sci(worst) << '\n';
  if (rec.lambda) {
    const auto [lo, hi] = std::minmax_element(rec.lambda->begin(), rec.lambda->end());
    out << "lambda range: [" << sci(*lo, 15) << ", " << sci(*hi, 15) << "]\n";
  }
  out << "wrote " << a.out << '\n';
  return worst < s.tol ? kOk : kScientificNegative;
}

struct CheckArgs {
  std::string system, initial, path_a, path_b;
  std::size_t steps = 0;
};

int run_check(const CheckArgs& a, const Settings& s, std::ostream& out) {
  const auto sys = load_system(read_json_file(a.system));
  const auto init = load_initial_state(sys, read_json_file(a.initial));
  const auto pa = load_path(sys, read_json_file(a.path_a));
  const auto pb = load_path(sys, read_json_file(a.path_b));
  const auto d = path_independence_check(sys, init.point, pa, pb, a.steps);
  out << "endpoint discrepancies:\n";
  for (const auto& [name, v] : d.per_variable) out << "  " << name << ": " << sci(v) << '\n';
  out << "max discrepancy: " << sci(d.max) << " (tol " << sci(s.tol) << ")\n";
  return d.max < s.tol ? kOk : kScientificNegative;
}

struct QuantumArgs {
  std::string run, dump, out;
  bool compare_classical = false;
  double norm_tol = 1e-10;
  double ehrenfest_tol = 1e-5;
};

int run_quantum(const QuantumArgs& a, const Settings& s, std::ostream& out) {
  const auto run = lightcone::load_quantum_run(read_json_file(a.run));
  lightcone::EvolveOptions opts;
  opts.threads = s.threads;

  lightcone::EvolutionRecord record;
  std::optional<lightcone::EhrenfestReport> ehrenfest;
  if (a.compare_classical) {
    ehrenfest = lightcone::ehrenfest_compare(run.model, run.grid, run.initial, run.from, run.to,
                                             run.steps, opts);
    record = std::move(ehrenfest->quantum);
  } else {
    record = lightcone::evolve_splitstep(run.initial_wave(), run.model, run.from, run.to, run.steps,
                                         opts);
  }

  std::ostringstream csv;
  lightcone::write_observables_csv(csv, record);
  write_file(a.out, csv.str());
  if (!a.dump.empty()) {
    std::ostringstream bin;
    lightcone::write_wavefunction(bin, record.final);
    write_file(a.dump, bin.str());
  }

  const double drift = record.norm_drift();
  out << "steps: " << run.steps << '\n';
  out << "norm drift: " << sci(drift) << " (limit " << sci(a.norm_tol) << ")\n";
  int code = kOk;
  if (ehrenfest) {
    out << "ehrenfest position deviation: " << sci(ehrenfest->max_position_deviation) << " (limit "
        << sci(a.ehrenfest_tol) << ")\n";
    out << "ehrenfest momentum deviation: " << sci(ehrenfest->max_momentum_deviation) << '\n';
    if (!(ehrenfest->max_position_deviation <= a.ehrenfest_tol)) code = kScientificNegative;
  }
  out << "wrote " << a.out << '\n';
  if (!(drift <= a.norm_tol)) {
    out << "norm drift exceeds its bound\n";
    return kResolution;
  }
  return code;
}

struct KernelArgs {
  std::string run, report;
  std::vector<std::size_t> slices;
};

int run_kernel(const KernelArgs& a, const Settings& s, std::ostream& out) {
  const auto run = lightcone::load_quantum_run(read_json_file(a.run));
  if (run.grid.d != 1) throw PreconditionError("kernel supports d=1 only");
  lightcone::EvolveOptions opts;
  opts.threads = s.threads;
  const auto study = lightcone::kernel_convergence(run, a.slices, opts);

  out << "reference: split-step with " << study.reference_steps << " steps\n";
  out << "kernel normalization fixed by grid unitarity\n";
  out << "slices  L2 distance\n";
  json rows = json::array();
  for (const auto& r : study.rows) {
    char line[64];
    std::snprintf(line, sizeof line, "%6zu  %.6e\n", r.slices, r.distance);
    out << line;
    rows.push_back({{"slices", r.slices}, {"distance", r.distance}});
  }
  int code = kScientificNegative;
  if (study.exact) {
    out << "order: exact (all distances <= 1e-6)\n";
    code = kOk;
  } else if (study.order) {
    out << "fitted order: " << sci(*study.order) << '\n';
    if (*study.order >= 0.9) code = kOk;
  } else {
    out << "fitted order: unavailable\n";
  }

  if (!a.report.empty()) {
    json doc{{"run", lightcone::to_json(run)},
             {"reference_steps", study.reference_steps},
             {"rows", rows},
             {"exact", study.exact},
             {"order", study.order ? json(*study.order) : json(nullptr)},
             {"normalization", "fixed by grid unitarity"},
             {"provenance", provenance(s, "kernel")}};
    write_file(a.report, doc.dump(2) + "\n");
  }
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hamilton-Jacobi treatment of constrained systems and the light-cone plane-wave model",
               "hjflow"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HJFLOW_VERSION);

  Settings settings;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", settings.seed, "Sampling seed")->capture_default_str();
    sub->add_option("--samples", settings.samples, "Zero-test samples")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--tol", settings.tol, "Tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--threads", settings.threads, "Worker threads for grid work")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };

  std::string analyze_system, analyze_report;
  auto* analyze = app.add_subcommand("analyze", "Extended Hamiltonians and integrability");
  analyze->add_option("system", analyze_system, "System document")->required();
  analyze->add_option("--report", analyze_report, "Machine-readable report");
  add_common(analyze);

  EvolveArgs ev;
  auto* evolve = app.add_subcommand("evolve", "Integrate along a parameter path");
  evolve->add_option("system", ev.system, "System document")->required();
  evolve->add_option("--initial", ev.initial, "Initial-state document")->required();
  evolve->add_option("--path", ev.path, "Path document")->required();
  evolve->add_option("--steps", ev.steps, "RK4 steps")->required()->check(CLI::PositiveNumber);
  evolve->add_option("--method", ev.method, "canonical or dirac")
      ->check(CLI::IsMember({"canonical", "dirac"}))
      ->capture_default_str();
  evolve->add_option("--gauge", ev.gauge, "Gauge condition for --method dirac");
  evolve->add_flag("--allow-off-surface", ev.allow_off_surface, "Accept an off-surface start");
  evolve->add_option("--out", ev.out, "Trajectory CSV")->required();
  add_common(evolve);

  CheckArgs ck;
  auto* check = app.add_subcommand("check", "Path-independence check");
  check->add_option("system", ck.system, "System document")->required();
  check->add_option("--initial", ck.initial, "Initial-state document")->required();
  check->add_option("--path-a", ck.path_a, "First path document")->required();
  check->add_option("--path-b", ck.path_b, "Second path document")->required();
  check->add_option("--steps", ck.steps, "RK4 steps")->required()->check(CLI::PositiveNumber);
  add_common(check);

  QuantumArgs qa;
  auto* quantum = app.add_subcommand("quantum", "Light-cone Klein-Gordon evolution");
  quantum->add_option("run", qa.run, "Quantum-run document")->required();
  quantum->add_flag("--compare-classical", qa.compare_classical, "Ehrenfest comparison");
  quantum->add_option("--dump", qa.dump, "Final wavefunction dump");
  quantum->add_option("--out", qa.out, "Observables CSV")->required();
  quantum->add_option("--norm-tol", qa.norm_tol, "Norm drift bound")->capture_default_str();
  quantum->add_option("--ehrenfest-tol", qa.ehrenfest_tol, "Ehrenfest deviation bound")
      ->capture_default_str();
  add_common(quantum);

  KernelArgs ka;
  auto* kernel = app.add_subcommand("kernel", "Sliced path-integral kernel convergence");
  kernel->add_option("run", ka.run, "Quantum-run document")->required();
  kernel->add_option("--slices", ka.slices, "Slice counts, comma separated")
      ->required()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  kernel->add_option("--report", ka.report, "Machine-readable report");
  add_common(kernel);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*analyze) return run_analyze(analyze_system, settings, analyze_report, out);
    if (*evolve) return run_evolve(ev, settings, out);
    if (*check) return run_check(ck, settings, out);
    if (*quantum) return run_quantum(qa, settings, out);
    if (*kernel) return run_kernel(ka, settings, out);
  } catch (const SingularityError& e) {
    err << "hjflow: singularity: " << e.what() << '\n';
    return kSingularity;
  } catch (const ResolutionError& e) {
    err << "hjflow: resolution: " << e.what() << '\n';
    return kResolution;
  } catch (const std::exception& e) {
    err << "hjflow: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}

}  // namespace hjflow::cli
