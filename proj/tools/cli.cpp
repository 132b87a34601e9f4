#include "cli.hpp"

#include "heatlab/diagnostics.hpp"
#include "heatlab/experiments.hpp"
#include "heatlab/hydro.hpp"
#include "heatlab/io.hpp"
#include "heatlab/ldp.hpp"
#include "heatlab/trajectory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

namespace heatlab::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string to_text(double v) { return format_double(v); }
std::string to_text(const std::string& v) { return v; }
std::string to_text(bool v) { return v ? "true" : "false"; }
template <std::integral T>
std::string to_text(T v) {
  return std::to_string(v);
}

// Options of one (sub)command in declaration order, so the resolved configuration can be
// written back out from the bound variables.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& description) {
    CLI::Option* opt = app_->add_option("--" + name, var, description)
                           ->capture_default_str()
                           ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    items_.push_back({name, [&var] { return to_text(var); }});
    return opt;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& description) {
    CLI::Option* opt = app_->add_flag("--" + name, var, description)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    items_.push_back({name, [&var] { return to_text(var); }});
    return opt;
  }

  bool has(const std::string& name) const {
    return std::any_of(items_.begin(), items_.end(), [&](const auto& item) { return item.first == name; });
  }

  std::vector<std::pair<std::string, std::string>> resolved() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, get] : items_) out.emplace_back(name, get());
    return out;
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> items_;
};

// ---------------------------------------------------------------------------------------
// Shared parsing helpers

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& what) {
  std::vector<T> out;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    T v{};
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw ValidationError("cannot parse " + what + " item '" + std::string(item) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ValidationError(what + " must not be empty");
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  auto sizes = parse_list<std::size_t>(text, "lattice size list");
  for (std::size_t n : sizes)
    if (n < kMinSites) throw ValidationError("N must be >= 3 (got " + std::to_string(n) + ")");
  return sizes;
}

void require_sites(std::size_t n) {
  if (n < kMinSites) throw ValidationError("N must be >= 3 (got " + std::to_string(n) + ")");
}

void require_positive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(what + " must be positive");
}

std::shared_ptr<const TiltField> parse_tilt(const std::string& spec, double t_end) {
  if (spec.starts_with("sine:")) {
    const auto v = parse_list<double>(spec.substr(5), "sine tilt");
    if (v.size() > 2) throw ValidationError("sine tilt takes amp[,wavenumber]");
    const double amp = v[0];
    const double k = v.size() == 2 ? v[1] : 1.0;
    const SpaceTimeGrid grid{256, 2, t_end, 0.0};
    return std::make_shared<const TiltField>(
        TiltField::from_function(grid, [=](double, double x) { return amp * std::sin(2.0 * M_PI * k * x); }));
  }
  if (spec.starts_with("file:")) {
    FieldData data = read_field_csv(spec.substr(5));
    return std::make_shared<const TiltField>(TiltField(data.grid, std::move(data.values)));
  }
  throw ValidationError("unknown tilt '" + spec + "' (expected sine:amp[,k] or file:path)");
}

DensityField parse_target(const std::string& spec, std::size_t nx, std::size_t nt, double t_end) {
  if (spec.starts_with("single-mode:")) {
    const auto v = parse_list<double>(spec.substr(12), "single-mode target");
    if (v.size() < 2 || v.size() > 3) throw ValidationError("single-mode target takes beta,lambda[,mean]");
    require_sites(nx);
    if (nt < 3) throw ValidationError("target needs at least 3 time levels");
    require_positive(t_end, "t-end");
    return single_mode_field(SpaceTimeGrid{nx, nt, t_end, 0.0}, v[0], v[1], v.size() == 3 ? v[2] : 1.0);
  }
  if (spec.starts_with("file:")) {
    FieldData data = read_field_csv(spec.substr(5));
    return DensityField(data.grid, std::move(data.values));
  }
  throw ValidationError("unknown target '" + spec + "' (expected single-mode:beta,lambda[,mean] or file:path)");
}

const std::string kDefaultTarget = "single-mode:0.3," + format_double(2.0 * M_PI * M_PI);

// ---------------------------------------------------------------------------------------
// Run context: resolved configuration, digest and output locations

struct Context {
  std::string command;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::string out_dir = ".";
  std::vector<std::pair<std::string, std::string>> config;
  std::string digest;
  std::ostream* out = nullptr;

  std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

  FileHeader header(const std::string& model = {}) const {
    FileHeader h;
    h.entries["command"] = command;
    h.entries["digest"] = digest;
    h.entries["seed"] = std::to_string(seed);
    if (!model.empty()) h.entries["model"] = model;
    return h;
  }

  json document() const {
    json j;
    j["command"] = command;
    j["config_digest"] = digest;
    json cfg = json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    return j;
  }

  void write_json(const std::string& name, const json& j) const {
    write_text(path(name), j.dump(2) + "\n");
    *out << "wrote " << path(name) << "\n";
  }
  void note_file(const std::string& name) const { *out << "wrote " << path(name) << "\n"; }
};

std::ofstream open_csv(const Context& ctx, const std::string& name, const FileHeader& header) {
  std::ofstream os(ctx.path(name), std::ios::binary);
  if (!os) throw ValidationError("cannot open " + ctx.path(name) + " for writing");
  os << header.format() << '\n';
  return os;
}

json to_json(const StepStats& s) {
  return json{{"leaves", s.leaves},
              {"refinements", s.refinements},
              {"truncations", s.truncations},
              {"truncated_mass", s.truncated_mass}};
}

json to_json(const EnsembleSummary& s) {
  json j;
  j["n_sites"] = s.n_sites;
  j["members"] = s.members;
  j["times"] = s.times;
  json obs = json::object();
  const auto& fns = standard_test_functions();
  for (std::size_t f = 0; f < fns.size(); ++f) obs[fns[f].name] = json{{"mean", s.mean[f]}, {"variance", s.variance[f]}};
  j["observables"] = obs;
  j["mass"] = s.mean[0];
  j["max_relative_drift"] = s.max_relative_drift;
  j["min_energy"] = s.min_energy;
  j["truncated_fraction"] = s.truncated_fraction;
  j["steps"] = to_json(s.stats);
  return j;
}

void require_finite(const EnsembleSummary& s) {
  for (const auto& series : s.mean)
    for (double v : series)
      if (!std::isfinite(v)) throw NumericFailure("simulation produced non-finite energies");
}

// ---------------------------------------------------------------------------------------
// Parameter groups

struct ModelArgs {
  std::string model = "bep";
  double m = 1.0;
  std::string a = "sqrt";
  std::string tilt;

  void add(Options& o, bool with_tilt = true) {
    o.add("model", model, "bep, gbep, kmp, bmp or wabep");
    o.add("m", m, "BEP layer parameter");
    o.add("a", a, "GBEP rate preset: const:c, sqrt, linear:c");
    if (with_tilt) o.add("tilt", tilt, "WABEP tilt: sine:amp[,k] or file:path (t,x,H field CSV)");
  }

  Process process(double t_end) const {
    if (model == "bep") return Process::of(ModelSpec::bep(m));
    if (model == "gbep") return Process::of(ModelSpec::gbep(RateFunction::parse(a)));
    if (model == "kmp") return Process::of(ModelSpec::kmp());
    if (model == "bmp") return Process::bmp();
    if (model == "wabep") {
      if (tilt.empty()) throw ValidationError("--model wabep needs --tilt");
      return Process::wabep(m, parse_tilt(tilt, t_end));
    }
    throw ValidationError("unknown model '" + model + "' (expected bep, gbep, kmp, bmp, wabep)");
  }

  // Model whose hydrodynamic coefficients apply (BEP(m) for WABEP).
  ModelSpec spec() const {
    if (model == "bep" || model == "wabep") return ModelSpec::bep(m);
    if (model == "gbep") return ModelSpec::gbep(RateFunction::parse(a));
    if (model == "kmp") return ModelSpec::kmp();
    if (model == "bmp") return ModelSpec::bep(1.0);
    throw ValidationError("unknown model '" + model + "' (expected bep, gbep, kmp, bmp, wabep)");
  }
};

double law_m(const Process& p) {
  if (p.is_bmp()) return 1.0;
  return p.model().kind() == ModelKind::Kmp ? 2.0 : p.model().m();
}

struct SimArgs {
  double t_end = 0.05;
  std::size_t ensemble = 1;
  std::size_t snapshots = 11;
  double c_safe = 0.1;
  int max_depth = 40;
  std::string init = "cosine:1,0.5,1";
  double theta = 0.0;
  std::string scheme = "milstein";

  void add(Options& o) {
    o.add("t-end", t_end, "final time");
    o.add("scheme", scheme, "diffusion step: milstein (used for m >= 1) or euler");
    o.add("ensemble", ensemble, "number of independent paths");
    o.add("snapshots", snapshots, "sample times including both endpoints");
    o.add("c-safe", c_safe, "time-step safety constant");
    o.add("max-depth", max_depth, "maximal Brownian-bridge refinement depth");
    o.add("init", init, "initial profile: const:c, cosine:mean,amp,k or file:path");
    o.add("theta", theta, "start from the invariant law at this temperature (0: use --init)");
  }

  SimulationOptions options() const {
    require_positive(t_end, "t-end");
    require_positive(c_safe, "c-safe");
    if (ensemble == 0) throw ValidationError("ensemble must be positive");
    if (snapshots < 2) throw ValidationError("snapshots must be >= 2");
    if (max_depth < 0) throw ValidationError("max-depth must be >= 0");
    if (scheme != "milstein" && scheme != "euler") throw ValidationError("scheme must be milstein or euler");
    SimulationOptions s;
    s.t_end = t_end;
    s.n_snapshots = snapshots;
    s.step.c_safe = c_safe;
    s.step.max_refine_depth = max_depth;
    s.step.milstein = scheme == "milstein";
    return s;
  }

  InitialCondition initial(const Process& p) const {
    if (theta < 0.0) throw ValidationError("theta must be >= 0");
    if (theta > 0.0) return InitialCondition::invariant(GammaLaw(theta, law_m(p)));
    return InitialCondition::parse(init);
  }
};

// ---------------------------------------------------------------------------------------
// Commands

struct Command {
  virtual ~Command() = default;
  virtual void run(const Context& ctx) = 0;
};

struct SimulateCmd : Command {
  ModelArgs model;
  SimArgs sim;
  std::size_t n = 64;
  bool record_noise = false;
  std::size_t trajectories = 1;

  void add(Options& o) {
    model.add(o);
    o.add("n", n, "lattice size N");
    sim.add(o);
    o.flag("record-noise", record_noise, "write the bond noise log of every written path");
    o.add("trajectories", trajectories, "number of paths written as CSV");
  }

  void run(const Context& ctx) override {
    require_sites(n);
    SimulationOptions opt = sim.options();
    opt.record_noise = record_noise;
    const Process process = model.process(opt.t_end);
    const InitialCondition initial = sim.initial(process);
    const auto ensemble = simulate_ensemble(process, n, initial, opt, sim.ensemble, ctx.seed, ctx.jobs);
    const EnsembleSummary summary = summarize_ensemble(ensemble);
    require_finite(summary);
    const std::size_t written = std::min(trajectories, ensemble.size());
    for (std::size_t k = 0; k < written; ++k) {
      FileHeader h = ctx.header(process.describe());
      h.entries["member"] = std::to_string(k);
      const std::string name = "trajectory_" + std::to_string(k) + ".csv";
      write_trajectory_csv(ctx.path(name), ensemble[k], h);
      ctx.note_file(name);
      if (ensemble[k].noise) {
        const std::string log = "noise_" + std::to_string(k) + ".bin";
        write_noise_log(ctx.path(log), *ensemble[k].noise);
        ctx.note_file(log);
      }
    }
    json j = ctx.document();
    j["model"] = process.describe();
    j["initial"] = initial.spec();
    j["summary"] = to_json(summary);
    ctx.write_json("summary.json", j);
  }
};

struct CompareCmd : Command {
  ModelArgs model;
  SimArgs sim;
  std::string sizes = "32,64,128";
  std::size_t pde_nx = 256;
  std::size_t levels = 10;
  std::size_t substeps = 5;

  CompareCmd() { sim.ensemble = 100; }

  void add(Options& o) {
    model.add(o);
    o.add("n", sizes, "comma-separated lattice sizes");
    sim.add(o);
    o.add("pde-nx", pde_nx, "reference grid points");
    o.add("pde-levels", levels, "reference time levels per snapshot interval");
    o.add("pde-substeps", substeps, "Crank-Nicolson steps per reference level");
  }

  void run(const Context& ctx) override {
    const auto ns = parse_sizes(sizes);
    require_sites(pde_nx);
    const SimulationOptions opt = sim.options();
    const Process process = model.process(opt.t_end);
    const InitialCondition initial = sim.initial(process);
    const WeakErrorStudy study =
        weak_error_study(process, ns, initial, opt, sim.ensemble, ctx.seed, ctx.jobs, {pde_nx, levels, substeps});

    const FileHeader header = ctx.header(process.describe());
    {
      auto os = open_csv(ctx, "compare.csv", header);
      os << "N,weak_error,truncated_fraction,max_relative_drift\n";
      for (const auto& row : study.rows)
        os << row.n << ',' << format_double(row.weak_error) << ',' << format_double(row.summary.truncated_fraction) << ','
           << format_double(row.summary.max_relative_drift) << '\n';
      ctx.note_file("compare.csv");
    }
    {
      auto os = open_csv(ctx, "compare_profiles.csv", header);
      os << "N,snapshot,t,x,mean_z\n";
      for (const auto& row : study.rows)
        for (std::size_t k = 0; k < row.profiles.size(); ++k)
          for (Eigen::Index j = 0; j < row.profiles[k].size(); ++j)
            os << row.n << ',' << k << ',' << format_double(row.summary.times[k]) << ','
               << format_double(static_cast<double>(j + 1) / static_cast<double>(row.n)) << ','
               << format_double(row.profiles[k][j]) << '\n';
      ctx.note_file("compare_profiles.csv");
    }
    write_field_csv(ctx.path("reference.csv"), study.reference, "rho", header);
    ctx.note_file("reference.csv");

    json j = ctx.document();
    j["model"] = process.describe();
    j["initial"] = initial.spec();
    json rows = json::array();
    for (const auto& row : study.rows) {
      require_finite(row.summary);
      json r = to_json(row.summary);
      r["weak_error"] = row.weak_error;
      rows.push_back(r);
    }
    j["rows"] = rows;
    j["weak_error_decreasing"] = study.decreasing();
    ctx.write_json("compare.json", j);
  }
};

struct HydroCmd : Command {
  ModelArgs model;
  std::string init = "cosine:1,0.5,1";
  std::size_t nx = 256;
  std::size_t nt = 101;
  double t_end = 0.05;
  std::size_t substeps = 1;

  void add(Options& o) {
    model.add(o);
    o.add("init", init, "initial profile: const:c or cosine:mean,amp,k");
    o.add("nx", nx, "grid points");
    o.add("nt", nt, "time levels");
    o.add("t-end", t_end, "final time");
    o.add("substeps", substeps, "Crank-Nicolson steps per level");
  }

  void run(const Context& ctx) override {
    require_sites(nx);
    if (nt < 2) throw ValidationError("nt must be >= 2");
    require_positive(t_end, "t-end");
    if (substeps == 0) throw ValidationError("substeps must be positive");
    const Process process = model.process(t_end);
    const InitialCondition ic = InitialCondition::parse(init);
    if (!ic.mean_profile()) throw ValidationError("hydro needs a profile initial condition");
    const DensityField rho = hydrodynamic_reference(process, ic.mean_profile(), 0.0, t_end, nx, nt, substeps);
    if (!rho.values().allFinite()) throw NumericFailure("hydrodynamic solve produced non-finite values");
    write_field_csv(ctx.path("hydro.csv"), rho, "rho", ctx.header(process.describe()));
    ctx.note_file("hydro.csv");
    const Vector masses = rho.masses();
    json j = ctx.document();
    j["model"] = process.describe();
    j["grid"] = json{{"nx", nx}, {"nt", nt}, {"duration", t_end}, {"t0", 0.0}};
    j["mass_initial"] = masses[0];
    j["mass_final"] = masses[masses.size() - 1];
    j["max_relative_mass_drift"] = (masses.array() - masses[0]).abs().maxCoeff() / masses[0];
    ctx.write_json("hydro.json", j);
  }
};

struct TiltCmd : Command {
  double m = 1.0;
  std::string target = kDefaultTarget;
  std::size_t nx = 256;
  std::size_t nt = 251;
  std::size_t n = 0;
  SimArgs sim;

  TiltCmd() { sim.ensemble = 100; }

  void add(Options& o) {
    o.add("m", m, "BEP layer parameter of the tilted process");
    o.add("target", target, "single-mode:beta,lambda[,mean] or file:path (t,x,rho CSV)");
    o.add("nx", nx, "target grid points (single-mode)");
    o.add("nt", nt, "target time levels (single-mode)");
    o.add("n", n, "WABEP lattice size for the steering check (0: skip)");
    o.add("t-end", sim.t_end, "target duration and simulation end time");
    o.add("ensemble", sim.ensemble, "number of WABEP paths");
    o.add("snapshots", sim.snapshots, "sample times including both endpoints");
    o.add("c-safe", sim.c_safe, "time-step safety constant");
    o.add("max-depth", sim.max_depth, "maximal Brownian-bridge refinement depth");
  }

  void run(const Context& ctx) override {
    if (n != 0) require_sites(n);
    const DensityField gamma = parse_target(target, nx, nt, sim.t_end);
    const SimulationOptions opt = sim.options();
    const SteeringStudy study = steering_study(gamma, m, n, n == 0 ? 0 : sim.ensemble, opt, ctx.seed, ctx.jobs);
    const ModelSpec model = ModelSpec::bep(m);
    write_field_csv(ctx.path("tilt.csv"), study.recovery.tilt, "H", ctx.header(model.describe()));
    ctx.note_file("tilt.csv");
    json j = ctx.document();
    j["model"] = model.describe();
    j["target"] = target;
    j["elliptic_residual"] = study.recovery.elliptic_residual;
    j["mean_violation"] = study.recovery.mean_violation;
    j["tilt_rate"] = tilt_rate(gamma, study.recovery.tilt, model);
    j["round_trip_error"] = study.round_trip_error;
    if (n != 0) {
      require_finite(study.summary);
      j["weak_distance"] = study.weak_distance;
      j["summary"] = to_json(study.summary);
    }
    ctx.write_json("tilt.json", j);
  }
};

struct RateCmd : Command {
  ModelArgs model;
  std::string traj;
  std::string target = kDefaultTarget;
  std::size_t nx = 256;
  std::size_t nt = 256;
  double t_end = 0.1;

  void add(Options& o) {
    model.add(o, false);
    o.add("traj", traj, "density field CSV (t,x,rho); overrides --target");
    o.add("target", target, "single-mode:beta,lambda[,mean] or file:path");
    o.add("nx", nx, "target grid points (single-mode)");
    o.add("nt", nt, "target time levels (single-mode)");
    o.add("t-end", t_end, "target duration (single-mode)");
  }

  void run(const Context& ctx) override {
    const ModelSpec spec = model.spec();
    const DensityField gamma = parse_target(traj.empty() ? target : "file:" + traj, nx, nt, t_end);
    const TiltRecovery rec = recover_tilt(gamma, spec);
    const double direct = tilt_rate(gamma, rec.tilt, spec);
    const double onsager = pathwise_rate_onsager(gamma, spec);
    if (!std::isfinite(direct) || !std::isfinite(onsager)) throw NumericFailure("rate functional is not finite");
    const double scale = std::max(std::abs(direct), std::abs(onsager));
    const auto& g = gamma.grid();
    json j = ctx.document();
    j["model"] = spec.describe();
    j["I_direct"] = direct;
    j["I_onsager"] = onsager;
    j["relative_difference"] = scale > 0.0 ? std::abs(direct - onsager) / scale : 0.0;
    j["residual_norms"] = json{{"elliptic", rec.elliptic_residual},
                               {"mean_violation", rec.mean_violation},
                               {"hydrodynamic_max", rec.residual.cwiseAbs().maxCoeff()}};
    j["grid"] = json{{"nx", g.nx}, {"nt", g.nt}, {"duration", g.duration}, {"t0", g.t0}};
    ctx.write_json("rate.json", j);
  }
};

struct GirsanovCmd : Command {
  double m = 1.0;
  std::size_t n = 8;
  SimArgs sim;
  std::string tilt = "sine:0.2";
  std::string direction = "wabep-to-bep";

  GirsanovCmd() {
    sim.scheme = "euler";
    sim.t_end = 0.01;
    sim.ensemble = 10000;
    sim.snapshots = 2;
  }

  void add(Options& o) {
    o.add("m", m, "BEP layer parameter");
    o.add("n", n, "lattice size N");
    sim.add(o);
    o.add("tilt", tilt, "sine:amp[,k] or file:path");
    o.add("direction", direction, "wabep-to-bep (simulate WABEP) or bep-to-wabep (simulate BEP)");
  }

  void run(const Context& ctx) override {
    require_sites(n);
    GirsanovDirection dir;
    if (direction == "wabep-to-bep")
      dir = GirsanovDirection::WabepToBep;
    else if (direction == "bep-to-wabep")
      dir = GirsanovDirection::BepToWabep;
    else
      throw ValidationError("unknown direction '" + direction + "'");
    SimulationOptions opt = sim.options();
    opt.record_noise = true;
    const auto field = parse_tilt(tilt, opt.t_end);
    const Process process =
        dir == GirsanovDirection::WabepToBep ? Process::wabep(m, field) : Process::of(ModelSpec::bep(m));
    const InitialCondition initial = sim.initial(process);
    const auto weights = run_ensemble<double>(sim.ensemble, ctx.jobs, [&](std::size_t i) {
      RandomStream rng(ctx.seed, i);
      const TrajectoryRecord rec = simulate_trajectory(process, n, initial, opt, rng);
      return girsanov_log_weight(rec, *field, m, dir, opt.step);
    });
    double sum = 0.0, sum2 = 0.0, sum_log = 0.0;
    {
      auto os = open_csv(ctx, "girsanov.csv", ctx.header(process.describe()));
      os << "member,log_weight,weight\n";
      for (std::size_t i = 0; i < weights.size(); ++i) {
        const double w = std::exp(weights[i]);
        if (!std::isfinite(w)) throw NumericFailure("non-finite Girsanov weight");
        sum += w;
        sum2 += w * w;
        sum_log += weights[i];
        os << i << ',' << format_double(weights[i]) << ',' << format_double(w) << '\n';
      }
      ctx.note_file("girsanov.csv");
    }
    const double count = static_cast<double>(weights.size());
    const double mean = sum / count;
    const double var = count > 1 ? std::max(sum2 / count - mean * mean, 0.0) * count / (count - 1.0) : 0.0;
    const double se = std::sqrt(var / count);
    json j = ctx.document();
    j["model"] = process.describe();
    j["direction"] = direction;
    j["paths"] = weights.size();
    j["mean_weight"] = mean;
    j["standard_error"] = se;
    j["deviation_in_se"] = se > 0.0 ? (mean - 1.0) / se : 0.0;
    j["mean_log_weight"] = sum_log / count;
    ctx.write_json("girsanov.json", j);
  }
};

struct LdpEqCmd : Command {
  double m = 2.0;
  double theta = 1.0;
  double c = 1.5;
  std::string sizes = "128,512,2048";

  void add(Options& o) {
    o.add("m", m, "layer parameter of the Gamma(m/2, theta) sites");
    o.add("theta", theta, "temperature");
    o.add("c", c, "level of the empirical mean");
    o.add("n", sizes, "comma-separated lattice sizes");
  }

  void run(const Context& ctx) override {
    const auto rows = equilibrium_tail_study(m, theta, c, parse_list<std::size_t>(sizes, "N list"));
    bool monotone = true;
    {
      auto os = open_csv(ctx, "ldp_eq.csv", ctx.header());
      os << "N,minus_log_p_over_N,rate_value\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!std::isfinite(rows[i].minus_log_p_over_n)) throw NumericFailure("tail probability underflowed");
        if (i > 0 && !(rows[i].minus_log_p_over_n < rows[i - 1].minus_log_p_over_n)) monotone = false;
        os << rows[i].n << ',' << format_double(rows[i].minus_log_p_over_n) << ',' << format_double(rows[i].rate) << '\n';
      }
      ctx.note_file("ldp_eq.csv");
    }
    json j = ctx.document();
    j["rate_value"] = rows.back().rate;
    j["last_relative_error"] = std::abs(rows.back().minus_log_p_over_n - rows.back().rate) / rows.back().rate;
    j["monotone"] = monotone;
    ctx.write_json("ldp_eq.json", j);
  }
};

struct ReplacementCmd : Command {
  double m = 2.0;
  double theta = 1.0;
  std::string sizes = "64,128,256";
  double eps = 0.05;
  std::string psi = "one";
  SimArgs sim;

  ReplacementCmd() {
    sim.t_end = 0.01;
    sim.ensemble = 4;
  }

  void add(Options& o) {
    o.add("m", m, "BEP layer parameter");
    o.add("theta", theta, "temperature of the invariant start");
    o.add("n", sizes, "comma-separated lattice sizes");
    o.add("eps", eps, "block radius as a fraction of N");
    o.add("psi", psi, "test function: one, cos or sin");
    o.add("t-end", sim.t_end, "final time");
    o.add("ensemble", sim.ensemble, "paths per N");
    o.add("snapshots", sim.snapshots, "sample times including both endpoints");
    o.add("c-safe", sim.c_safe, "time-step safety constant");
    o.add("max-depth", sim.max_depth, "maximal Brownian-bridge refinement depth");
  }

  void run(const Context& ctx) override {
    const auto ns = parse_sizes(sizes);
    const auto& fns = standard_test_functions();
    const auto it = std::find_if(fns.begin(), fns.end(), [&](const auto& f) { return f.name == psi; });
    if (it == fns.end()) throw ValidationError("unknown test function '" + psi + "'");
    require_positive(theta, "theta");
    const SimulationOptions opt = sim.options();
    const Process process = Process::of(ModelSpec::bep(m));
    const InitialCondition initial = InitialCondition::invariant(GammaLaw(theta, m));
    json rows = json::array();
    std::vector<double> means;
    auto os = open_csv(ctx, "replacement.csv", ctx.header(process.describe()));
    os << "N,mean_gap,standard_error\n";
    for (std::size_t n : ns) {
      const auto gaps = run_ensemble<double>(sim.ensemble, ctx.jobs, [&](std::size_t i) {
        RandomStream rng(ctx.seed, i);
        return replacement_gap(simulate_trajectory(process, n, initial, opt, rng), it->f, eps);
      });
      double sum = 0.0, sum2 = 0.0;
      for (double g : gaps) {
        sum += g;
        sum2 += g * g;
      }
      const double count = static_cast<double>(gaps.size());
      const double mean = sum / count;
      const double se =
          count > 1 ? std::sqrt(std::max(sum2 / count - mean * mean, 0.0) / (count - 1.0)) : 0.0;
      if (!std::isfinite(mean)) throw NumericFailure("non-finite replacement gap");
      means.push_back(mean);
      os << n << ',' << format_double(mean) << ',' << format_double(se) << '\n';
      rows.push_back(json{{"N", n}, {"mean_gap", mean}, {"standard_error", se}});
    }
    os.close();
    ctx.note_file("replacement.csv");
    bool decreasing = true;
    for (std::size_t i = 1; i < means.size(); ++i) decreasing = decreasing && means[i] < means[i - 1];
    json j = ctx.document();
    j["model"] = process.describe();
    j["rows"] = rows;
    j["decreasing"] = decreasing;
    ctx.write_json("replacement.json", j);
  }
};

struct BbCmd : Command {
  double w0 = 0.5;
  std::string amplifications = "1,2,4,8";
  SpikeFamily family;
  std::size_t nx = 1024;
  std::size_t nt = 1025;

  void add(Options& o) {
    o.add("w0", w0, "constant flux of the analytic case");
    o.add("amplifications", amplifications, "comma-separated spike amplifications M >= 1");
    o.add("background", family.background, "spike family background density");
    o.add("mass", family.mass, "spike mass");
    o.add("width", family.width, "spike width");
    o.add("nx", nx, "grid points");
    o.add("nt", nt, "time levels");
  }

  void run(const Context& ctx) override {
    require_sites(nx);
    if (nt < 3) throw ValidationError("nt must be >= 3");
    const SpaceTimeGrid grid{nx, nt, 1.0, 0.0};
    const Mobility alpha = [](double r) { return r * r; };
    const DensityField flat = DensityField::from_function(grid, [](double, double) { return 1.0; });
    const FieldMatrix w = FieldMatrix::Constant(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(nx), w0);
    const RateValue analytic = bb_action(flat, w, alpha);

    json rows = json::array();
    bool non_increasing = true;
    double previous = std::numeric_limits<double>::infinity();
    auto os = open_csv(ctx, "bb.csv", ctx.header());
    os << "M,action\n";
    for (double amp : parse_list<double>(amplifications, "amplification list")) {
      const DensityField path = family.path(amp, grid);
      const RateValue a = bb_action(path, minimal_flux(path, alpha), alpha);
      if (a.infinite) throw NumericFailure("spike action is infinite: " + a.reason);
      non_increasing = non_increasing && a.value <= previous;
      previous = a.value;
      os << format_double(amp) << ',' << format_double(a.value) << '\n';
      rows.push_back(json{{"M", amp}, {"action", a.value}});
    }
    os.close();
    ctx.note_file("bb.csv");
    json j = ctx.document();
    j["analytic"] = json{{"w0", w0}, {"action", analytic.value}, {"expected", w0 * w0}};
    j["spike"] = rows;
    j["non_increasing"] = non_increasing;
    ctx.write_json("bb.json", j);
  }
};

struct ReportDataCmd : Command {
  std::size_t ensemble = 20;
  std::string sizes = "16,32,64";
  std::size_t girsanov_paths = 1000;

  void add(Options& o) {
    o.add("ensemble", ensemble, "paths per N for the convergence data");
    o.add("n", sizes, "lattice sizes for the convergence data");
    o.add("girsanov-paths", girsanov_paths, "paths for the weight histogram");
  }

  void run(const Context& ctx) override {
    CompareCmd compare;
    compare.sizes = sizes;
    compare.sim.ensemble = ensemble;
    compare.run(ctx);
    LdpEqCmd().run(ctx);
    GirsanovCmd girsanov;
    girsanov.sim.ensemble = girsanov_paths;
    girsanov.run(ctx);
    HydroCmd().run(ctx);
    json j = ctx.document();
    j["figures"] = json{{"profile-overlay", {"compare_profiles.csv", "reference.csv"}},
                        {"convergence", {"compare.csv"}},
                        {"tail-rate", {"ldp_eq.csv"}},
                        {"histogram", {"girsanov.csv"}},
                        {"kymograph", {"hydro.csv"}}};
    ctx.write_json("report_data.json", j);
  }
};

// ---------------------------------------------------------------------------------------
// Config files: one "key=value" per line, '#' comments, keys named as the long flags.

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key=value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::string resolved_text(const Context& ctx, bool for_digest) {
  std::string out;
  for (const auto& [k, v] : ctx.config) {
    if (for_digest && (k == "jobs" || k == "out-dir")) continue;
    out += k + "=" + v + "\n";
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic heat-conduction lab", "heatlab"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  Context ctx;
  std::string config_path;
  Options globals(&app);
  globals.add("seed", ctx.seed, "master seed; ensemble member i uses stream i");
  globals.add("jobs", ctx.jobs, "worker threads");
  globals.add("out-dir", ctx.out_dir, "output directory");
  app.add_option("--config", config_path, "key=value config file; flags override it");

  SimulateCmd simulate;
  CompareCmd compare;
  HydroCmd hydro;
  TiltCmd tilt;
  RateCmd rate;
  GirsanovCmd girsanov;
  LdpEqCmd ldp_eq;
  ReplacementCmd replacement;
  BbCmd bb;
  ReportDataCmd report_data;

  struct Entry {
    std::string name;
    Command* command;
    std::unique_ptr<Options> options;
  };
  std::vector<Entry> entries;
  const auto add = [&](const std::string& name, const std::string& description, auto& cmd) {
    auto opts = std::make_unique<Options>(app.add_subcommand(name, description));
    cmd.add(*opts);
    entries.push_back({name, &cmd, std::move(opts)});
  };
  add("simulate", "simulate an ensemble and summarize the standard observables", simulate);
  add("compare", "weak error of ensemble means against the hydrodynamic equation", compare);
  add("hydro", "solve the hydrodynamic equation", hydro);
  add("tilt", "recover the tilt that steers WABEP along a target", tilt);
  add("rate", "dynamic rate functional of a density trajectory", rate);
  add("girsanov", "tilted versus untilted likelihood ratios", girsanov);
  add("ldp-eq", "exact equilibrium tail probabilities", ldp_eq);
  add("replacement", "replacement gap along equilibrium paths", replacement);
  add("bb", "Benamou-Brenier action of the analytic case and the spike family", bb);
  add("report-data", "produce the data files read by the figure scripts", report_data);

  try {
    // Locate the subcommand and any config file.
    std::size_t sub_index = args.size();
    for (std::size_t i = 0; i < args.size(); ++i) {
      const bool is_sub = std::any_of(entries.begin(), entries.end(), [&](const Entry& e) { return e.name == args[i]; });
      if (is_sub) {
        sub_index = i;
        break;
      }
    }
    for (std::size_t i = 0; i < sub_index; ++i) {
      if (args[i] == "--config" && i + 1 < sub_index) config_path = args[i + 1];
      if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
    }
    std::vector<std::string> file_globals, file_locals;
    std::string file_command;
    std::vector<std::pair<std::string, std::string>> file_entries;
    if (!config_path.empty()) file_entries = read_config(config_path);
    for (const auto& [k, v] : file_entries) {
      if (k == "command") file_command = v;
    }
    std::string command = sub_index < args.size() ? args[sub_index] : file_command;
    const auto entry = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.name == command; });
    if (!command.empty() && entry == entries.end()) throw ValidationError("unknown command '" + command + "'");
    for (const auto& [k, v] : file_entries) {
      if (k == "command") continue;
      const bool known = globals.has(k) || (entry != entries.end() && entry->options->has(k));
      if (known && v.empty()) continue;  // empty values stand for the (empty) default
      if (globals.has(k))
        file_globals.push_back("--" + k + "=" + v);
      else if (entry != entries.end() && entry->options->has(k))
        file_locals.push_back("--" + k + "=" + v);
      else
        throw ValidationError("config key '" + k + "' is not an option of '" + command + "'");
    }

    std::vector<std::string> argv = file_globals;
    argv.insert(argv.end(), args.begin(), args.begin() + static_cast<std::ptrdiff_t>(std::min(sub_index, args.size())));
    if (!command.empty()) argv.push_back(command);
    argv.insert(argv.end(), file_locals.begin(), file_locals.end());
    if (sub_index < args.size())
      argv.insert(argv.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_index) + 1, args.end());
    std::reverse(argv.begin(), argv.end());
    try {
      app.parse(argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }
    if (entry == entries.end()) {
      err << app.help();
      return kExitUsage;
    }
    if (ctx.jobs == 0) throw ValidationError("jobs must be >= 1");

    ctx.command = command;
    ctx.out = &out;
    ctx.config.emplace_back("command", command);
    for (auto& kv : globals.resolved()) ctx.config.push_back(kv);
    for (auto& kv : entry->options->resolved()) ctx.config.push_back(kv);
    ctx.digest = config_digest(resolved_text(ctx, true));
    fs::create_directories(ctx.out_dir);
    write_text(ctx.path(command + ".config"), resolved_text(ctx, false));
    entry->command->run(ctx);
    out << "config digest " << ctx.digest << "\n";
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "heatlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericFailure& e) {
    err << "heatlab: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "heatlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "heatlab: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace heatlab::cli
