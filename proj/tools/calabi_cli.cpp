#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "calabi/errors.hpp"
#include "calabi/geometry.hpp"
#include "calabi/io.hpp"
#include "calabi/rescale.hpp"
#include "calabi/soliton.hpp"
#include "calabi/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace calabi;

namespace {

enum Exit { kOk = 0, kFail = 1, kRefused = 2, kNoRoot = 3, kMalformed = 4 };

struct Overrides {
  std::string config_file;
  std::optional<int> n;
  std::optional<double> a0, b0, L, eps_stop, cfl;
  std::optional<std::size_t> N;
  std::optional<int> k_max;
  std::optional<std::string> checkpoints;
  std::optional<std::string> out;
  bool no_extrapolate = false;
};

void add_flow_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "key = value config file");
  app->add_option("--n", o.n, "complex dimension");
  app->add_option("--a0", o.a0, "initial class a0");
  app->add_option("--b0", o.b0, "initial class b0");
  app->add_option("--L", o.L, "half width of the rho domain");
  app->add_option("--N", o.N, "grid points (odd)");
  app->add_option("--eps-stop", o.eps_stop, "stop at (1 - eps) T");
  app->add_option("--cfl", o.cfl, "step cap as a fraction of T - t");
  app->add_option("--k-max", o.k_max, "geometric checkpoints T(1 - 2^-k), k <= k_max");
  app->add_option("--checkpoints", o.checkpoints, "extra checkpoint times, comma separated");
  app->add_option("--out", o.out, "output directory");
  app->add_flag("--no-extrapolate", o.no_extrapolate, "plain backward Euler steps");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = default_run_config();
  if (!o.config_file.empty()) c = load_config(o.config_file, c);
  if (const char* env = std::getenv("CALABI_OUT"); env && *env) c.out_dir = env;
  if (o.out) c.out_dir = *o.out;
  FlowConfig& f = c.flow;
  if (o.n) f.n = *o.n;
  if (o.a0) f.a0 = *o.a0;
  if (o.b0) f.b0 = *o.b0;
  if (o.L) f.L = *o.L;
  if (o.N) f.N = *o.N;
  if (o.eps_stop) f.eps_stop = *o.eps_stop;
  if (o.cfl) f.cfl = *o.cfl;
  if (o.k_max) f.geometric_k_max = *o.k_max;
  if (o.checkpoints) apply_config_value(c, "checkpoints", *o.checkpoints);
  if (o.no_extrapolate) f.extrapolate = false;
  return c;
}

json config_json(const RunConfig& c) {
  json j;
  for (const auto& [k, v] : config_map(c)) j[k] = v;
  return j;
}

json stamp(const RunConfig& c) {
  json j;
  j["config_hash"] = config_hash(c);
  j["anchor_table"] = kAnchorTableVersion;
  j["config"] = config_json(c);
  return j;
}

Metadata stamp_meta(const RunConfig& c) {
  return {{"config_hash", config_hash(c)}, {"anchor_table", kAnchorTableVersion}};
}

std::string csv_text(const CalabiProfile& p, Metadata meta) {
  std::ostringstream os;
  write_profile_csv(os, p, meta);
  return os.str();
}

std::string checkpoint_name(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cp_%03zu", j);
  return buf;
}

void check_flow_preconditions(const FlowConfig& f) {
  if (f.n < 2) throw Error(ErrorKind::Parameter, "dimension n must be >= 2");
  if (!KahlerClass{f.a0, f.b0}.valid()) throw Error(ErrorKind::ClassViolation, "initial class needs 0 < a0 < b0");
  if (!KahlerClass{f.a0, f.b0}.non_collapsed(f.n) && !f.allow_collapse) {
    throw Error(ErrorKind::Refused, "collapse regime: non-collapse condition a0(n+1) < b0(n-1) fails for n=" +
                                        std::to_string(f.n) + ", a0=" + format_number(f.a0) +
                                        ", b0=" + format_number(f.b0));
  }
}

int dry_run(const RunConfig& c) {
  check_flow_preconditions(c.flow);
  const double T = singular_time(c.flow.a0, c.flow.n);
  std::printf("T = %s\n", format_number(T).c_str());
  std::printf("t_stop = %s\n", format_number(stop_time(c.flow)).c_str());
  std::printf("t,a_t,b_t\n");
  for (double t : checkpoint_schedule(c.flow)) {
    const auto cls = predicted_class({c.flow.a0, c.flow.b0}, c.flow.n, t);
    std::printf("%s,%s,%s\n", format_number(t).c_str(), format_number(cls.a).c_str(), format_number(cls.b).c_str());
  }
  return kOk;
}

json write_trajectory(const RunConfig& c, const FlowTrajectory& traj, const fs::path& dir) {
  fs::create_directories(dir);
  json cps = json::array();
  for (std::size_t j = 0; j < traj.checkpoints.size(); ++j) {
    const FlowState& s = traj.checkpoints[j];
    Metadata meta = stamp_meta(c);
    meta["t"] = format_number(s.t);
    meta["T"] = format_number(s.T);
    const std::string name = checkpoint_name(j);
    write_text(dir / (name + "_profile.csv"), csv_text(s.profile, meta));
    std::ostringstream os;
    const auto diag = compute_diagnostics(s.profile, s.tau());
    write_diagnostics_csv(os, diag, meta);
    write_text(dir / (name + "_diagnostics.csv"), os.str());
    json e;
    e["index"] = j;
    e["t"] = s.t;
    e["tau"] = s.tau();
    e["k"] = geometric_index(s);
    e["a_t"] = s.profile.kahler_class().a;
    e["b_t"] = s.profile.kahler_class().b;
    e["profile"] = name + "_profile.csv";
    e["diagnostics"] = name + "_diagnostics.csv";
    e["sup_abs_R"] = diag.sup_abs_R;
    e["typeI_proxy"] = s.tau() * diag.sup_curvature();
    cps.push_back(e);
  }
  json m = stamp(c);
  m["T"] = singular_time(c.flow.a0, c.flow.n);
  m["t_stop"] = stop_time(c.flow);
  m["checkpoints"] = cps;
  m["dropped_checkpoints"] = traj.stats.dropped_checkpoints;
  m["steps"] = {{"accepted", traj.stats.accepted},
                {"rejected", traj.stats.rejected},
                {"newton_iterations", traj.stats.newton_iterations},
                {"dt_min", traj.stats.dt_min},
                {"dt_max", traj.stats.dt_max}};
  m["aborted"] = traj.aborted;
  m["diagnosis"] = traj.diagnosis;
  return m;
}

int flow_run(const RunConfig& c) {
  check_flow_preconditions(c.flow);
  const FlowTrajectory traj = run(c.flow);
  const fs::path dir = fs::path(c.out_dir) / "flow";
  json m = write_trajectory(c, traj, dir);
  const auto rep = verify_trajectory(traj);
  write_text(dir / "verify.json", to_json(rep) + "\n");
  m["verified"] = !rep.hard_failure();
  m["failing_checks"] = rep.failing_checks();
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  std::printf("T = %s, %zu checkpoints, %zu steps -> %s\n", format_number(singular_time(c.flow.a0, c.flow.n)).c_str(),
              traj.checkpoints.size(), traj.stats.accepted, dir.string().c_str());
  if (traj.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", traj.diagnosis.c_str());
    return kFail;
  }
  if (rep.hard_failure()) std::fprintf(stderr, "flagged: verification failures in the trajectory\n");
  return kOk;
}

std::string soliton_csv(const SolitonProfile& s, const Metadata& meta) {
  std::ostringstream os;
  for (const auto& [k, v] : meta) os << '#' << k << '=' << v << '\n';
  os << "rho,phi,F\n" << std::setprecision(17);
  for (std::size_t i = 0; i < s.phi.size(); ++i) os << s.rho[i] << ',' << s.phi[i] << ',' << s.F[i] << '\n';
  return os.str();
}

int cmd_soliton(RunConfig c, int n, std::optional<double> mu, std::optional<double> nu, double phi_cap) {
  if (n < 2) throw Error(ErrorKind::Parameter, "dimension n must be >= 2");
  c.flow.n = n;
  c.mu = mu;
  c.nu = nu;
  SolitonParams p{n, 0.0, 0.0};
  json j = stamp(c);
  if (mu) {
    p.mu = *mu;
    p.nu = nu ? *nu : consistent_nu(n, *mu);
  } else {
    const auto sol = solve_mu(n);
    p.mu = sol.mu;
    p.nu = nu.value_or(0.0);
    j["mu_roots"] = sol.roots;
  }
  j["n"] = n;
  j["mu"] = p.mu;
  j["nu"] = p.nu;
  j["nu_source"] = nu ? "given" : (mu ? "consistent with F(n-1) = 0" : "canonical");
  const auto cls = classify(p);
  json cl;
  cl["kind"] = to_string(cls.kind);
  cl["witness_name"] = cls.witness_name;
  cl["witness"] = cls.witness;
  cl["phi_sup"] = cls.phi_sup;
  if (cls.blow_up_rho) cl["blow_up_rho"] = *cls.blow_up_rho;
  json zs = json::array();
  for (const auto& z : cls.zeros) zs.push_back({{"phi", z.phi}, {"dF", z.dF}, {"tangential", z.tangential}});
  cl["zeros"] = zs;
  cl["note"] = cls.note;
  j["classification"] = cl;

  const fs::path dir = fs::path(c.out_dir) / "soliton";
  const bool canonical = cls.kind == SolitonClass::CompleteShrinker;
  if (canonical) {
    const auto s = canonical_profile(n, 1e-6, phi_cap);
    j["residual_ode"] = soliton_residual(s);
    j["residual_reduction"] = reduction_residual(s);
    j["phi_range"] = {s.phi.front(), s.phi.back()};
    Metadata meta = stamp_meta(c);
    meta["mu"] = format_number(p.mu);
    meta["nu"] = format_number(p.nu);
    write_text(dir / "profile.csv", soliton_csv(s, meta));
  }
  write_text(dir / "soliton.json", j.dump(2) + "\n");
  std::printf("mu = %.12g, nu = %.12g, classification %s\n", p.mu, p.nu, to_string(cls.kind));
  if (canonical) {
    std::printf("residuals: ode %.3e, reduction %.3e\n", j["residual_ode"].get<double>(),
                j["residual_reduction"].get<double>());
  }
  std::printf("%s = %.6g\n", cls.witness_name.c_str(), cls.witness);
  return kOk;
}

SolitonProfile cached_soliton(const RunConfig& c, int n) {
  const fs::path path = fs::path(c.out_dir) / "cache" / ("fik_n" + std::to_string(n) + ".csv");
  const double mu = solve_mu(n).mu;
  if (fs::exists(path)) {
    try {
      std::ifstream is(path);
      SolitonProfile s;
      s.params = {n, mu, 0.0};
      std::string line;
      bool match = false;
      while (std::getline(is, line)) {
        if (line.rfind("#mu=", 0) == 0) match = line.substr(4) == format_number(mu);
        if (line.empty() || line[0] == '#' || line[0] == 'r') continue;
        double r, x, F;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &r, &x, &F) != 3) throw Error(ErrorKind::Io, "bad cache row");
        s.rho.push_back(r);
        s.phi.push_back(x);
        s.F.push_back(F);
      }
      if (match && s.phi.size() > 2) {
        s.reached_phi_max = true;
        return s;
      }
    } catch (const Error&) {
    }
  }
  auto s = canonical_profile(n);
  write_text(path, soliton_csv(s, {{"mu", format_number(mu)}, {"n", std::to_string(n)}}));
  return s;
}

int cmd_converge(RunConfig c) {
  check_flow_preconditions(c.flow);
  if (c.flow.geometric_k_max < 4) throw Error(ErrorKind::Parameter, "converge needs --k-max >= 4");
  c.flow.eps_stop = std::min(c.flow.eps_stop, 0.75 * std::ldexp(1.0, -c.flow.geometric_k_max));
  const auto s = cached_soliton(c, c.flow.n);
  const FlowTrajectory traj = run(c.flow);
  if (traj.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", traj.diagnosis.c_str());
    return kFail;
  }
  const auto rep = convergence_report(traj, s);
  const fs::path dir = fs::path(c.out_dir) / "converge";
  json j = stamp(c);
  j["mu"] = s.params.mu;
  json rows = json::array();
  for (const auto& r : rep.rows) {
    const auto& d = r.discrepancy;
    rows.push_back({{"k", r.k},
                    {"t_j", r.t},
                    {"tau", r.tau},
                    {"D_sup", d.D_sup},
                    {"D_l2", d.D_l2},
                    {"phi_at_sup", d.phi_at_sup},
                    {"window", {d.used.lo, d.used.hi}},
                    {"typeI_proxy", r.typeI_proxy},
                    {"sup_abs_R", r.sup_abs_R}});
    std::ostringstream os;
    for (const auto& [k, v] : stamp_meta(c)) os << '#' << k << '=' << v << '\n';
    os << "#k=" << r.k << "\n#t=" << format_number(r.t) << "\nphi,F_flow,F_fik\n" << std::setprecision(17);
    for (std::size_t i = 0; i < d.phi.size(); ++i) os << d.phi[i] << ',' << d.F_flow[i] << ',' << d.F_fik[i] << '\n';
    write_text(dir / ("overlay_k" + std::to_string(r.k) + ".csv"), os.str());
  }
  j["rows"] = rows;
  j["decay_exponent"] = rep.decay_exponent;
  j["ratio_last_first"] = rep.ratio;
  j["monotone"] = rep.monotone;
  j["monotone_noise"] = rep.noise;
  j["max_typeI_proxy"] = rep.max_typeI_proxy;
  write_text(dir / "convergence.json", j.dump(2) + "\n");
  std::printf("k,tau,D_sup,D_l2,typeI_proxy\n");
  for (const auto& r : rep.rows) {
    std::printf("%d,%.6g,%.6g,%.6g,%.6g\n", r.k, r.tau, r.discrepancy.D_sup, r.discrepancy.D_l2, r.typeI_proxy);
  }
  std::printf("ratio %.4g, monotone %s\n", rep.ratio, rep.monotone ? "yes" : "no");
  return kOk;
}

FlowTrajectory load_trajectory(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw Error(ErrorKind::Io, "no manifest.json in " + dir.string());
  json m;
  try {
    m = json::parse(read_text(mpath));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed manifest: ") + e.what());
  }
  FlowTrajectory traj;
  try {
    for (const auto& e : m.at("checkpoints")) {
      std::ifstream is(dir / e.at("profile").get<std::string>());
      if (!is) throw Error(ErrorKind::Io, "missing checkpoint file");
      auto loaded = read_profile_csv(is);
      const double t = std::stod(loaded.metadata.at("t"));
      const double T = std::stod(loaded.metadata.at("T"));
      traj.checkpoints.push_back({t, T, std::move(loaded.profile)});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed manifest: ") + e.what());
  } catch (const std::out_of_range&) {
    throw Error(ErrorKind::Io, "checkpoint file lacks t or T");
  } catch (const std::invalid_argument&) {
    throw Error(ErrorKind::Io, "checkpoint file has a bad t or T");
  } catch (const Error& e) {
    throw Error(ErrorKind::Io, e.what());
  }
  if (traj.checkpoints.empty()) throw Error(ErrorKind::Io, "manifest lists no checkpoints");
  return traj;
}

int cmd_verify(const fs::path& dir, const std::string& fault) {
  FlowTrajectory traj = load_trajectory(dir);
  if (fault == "curvature-burst") {
    traj = inject(traj, Fault::CurvatureBurst);
  } else if (fault == "checkpoint-perturbed") {
    traj = inject(traj, Fault::CheckpointPerturbed);
  } else if (!fault.empty()) {
    throw Error(ErrorKind::Parameter, "unknown fault '" + fault + "'");
  }
  const auto rep = verify_trajectory(traj);
  std::cout << to_json(rep) << '\n';
  if (rep.hard_failure()) {
    for (const auto& name : rep.failing_checks()) std::fprintf(stderr, "failed: %s\n", name.c_str());
    return kFail;
  }
  return kOk;
}

int cmd_sweep(const RunConfig& base, const std::vector<double>& b0s, const std::vector<std::string>& files, int jobs) {
  std::vector<RunConfig> configs;
  for (const auto& f : files) configs.push_back(load_config(f, base));
  for (double b : b0s) {
    RunConfig c = base;
    c.flow.b0 = b;
    configs.push_back(c);
  }
  if (configs.empty()) throw Error(ErrorKind::Parameter, "sweep needs --b0-list or --configs");
  std::vector<json> results(configs.size());
  std::size_t next = 0;
  std::mutex lock;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> g(lock);
        if (next >= configs.size()) return;
        i = next++;
      }
      RunConfig c = configs[i];
      const std::string hash = config_hash(c);
      json r = stamp(c);
      try {
        check_flow_preconditions(c.flow);
        const auto traj = run(c.flow);
        const auto rep = verify_trajectory(traj);
        r["status"] = traj.aborted ? "aborted" : "ok";
        r["checkpoints"] = traj.checkpoints.size();
        r["verified"] = !rep.hard_failure();
        r["failing_checks"] = rep.failing_checks();
        r["max_typeI_proxy"] = *std::max_element(rep.typeI_history.begin(), rep.typeI_history.end());
      } catch (const Error& e) {
        r["status"] = to_string(e.kind());
        r["message"] = e.what();
      }
      results[i] = r;
    }
  };
  std::vector<std::thread> pool;
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  json j = json::array();
  for (auto& r : results) j.push_back(r);
  write_text(fs::path(base.out_dir) / "sweep" / "summary.json", j.dump(2) + "\n");
  for (const auto& r : results) {
    std::printf("%s %s b0=%s\n", r["config_hash"].get<std::string>().c_str(), r["status"].get<std::string>().c_str(),
                r["config"]["b0"].get<std::string>().c_str());
  }
  return kOk;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Refused:
      return kRefused;
    case ErrorKind::RootNotFound:
      return kNoRoot;
    case ErrorKind::Io:
      return kMalformed;
    default:
      return kFail;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U(n)-invariant Kahler-Ricci flow on the blow-up of CP^n at a point"};
  app.require_subcommand(1);

  Overrides flow_o, dry_o, conv_o, sweep_o, sol_o;
  auto* flow = app.add_subcommand("flow", "run the flow");
  flow->require_subcommand(1);
  auto* flow_run_cmd = flow->add_subcommand("run", "evolve and write checkpoints");
  add_flow_options(flow_run_cmd, flow_o);
  bool dry_flag = false;
  flow_run_cmd->add_flag("--dry-run", dry_flag, "print T and the class schedule only");
  auto* flow_dry = flow->add_subcommand("dry-run", "print T and the class schedule");
  add_flow_options(flow_dry, dry_o);

  int sol_n = 2;
  std::optional<double> sol_mu, sol_nu;
  double phi_cap = 50.0;
  auto* sol = app.add_subcommand("soliton", "solve mu, integrate and classify a soliton profile");
  sol->add_option("--n", sol_n, "complex dimension");
  sol->add_option("--mu", sol_mu, "soliton constant mu (default: solved)");
  sol->add_option("--nu", sol_nu, "constant nu (default: 0, or consistent with --mu)");
  sol->add_option("--phi-cap", phi_cap, "upper end of the phi range");
  sol->add_option("--out", sol_o.out, "output directory");

  auto* conv = app.add_subcommand("converge", "flow, rescale and compare to the soliton");
  add_flow_options(conv, conv_o);

  std::string vdir, fault;
  auto* ver = app.add_subcommand("verify", "run the estimate checks on a trajectory directory");
  ver->add_option("trajectory", vdir, "directory written by flow run")->required();
  ver->add_option("--inject", fault, "curvature-burst or checkpoint-perturbed");

  std::vector<double> b0s;
  std::vector<std::string> files;
  int jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "independent runs over several configs");
  add_flow_options(sweep, sweep_o);
  sweep->add_option("--b0-list", b0s, "values of b0");
  sweep->add_option("--configs", files, "config files");
  sweep->add_option("--jobs", jobs, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*flow_run_cmd) return dry_flag ? dry_run(resolve(flow_o)) : flow_run(resolve(flow_o));
    if (*flow_dry) return dry_run(resolve(dry_o));
    if (*sol) return cmd_soliton(resolve(sol_o), sol_n, sol_mu, sol_nu, phi_cap);
    if (*conv) {
      RunConfig c = resolve(conv_o);
      return cmd_converge(c);
    }
    if (*ver) return cmd_verify(vdir, fault);
    if (*sweep) return cmd_sweep(resolve(sweep_o), b0s, files, jobs);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFail;
  }
  return kOk;
}
