#include "calabi/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "calabi/errors.hpp"
#include "calabi/geometry.hpp"
#include "calabi/rescale.hpp"

namespace calabi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CheckEntry entry(std::string check, std::string anchor, const Slice& s) {
  CheckEntry e;
  e.check = std::move(check);
  e.anchor = std::move(anchor);
  e.hard = true;
  e.t = s.t;
  e.margin = kInf;
  return e;
}

void consider(CheckEntry& e, double margin, double rho) {
  if (margin < e.margin || std::isnan(margin)) {
    e.margin = margin;
    e.rho = rho;
  }
}

void settle(CheckEntry& e, double tolerance) { e.pass = e.margin >= -tolerance && !std::isnan(e.margin); }

bool pinching_defined(const Slice& s) {
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    if (!(s.above_a[i] > 0) || !(s.below_b[i] > 0) || !(s.u2[i] > 0)) return false;
  }
  return true;
}

}  // namespace

bool VerificationReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return e.pass; });
}

bool VerificationReport::hard_failure() const {
  return std::any_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return !e.pass && e.hard; });
}

std::vector<std::string> VerificationReport::failing_checks() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.pass && std::find(out.begin(), out.end(), e.check) == out.end()) out.push_back(e.check);
  }
  return out;
}

Slice make_slice(const FlowState& state) {
  const CalabiProfile& p = state.profile;
  Slice s;
  s.n = p.n();
  s.t = state.t;
  s.tau = state.tau();
  s.cls = p.kahler_class();
  s.rho = p.rho_grid();
  s.u1 = p.derivative(1);
  s.u2 = p.derivative(2);
  s.u3 = p.derivative(3);
  s.u4 = p.derivative(4);
  s.above_a = p.above_a();
  s.below_b = p.below_b();
  s.band = resolved_band(p);
  return s;
}

std::vector<double> pinching_quantity(const Slice& s) {
  std::vector<double> H(s.rho.size());
  for (std::size_t i = 0; i < H.size(); ++i) {
    H[i] = std::log(s.u2[i]) - std::log(s.above_a[i]) - std::log(s.below_b[i]);
  }
  return H;
}

Calibration calibrate(const Slice& s, double safety) {
  Calibration c;
  c.safety = safety;
  c.width0 = s.cls.width();
  double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    m1 = std::max(m1, s.u1[i]);
    m2 = std::max(m2, s.u2[i] / s.u1[i]);
    m3 = std::max(m3, std::abs(s.u3[i] / s.u2[i]));
    if (s.band[i]) {
      m4 = std::max(m4, (std::abs(s.u4[i]) - s.u3[i] * s.u3[i] / s.u2[i]) * s.tau / (s.u2[i] * s.u2[i]));
    }
  }
  c.C1 = safety * m1;
  c.C2 = safety * m2;
  c.C3 = safety * m3;
  c.C4 = safety * m4;
  const auto H = pinching_quantity(s);
  c.H_inf0 = *std::min_element(H.begin(), H.end());
  c.H_sup0 = *std::max_element(H.begin(), H.end());
  return c;
}

Calibration calibrate(const FlowState& initial, double safety) { return calibrate(make_slice(initial), safety); }

std::vector<CheckEntry> check_elementary_bounds(const Slice& s, const Calibration& c) {
  auto lower = entry("elementary.lower", "elementary-bound", s);
  auto upper = entry("elementary.upper", "elementary-bound", s);
  auto ratio2 = entry("elementary.ratio2", "elementary-bound", s);
  auto ratio3 = entry("elementary.ratio3", "elementary-bound", s);
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    const double r = s.rho[i];
    consider(lower, s.above_a[i] / s.cls.a, r);
    consider(upper, (c.C1 - s.u1[i]) / c.C1, r);
    const double q2 = s.u2[i] / s.u1[i];
    consider(ratio2, std::min(q2, c.C2 - q2) / c.C2, r);
    consider(ratio3, (c.C3 - std::abs(s.u3[i] / s.u2[i])) / c.C3, r);
  }
  std::vector<CheckEntry> out{lower, upper, ratio2, ratio3};
  for (auto& e : out) settle(e, kRelTolerance);
  return out;
}

std::vector<CheckEntry> check_pinching(const Slice& s, const Calibration& c) {
  auto floor = entry("pinching.floor", "pinching-bound", s);
  auto ceiling = entry("pinching.ceiling", "pinching-bound", s);
  auto edge = entry("pinching.edge", "pinching-edge-limit", s);
  if (!pinching_defined(s)) {
    for (CheckEntry* e : {&floor, &ceiling, &edge}) {
      e->margin = -kInf;
      e->pass = false;
      e->detail = "pinching undefined: u' leaves (a_t, b_t) or u'' <= 0";
    }
    return {floor, ceiling, edge};
  }
  const double width = s.cls.width();
  const double lo = std::min(c.H_inf0, -std::log(2.0 * s.n * c.width0));
  const double hi = std::max(c.H_sup0, -std::log(width)) + std::log(c.safety);
  floor.detail = "floor " + std::to_string(lo);
  ceiling.detail = "ceiling " + std::to_string(hi);
  const auto H = pinching_quantity(s);
  for (std::size_t i = 0; i < H.size(); ++i) {
    consider(floor, H[i] - lo, s.rho[i]);
    consider(ceiling, hi - H[i], s.rho[i]);
  }
  settle(floor, kLogTolerance);
  settle(ceiling, kLogTolerance);
  const std::size_t m = std::min(kEdgeNodes, H.size() / 2);
  double left = 0.0, right = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    left += std::exp(H[i]);
    right += std::exp(H[H.size() - 1 - i]);
  }
  consider(edge, -std::abs(left / m * width - 1.0), s.rho.front());
  consider(edge, -std::abs(right / m * width - 1.0), s.rho.back());
  edge.detail = "mean of e^H over the outermost " + std::to_string(m) + " nodes";
  settle(edge, kRelTolerance);
  return {floor, ceiling, edge};
}

CheckEntry check_u4_claim(const Slice& s, const Calibration& c) {
  auto e = entry("u4_claim", "fourth-derivative-claim", s);
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    if (!s.band[i]) continue;
    const double rhs = c.C4 * s.u2[i] * s.u2[i] / s.tau + s.u3[i] * s.u3[i] / s.u2[i];
    consider(e, (rhs - std::abs(s.u4[i])) / rhs, s.rho[i]);
  }
  settle(e, kRelTolerance);
  return e;
}

std::vector<CheckEntry> check_elementary_bounds(const FlowState& s, const Calibration& c) {
  return check_elementary_bounds(make_slice(s), c);
}
std::vector<CheckEntry> check_pinching(const FlowState& s, const Calibration& c) {
  return check_pinching(make_slice(s), c);
}
CheckEntry check_u4_claim(const FlowState& s, const Calibration& c) { return check_u4_claim(make_slice(s), c); }

EvolutionRhs evolution_rhs(const CalabiProfile& p) {
  const double m = p.n() - 1.0;
  const double n = p.n();
  const auto u1 = p.derivative(1), u2 = p.derivative(2), u3 = p.derivative(3), u4 = p.derivative(4),
             u5 = p.derivative(5);
  EvolutionRhs r;
  const std::size_t N = p.size();
  r.d1.resize(N);
  r.d2.resize(N);
  r.d3.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double a = u3[i] / u2[i], b = u2[i] / u1[i];
    r.d1[i] = a + m * b - n;
    r.d2[i] = u4[i] / u2[i] - a * a + m * (u3[i] / u1[i] - b * b);
    r.d3[i] = u5[i] / u2[i] - 3 * a * u4[i] / u2[i] + 2 * a * a * a +
              m * (u4[i] / u1[i] - 3 * b * u3[i] / u1[i] + 2 * b * b * b);
  }
  return r;
}

std::vector<EvolutionResidual> evolution_residuals(const FlowTrajectory& traj, double max_ratio) {
  std::vector<EvolutionResidual> out;
  const auto& cps = traj.checkpoints;
  for (std::size_t j = 1; j + 1 < cps.size(); ++j) {
    const double d0 = cps[j].t - cps[j - 1].t;
    const double d1 = cps[j + 1].t - cps[j].t;
    if (!(d0 > 0) || std::abs(d1 - d0) > 1e-9 * d0) continue;
    if (d0 > max_ratio * cps[j].tau()) continue;
    const CalabiProfile& pm = cps[j - 1].profile;
    const CalabiProfile& p0 = cps[j].profile;
    const CalabiProfile& pp = cps[j + 1].profile;
    const auto rhs = evolution_rhs(p0);
    const auto band = resolved_band(p0);
    EvolutionResidual r;
    r.t_mid = cps[j].t;
    r.delta = 0.5 * (d0 + d1);
    const double inv = 1.0 / (cps[j + 1].t - cps[j - 1].t);
    const std::vector<const std::vector<double>*> rs{&rhs.d1, &rhs.d2, &rhs.d3};
    double* res[] = {&r.r1, &r.r2, &r.r3};
    double* scl[] = {&r.scale1, &r.scale2, &r.scale3};
    for (int k = 0; k < 3; ++k) {
      const auto up = pp.derivative(k + 1);
      const auto um = pm.derivative(k + 1);
      for (std::size_t i = 0; i < p0.size(); ++i) {
        if (!band[i]) continue;
        const double dt = (up[i] - um[i]) * inv;
        *res[k] = std::max(*res[k], std::abs(dt - (*rs[k])[i]));
        *scl[k] = std::max(*scl[k], std::abs((*rs[k])[i]));
      }
    }
    out.push_back(r);
  }
  if (out.empty()) throw Error(ErrorKind::Spacing, "no equally spaced checkpoint triple close enough for centered differences");
  return out;
}

std::vector<CheckEntry> check_evolution_consistency(const FlowTrajectory& traj, double relative_tolerance) {
  const auto res = evolution_residuals(traj);
  const char* names[] = {"evolution.u1", "evolution.u2", "evolution.u3"};
  std::vector<CheckEntry> out;
  for (int k = 0; k < 3; ++k) {
    CheckEntry e;
    e.check = names[k];
    e.anchor = "evolution-equations";
    e.hard = true;
    e.margin = kInf;
    double worst = 0.0;
    for (const auto& r : res) {
      const double rr = k == 0 ? r.r1 : k == 1 ? r.r2 : r.r3;
      const double sc = k == 0 ? r.scale1 : k == 1 ? r.scale2 : r.scale3;
      const double m = relative_tolerance - rr / sc;
      if (m < e.margin) {
        e.margin = m;
        e.t = r.t_mid;
        worst = rr;
      }
    }
    e.pass = e.margin >= 0.0;
    e.detail = "max residual " + std::to_string(worst);
    out.push_back(e);
  }
  return out;
}

OrderStudy evolution_order_study(const FlowConfig& base, std::size_t N0, double dt0, int levels, double t_mid) {
  OrderStudy study;
  std::size_t N = N0;
  double dt = dt0;
  for (int l = 0; l < levels; ++l) {
    FlowConfig c = base;
    c.N = N;
    c.fixed_dt = dt;
    c.geometric_k_max = 0;
    const double delta = 2.0 * dt;
    c.checkpoints = {t_mid - delta, t_mid, t_mid + delta};
    const double T = singular_time(c.a0, c.n);
    c.eps_stop = 1.0 - (t_mid + delta) / T;
    const auto traj = run(c);
    if (traj.aborted) throw Error(ErrorKind::StepFailure, "order study run aborted: " + traj.diagnosis);
    FlowTrajectory tri;
    tri.config = c;
    for (const auto& s : traj.checkpoints) {
      if (s.t > t_mid - 1.5 * delta) tri.checkpoints.push_back(s);
    }
    const auto res = evolution_residuals(tri, kInf);
    study.levels.push_back({N, dt, res.front()});
    N = 2 * N - 1;
    dt *= 0.5;
  }
  for (std::size_t l = 1; l < study.levels.size(); ++l) {
    const auto& a = study.levels[l - 1].residual;
    const auto& b = study.levels[l].residual;
    study.order1.push_back(std::log2(a.r1 / b.r1));
    study.order2.push_back(std::log2(a.r2 / b.r2));
    study.order3.push_back(std::log2(a.r3 / b.r3));
  }
  return study;
}

double typeI_proxy(const FlowState& s) {
  const auto d = compute_diagnostics(s.profile, s.tau());
  return s.tau() * d.sup_curvature();
}

std::vector<CheckEntry> check_typeI(const FlowTrajectory& traj, std::vector<double>* history, std::size_t fit_points,
                                    double exponent_tolerance) {
  CheckEntry proxy;
  proxy.check = "typeI.proxy";
  proxy.anchor = "type-I-definition";
  proxy.hard = true;
  CheckEntry rate;
  rate.check = "typeI.raw_rate";
  rate.anchor = "type-I-definition";
  rate.hard = false;
  if (traj.checkpoints.empty()) {
    proxy.detail = rate.detail = "empty trajectory";
    return {proxy, rate};
  }
  std::vector<double> hist, taus, sups;
  for (const auto& s : traj.checkpoints) {
    const auto d = compute_diagnostics(s.profile, s.tau());
    hist.push_back(s.tau() * d.sup_curvature());
    taus.push_back(s.tau());
    sups.push_back(d.sup_abs_R);
  }
  const double C = kTypeISafetyFactor * hist.front();
  proxy.margin = kInf;
  for (std::size_t j = 0; j < hist.size(); ++j) {
    const double m = (C - hist[j]) / C;
    if (m < proxy.margin) {
      proxy.margin = m;
      proxy.t = traj.checkpoints[j].t;
    }
  }
  proxy.pass = proxy.margin >= -kRelTolerance;
  proxy.detail = "C_typeI " + std::to_string(C) + "; scalar and Ricci proxy for |Rm|";

  if (taus.size() >= fit_points + 1 && fit_points >= 2) {
    const std::vector<double> x(taus.end() - static_cast<std::ptrdiff_t>(fit_points), taus.end());
    const std::vector<double> y(sups.end() - static_cast<std::ptrdiff_t>(fit_points), sups.end());
    const double slope = log_log_slope(x, y);
    rate.margin = exponent_tolerance - std::abs(slope + 1.0);
    rate.pass = rate.margin >= 0.0;
    rate.t = traj.checkpoints.back().t;
    rate.detail = "fitted exponent " + std::to_string(slope);
  } else {
    rate.margin = 0.0;
    rate.pass = true;
    rate.detail = "too few checkpoints for a fit";
  }
  if (history) *history = hist;
  return {proxy, rate};
}

VerificationReport verify_trajectory(const FlowTrajectory& traj) {
  VerificationReport rep;
  rep.note = "Type-I check uses scalar curvature and Ricci eigenvalues as a proxy for |Rm|";
  if (traj.checkpoints.empty()) throw Error(ErrorKind::Parameter, "trajectory has no checkpoints");
  const Calibration cal = calibrate(traj.checkpoints.front());
  for (const auto& st : traj.checkpoints) {
    const Slice s = make_slice(st);
    for (auto& e : check_elementary_bounds(s, cal)) rep.entries.push_back(e);
    for (auto& e : check_pinching(s, cal)) rep.entries.push_back(e);
    rep.entries.push_back(check_u4_claim(s, cal));
  }
  for (auto& e : check_typeI(traj, &rep.typeI_history)) rep.entries.push_back(e);
  try {
    for (auto& e : check_evolution_consistency(traj)) rep.entries.push_back(e);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Spacing) throw;
  }
  return rep;
}

Slice inject(Slice s, Fault f) {
  switch (f) {
    case Fault::U1BelowClass:
      for (std::size_t i = 0; i < s.u1.size(); ++i) {
        s.u1[i] *= 0.9;
        s.above_a[i] = s.u1[i] - s.cls.a;
        s.below_b[i] = s.cls.b - s.u1[i];
      }
      break;
    case Fault::U2Collapsed:
      for (double& v : s.u2) v *= 1e-3;
      break;
    case Fault::U4Doubled:
      for (double& v : s.u4) v *= 2.5;
      break;
    default:
      throw Error(ErrorKind::Parameter, "fault does not apply to a single slice");
  }
  return s;
}

FlowTrajectory inject(FlowTrajectory traj, Fault f) {
  if (traj.checkpoints.size() < 2) throw Error(ErrorKind::Parameter, "fault injection needs two checkpoints");
  switch (f) {
    case Fault::CurvatureBurst: {
      FlowState& s = traj.checkpoints.back();
      const CalabiProfile& p = s.profile;
      const double lam = 1e-2;
      std::vector<double> psi(p.psi().begin(), p.psi().end());
      for (double& v : psi) v *= lam;
      const auto& e = p.edge_terms();
      s.profile = p.with({lam * p.kahler_class().a, lam * p.kahler_class().b}, psi,
                         {lam * e.sigma, lam * e.left, lam * e.right});
      break;
    }
    case Fault::CheckpointPerturbed: {
      FlowState& s = traj.checkpoints.back();
      const CalabiProfile& p = s.profile;
      std::vector<double> psi(p.psi().begin(), p.psi().end());
      const double w = 1e-3 * p.kahler_class().width();
      for (std::size_t i = 0; i < psi.size(); ++i) psi[i] += w / (1.0 + std::exp(-p.rho(i)));
      s.profile = p.with(p.kahler_class(), psi, p.edge_terms());
      break;
    }
    default:
      throw Error(ErrorKind::Parameter, "fault applies to a single slice");
  }
  return traj;
}

std::string to_json(const VerificationReport& r) {
  nlohmann::ordered_json j;
  j["anchor_table"] = kAnchorTableVersion;
  j["note"] = r.note;
  j["pass"] = r.all_pass();
  j["hard_failure"] = r.hard_failure();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) {
    nlohmann::ordered_json x;
    x["check"] = e.check;
    x["anchor"] = e.anchor;
    x["pass"] = e.pass;
    x["hard"] = e.hard;
    x["margin"] = std::isfinite(e.margin) ? nlohmann::ordered_json(e.margin) : nlohmann::ordered_json(nullptr);
    x["rho"] = e.rho;
    x["t"] = e.t;
    if (!e.detail.empty()) x["detail"] = e.detail;
    arr.push_back(x);
  }
  j["entries"] = arr;
  j["typeI_history"] = r.typeI_history;
  return j.dump(2);
}

}  // namespace calabi
