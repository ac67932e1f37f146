#include "calabi/flow.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>

#include "calabi/errors.hpp"

namespace calabi {

double singular_time(double a0, int n) {
  if (!(a0 > 0.0) || n < 2) throw Error(ErrorKind::Parameter, "singular time needs a0 > 0 and n >= 2");
  return a0 / (n - 1);
}

KahlerClass predicted_class(const KahlerClass& class0, int n, double t) {
  const double T = singular_time(class0.a, n);
  if (!(t >= 0.0 && t < T)) throw Error(ErrorKind::TimeRange, "t must lie in [0, T)");
  return {class0.a - (n - 1) * t, class0.b - (n + 1) * t};
}

namespace {

KahlerClass advance_class(const KahlerClass& cls, int n, double dt) {
  return {cls.a - (n - 1) * dt, cls.b - (n + 1) * dt};
}

void check_step(const FlowState& s, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::Parameter, "time step must be positive");
  if (!(s.t + dt < s.T)) throw Error(ErrorKind::TimeRange, "step would reach the singular time");
}

bool strictly_valid(const CalabiProfile& p) {
  for (const auto& v : validate(p)) {
    if (v.invariant.rfind("psi-decay", 0) != 0) return false;
  }
  return true;
}

// Backward Euler for psi on the grid of `old`, reference moved to `cls`.
// The edge terms are frozen; the two boundary rows impose the exponential
// tails psi'' = psi' (left) and psi'' = -psi' (right).
std::vector<double> solve_backward_euler(const CalabiProfile& old, const KahlerClass& cls, double dt,
                                         const StepOptions& opts, int& iterations) {
  const std::size_t N = old.size();
  const int n = old.n();
  const double h = old.spacing();
  const auto& st = old.stencils();
  const auto psi_old = old.psi();

  std::vector<double> ref1(N), ref2(N), shift(N), rho(N);
  for (std::size_t i = 0; i < N; ++i) {
    rho[i] = old.rho(i);
    const auto jn = reference_jet(cls, old.edge_terms(), rho[i]);
    const auto jo = old.reference(i);
    ref1[i] = jn.d[1];
    ref2[i] = jn.d[2];
    shift[i] = jn.value - jo.value;
  }

  std::vector<double> psi(psi_old.begin(), psi_old.end());
  std::vector<double> u1(N), u2(N), noise(N, 0.0);
  Eigen::VectorXd G(N);
  constexpr double eps = std::numeric_limits<double>::epsilon();

  // rounding level of each row: near the ends u'' is ~e^-L while psi is
  // stored with absolute precision, so the attainable residual is larger there
  auto stencil_noise = [&](int order, const std::vector<double>& x, std::size_t i) {
    const auto w = st.window(order, i);
    double wsum = 0.0;
    double xmax = 0.0;
    for (std::size_t k = 0; k < w.weights.size(); ++k) {
      wsum += std::abs(w.weights[k]);
      xmax = std::max(xmax, std::abs(x[w.first + k]));
    }
    return wsum * xmax;
  };

  auto evaluate = [&](const std::vector<double>& x) {
    for (std::size_t i = 0; i < N; ++i) {
      u1[i] = ref1[i] + st.apply(1, x, i);
      u2[i] = ref2[i] + st.apply(2, x, i);
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (!(u1[i] > 0.0) || !(u2[i] > 0.0)) return false;
    }
    G[0] = h * h * (st.apply(2, x, 0) - st.apply(1, x, 0));
    G[N - 1] = h * h * (st.apply(2, x, N - 1) + st.apply(1, x, N - 1));
    for (std::size_t i = 1; i + 1 < N; ++i) {
      const double l2 = std::log(u2[i]);
      const double l1 = std::log(u1[i]);
      G[i] = x[i] - psi_old[i] + shift[i] - dt * (l2 + (n - 1) * l1 - n * rho[i]);
      noise[i] = 16.0 * eps *
                 (std::abs(x[i]) + std::abs(psi_old[i]) + std::abs(shift[i]) +
                  dt * (stencil_noise(2, x, i) / u2[i] + (n - 1) * stencil_noise(1, x, i) / u1[i] + std::abs(l2) +
                        (n - 1) * std::abs(l1) + n * std::abs(rho[i])));
    }
    return true;
  };

  if (!evaluate(psi)) {
    // the old correction does not fit under the new class; start from the
    // old potential instead
    for (std::size_t i = 0; i < N; ++i) psi[i] -= shift[i];
    if (!evaluate(psi)) throw Error(ErrorKind::StepFailure, "no admissible Newton start");
  }

  Eigen::SparseMatrix<double> J(N, N);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  std::vector<Eigen::Triplet<double>> trip;
  bool analysed = false;
  iterations = 0;

  for (int it = 0;; ++it) {
    double res = 0.0;
    bool converged = true;
    for (std::size_t i = 0; i < N; ++i) {
      res = std::max(res, std::abs(G[i]));
      if (std::abs(G[i]) > opts.newton_tolerance + noise[i]) converged = false;
    }
    if (converged) break;
    if (it >= opts.max_newton_iterations || !std::isfinite(res)) {
      throw Error(ErrorKind::StepFailure, "Newton did not converge (residual " + std::to_string(res) + ")");
    }

    trip.clear();
    for (int edge = 0; edge < 2; ++edge) {
      const std::size_t i = edge == 0 ? 0 : N - 1;
      const double sign = edge == 0 ? -1.0 : 1.0;
      const auto w2 = st.window(2, i);
      const auto w1 = st.window(1, i);
      for (std::size_t k = 0; k < w2.weights.size(); ++k) trip.emplace_back(i, w2.first + k, h * h * w2.weights[k]);
      for (std::size_t k = 0; k < w1.weights.size(); ++k)
        trip.emplace_back(i, w1.first + k, sign * h * h * w1.weights[k]);
    }
    for (std::size_t i = 1; i + 1 < N; ++i) {
      trip.emplace_back(i, i, 1.0);
      const auto w2 = st.window(2, i);
      const auto w1 = st.window(1, i);
      for (std::size_t k = 0; k < w2.weights.size(); ++k)
        trip.emplace_back(i, w2.first + k, -dt * w2.weights[k] / u2[i]);
      for (std::size_t k = 0; k < w1.weights.size(); ++k)
        trip.emplace_back(i, w1.first + k, -dt * (n - 1) * w1.weights[k] / u1[i]);
    }
    J.setFromTriplets(trip.begin(), trip.end());
    if (!analysed) {
      lu.analyzePattern(J);
      analysed = true;
    }
    lu.factorize(J);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::StepFailure, "singular Newton matrix");
    const Eigen::VectorXd delta = lu.solve(-G);

    std::vector<double> trial(N);
    double alpha = 1.0;
    bool ok = false;
    for (int k = 0; k < 40; ++k, alpha *= 0.5) {
      for (std::size_t i = 0; i < N; ++i) trial[i] = psi[i] + alpha * delta[i];
      if (evaluate(trial)) {
        ok = true;
        break;
      }
    }
    if (!ok) throw Error(ErrorKind::StepFailure, "line search lost positivity");
    psi.swap(trial);
    ++iterations;
  }
  return psi;
}

}  // namespace

std::vector<double> rhs(const FlowState& state) {
  const auto& p = state.profile;
  const int n = p.n();
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double u1 = p.derivative_at(1, i);
    const double u2 = p.derivative_at(2, i);
    if (!(u2 > 0.0) || !(u1 > 0.0)) throw Error(ErrorKind::InvalidProfile, "u' and u'' must be positive");
    out[i] = std::log(u2) + (n - 1) * std::log(u1) - n * p.rho(i);
  }
  return out;
}

CalabiProfile regauge(const CalabiProfile& p) {
  // fit 1, sigma, left, right to psi and psi' at both ends and move the fit
  // into the gauge constant and the edge terms
  const std::size_t N = p.size();
  const auto& st = p.stencils();
  const auto psi = p.psi();
  const std::size_t ends[2] = {0, N - 1};

  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  Eigen::Vector4d rhs_vec;
  for (int e = 0; e < 2; ++e) {
    const std::size_t i = ends[e];
    const auto b = edge_basis(p.rho(i));
    A(e, 0) = 1.0;
    A(e, 1) = b.sigma[0];
    A(e, 2) = b.left[0];
    A(e, 3) = b.right[0];
    rhs_vec[e] = psi[i];

    const auto w = st.window(1, i);
    for (std::size_t k = 0; k < w.weights.size(); ++k) {
      const auto bk = edge_basis(p.rho(w.first + k));
      A(2 + e, 1) += w.weights[k] * bk.sigma[0];
      A(2 + e, 2) += w.weights[k] * bk.left[0];
      A(2 + e, 3) += w.weights[k] * bk.right[0];
    }
    rhs_vec[2 + e] = st.apply(1, psi, i);
  }
  const Eigen::Vector4d c = A.fullPivLu().solve(rhs_vec);

  std::vector<double> out(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto b = edge_basis(p.rho(i));
    out[i] = psi[i] - c[0] - c[1] * b.sigma[0] - c[2] * b.left[0] - c[3] * b.right[0];
  }
  EdgeTerms edge = p.edge_terms();
  edge.sigma += c[1];
  edge.left += c[2];
  edge.right += c[3];
  return p.with(p.kahler_class(), std::move(out), edge);
}

FlowState step(const FlowState& state, double dt, const StepOptions& opts, StepInfo* info) {
  check_step(state, dt);
  const auto& p = state.profile;
  const int n = p.n();
  const KahlerClass end = advance_class(p.kahler_class(), n, dt);
  if (!end.valid()) throw Error(ErrorKind::TimeRange, "class leaves the Kahler cone");

  int iters = 0;
  std::vector<double> psi = solve_backward_euler(p, end, dt, opts, iters);
  int total = iters;
  if (opts.extrapolate) {
    const KahlerClass mid_cls = advance_class(p.kahler_class(), n, 0.5 * dt);
    auto half = solve_backward_euler(p, mid_cls, 0.5 * dt, opts, iters);
    total += iters;
    const CalabiProfile mid = p.with(mid_cls, std::move(half), p.edge_terms());
    auto fine = solve_backward_euler(mid, end, 0.5 * dt, opts, iters);
    total += iters;
    std::vector<double> extrapolated(psi.size());
    for (std::size_t i = 0; i < psi.size(); ++i) extrapolated[i] = 2.0 * fine[i] - psi[i];
    CalabiProfile candidate = p.with(end, std::move(extrapolated), p.edge_terms());
    // fall back to the fine first-order result if extrapolation breaks convexity
    psi = strictly_valid(candidate) ? std::vector<double>(candidate.psi().begin(), candidate.psi().end()) : fine;
  }
  if (info) {
    info->newton_iterations = total;
    info->residual = opts.newton_tolerance;
  }
  FlowState out{state.t + dt, state.T, regauge(p.with(end, std::move(psi), p.edge_terms()))};
  if (!strictly_valid(out.profile)) throw Error(ErrorKind::BlowUp, "step produced an invalid profile");
  return out;
}

FlowState step_explicit_rk2(const FlowState& state, double dt) {
  check_step(state, dt);
  const auto& p = state.profile;
  const int n = p.n();
  const std::size_t N = p.size();
  const auto& st = p.stencils();

  auto psi_rate = [&](const FlowState& s) {
    auto r = rhs(s);
    for (std::size_t i = 0; i < N; ++i) {
      const double rho = s.profile.rho(i);
      const double ell = std::max(rho, 0.0) + std::log1p(std::exp(-std::abs(rho)));
      r[i] -= -(n - 1) * rho - 2.0 * ell;  // time derivative of the reference term
    }
    return r;
  };
  auto close_edges = [&](std::vector<double>& x) {
    for (int edge = 0; edge < 2; ++edge) {
      const std::size_t i = edge == 0 ? 0 : N - 1;
      const double sign = edge == 0 ? -1.0 : 1.0;
      const auto w2 = st.window(2, i);
      const auto w1 = st.window(1, i);
      double rest = 0.0;
      double self = 0.0;
      for (std::size_t k = 0; k < w2.weights.size(); ++k) {
        const std::size_t j = w2.first + k;
        const double w = w2.weights[k] + sign * w1.weights[k];
        if (j == i) self = w;
        else rest += w * x[j];
      }
      x[i] = -rest / self;
    }
  };

  const auto k1 = psi_rate(state);
  std::vector<double> x(p.psi().begin(), p.psi().end());
  for (std::size_t i = 0; i < N; ++i) x[i] += dt * k1[i];
  close_edges(x);
  const KahlerClass end = advance_class(p.kahler_class(), n, dt);
  FlowState predictor{state.t + dt, state.T, p.with(end, x, p.edge_terms())};
  const auto k2 = psi_rate(predictor);
  for (std::size_t i = 0; i < N; ++i) x[i] = p.psi()[i] + 0.5 * dt * (k1[i] + k2[i]);
  close_edges(x);
  FlowState out{state.t + dt, state.T, regauge(p.with(end, std::move(x), p.edge_terms()))};
  if (!strictly_valid(out.profile)) throw Error(ErrorKind::BlowUp, "explicit step produced an invalid profile");
  return out;
}

double stop_time(const FlowConfig& c) { return (1.0 - c.eps_stop) * singular_time(c.a0, c.n); }

std::vector<double> checkpoint_schedule(const FlowConfig& c, std::vector<double>* dropped) {
  const double T = singular_time(c.a0, c.n);
  const double t_stop = stop_time(c);
  std::vector<double> wanted = c.checkpoints;
  for (int k = 1; k <= c.geometric_k_max; ++k) wanted.push_back(T * (1.0 - std::ldexp(1.0, -k)));
  std::vector<double> out{0.0};
  for (double t : wanted) {
    if (t < 0.0) throw Error(ErrorKind::Parameter, "checkpoint times must be non-negative");
    if (t < t_stop) out.push_back(t);
    else if (t > t_stop && dropped) dropped->push_back(t);
  }
  out.push_back(t_stop);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FlowTrajectory run(const FlowConfig& c) {
  if (c.n < 2) throw Error(ErrorKind::Parameter, "dimension n must be >= 2");
  const KahlerClass cls0{c.a0, c.b0};
  if (!cls0.valid()) throw Error(ErrorKind::ClassViolation, "initial class needs 0 < a0 < b0");
  if (!cls0.non_collapsed(c.n) && !c.allow_collapse) {
    throw Error(ErrorKind::Refused, "collapse regime: non-collapse condition a0(n+1) < b0(n-1) fails");
  }
  if (!(c.eps_stop > 0.0 && c.eps_stop < 1.0)) throw Error(ErrorKind::Parameter, "eps_stop must lie in (0, 1)");
  if (!(c.cfl > 0.0)) throw Error(ErrorKind::Parameter, "cfl must be positive");
  if (c.fixed_dt < 0.0) throw Error(ErrorKind::Parameter, "fixed_dt must be non-negative");

  FlowTrajectory traj;
  traj.config = c;
  const double T = singular_time(c.a0, c.n);
  const auto schedule = checkpoint_schedule(c, &traj.stats.dropped_checkpoints);
  StepOptions opts;
  opts.extrapolate = c.extrapolate;

  FlowState state{0.0, T, make_reference_profile(c.n, cls0, c.L, c.N)};
  traj.checkpoints.push_back(state);
  double dt_prop = c.dt_initial > 0.0 ? c.dt_initial : c.cfl * T;
  const double dt_floor = c.dt_min_fraction * T;
  traj.stats.dt_min = std::numeric_limits<double>::infinity();

  for (std::size_t target_idx = 1; target_idx < schedule.size(); ++target_idx) {
    const double target = schedule[target_idx];
    while (state.t < target) {
      const double remaining = target - state.t;
      double h = std::min({dt_prop, c.cfl * (T - state.t), remaining});
      if (c.fixed_dt > 0.0) h = remaining / std::max(1.0, std::ceil(remaining / c.fixed_dt - 1e-9));
      const bool lands = h >= remaining * (1.0 - 1e-12);
      if (lands) h = remaining;
      try {
        StepInfo info;
        FlowState next = step(state, h, opts, &info);
        if (lands) next.t = target;
        state = std::move(next);
        ++traj.stats.accepted;
        traj.stats.newton_iterations += static_cast<std::size_t>(info.newton_iterations);
        traj.stats.dt_min = std::min(traj.stats.dt_min, h);
        traj.stats.dt_max = std::max(traj.stats.dt_max, h);
        dt_prop = std::max(dt_prop, h) * 1.2;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::StepFailure && e.kind() != ErrorKind::BlowUp) throw;
        ++traj.stats.rejected;
        if (c.fixed_dt > 0.0) {
          traj.aborted = true;
          traj.diagnosis = "fixed step failed at t=" + std::to_string(state.t) + ": " + e.what();
          return traj;
        }
        dt_prop = 0.5 * h;
        if (dt_prop < dt_floor) {
          traj.aborted = true;
          traj.diagnosis = "time step underflow at t=" + std::to_string(state.t) + ": " + e.what();
          if (traj.stats.accepted == 0) traj.stats.dt_min = 0.0;
          return traj;
        }
      }
    }
    traj.checkpoints.push_back(state);
  }
  if (traj.stats.accepted == 0) traj.stats.dt_min = 0.0;
  return traj;
}

}  // namespace calabi
