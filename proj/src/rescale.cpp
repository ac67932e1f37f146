#include "calabi/rescale.hpp"

#include <algorithm>
#include <cmath>

#include "calabi/errors.hpp"
#include "calabi/geometry.hpp"

namespace calabi {

double RescaledProfile::F_at(double x) const {
  if (!(x >= phi.front() && x <= phi.back())) throw Error(ErrorKind::Window, "phi outside the rescaled table");
  auto it = std::upper_bound(phi.begin(), phi.end(), x);
  std::size_t j = it == phi.end() ? phi.size() - 1 : static_cast<std::size_t>(it - phi.begin());
  if (j == 0) j = 1;
  const std::size_t i = j - 1;
  const double h = phi[j] - phi[i];
  const double s = (x - phi[i]) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  const double h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s);
  const double h11 = s * s * (s - 1);
  return h00 * F[i] + h10 * h * dF[i] + h01 * F[j] + h11 * h * dF[j];
}

RescaledProfile rescale(const FlowState& state) {
  const double tau = state.tau();
  if (!(tau > 0)) throw Error(ErrorKind::TimeRange, "rescaling needs t < T");
  const CalabiProfile& p = state.profile;
  const KahlerClass& cls = p.kahler_class();

  RescaledProfile r{.t = state.t,
                    .tau = tau,
                    .n = p.n(),
                    .rho = {},
                    .phi = {},
                    .F = {},
                    .dF = {},
                    .phi_left_limit = cls.a / tau,
                    .phi_right_limit = cls.b / tau,
                    .scaled = p};

  std::vector<double> psi(p.psi().begin(), p.psi().end());
  for (double& v : psi) v /= tau;
  const EdgeTerms& e = p.edge_terms();
  r.scaled = p.with({cls.a / tau, cls.b / tau}, std::move(psi), {e.sigma / tau, e.left / tau, e.right / tau});

  const auto above = p.above_a();
  const auto u2 = p.derivative(2);
  const auto u3 = p.derivative(3);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = (cls.a + above[i]) / tau;
    if (!r.phi.empty() && !(x > r.phi.back())) continue;
    r.rho.push_back(p.rho(i));
    r.phi.push_back(x);
    r.F.push_back(u2[i] / tau);
    r.dF.push_back(u3[i] / u2[i]);
  }
  if (r.phi.size() < 2) throw Error(ErrorKind::InvalidProfile, "u' is not increasing");
  return r;
}

PhiWindow default_window(int n, double gap) { return {n - 1.0 + gap, 2.0 * n}; }

Discrepancy compare_to_fik(const RescaledProfile& r, const SolitonProfile& s, PhiWindow window) {
  if (s.phi.empty()) throw Error(ErrorKind::Window, "empty soliton profile");
  Discrepancy d;
  d.requested = window;
  d.used.lo = std::max({window.lo, r.phi_min(), s.phi.front()});
  d.used.hi = std::min({window.hi, r.phi_max(), s.phi.back()});
  if (!(d.used.hi > d.used.lo)) throw Error(ErrorKind::Window, "empty overlap of the phi ranges");

  const std::size_t m = kWindowSamples;
  d.phi.resize(m);
  d.F_flow.resize(m);
  d.F_fik.resize(m);
  double sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double x =
        i + 1 == m ? d.used.hi : d.used.lo + (d.used.hi - d.used.lo) * static_cast<double>(i) / static_cast<double>(m - 1);
    d.phi[i] = x;
    d.F_flow[i] = r.F_at(x);
    d.F_fik[i] = F_closed_form(x, s.params);
    const double diff = std::abs(d.F_flow[i] - d.F_fik[i]);
    if (diff > d.D_sup) {
      d.D_sup = diff;
      d.phi_at_sup = x;
    }
    sq += diff * diff;
  }
  d.D_l2 = std::sqrt(sq / static_cast<double>(m));
  return d;
}

Discrepancy compare_to_fik(const RescaledProfile& r, const SolitonProfile& s) {
  return compare_to_fik(r, s, default_window(r.n));
}

int geometric_index(const FlowState& s) {
  if (!(s.T > 0) || !(s.t > 0)) return 0;
  const double x = 1.0 - s.t / s.T;  // 2^-k
  const double k = -std::log2(x);
  const double kr = std::round(k);
  if (kr < 1) return 0;
  const double exact = s.T * (1.0 - std::ldexp(1.0, -static_cast<int>(kr)));
  return std::abs(s.t - exact) <= 1e-12 * s.T ? static_cast<int>(kr) : 0;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  if (m < 2 || y.size() != m) throw Error(ErrorKind::Parameter, "slope fit needs two or more points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double md = static_cast<double>(m);
  return (md * sxy - sx * sy) / (md * sxx - sx * sx);
}

ConvergenceReport convergence_report(const FlowTrajectory& traj, const SolitonProfile& s, double noise) {
  ConvergenceReport rep;
  rep.noise = noise;
  for (const FlowState& st : traj.checkpoints) {
    const int k = geometric_index(st);
    if (k < 2) continue;
    ConvergenceRow row;
    row.k = k;
    row.t = st.t;
    row.tau = st.tau();
    const auto diag = compute_diagnostics(st.profile, row.tau);
    row.sup_abs_R = diag.sup_abs_R;
    row.typeI_proxy = row.tau * diag.sup_curvature();
    row.discrepancy = compare_to_fik(rescale(st), s);
    rep.rows.push_back(std::move(row));
  }
  if (rep.rows.size() < 3) throw Error(ErrorKind::Parameter, "convergence report needs geometric checkpoints up to k >= 4");

  std::vector<double> taus, ds;
  rep.monotone = true;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    taus.push_back(row.tau);
    ds.push_back(row.discrepancy.D_sup);
    rep.max_typeI_proxy = std::max(rep.max_typeI_proxy, row.typeI_proxy);
    if (i > 0 && row.discrepancy.D_sup > (1.0 + noise) * rep.rows[i - 1].discrepancy.D_sup) rep.monotone = false;
  }
  rep.decay_exponent = log_log_slope(taus, ds);
  rep.ratio = ds.back() / ds.front();
  return rep;
}

}  // namespace calabi
