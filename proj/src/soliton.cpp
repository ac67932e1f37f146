#include "calabi/soliton.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "calabi/errors.hpp"

namespace calabi {

namespace {

constexpr double kExpLimit = 500.0;

void require_mu(double mu) {
  if (mu == 0.0) throw Error(ErrorKind::Parameter, "mu must be nonzero");
}

// n!/j! for j = 0..n-1
std::vector<double> factorial_ratios(int n) {
  std::vector<double> c(n);
  c[n - 1] = n;
  for (int j = n - 2; j >= 0; --j) c[j] = c[j + 1] * (j + 1);
  return c;
}

struct Kahan {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

// fixed panels of 8-point Gauss-Legendre
template <class Fn>
double gauss_panels(Fn&& f, double lo, double hi, int panels) {
  const double w = (hi - lo) / panels;
  double acc = 0.0;
  for (int p = 0; p < panels; ++p) {
    acc += boost::math::quadrature::gauss<double, 8>::integrate(f, lo + p * w, lo + (p + 1) * w);
  }
  return acc;
}

// root of f in a sign-changing bracket
template <class Fn>
double bracketed_root(Fn&& f, double lo, double hi, double flo, double fhi) {
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  boost::math::tools::eps_tolerance<double> tol(std::numeric_limits<double>::digits - 2);
  std::uintmax_t iterations = 200;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iterations);
  return 0.5 * (r.first + r.second);
}

}  // namespace

FJet F_jet(double phi, const SolitonParams& p) {
  require_mu(p.mu);
  if (p.n < 2) throw Error(ErrorKind::Parameter, "dimension n must be >= 2");
  if (!(phi > 0.0)) throw Error(ErrorKind::Domain, "phi must be positive");
  const int n = p.n;
  const double mu = p.mu;

  FJet out;
  if (p.nu != 0.0) {
    if (mu * phi > kExpLimit) throw Error(ErrorKind::Range, "nu e^{mu phi} overflows for mu*phi > 500");
    const double E = p.nu * std::exp(mu * phi) * std::pow(phi, 1 - n);
    const double g = mu + (1 - n) / phi;
    out.F = E;
    out.dF = E * g;
    out.d2F = E * (g * g + (n - 1) / (phi * phi));
  }

  const auto c = factorial_ratios(n);
  const double x = mu * phi;
  const double base = std::pow(phi, 1 - n);
  Kahan s0, s1, s2;
  for (int j = n - 1; j >= 0; --j) {
    const double t = c[j] * std::pow(x, j) * base;
    const double e1 = j + 1 - n;
    s0.add(t);
    s1.add(t * e1 / phi);
    s2.add(t * e1 * (e1 - 1) / (phi * phi));
  }
  const double K = (mu - 1.0) / std::pow(mu, n + 1);
  out.F += phi / mu - K * s0.sum;
  out.dF += 1.0 / mu - K * s1.sum;
  out.d2F += -K * s2.sum;
  return out;
}

double F_closed_form(double phi, const SolitonParams& p) { return F_jet(phi, p).F; }

double mu_condition(double mu, int n) {
  const double a = n - 1.0;
  const auto c = factorial_ratios(n);
  Kahan s;
  for (int j = n - 1; j >= 0; --j) s.add(c[j] * std::pow(mu, j) * std::pow(a, j + 1 - n));
  return a * std::pow(mu, n) - (mu - 1.0) * s.sum;
}

MuSolution solve_mu(int n) {
  if (n < 2) throw Error(ErrorKind::Parameter, "dimension n must be >= 2");
  auto h = [n](double mu) { return mu_condition(mu, n); };
  MuSolution out;
  double lo = 1e-6;
  double hlo = h(lo);
  while (lo < 1e6) {
    const double hi = std::min(lo * 1.05, 1e6);
    const double hhi = h(hi);
    if (hlo == 0.0) {
      out.roots.push_back(lo);
    } else if ((hlo < 0.0) != (hhi < 0.0) && hhi != 0.0) {
      out.roots.push_back(bracketed_root(h, lo, hi, hlo, hhi));
    }
    lo = hi;
    hlo = hhi;
  }
  if (out.roots.empty()) throw Error(ErrorKind::RootNotFound, "no positive root of the mu condition below 1e6");
  out.mu = out.roots.front();
  out.multiple = out.roots.size() > 1;
  return out;
}

double consistent_nu(int n, double mu) {
  const double a = n - 1.0;
  const double F0 = F_closed_form(a, {n, mu, 0.0});
  return -F0 * std::pow(a, n - 1) * std::exp(-mu * a);
}

std::vector<FZero> zeros_of_F(const SolitonParams& p, double phi_max) {
  require_mu(p.mu);
  if (!(phi_max > p.n)) throw Error(ErrorKind::Parameter, "phi_max must exceed n");
  double top = phi_max;
  if (p.nu != 0.0 && p.mu > 0.0) top = std::min(top, 0.999 * kExpLimit / p.mu);
  auto F = [&](double x) { return F_closed_form(x, p); };
  auto dF = [&](double x) { return F_jet(x, p).dF; };

  const double lo = 1e-6;
  const int samples = 8000;
  const double ratio = std::pow(top / lo, 1.0 / samples);
  std::vector<FZero> zeros;
  auto push = [&](double x, bool tangential) {
    if (!zeros.empty() && std::abs(zeros.back().phi - x) <= 1e-9 * (1.0 + x)) return;
    zeros.push_back({x, dF(x), tangential});
  };

  double x0 = lo;
  double f0 = F(x0);
  double d0 = dF(x0);
  for (int k = 1; k <= samples; ++k) {
    const double x1 = k == samples ? top : lo * std::pow(ratio, k);
    const double f1 = F(x1);
    const double d1 = dF(x1);
    if (f0 == 0.0) {
      push(x0, d0 == 0.0);
    } else if (f1 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) {
      push(bracketed_root(F, x0, x1, f0, f1), false);
    } else if (f1 != 0.0 && (d0 < 0.0) != (d1 < 0.0)) {
      // extremum without a sign change: a zero of F touching the axis
      const double xe = bracketed_root(dF, x0, x1, d0, d1);
      const double fe = F(xe);
      const double scale = 1.0 + std::abs(xe) / std::abs(p.mu);
      if (std::abs(fe) <= 1e-9 * scale) push(xe, true);
    }
    x0 = x1;
    f0 = f1;
    d0 = d1;
  }
  if (f0 == 0.0) push(x0, d0 == 0.0);

  if (zeros.size() > 2) {
    throw Error(ErrorKind::NumericalInconsistency,
                "F has " + std::to_string(zeros.size()) + " positive zeros; at most two are possible");
  }
  if (zeros.size() == 2 && !(zeros[0].phi <= p.n + 1e-9 && zeros[1].phi >= p.n - 1e-9)) {
    throw Error(ErrorKind::NumericalInconsistency, "two zeros of F do not straddle n");
  }
  return zeros;
}

SolitonProfile integrate_profile(const SolitonParams& p, double rho_span, double phi_cap,
                                 const IntegrationOptions& opts) {
  require_mu(p.mu);
  if (!(rho_span > 0.0)) throw Error(ErrorKind::Parameter, "rho_span must be positive");
  const double a = p.a();
  double cap = phi_cap;
  if (p.nu > 0.0 && p.mu > 0.0) cap = std::min(cap, 0.8 * kExpLimit / p.mu);
  if (!(cap > a)) throw Error(ErrorKind::Parameter, "phi_cap must exceed n-1");

  SolitonProfile out;
  out.params = p;
  double rho = -rho_span;
  double phi = a + std::exp(-rho_span);
  if (phi >= cap) throw Error(ErrorKind::Parameter, "start value already above phi_cap");

  auto rate = [&](double x) {
    const double f = F_closed_form(x, p);
    const double tol = 1e-14 * (1.0 + std::abs(x) / std::abs(p.mu));
    if (f < -tol) throw Error(ErrorKind::ParameterRegime, "F < 0 along the profile at phi=" + std::to_string(x));
    return std::max(f, 0.0);
  };

  namespace odeint = boost::numeric::odeint;
  using Dopri = odeint::runge_kutta_dopri5<double, double, double, double, odeint::vector_space_algebra>;
  auto sys = [&](const double& y, double& dy, double) { dy = rate(y); };
  auto stepper = odeint::make_controlled<Dopri>(opts.atol, opts.rtol);
  // single uncontrolled step, used to land on the cap
  auto advance = [&](double y, double x, double h) {
    Dopri plain;
    plain.do_step(sys, y, x, h);
    return y;
  };

  out.rho.push_back(rho);
  out.phi.push_back(phi);
  double h = 1e-3;
  const double rho_end = rho_span;
  while (rho < rho_end) {
    h = std::min(h, rho_end - rho);
    const double rho0 = rho, phi0 = phi;
    double x = rho, y = phi;
    bool accepted = false;
    try {
      accepted = stepper.try_step(sys, y, x, h) == odeint::success;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Range) throw;
      stepper.reset();
      h *= 0.25;
    }
    if (accepted && !std::isfinite(y)) {
      stepper.reset();
      h = 0.25 * (x - rho0);
      accepted = false;
    }
    if (accepted) {
      if (y >= cap) {
        // shrink the step until phi lands on the cap
        double lo = 0.0;
        double hi = x - rho0;
        for (int it = 0; it < 100 && hi - lo > 1e-15 * (1.0 + std::abs(rho0)); ++it) {
          const double mid = 0.5 * (lo + hi);
          if (advance(phi0, rho0, mid) >= cap) hi = mid;
          else lo = mid;
        }
        out.rho.push_back(rho0 + hi);
        out.phi.push_back(cap);
        out.reached_phi_max = true;
        break;
      }
      rho = x;
      if (y == phi0 && rate(phi0) == 0.0) break;  // settled on a zero of F
      phi = y;
      out.rho.push_back(rho);
      out.phi.push_back(phi);
    }
    if (h < opts.h_min) {
      // step-size underflow: treat as blow-up at the current rho
      if (p.nu > 0.0) out.blow_up_rho = rho;
      break;
    }
  }

  out.F.reserve(out.phi.size());
  for (double x : out.phi) out.F.push_back(F_closed_form(x, p));

  if (p.nu > 0.0 && p.mu > 0.0 && out.reached_phi_max && !out.blow_up_rho) {
    // remaining rho until phi = infinity: integral of 1/F beyond the cap
    const double top = 0.999 * kExpLimit / p.mu;
    const double tail = gauss_panels([&](double x) { return 1.0 / F_closed_form(x, p); }, cap, top, 400);
    out.blow_up_rho = out.rho.back() + tail;
  }
  return out;
}

SolitonProfile canonical_profile(int n, double start_gap, double phi_cap) {
  const double mu = solve_mu(n).mu;
  return integrate_profile({n, mu, 0.0}, -std::log(start_gap), phi_cap);
}

double soliton_residual(const SolitonProfile& s) {
  const int n = s.params.n;
  double worst = 0.0;
  for (double phi : s.phi) {
    const auto j = F_jet(phi, s.params);
    const double u1 = phi;
    const double u2 = j.F;
    if (!(u2 > 0.0)) continue;
    const double u3 = j.F * j.dF;
    const double u4 = j.F * (j.dF * j.dF + j.F * j.d2F);
    const double r = u4 - 2.0 * u3 * u3 / u2 + n * u3 - (n - 1) * u2 * u2 * u2 / (u1 * u1) - (u3 * u1 - u2 * u2);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

double reduction_residual(const SolitonProfile& s, std::optional<double> mu_eval) {
  const int n = s.params.n;
  const double mu = mu_eval.value_or(s.params.mu);
  double worst = 0.0;
  for (double phi : s.phi) {
    const auto j = F_jet(phi, s.params);
    const double r = j.dF + ((n - 1) / phi - mu) * j.F - (n - phi);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

const char* to_string(SolitonClass c) {
  switch (c) {
    case SolitonClass::CompleteShrinker: return "complete_shrinker";
    case SolitonClass::FiniteVolume: return "finite_volume";
    case SolitonClass::Incomplete: return "incomplete";
    case SolitonClass::TwoZeros: return "two_zeros";
  }
  return "unknown";
}

double soliton_distance(const SolitonParams& p, double phi0, double phi1) {
  if (!(phi1 > phi0)) return 0.0;
  // phi = phi0 + x^2 removes the square-root singularity at a simple zero
  const double xmax = std::sqrt(phi1 - phi0);
  auto integrand = [&](double x) {
    const double f = F_closed_form(phi0 + x * x, p);
    return f > 0.0 ? x / std::sqrt(f) : 0.0;
  };
  return gauss_panels(integrand, 0.0, xmax, 2000);
}

Classification classify(const SolitonParams& p) {
  if (p.mu == 0.0) {
    throw Error(ErrorKind::Refused, "mu = 0: the limit metric would be Kahler-Einstein, which is excluded");
  }
  const int n = p.n;
  const double a = p.a();
  Classification out;
  const double Fa = F_closed_form(a, p);
  const bool starts_at_a = std::abs(Fa) <= 1e-10;

  if (p.mu < 0.0) {
    out.kind = SolitonClass::FiniteVolume;
    out.zeros = zeros_of_F(p, 50.0 * n);
    const FZero* b = nullptr;
    for (const auto& z : out.zeros) {
      if (z.phi >= n - 1e-9) {
        b = &z;
        break;
      }
    }
    if (!b) throw Error(ErrorKind::NumericalInconsistency, "mu < 0 but F has no zero beyond n");
    out.phi_sup = b->phi;
    if (starts_at_a) {
      const auto prof = integrate_profile(p, 20.0, b->phi);
      out.phi_sup = *std::max_element(prof.phi.begin(), prof.phi.end());
    } else {
      out.note = "F(n-1) != 0; bound taken from the zero structure";
    }
    out.witness_name = "volume";
    out.witness = (std::pow(out.phi_sup, n) - std::pow(a, n)) / n;
    return out;
  }

  if (p.nu > 0.0) {
    out.kind = SolitonClass::Incomplete;
    out.zeros = zeros_of_F(p, std::min(50.0 * n, 0.9 * kExpLimit / p.mu));
    const auto prof = integrate_profile(p, 40.0, 0.8 * kExpLimit / p.mu);
    out.blow_up_rho = prof.blow_up_rho;
    out.phi_sup = std::numeric_limits<double>::infinity();
    out.witness_name = "distance";
    out.witness = soliton_distance(p, prof.phi.front(), 0.999 * kExpLimit / p.mu);
    return out;
  }

  if (p.nu < 0.0) {
    out.kind = SolitonClass::TwoZeros;
    out.zeros = zeros_of_F(p, std::min(50.0 * n, 0.9 * kExpLimit / p.mu));
    if (out.zeros.size() != 2) throw Error(ErrorKind::NumericalInconsistency, "nu < 0 but F lacks a second zero");
    out.phi_sup = out.zeros[1].phi;
    out.witness_name = "volume";
    out.witness = (std::pow(out.zeros[1].phi, n) - std::pow(out.zeros[0].phi, n)) / n;
    return out;
  }

  out.kind = SolitonClass::CompleteShrinker;
  out.zeros = zeros_of_F(p, 50.0 * n);
  out.phi_sup = std::numeric_limits<double>::infinity();
  out.witness_name = "distance_lower_bound";
  const double start = starts_at_a ? a + 1e-12 : a;
  out.witness = soliton_distance(p, start, 1e4);
  if (!starts_at_a) out.note = "mu differs from the root of the mu condition; F(n-1) != 0";
  return out;
}

std::vector<double> soliton_potential(const SolitonProfile& s) {
  std::vector<double> u(s.rho.size(), 0.0);
  for (std::size_t i = 1; i < u.size(); ++i) {
    const double h = s.rho[i] - s.rho[i - 1];
    u[i] = u[i - 1] + 0.5 * h * (s.phi[i - 1] + s.phi[i]) + h * h * (s.F[i - 1] - s.F[i]) / 12.0;
  }
  return u;
}

KEIndicator ke_indicator(const SolitonProfile& s, std::span<const double> u) {
  if (u.size() != s.phi.size()) throw Error(ErrorKind::Parameter, "potential samples do not match the profile");
  const int n = s.params.n;
  KEIndicator out;
  out.Q.resize(u.size());
  out.dQ.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double phi = s.phi[i];
    const auto j = F_jet(phi, s.params);
    out.Q[i] = -n * s.rho[i] + (n - 1) * std::log(phi) + std::log(j.F) + u[i];
    out.dQ[i] = (n - 1) * j.F / phi + j.dF + phi - n;
    out.max_abs_dQ = std::max(out.max_abs_dQ, std::abs(out.dQ[i]));
  }
  return out;
}

}  // namespace calabi
