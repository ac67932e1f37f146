#include "calabi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include "calabi/errors.hpp"

namespace calabi {

namespace {

void require_convex(const Derivatives& d) {
  for (std::size_t i = 0; i < d.u2.size(); ++i) {
    if (!(d.u2[i] > 0.0) || !(d.u1[i] > 0.0)) {
      throw Error(ErrorKind::InvalidProfile, "u' and u'' must be positive at node " + std::to_string(i));
    }
  }
}

// cumulative integral of samples f on a uniform grid: Simpson pairs at even
// nodes, a three-point correction for the odd ones
std::vector<double> cumulative(std::span<const double> f, double h) {
  const std::size_t N = f.size();
  std::vector<double> I(N, 0.0);
  for (std::size_t k = 2; k < N; k += 2) I[k] = I[k - 2] + h / 3.0 * (f[k - 2] + 4.0 * f[k - 1] + f[k]);
  for (std::size_t k = 1; k < N; k += 2) I[k] = I[k - 1] + h / 12.0 * (5.0 * f[k - 1] + 8.0 * f[k] - f[k + 1]);
  return I;
}

std::size_t cell_of(const CalabiProfile& p, double rho) {
  const double L = p.half_width();
  if (!(rho >= -L && rho <= L)) throw Error(ErrorKind::Domain, "rho outside [-L, L]");
  auto k = static_cast<std::size_t>(std::floor((rho + L) / p.spacing()));
  return std::min(k, p.size() - 1);
}

template <class Fn>
double gauss3(Fn&& f, double lo, double hi) {
  if (hi <= lo) return 0.0;
  return boost::math::quadrature::gauss<double, 3>::integrate(f, lo, hi);
}

std::vector<double> sqrt_u2(const CalabiProfile& p) {
  auto u2 = p.derivative(2);
  for (double& x : u2) x = std::sqrt(std::max(x, 0.0));
  return u2;
}

double left_tail(const CalabiProfile& p) {
  const double L = p.half_width();
  const double c = p.derivative_at(2, 0) * std::exp(L);
  return std::sqrt(std::max(c, 0.0)) * std::exp(-0.5 * L);
}

}  // namespace

RicciPotential ricci_potential(const CalabiProfile& p) {
  const auto d = derivatives(p);
  require_convex(d);
  const int n = p.n();
  RicciPotential out;
  const std::size_t N = p.size();
  out.v.resize(N);
  out.v1.resize(N);
  out.v2.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double r1 = d.u2[i] / d.u1[i];
    const double r2 = d.u3[i] / d.u2[i];
    out.v[i] = n * p.rho(i) - (n - 1) * std::log(d.u1[i]) - std::log(d.u2[i]);
    out.v1[i] = n - (n - 1) * r1 - r2;
    out.v2[i] = -(n - 1) * (d.u3[i] / d.u1[i] - r1 * r1) - (d.u4[i] / d.u2[i] - r2 * r2);
  }
  return out;
}

RicciEigenvalues ricci_eigenvalues(const CalabiProfile& p) {
  const auto v = ricci_potential(p);
  RicciEigenvalues out;
  out.base.resize(p.size());
  out.fiber.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.base[i] = v.v1[i] / p.derivative_at(1, i);
    out.fiber[i] = v.v2[i] / p.derivative_at(2, i);
  }
  return out;
}

std::vector<double> scalar_curvature(const CalabiProfile& p) {
  const auto d = derivatives(p);
  require_convex(d);
  const int n = p.n();
  std::vector<double> R(p.size());
  for (std::size_t i = 0; i < R.size(); ++i) {
    const double u1 = d.u1[i], u2 = d.u2[i], u3 = d.u3[i], u4 = d.u4[i];
    R[i] = -u4 / (u2 * u2) + u3 * u3 / (u2 * u2 * u2) - 2.0 * (n - 1) * u3 / (u1 * u2) -
           (n - 1.0) * (n - 2) * u2 / (u1 * u1) + n * (n - 1.0) / u1;
  }
  return R;
}

VectorFieldDiagnostics vector_field_diagnostics(const CalabiProfile& p, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::Parameter, "tau must be positive");
  const int n = p.n();
  const auto u1 = p.derivative(1);
  const auto u2 = p.derivative(2);
  const auto u3 = p.derivative(3);
  VectorFieldDiagnostics out;
  out.Vsq.resize(p.size());
  out.gradVsq.resize(p.size());
  out.energy.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r1 = u2[i] / u1[i];
    const double r2 = u3[i] / u2[i];
    out.Vsq[i] = u2[i] / tau;
    out.gradVsq[i] = (n - 1) * r1 * r1 + r2 * r2;
    out.energy[i] = (n - 1) * tau / u1[i];
  }
  return out;
}

std::vector<bool> resolved_band(const CalabiProfile& p, double floor) {
  const double level = floor * p.kahler_class().width();
  std::vector<bool> band(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) band[i] = p.derivative_at(2, i) >= level;
  return band;
}

DiagnosticsReport compute_diagnostics(const CalabiProfile& p, double tau, double band_floor) {
  DiagnosticsReport out;
  out.rho = p.rho_grid();
  const auto v = ricci_potential(p);
  out.v = v.v;
  out.R = scalar_curvature(p);
  const auto eig = ricci_eigenvalues(p);
  out.lam_base = eig.base;
  out.lam_fiber = eig.fiber;
  auto vf = vector_field_diagnostics(p, tau);
  out.Vsq = std::move(vf.Vsq);
  out.gradVsq = std::move(vf.gradVsq);
  out.energy = std::move(vf.energy);
  out.band = resolved_band(p, band_floor);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!out.band[i]) continue;
    if (std::abs(out.R[i]) > out.sup_abs_R) {
      out.sup_abs_R = std::abs(out.R[i]);
      out.rho_sup_R = out.rho[i];
    }
    out.sup_abs_ricci = std::max({out.sup_abs_ricci, std::abs(out.lam_base[i]), std::abs(out.lam_fiber[i])});
  }
  return out;
}

void write_diagnostics_csv(std::ostream& os, const DiagnosticsReport& d, const Metadata& meta) {
  for (const auto& [k, v] : meta) os << '#' << k << '=' << v << '\n';
  os << "rho,v,R,lam_base,lam_fiber,Vsq,gradVsq,energy\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < d.rho.size(); ++i) {
    os << d.rho[i] << ',' << d.v[i] << ',' << d.R[i] << ',' << d.lam_base[i] << ',' << d.lam_fiber[i] << ','
       << d.Vsq[i] << ',' << d.gradVsq[i] << ',' << d.energy[i] << '\n';
  }
}

std::vector<double> distance_table(const CalabiProfile& p) {
  auto I = cumulative(sqrt_u2(p), p.spacing());
  const double tail = left_tail(p);
  for (double& x : I) x = 0.5 * x + tail;
  return I;
}

namespace {

double distance_from_table(const CalabiProfile& p, std::span<const double> table, double rho) {
  const std::size_t k = cell_of(p, rho);
  const double partial = gauss3([&](double x) { return std::sqrt(std::max(interpolate(p, x).u2, 0.0)); }, p.rho(k), rho);
  return table[k] + 0.5 * partial;
}

}  // namespace

double distance_to_E(const CalabiProfile& p, double rho) {
  const auto table = distance_table(p);
  return distance_from_table(p, table, rho);
}

double tube_radius_to_rho(const CalabiProfile& p, double radius) {
  const auto table = distance_table(p);
  const double L = p.half_width();
  const double top = table.back();
  if (!(radius > table.front() && radius < top)) {
    throw Error(ErrorKind::Range, "tube radius outside the reachable range of the grid");
  }
  // bracket by node, then solve inside the cell
  const auto it = std::upper_bound(table.begin(), table.end(), radius);
  const auto k = static_cast<std::size_t>(it - table.begin());
  const double lo = p.rho(k - 1);
  const double hi = std::min(p.rho(k), L);
  auto f = [&](double r) { return distance_from_table(p, table, r) - radius; };
  const double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  boost::math::tools::eps_tolerance<double> tol(std::numeric_limits<double>::digits - 2);
  std::uintmax_t iterations = 200;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iterations);
  return 0.5 * (r.first + r.second);
}

TubeVolume tube_volume(const CalabiProfile& p, double rho_R) {
  const int n = p.n();
  const double a = p.kahler_class().a;
  const auto u1 = p.derivative(1);
  const auto u2 = p.derivative(2);
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::pow(u1[i], n - 1) * u2[i];
  const auto I = cumulative(f, p.spacing());
  const std::size_t k = cell_of(p, rho_R);
  const double partial = gauss3(
      [&](double x) {
        const auto pv = interpolate(p, x);
        return std::pow(pv.u1, n - 1) * pv.u2;
      },
      p.rho(k), rho_R);
  // beyond -L the integrand is exact: ((u'(-L))^n - a^n)/n
  const double edge = a + p.above_a().front();
  const double tail = (std::pow(edge, n) - std::pow(a, n)) / n;

  TubeVolume out;
  out.quadrature = tail + I[k] + partial;
  out.closed_form = (std::pow(interpolate(p, rho_R).u1, n) - std::pow(a, n)) / n;
  out.abs_diff = std::abs(out.quadrature - out.closed_form);
  return out;
}

InvariantCalculus invariant_function_calculus(const CalabiProfile& p, std::span<const double> f) {
  if (f.size() != p.size()) throw Error(ErrorKind::Parameter, "samples do not match the profile grid");
  const int n = p.n();
  const auto& st = p.stencils();
  InvariantCalculus out;
  out.gradsq.resize(f.size());
  out.laplacian.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double f1 = st.apply(1, f, i);
    const double f2 = st.apply(2, f, i);
    const double u1 = p.derivative_at(1, i);
    const double u2 = p.derivative_at(2, i);
    out.gradsq[i] = f1 * f1 / u2;
    out.laplacian[i] = (n - 1) * f1 / u1 + f2 / u2;
  }
  return out;
}

}  // namespace calabi
