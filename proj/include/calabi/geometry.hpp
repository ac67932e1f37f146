#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "calabi/profile.hpp"

namespace calabi {

/// v = n rho - (n-1) log u' - log u'' with v', v'' by the chain rule.
struct RicciPotential {
  std::vector<double> v, v1, v2;
};

RicciPotential ricci_potential(const CalabiProfile& p);

/// Ricci eigenvalues relative to the metric: v'/u' (base, multiplicity
/// n-1) and v''/u'' (fiber).
struct RicciEigenvalues {
  std::vector<double> base, fiber;
};

RicciEigenvalues ricci_eigenvalues(const CalabiProfile& p);

std::vector<double> scalar_curvature(const CalabiProfile& p);

struct VectorFieldDiagnostics {
  std::vector<double> Vsq, gradVsq, energy;
};

VectorFieldDiagnostics vector_field_diagnostics(const CalabiProfile& p, double tau);

/// Default floor of the resolved band, relative to b - a.
inline constexpr double kBandFloor = 1e-4;

/// Nodes where u'' >= floor * (b - a). Outside this band u'' is within a
/// few orders of rounding noise of psi and fourth derivatives divided by
/// u''^2 are not resolved.
std::vector<bool> resolved_band(const CalabiProfile& p, double floor = kBandFloor);

struct DiagnosticsReport {
  std::vector<double> rho, v, R, lam_base, lam_fiber, Vsq, gradVsq, energy;
  std::vector<bool> band;
  // sups over the resolved band
  double sup_abs_R = 0.0;
  double sup_abs_ricci = 0.0;  // max over |lam_base|, |lam_fiber|
  double rho_sup_R = 0.0;

  [[nodiscard]] double sup_curvature() const { return sup_abs_R > sup_abs_ricci ? sup_abs_R : sup_abs_ricci; }
};

DiagnosticsReport compute_diagnostics(const CalabiProfile& p, double tau, double band_floor = kBandFloor);

/// `rho,v,R,lam_base,lam_fiber,Vsq,gradVsq,energy` with `#` metadata lines.
void write_diagnostics_csv(std::ostream& os, const DiagnosticsReport& d, const Metadata& meta = {});

/// Cumulative distance to the exceptional divisor at every node, including
/// the exponential tail beyond -L.
std::vector<double> distance_table(const CalabiProfile& p);

double distance_to_E(const CalabiProfile& p, double rho);

/// Inverse of distance_to_E by bisection; throws range for unreachable radii.
double tube_radius_to_rho(const CalabiProfile& p, double radius);

struct TubeVolume {
  double quadrature = 0.0;
  double closed_form = 0.0;
  double abs_diff = 0.0;
};

/// Volume of the tube {rho <= rho_R} around E with the dimensional
/// constant set to 1: quadrature of (u')^{n-1} u'' against ((u')^n - a^n)/n.
TubeVolume tube_volume(const CalabiProfile& p, double rho_R);

/// |grad f|^2 = f'^2/u'' and Laplacian (n-1) f'/u' + f''/u'' of an
/// invariant function sampled on the profile grid.
struct InvariantCalculus {
  std::vector<double> gradsq, laplacian;
};

InvariantCalculus invariant_function_calculus(const CalabiProfile& p, std::span<const double> f);

}  // namespace calabi
