#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace calabi {

struct SolitonParams {
  int n = 2;
  double mu = 0.0;
  double nu = 0.0;

  /// Left zero of F for the canonical member.
  [[nodiscard]] double a() const { return n - 1.0; }
};

/// F and its first two phi-derivatives from the closed form
///   F = nu e^{mu phi}/phi^{n-1} + phi/mu - (mu-1)/mu^{n+1} sum_j n!/j! mu^j phi^{j+1-n}.
struct FJet {
  double F = 0.0;
  double dF = 0.0;
  double d2F = 0.0;
};

FJet F_jet(double phi, const SolitonParams& p);
double F_closed_form(double phi, const SolitonParams& p);

/// mu^{n+1} F(n-1; mu, 0): a polynomial in mu whose positive roots fix mu(n).
double mu_condition(double mu, int n);

struct MuSolution {
  double mu = 0.0;
  std::vector<double> roots;  // every positive root found, ascending
  bool multiple = false;
};

/// Smallest positive root of the mu condition; throws root-not-found.
MuSolution solve_mu(int n);

/// nu making F(n-1) = 0 for a given mu.
double consistent_nu(int n, double mu);

struct FZero {
  double phi = 0.0;
  double dF = 0.0;
  bool tangential = false;
};

/// Positive zeros of F on (1e-6, phi_max), ascending. Tangential zeros are
/// found as extrema of F that touch zero. More than two zeros throws.
std::vector<FZero> zeros_of_F(const SolitonParams& p, double phi_max);

struct SolitonProfile {
  SolitonParams params;
  std::vector<double> rho;
  std::vector<double> phi;
  std::vector<double> F;
  bool reached_phi_max = false;
  std::optional<double> blow_up_rho;  // phi -> infinity at this finite rho
};

struct IntegrationOptions {
  double rtol = 1e-12;
  double atol = 1e-14;
  double h_min = 1e-14;
};

/// Integrates phi' = F(phi) from phi(-rho_span) = a + e^{-rho_span} until
/// rho = rho_span or phi = phi_cap.
SolitonProfile integrate_profile(const SolitonParams& p, double rho_span, double phi_cap,
                                 const IntegrationOptions& opts = {});

/// Canonical member for dimension n sampled over phi in [n-1+start_gap, phi_cap].
SolitonProfile canonical_profile(int n, double start_gap = 1e-6, double phi_cap = 50.0);

/// Max |u'''' - 2u'''^2/u'' + n u''' - (n-1)u''^3/u'^2 - (u''' u' - u''^2)| with
/// u' = phi, u'' = F and higher derivatives from the closed form.
double soliton_residual(const SolitonProfile& s);

/// Max |F_phi + ((n-1)/phi - mu_eval) F - (n - phi)| along the profile, i.e.
/// the reduced second-order equation written in phi. mu_eval defaults to
/// the profile's own mu.
double reduction_residual(const SolitonProfile& s, std::optional<double> mu_eval = std::nullopt);

enum class SolitonClass { CompleteShrinker, FiniteVolume, Incomplete, TwoZeros };

const char* to_string(SolitonClass c);

struct Classification {
  SolitonClass kind = SolitonClass::CompleteShrinker;
  std::vector<FZero> zeros;
  std::string witness_name;
  double witness = 0.0;
  double phi_sup = 0.0;             // sup of phi along the profile or trapping bound
  std::optional<double> blow_up_rho;
  std::string note;
};

/// Sorts (mu, nu) into the four regimes with a numerical witness each;
/// mu = 0 (the Kahler-Einstein case) is refused.
Classification classify(const SolitonParams& p);

/// u = integral of phi d rho along the profile, u(rho_0) = 0.
std::vector<double> soliton_potential(const SolitonProfile& s);

struct KEIndicator {
  std::vector<double> Q;
  std::vector<double> dQ;  // analytic: (n-1)F/phi + F_phi + phi - n
  double max_abs_dQ = 0.0;
};

/// Q = -n rho + (n-1) log phi + log phi' + u.
KEIndicator ke_indicator(const SolitonProfile& s, std::span<const double> u);

/// Half the integral of sqrt(F) d rho between two phi values, computed as
/// the phi-integral of 1/(2 sqrt F).
double soliton_distance(const SolitonParams& p, double phi0, double phi1);

}  // namespace calabi
