#pragma once

#include <vector>

#include "calabi/flow.hpp"
#include "calabi/soliton.hpp"

namespace calabi {

/// Checkpoint rescaled by 1/tau: phi = u'/tau, F = u''/tau, and F as a
/// monotone cubic Hermite function of phi with slopes u'''/u''.
struct RescaledProfile {
  double t = 0.0;
  double tau = 0.0;
  int n = 2;
  std::vector<double> rho, phi, F, dF;
  double phi_left_limit = 0.0;   // a_t / tau
  double phi_right_limit = 0.0;  // b_t / tau
  CalabiProfile scaled;          // u / tau on the same grid

  [[nodiscard]] double phi_min() const { return phi.front(); }
  [[nodiscard]] double phi_max() const { return phi.back(); }
  /// Throws window outside [phi_min, phi_max].
  [[nodiscard]] double F_at(double phi) const;
};

RescaledProfile rescale(const FlowState& state);

inline constexpr double kWindowGap = 1e-3;
inline constexpr std::size_t kWindowSamples = 512;

struct PhiWindow {
  double lo = 0.0;
  double hi = 0.0;
};

/// [n-1+gap, 2n]
PhiWindow default_window(int n, double gap = kWindowGap);

struct Discrepancy {
  PhiWindow requested;
  PhiWindow used;
  double D_sup = 0.0;
  double D_l2 = 0.0;  // root mean square over the samples
  double phi_at_sup = 0.0;
  std::vector<double> phi, F_flow, F_fik;
};

/// Compares on kWindowSamples equally spaced phi values in the requested
/// window clipped to both profiles. Throws window when the overlap is empty.
Discrepancy compare_to_fik(const RescaledProfile& r, const SolitonProfile& s, PhiWindow window);
Discrepancy compare_to_fik(const RescaledProfile& r, const SolitonProfile& s);

struct ConvergenceRow {
  int k = 0;
  double t = 0.0;
  double tau = 0.0;
  double typeI_proxy = 0.0;  // tau * sup curvature over the resolved band
  double sup_abs_R = 0.0;
  Discrepancy discrepancy;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  double decay_exponent = 0.0;  // least squares slope of log D against log tau
  double ratio = 0.0;           // D(last) / D(first)
  bool monotone = false;        // D(k+1) <= (1 + noise) D(k)
  double noise = 0.05;
  double max_typeI_proxy = 0.0;
};

/// Index k of a checkpoint at T(1 - 2^-k) (relative match 1e-12), or 0.
int geometric_index(const FlowState& s);

/// Rows for the geometric checkpoints with k >= 2. Needs at least 3 of them
/// (parameter error otherwise).
ConvergenceReport convergence_report(const FlowTrajectory& traj, const SolitonProfile& s, double noise = 0.05);

/// Least squares slope of log y against log x.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace calabi
