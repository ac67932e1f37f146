#pragma once

#include <string>
#include <vector>

#include "calabi/flow.hpp"

namespace calabi {

/// Version of the table of check anchors written into every output.
inline constexpr const char* kAnchorTableVersion = "anchors-1";

inline constexpr double kLogTolerance = 1e-6;  // absolute, on H
inline constexpr double kRelTolerance = 1e-4;
inline constexpr double kSafetyFactor = 2.0;
inline constexpr double kTypeISafetyFactor = 4.0;

struct CheckEntry {
  std::string check;
  std::string anchor;
  bool pass = false;
  bool hard = false;   // failure means the quantity is undefined
  double margin = 0.0; // worst margin (absolute on H, else relative); passes down to -tolerance
  double rho = 0.0;
  double t = 0.0;
  std::string detail;
};

struct VerificationReport {
  std::vector<CheckEntry> entries;
  std::vector<double> typeI_history;  // tau * sup curvature per checkpoint
  std::string note;

  [[nodiscard]] bool all_pass() const;
  [[nodiscard]] bool hard_failure() const;
  [[nodiscard]] std::vector<std::string> failing_checks() const;
};

/// Nodal data the checks read; built from a state and editable for fault
/// injection.
struct Slice {
  int n = 2;
  double t = 0.0;
  double tau = 0.0;
  KahlerClass cls;
  std::vector<double> rho, u1, u2, u3, u4, above_a, below_b;
  std::vector<bool> band;  // resolved band for fourth-order quantities
};

Slice make_slice(const FlowState& state);

struct Calibration {
  double safety = kSafetyFactor;
  double C1 = 0.0;  // bound on u'
  double C2 = 0.0;  // bound on u''/u'
  double C3 = 0.0;  // bound on |u'''/u''|
  double C4 = 0.0;  // constant of the fourth-derivative claim
  double H_inf0 = 0.0;
  double H_sup0 = 0.0;
  double width0 = 0.0;  // b0 - a0
};

/// Constants from the t = 0 slice times the safety factor.
Calibration calibrate(const Slice& initial, double safety = kSafetyFactor);
Calibration calibrate(const FlowState& initial, double safety = kSafetyFactor);

/// H = log u'' - log(u' - a_t) - log(b_t - u'); +inf/nan where undefined.
std::vector<double> pinching_quantity(const Slice& s);

/// Entries elementary.lower, elementary.upper, elementary.ratio2, elementary.ratio3.
std::vector<CheckEntry> check_elementary_bounds(const Slice& s, const Calibration& c);
/// Nodes averaged for the edge limit of e^H; u'' is ~1e-9 there and a
/// single node carries relative rounding noise near 1e-4.
inline constexpr std::size_t kEdgeNodes = 16;

/// Entries pinching.floor, pinching.ceiling, pinching.edge.
std::vector<CheckEntry> check_pinching(const Slice& s, const Calibration& c);
CheckEntry check_u4_claim(const Slice& s, const Calibration& c);

std::vector<CheckEntry> check_elementary_bounds(const FlowState& s, const Calibration& c);
std::vector<CheckEntry> check_pinching(const FlowState& s, const Calibration& c);
CheckEntry check_u4_claim(const FlowState& s, const Calibration& c);

/// Time derivatives of u', u'', u''' minus their right hand sides
///   u'_t   = u'''/u'' + (n-1) u''/u' - n
///   u''_t  = d/drho of the above, u'''_t likewise,
/// at every node.
struct EvolutionRhs {
  std::vector<double> d1, d2, d3;
};
EvolutionRhs evolution_rhs(const CalabiProfile& p);

inline constexpr double kMaxSpacingRatio = 0.05;

struct EvolutionResidual {
  double t_mid = 0.0;
  double delta = 0.0;
  double r1 = 0.0, r2 = 0.0, r3 = 0.0;  // max over the resolved band
  double scale1 = 0.0, scale2 = 0.0, scale3 = 0.0;  // max |rhs| there
};

/// Centered differences over every equally spaced triple of consecutive
/// checkpoints with delta <= max_ratio * (T - t_mid). Throws spacing when
/// there is none.
std::vector<EvolutionResidual> evolution_residuals(const FlowTrajectory& traj, double max_ratio = kMaxSpacingRatio);

/// Entries evolution.u1, evolution.u2, evolution.u3: residual relative to
/// max |rhs| at most `relative_tolerance`.
std::vector<CheckEntry> check_evolution_consistency(const FlowTrajectory& traj, double relative_tolerance = 1e-2);

struct OrderLevel {
  std::size_t N = 0;
  double dt = 0.0;
  EvolutionResidual residual;
};

struct OrderStudy {
  std::vector<OrderLevel> levels;
  std::vector<double> order1, order2, order3;  // log2 of successive residual ratios
};

/// Fixed-step runs with (dt, h), (dt/2, h/2), ... on [0, t_end] and a
/// checkpoint triple around t_end/2 with delta = 2 dt.
OrderStudy evolution_order_study(const FlowConfig& base, std::size_t N0, double dt0, int levels, double t_mid);

/// tau * max(|R|, |lam_base|, |lam_fiber|) over the resolved band.
double typeI_proxy(const FlowState& s);

/// typeI.proxy against 4x the first checkpoint's value, and typeI.raw_rate:
/// exponent of sup|R| against tau over the last `fit_points` checkpoints
/// must be -1 within `exponent_tolerance`.
std::vector<CheckEntry> check_typeI(const FlowTrajectory& traj, std::vector<double>* history = nullptr,
                                    std::size_t fit_points = 5, double exponent_tolerance = 0.1);

/// Per-checkpoint checks with constants calibrated on the first checkpoint,
/// the Type-I check, and evolution consistency when the trajectory carries
/// a suitable triple.
VerificationReport verify_trajectory(const FlowTrajectory& traj);

/// Fault injections used by tests and the CLI.
enum class Fault { U1BelowClass, U2Collapsed, U4Doubled, CurvatureBurst, CheckpointPerturbed };
Slice inject(Slice s, Fault f);
FlowTrajectory inject(FlowTrajectory traj, Fault f);

std::string to_json(const VerificationReport& r);

}  // namespace calabi
