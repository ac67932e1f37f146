#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "calabi/profile.hpp"

namespace calabi {

struct FlowState {
  double t = 0.0;
  double T = 0.0;
  CalabiProfile profile;

  [[nodiscard]] int n() const { return profile.n(); }
  [[nodiscard]] double tau() const { return T - t; }
};

double singular_time(double a0, int n);

/// (a0 - (n-1)t, b0 - (n+1)t); throws time-range for t >= T.
KahlerClass predicted_class(const KahlerClass& class0, int n, double t);

/// log u'' + (n-1) log u' - n rho at every node.
std::vector<double> rhs(const FlowState& state);

struct StepOptions {
  double newton_tolerance = 1e-10;
  int max_newton_iterations = 30;
  /// Local Richardson extrapolation from one full and two half steps.
  bool extrapolate = false;
};

struct StepInfo {
  int newton_iterations = 0;
  double residual = 0.0;
};

/// One backward-Euler step of the scalar flow with the reference term moved
/// to the class at t + dt. Throws step-failure on Newton breakdown and
/// blow-up when the result is not a valid profile.
FlowState step(const FlowState& state, double dt, const StepOptions& opts = {}, StepInfo* info = nullptr);

/// Heun's method on the same discretisation; only stable for tiny dt.
FlowState step_explicit_rk2(const FlowState& state, double dt);

/// Moves the end values and end slopes of psi into the additive gauge and
/// the edge terms, so psi and psi' vanish at both ends.
CalabiProfile regauge(const CalabiProfile& p);

struct FlowConfig {
  int n = 2;
  double a0 = 1.0;
  double b0 = 4.0;
  double L = 20.0;
  std::size_t N = 2049;
  double eps_stop = 1e-2;
  double cfl = 0.01;
  double dt_initial = 0.0;  // 0: cfl * T
  double dt_min_fraction = 1e-12;
  double fixed_dt = 0.0;  // > 0: constant steps (shortened to land on checkpoints), no adaptivity
  std::vector<double> checkpoints;  // explicit times
  int geometric_k_max = 0;          // adds T(1 - 2^-k), k = 1..k_max
  bool allow_collapse = false;
  bool extrapolate = true;
};

struct StepStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t newton_iterations = 0;
  double dt_min = 0.0;
  double dt_max = 0.0;
  std::vector<double> dropped_checkpoints;  // beyond t_stop
};

struct FlowTrajectory {
  FlowConfig config;
  std::vector<FlowState> checkpoints;
  StepStats stats;
  bool aborted = false;
  std::string diagnosis;
};

/// All checkpoint times of a run: 0, the configured ones below t_stop, and
/// t_stop itself, sorted and deduplicated.
std::vector<double> checkpoint_schedule(const FlowConfig& config, std::vector<double>* dropped = nullptr);

double stop_time(const FlowConfig& config);

FlowTrajectory run(const FlowConfig& config);

}  // namespace calabi
