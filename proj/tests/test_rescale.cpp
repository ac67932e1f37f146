#include <cmath>

#include "doctest.h"

#include "calabi/errors.hpp"
#include "calabi/flow.hpp"
#include "calabi/geometry.hpp"
#include "calabi/rescale.hpp"

using namespace calabi;

namespace {

// Reference potential for class (a, b) at time t of a run with T = 1. On it
// u' - a = (b - a) s and u'' = (b - a) s (1 - s), so in rescaled variables
// F(phi) = (tau phi - a)(b - tau phi) / ((b - a) tau).
FlowState reference_state(double t, std::size_t N = 2049) {
  const auto cls = predicted_class({1.0, 4.0}, 2, t);
  return FlowState{t, 1.0, make_reference_profile(2, cls, 20.0, N)};
}

double reference_F(double phi, double t) {
  const auto cls = predicted_class({1.0, 4.0}, 2, t);
  const double tau = 1.0 - t;
  return (tau * phi - cls.a) * (cls.b - tau * phi) / (cls.width() * tau);
}

}  // namespace

TEST_CASE("rescaled reference profile") {
  for (double t : {0.0, 0.5, 0.875}) {
    const auto r = rescale(reference_state(t));
    const auto cls = predicted_class({1.0, 4.0}, 2, t);
    const double tau = 1.0 - t;
    CHECK(r.tau == doctest::Approx(tau).epsilon(1e-15));
    CHECK(r.phi_left_limit == doctest::Approx(cls.a / tau).epsilon(1e-15));
    CHECK(r.phi_right_limit == doctest::Approx(cls.b / tau).epsilon(1e-15));
    // left end pinned to a_t / tau
    CHECK(std::abs(r.phi_min() - r.phi_left_limit) <= 1e-6);
    for (std::size_t i = 1; i < r.phi.size(); ++i) CHECK(r.phi[i] > r.phi[i - 1]);
    for (double x : {1.2, 2.0, 3.0}) {
      const double phi = r.phi_left_limit + x * (r.phi_right_limit - r.phi_left_limit) / 4;
      CHECK(std::abs(r.F_at(phi) - reference_F(phi, t)) <= 1e-6);
    }
    // the scaled potential carries the scaled class and u''/tau
    CHECK(r.scaled.kahler_class().a == doctest::Approx(cls.a / tau).epsilon(1e-15));
    const std::size_t mid = r.scaled.size() / 2;
    CHECK(r.scaled.derivative_at(2, mid) == doctest::Approx(reference_state(t).profile.derivative_at(2, mid) / tau).epsilon(1e-12));
  }
}

TEST_CASE("volume scales like tau^n") {
  const auto s = reference_state(0.5);
  const auto r = rescale(s);
  const auto v = tube_volume(s.profile, 1.0);
  const auto w = tube_volume(r.scaled, 1.0);
  CHECK(w.closed_form == doctest::Approx(v.closed_form / (0.5 * 0.5)).epsilon(1e-12));
}

TEST_CASE("window handling") {
  const auto r = rescale(reference_state(0.0));
  CHECK_THROWS_AS((void)r.F_at(0.5), Error);
  CHECK_THROWS_AS((void)r.F_at(4.5), Error);
  const auto sol = canonical_profile(2);

  SUBCASE("default window") {
    const auto w = default_window(2);
    CHECK(w.lo == doctest::Approx(1.001).epsilon(1e-15));
    CHECK(w.hi == 4.0);
  }
  SUBCASE("samples and sup") {
    const auto d = compare_to_fik(r, sol);
    REQUIRE(d.phi.size() == kWindowSamples);
    CHECK(d.phi.front() == doctest::Approx(1.001).epsilon(1e-12));
    CHECK(d.phi.back() <= 4.0);
    double sup = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < d.phi.size(); ++i) {
      const double x = d.phi[i];
      CHECK(d.F_fik[i] == doctest::Approx(F_closed_form(x, sol.params)).epsilon(1e-14));
      CHECK(std::abs(d.F_flow[i] - reference_F(x, 0.0)) <= 1e-6);
      const double e = std::abs(d.F_flow[i] - d.F_fik[i]);
      sup = std::max(sup, e);
      sq += e * e;
    }
    CHECK(d.D_sup == doctest::Approx(sup).epsilon(1e-14));
    CHECK(d.D_l2 == doctest::Approx(std::sqrt(sq / kWindowSamples)).epsilon(1e-12));
  }
  SUBCASE("clipping") {
    const auto d = compare_to_fik(r, sol, {0.0, 100.0});
    CHECK(d.used.lo == std::max(r.phi_min(), sol.phi.front()));
    CHECK(d.used.hi == doctest::Approx(r.phi_max()).epsilon(1e-15));
  }
  SUBCASE("empty overlap") {
    try {
      compare_to_fik(r, sol, {60.0, 70.0});
      FAIL("expected window");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Window);
    }
  }
  SUBCASE("at the singular time") {
    auto s = reference_state(0.0);
    s.t = 1.0;
    CHECK_THROWS_AS(rescale(s), Error);
  }
}

TEST_CASE("geometric checkpoints") {
  auto s = reference_state(0.0, 129);
  for (int k = 1; k <= 12; ++k) {
    s.t = 1.0 - std::ldexp(1.0, -k);
    CHECK(geometric_index(s) == k);
  }
  s.t = 0.3;
  CHECK(geometric_index(s) == 0);
  s.t = 0.0;
  CHECK(geometric_index(s) == 0);
}

TEST_CASE("log-log slope") {
  std::vector<double> x, y;
  for (double v : {0.5, 0.25, 0.125, 0.0625}) {
    x.push_back(v);
    y.push_back(3.0 * std::pow(v, -1.5));
  }
  CHECK(log_log_slope(x, y) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK_THROWS_AS(log_log_slope({1.0}, {1.0}), Error);
}

TEST_CASE("convergence report on a coarse run") {
  FlowConfig c;
  c.N = 513;
  c.geometric_k_max = 4;
  c.eps_stop = 0.75 * std::ldexp(1.0, -4);
  const auto traj = run(c);
  const auto sol = canonical_profile(2);
  const auto rep = convergence_report(traj, sol);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows.front().k == 2);
  CHECK(rep.rows.back().k == 4);
  CHECK(rep.ratio == doctest::Approx(rep.rows.back().discrepancy.D_sup / rep.rows.front().discrepancy.D_sup));
  CHECK(rep.monotone);
  CHECK(rep.ratio < 1.0);
  for (const auto& row : rep.rows) {
    CHECK(row.tau == doctest::Approx(std::ldexp(1.0, -row.k)).epsilon(1e-12));
    CHECK(row.typeI_proxy > 0.0);
    CHECK(row.sup_abs_R * row.tau == doctest::Approx(row.typeI_proxy).epsilon(0.5));
  }

  FlowTrajectory short_traj = traj;
  short_traj.checkpoints.erase(short_traj.checkpoints.begin() + 3, short_traj.checkpoints.end());  // 0, T/2, 3T/4
  try {
    convergence_report(short_traj, sol);
    FAIL("expected parameter");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parameter);
  }
}
