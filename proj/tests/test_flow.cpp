#include <cmath>

#include "doctest.h"

#include "calabi/errors.hpp"
#include "calabi/flow.hpp"
#include "calabi/geometry.hpp"

using namespace calabi;

namespace {

FlowState initial(std::size_t N = 257, double L = 20.0, int n = 2, KahlerClass cls = {1.0, 4.0}) {
  return FlowState{0.0, singular_time(cls.a, n), make_reference_profile(n, cls, L, N)};
}

double max_u_diff(const CalabiProfile& p, const CalabiProfile& q) {
  double e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) e = std::max(e, std::abs(p.derivative_at(1, i) - q.derivative_at(1, i)));
  return e;
}

FlowConfig small_config() {
  FlowConfig c;
  c.N = 257;
  c.eps_stop = 0.5;
  return c;
}

ErrorKind kind_of(const FlowConfig& c) {
  try {
    run(c);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("singular time and class evolution") {
  CHECK(singular_time(1.0, 2) == 1.0);
  CHECK(singular_time(2.0, 3) == 1.0);
  CHECK(singular_time(1.5, 4) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(singular_time(0.0, 2), Error);
  CHECK_THROWS_AS(singular_time(1.0, 1), Error);

  const auto c = predicted_class({1.0, 4.0}, 2, 0.5);
  CHECK(c.a == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.b == doctest::Approx(2.5).epsilon(1e-15));
  const auto c3 = predicted_class({2.0, 7.0}, 3, 0.25);
  CHECK(c3.a == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(c3.b == doctest::Approx(6.0).epsilon(1e-15));
  try {
    predicted_class({1.0, 4.0}, 2, 1.0);
    FAIL("expected time-range");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TimeRange);
  }
}

TEST_CASE("right hand side of the scalar flow") {
  const auto s = initial(801);
  const auto r = rhs(s);
  const std::size_t c = 400;
  REQUIRE(std::abs(s.profile.rho(c)) < 1e-14);
  // u' = 2.5 and u'' = 0.75 at rho = 0
  CHECK(r[c] == doctest::Approx(std::log(0.75) + std::log(2.5)).epsilon(1e-12));
}

TEST_CASE("regauge moves end data out of psi without changing u") {
  const auto s = initial(257);
  std::vector<double> psi(s.profile.size());
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double r = s.profile.rho(i);
    const auto b = edge_basis(r);
    psi[i] = 0.3 + 0.05 * b.sigma[0] + 0.02 * b.left[0] - 0.03 * b.right[0] + 0.2 * std::exp(-r * r / 4);
  }
  const auto p = s.profile.with(s.profile.kahler_class(), psi, {});
  const auto q = regauge(p);
  const std::size_t last = q.size() - 1;
  CHECK(std::abs(q.psi()[0]) <= 1e-12);
  CHECK(std::abs(q.psi()[last]) <= 1e-12);
  CHECK(std::abs(q.psi_derivative_at(1, 0)) <= 1e-9);
  CHECK(std::abs(q.psi_derivative_at(1, last)) <= 1e-9);
  CHECK(q.edge_terms().sigma == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(q.edge_terms().left == doctest::Approx(0.02).epsilon(1e-6));
  CHECK(q.edge_terms().right == doctest::Approx(-0.03).epsilon(1e-6));
  for (std::size_t i = 0; i < q.size(); i += 16) {
    CHECK(std::abs(q.derivative_at(2, i) - p.derivative_at(2, i)) <= 1e-6);
    CHECK(std::abs(q.u(i) - q.u(0) - (p.u(i) - p.u(0))) <= 1e-9);
  }
}

TEST_CASE("one implicit step") {
  const auto s = initial(257);
  StepInfo info;
  const auto t1 = step(s, 0.01, {}, &info);
  CHECK(t1.t == doctest::Approx(0.01));
  const auto cls = predicted_class({1.0, 4.0}, 2, 0.01);
  CHECK(t1.profile.kahler_class().a == doctest::Approx(cls.a).epsilon(1e-14));
  CHECK(t1.profile.kahler_class().b == doctest::Approx(cls.b).epsilon(1e-14));
  CHECK(info.newton_iterations >= 1);
  CHECK(info.residual <= 1e-9);
  CHECK(validate(t1.profile).empty());

  SUBCASE("edge slopes follow the class") {
    const auto a = t1.profile.above_a();
    const auto b = t1.profile.below_b();
    CHECK(std::abs(a.front()) <= 1e-3 * 3.0);
    CHECK(std::abs(b.back()) <= 1e-3 * 3.0);
  }

  SUBCASE("local error is second order in dt") {
    // full step against two half steps, plain backward Euler
    auto split = [&](double dt) {
      const auto full = step(s, dt);
      const auto half = step(step(s, dt / 2), dt / 2);
      return max_u_diff(full.profile, half.profile);
    };
    const double e1 = split(0.004), e2 = split(0.002);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
  }

  SUBCASE("agrees with the explicit scheme for small steps") {
    // short grid: the explicit limit scales with min u'' h^2
    const auto s6 = initial(129, 10.0);
    const double dt = 0.002;
    const auto implicit = step(s6, dt, StepOptions{1e-12, 30, true});
    FlowState e = s6;
    for (int k = 0; k < 4000; ++k) e = step_explicit_rk2(e, dt / 4000);
    CHECK(max_u_diff(implicit.profile, e.profile) <= 1e-6);
  }

  SUBCASE("bad steps") {
    CHECK_THROWS_AS(step(s, 0.0), Error);
    try {
      step(s, 1.5);
      FAIL("expected time-range");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TimeRange);
    }
  }
}

TEST_CASE("checkpoint schedule") {
  FlowConfig c;
  c.eps_stop = 0.01;
  c.geometric_k_max = 3;
  c.checkpoints = {0.3, 0.5, 0.995};
  std::vector<double> dropped;
  const auto s = checkpoint_schedule(c, &dropped);
  const std::vector<double> want = {0.0, 0.3, 0.5, 0.75, 0.875, 0.99};
  REQUIRE(s.size() == want.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(want[i]).epsilon(1e-14));
  REQUIRE(dropped.size() == 1);
  CHECK(dropped[0] == 0.995);
  CHECK(stop_time(c) == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("refused and invalid configurations") {
  FlowConfig c = small_config();
  c.a0 = 3.0;  // 3 * 3 > 4
  CHECK(kind_of(c) == ErrorKind::Refused);
  c.a0 = 2.0;
  c.b0 = 6.0;  // equality counts as collapse
  CHECK(kind_of(c) == ErrorKind::Refused);
  c = small_config();
  c.n = 3;
  c.a0 = 1.0;
  c.b0 = 2.0;  // 1 * 4 == 2 * 2
  CHECK(kind_of(c) == ErrorKind::Refused);
  c = small_config();
  c.b0 = 0.5;
  CHECK(kind_of(c) == ErrorKind::ClassViolation);
  c = small_config();
  c.eps_stop = 1.0;
  CHECK(kind_of(c) == ErrorKind::Parameter);
  c = small_config();
  c.fixed_dt = -1.0;
  CHECK(kind_of(c) == ErrorKind::Parameter);
}

TEST_CASE("short run") {
  FlowConfig c = small_config();
  c.checkpoints = {0.1, 0.2, 0.3, 0.4};
  const auto traj = run(c);
  REQUIRE_FALSE(traj.aborted);
  REQUIRE(traj.checkpoints.size() == 6);
  double last_volume = 1e300;
  for (const auto& s : traj.checkpoints) {
    const auto cls = predicted_class({1.0, 4.0}, 2, s.t);
    CHECK(s.profile.kahler_class().a == doctest::Approx(cls.a).epsilon(1e-12));
    CHECK(s.profile.kahler_class().b == doctest::Approx(cls.b).epsilon(1e-12));
    const double w = cls.b - cls.a;
    CHECK(std::abs(s.profile.above_a().front()) <= 1e-3 * w);
    CHECK(std::abs(s.profile.below_b().back()) <= 1e-3 * w);
    CHECK(validate(s.profile).empty());
    // total volume shrinks with the class
    const auto v = tube_volume(s.profile, 5.0);
    CHECK(v.abs_diff <= 1e-6 * v.closed_form);
    CHECK(v.closed_form < last_volume);
    last_volume = v.closed_form;
  }
  CHECK(traj.stats.accepted > 0);
}

TEST_CASE("fixed steps land on the checkpoints") {
  FlowConfig c = small_config();
  c.N = 129;
  c.eps_stop = 0.9;
  c.fixed_dt = 0.02;
  c.checkpoints = {0.05};
  const auto traj = run(c);
  REQUIRE(traj.checkpoints.size() == 3);
  CHECK(traj.checkpoints[1].t == doctest::Approx(0.05).epsilon(1e-14));
  // [0, 0.05] in 3 steps, [0.05, 0.1] in 3 steps
  CHECK(traj.stats.accepted == 6);
  CHECK(traj.stats.rejected == 0);
}
