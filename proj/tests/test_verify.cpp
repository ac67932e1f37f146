#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "calabi/errors.hpp"
#include "calabi/flow.hpp"
#include "calabi/geometry.hpp"
#include "calabi/verify.hpp"

using namespace calabi;

namespace {

FlowState reference_state(std::size_t N = 2049) { return FlowState{0.0, 1.0, make_reference_profile(2, {1.0, 4.0}, 20.0, N)}; }

const CheckEntry& entry(const std::vector<CheckEntry>& v, const std::string& name) {
  auto it = std::find_if(v.begin(), v.end(), [&](const CheckEntry& e) { return e.check == name; });
  REQUIRE(it != v.end());
  return *it;
}

bool fails(const VerificationReport& r, const std::string& name) {
  const auto f = r.failing_checks();
  return std::find(f.begin(), f.end(), name) != f.end();
}

// short run carrying two equally spaced triples of checkpoints
const FlowTrajectory& short_run() {
  static const FlowTrajectory traj = [] {
    FlowConfig c;
    c.N = 513;
    c.eps_stop = 0.87;
    c.checkpoints = {0.1, 0.11, 0.12};
    return run(c);
  }();
  return traj;
}

}  // namespace

TEST_CASE("slice of the reference profile") {
  const auto st = reference_state();
  const auto s = make_slice(st);
  CHECK(s.n == 2);
  CHECK(s.tau == 1.0);
  REQUIRE(s.rho.size() == st.profile.size());
  const std::size_t c = s.rho.size() / 2;
  CHECK(s.u1[c] == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(s.u2[c] == doctest::Approx(0.75).epsilon(1e-10));
  CHECK(std::abs(s.u3[c]) <= 1e-10);
  CHECK(s.above_a[c] == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(s.below_b[c] == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(s.band[c]);
  CHECK_FALSE(s.band.front());
  CHECK_FALSE(s.band.back());
}

TEST_CASE("calibration on the reference profile") {
  // u' - 1 = 3s, u'' = 3s(1-s): sup u' = 4, sup u''/u' = 1/3 at s = 1/3,
  // |u'''/u''| = |1 - 2s| -> 1, and H = -log 3 everywhere
  const auto cal = calibrate(reference_state());
  CHECK(cal.safety == kSafetyFactor);
  CHECK(cal.C1 == doctest::Approx(8.0).epsilon(1e-8));
  CHECK(cal.C2 == doctest::Approx(2.0 / 3.0).epsilon(1e-4));  // grid max near s = 1/3
  CHECK(cal.C3 == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(cal.C4 == doctest::Approx(4.0 / 3.0).epsilon(1e-3));
  CHECK(cal.H_inf0 == doctest::Approx(-std::log(3.0)).epsilon(1e-6));
  CHECK(cal.H_sup0 == doctest::Approx(-std::log(3.0)).epsilon(1e-6));
  CHECK(cal.width0 == 3.0);
  const auto H = pinching_quantity(make_slice(reference_state()));
  for (std::size_t i = 0; i < H.size(); i += 64) CHECK(std::abs(H[i] + std::log(3.0)) <= kLogTolerance);
}

TEST_CASE("checks pass on the reference slice") {
  const auto st = reference_state();
  const auto cal = calibrate(st);
  auto all = check_elementary_bounds(st, cal);
  for (auto& e : check_pinching(st, cal)) all.push_back(e);
  all.push_back(check_u4_claim(st, cal));
  for (const char* name : {"elementary.lower", "elementary.upper", "elementary.ratio2", "elementary.ratio3",
                           "pinching.floor", "pinching.ceiling", "pinching.edge", "u4_claim"}) {
    const auto& e = entry(all, name);
    CHECK_MESSAGE(e.pass, name);
    CHECK(e.margin >= -1e-12);  // lower bound is attained at the left end
    CHECK_FALSE(e.anchor.empty());
  }
  // floor is -log(2n (b0 - a0)) = -log 12
  const auto& floor = entry(all, "pinching.floor");
  CHECK(floor.margin == doctest::Approx(-std::log(3.0) + std::log(12.0)).epsilon(1e-5));
}

TEST_CASE("each slice check fails under its fault") {
  const auto st = reference_state();
  const auto cal = calibrate(st);
  const auto s = make_slice(st);

  SUBCASE("u' pushed below the class") {
    const auto f = inject(s, Fault::U1BelowClass);
    CHECK_FALSE(entry(check_elementary_bounds(f, cal), "elementary.lower").pass);
    const auto p = check_pinching(f, cal);
    CHECK(std::any_of(p.begin(), p.end(), [](const CheckEntry& e) { return !e.pass && e.hard; }));
  }
  SUBCASE("collapsed u''") {
    const auto f = inject(s, Fault::U2Collapsed);
    const auto& floor = entry(check_pinching(f, cal), "pinching.floor");
    CHECK_FALSE(floor.pass);
    CHECK(floor.margin < -3.0);
  }
  SUBCASE("enlarged u''''") {
    const auto f = inject(s, Fault::U4Doubled);
    CHECK_FALSE(check_u4_claim(f, cal).pass);
  }
  SUBCASE("trajectory faults do not apply to a slice") {
    CHECK_THROWS_AS(inject(s, Fault::CurvatureBurst), Error);
  }
}

TEST_CASE("right hand sides of the derivative equations") {
  const auto st = reference_state(801);
  const auto r = evolution_rhs(st.profile);
  const std::size_t c = 400;
  // u'''/u'' + u''/u' - 2 at rho = 0
  CHECK(r.d1[c] == doctest::Approx(0.0 + 0.75 / 2.5 - 2.0).epsilon(1e-9));
  // d1 is the rho-derivative of the scalar right hand side
  const auto scalar = rhs(st);
  const double h = st.profile.spacing();
  for (std::size_t i = 100; i + 100 < scalar.size(); i += 50) {
    const double fd = (scalar[i - 2] - 8 * scalar[i - 1] + 8 * scalar[i + 1] - scalar[i + 2]) / (12 * h);
    CHECK(std::abs(fd - r.d1[i]) <= 1e-5);
  }
}

TEST_CASE("evolution residuals need equally spaced checkpoints") {
  FlowConfig c;
  c.N = 257;
  c.eps_stop = 0.8;
  c.checkpoints = {0.05, 0.15};
  const auto traj = run(c);
  try {
    evolution_residuals(traj);
    FAIL("expected spacing");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Spacing);
  }
  // no triple: verification skips the evolution entries
  const auto rep = verify_trajectory(traj);
  CHECK(std::none_of(rep.entries.begin(), rep.entries.end(),
                     [](const CheckEntry& e) { return e.check.rfind("evolution.", 0) == 0; }));
}

TEST_CASE("verification of a short run") {
  const auto& traj = short_run();
  REQUIRE(traj.checkpoints.size() == 5);
  const auto res = evolution_residuals(traj);
  REQUIRE(res.size() == 2);
  CHECK(res[0].t_mid == doctest::Approx(0.11));
  CHECK(res[0].delta == doctest::Approx(0.01));

  const auto rep = verify_trajectory(traj);
  for (const auto& e : rep.entries) CHECK_MESSAGE(e.pass, e.check << " at t=" << e.t << ": " << e.detail);
  CHECK(rep.all_pass());
  CHECK_FALSE(rep.hard_failure());
  CHECK(rep.typeI_history.size() == traj.checkpoints.size());
  for (std::size_t i = 0; i < traj.checkpoints.size(); ++i) {
    CHECK(rep.typeI_history[i] == doctest::Approx(typeI_proxy(traj.checkpoints[i])).epsilon(1e-14));
  }
  const std::string js = to_json(rep);
  CHECK(js.find("\"anchor_table\"") != std::string::npos);
  CHECK(js.find("pinching.edge") != std::string::npos);

  SUBCASE("curvature burst") {
    const auto bad = verify_trajectory(inject(traj, Fault::CurvatureBurst));
    CHECK(fails(bad, "typeI.proxy"));
    CHECK_FALSE(bad.all_pass());
  }
  SUBCASE("perturbed checkpoint") {
    const auto bad = verify_trajectory(inject(traj, Fault::CheckpointPerturbed));
    CHECK(fails(bad, "evolution.u1"));
  }
}

TEST_CASE("type-I proxy of the reference profile") {
  // tau = 1 and the band sup of |R|, |lam_base|, |lam_fiber|
  const auto st = reference_state();
  const auto d = compute_diagnostics(st.profile, 1.0);
  CHECK(typeI_proxy(st) == doctest::Approx(d.sup_curvature()).epsilon(1e-14));
  CHECK(typeI_proxy(st) >= 1.4666);  // R(0)
}

TEST_CASE("order of the evolution residuals") {
  FlowConfig base;
  base.L = 20.0;
  const auto study = evolution_order_study(base, 129, 0.008, 3, 0.048);
  REQUIRE(study.levels.size() == 3);
  REQUIRE(study.order1.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(study.order1[i] >= 1.8);
    CHECK(study.order2[i] >= 1.8);
    CHECK(study.order3[i] >= 1.8);
  }
  CHECK(study.levels[1].N == 257);
  CHECK(study.levels[1].dt == doctest::Approx(0.004));
}
