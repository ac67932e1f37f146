#include <cmath>
#include <sstream>

#include "doctest.h"

#include "calabi/errors.hpp"
#include "calabi/profile.hpp"

using namespace calabi;

namespace {

const KahlerClass kHeadline{1.0, 4.0};

double sech(double x) { return 1.0 / std::cosh(x); }

// psi = eps sech(rho) on top of the reference term
CalabiProfile bump_profile(std::size_t N, double eps = 0.05) {
  const double L = 20.0;
  std::vector<double> psi(N);
  const double h = 2 * L / static_cast<double>(N - 1);
  for (std::size_t i = 0; i < N; ++i) psi[i] = eps * sech(-L + h * static_cast<double>(i));
  return CalabiProfile(2, kHeadline, L, psi);
}

double bump_u2(double r, double eps = 0.05) {
  const double s = 1.0 / (1.0 + std::exp(-r));
  return 3.0 * s * (1 - s) + eps * sech(r) * (1 - 2 * sech(r) * sech(r));
}

}  // namespace

TEST_CASE("reference profile values at the centre and the left edge") {
  const auto p = make_reference_profile(2, kHeadline, 20.0, 4001);
  const std::size_t c = 2000;
  CHECK(p.rho(c) == 0.0);
  CHECK(p.derivative_at(1, c) == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(p.derivative_at(2, c) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(std::abs(p.derivative_at(3, c)) <= 1e-14);
  CHECK(p.derivative_at(4, c) == doctest::Approx(-0.375).epsilon(1e-12));
  CHECK(p.above_a()[0] <= 3 * std::exp(-20.0));
  CHECK(p.above_a()[0] > 0.0);
  CHECK(validate(p).empty());
}

TEST_CASE("reference pinching ratio is constant") {
  const auto p = make_reference_profile(3, {2.0, 5.0}, 20.0, 801);
  const auto u2 = p.derivative(2);
  const auto lo = p.above_a();
  const auto hi = p.below_b();
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(u2[i] / (lo[i] * hi[i]) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("u'' converges at fourth order under refinement") {
  auto err = [](std::size_t N) {
    const auto p = bump_profile(N);
    double e = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) e = std::max(e, std::abs(p.derivative_at(2, i) - bump_u2(p.rho(i))));
    return e;
  };
  const double e1 = err(257), e2 = err(513);
  CHECK(e1 / e2 >= 12.0);
}

TEST_CASE("derivatives of a polynomial in e^rho") {
  // psi = e^rho/10 + e^{2 rho}/50 + e^{3 rho}/200. Orders 1-2 on a fine grid,
  // 3-4 on a coarser one: rounding grows like eps/h^k and wins first there
  auto check = [](std::size_t N, int k_lo, int k_hi) {
    const double tol[5] = {0, 1e-10, 1e-9, 1e-6, 1e-4};
    const double L = 2.0;
    const double h = 2 * L / static_cast<double>(N - 1);
    std::vector<double> psi(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double e = std::exp(-L + h * static_cast<double>(i));
      psi[i] = e / 10 + e * e / 50 + e * e * e / 200;
    }
    const CalabiProfile p(2, kHeadline, L, psi);
    for (std::size_t i = N / 10; i + N / 10 < N; i += N / 40) {
      const double e = std::exp(p.rho(i));
      for (int k = k_lo; k <= k_hi; ++k) {
        const double exact =
            p.reference(i).d[k] + e / 10 + std::pow(2.0, k) * e * e / 50 + std::pow(3.0, k) * e * e * e / 200;
        CHECK(std::abs(p.derivative_at(k, i) - exact) <= tol[k] * std::abs(exact));
      }
    }
  };
  check(2001, 1, 2);
  check(401, 3, 4);
}

TEST_CASE("interpolation") {
  const auto p = make_reference_profile(2, kHeadline, 20.0, 4001);
  SUBCASE("nodes are reproduced") {
    const auto v = interpolate(p, p.rho(1234));
    CHECK(v.u == doctest::Approx(p.u(1234)).epsilon(1e-14));
    CHECK(v.u1 == doctest::Approx(p.derivative_at(1, 1234)).epsilon(1e-14));
    CHECK(v.u2 == doctest::Approx(p.derivative_at(2, 1234)).epsilon(1e-14));
  }
  SUBCASE("rho = log 3") {
    CHECK(interpolate(p, std::log(3.0)).u1 == doctest::Approx(1.0 + 3.0 * 0.75).epsilon(1e-14));
  }
  SUBCASE("midpoints of a perturbed profile") {
    const auto q = bump_profile(801);
    const double h = q.spacing();
    double e = 0.0;
    for (std::size_t i = 100; i + 100 < q.size(); i += 7) {
      const double r = q.rho(i) + 0.5 * h;
      const double exact = 1.0 * r + 3.0 * std::log1p(std::exp(r)) + 0.05 * sech(r);
      e = std::max(e, std::abs(interpolate(q, r).u - exact));
    }
    CHECK(e <= h * h * h * h);
  }
  SUBCASE("outside the grid") {
    CHECK_THROWS_AS(interpolate(p, 20.5), Error);
    try {
      interpolate(p, -21.0);
    } catch (const Error& err) {
      CHECK(err.kind() == ErrorKind::Domain);
    }
  }
}

TEST_CASE("validate reports constructed violations") {
  const std::size_t N = 801;
  const auto ref = make_reference_profile(2, kHeadline, 20.0, N);
  const double h = ref.spacing();
  SUBCASE("negative u'' at the centre") {
    std::vector<double> psi(N, 0.0);
    psi[400] = h * h;
    const auto v = validate(ref.with(kHeadline, psi, {}));
    REQUIRE(v.size() == 1);
    CHECK(v[0].invariant == "u2-positive");
    CHECK(v[0].index == 400);
    CHECK(v[0].margin < 0.0);
  }
  SUBCASE("psi(-L) = 1") {
    std::vector<double> psi(N, 0.0);
    psi[0] = 1.0;
    const auto v = validate(ref.with(kHeadline, psi, {}));
    bool found = false;
    for (const auto& x : v) found = found || (x.invariant == "psi-decay-left" && x.index == 0);
    CHECK(found);
  }
}

TEST_CASE("construction errors") {
  auto kind = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind([] { make_reference_profile(2, {4.0, 1.0}, 20.0, 801); }) == ErrorKind::ClassViolation);
  CHECK(kind([] { make_reference_profile(2, {1.0, 4.0}, 20.0, 800); }) == ErrorKind::Parameter);
  CHECK(kind([] { make_reference_profile(2, {1.0, 4.0}, 5.0, 801); }) == ErrorKind::Parameter);
  CHECK(kind([] { make_reference_profile(1, {1.0, 4.0}, 20.0, 801); }) == ErrorKind::Parameter);
}

TEST_CASE("CSV round trip") {
  const auto p = bump_profile(129);
  std::stringstream ss;
  write_profile_csv(ss, p, {{"t", "0.25"}});
  const auto back = read_profile_csv(ss);
  CHECK(back.metadata.at("t") == "0.25");
  CHECK(back.profile.size() == p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(back.profile.psi()[i] == p.psi()[i]);
    CHECK(back.profile.derivative_at(3, i) == p.derivative_at(3, i));
  }
  std::stringstream bad("#n=2\nrho,psi,u\n0,abc,1\n");
  CHECK_THROWS_AS(read_profile_csv(bad), Error);
}
