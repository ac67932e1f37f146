#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "calabi/fd.hpp"

namespace calabi {

/// Cohomology coefficients of the class -a[D_0] + b[D_inf].
struct KahlerClass {
  double a = 0.0;
  double b = 0.0;

  [[nodiscard]] bool valid() const { return 0.0 < a && a < b; }
  [[nodiscard]] double width() const { return b - a; }
  /// Strict: a(n+1) = b(n-1) counts as collapsed.
  [[nodiscard]] bool non_collapsed(int n) const { return a * (n + 1) < b * (n - 1); }
};

/// Coefficients of the bounded edge terms added to the reference potential:
///   sigma * s + left * s(1 + c + c^2)/3 + right * s^3/3,  s = 1/(1+e^-rho), c = 1 - s.
/// `sigma` moves the right-end constant, `left` and `right` the exponential
/// rates with which u' approaches a and b.
struct EdgeTerms {
  double sigma = 0.0;
  double left = 0.0;
  double right = 0.0;

  bool operator==(const EdgeTerms&) const = default;
};

/// Analytic reference term a*rho + (b-a)*log(1+e^rho) + edge terms and its
/// derivatives at one point. `above_a` and `below_b` are u'-a and b-u' for
/// the reference term alone, computed without cancellation.
struct ReferenceJet {
  double value = 0.0;
  double d[6] = {};  // d[k] = k-th derivative, d[0] == value
  double above_a = 0.0;
  double below_b = 0.0;
};

ReferenceJet reference_jet(const KahlerClass& cls, const EdgeTerms& edge, double rho);

/// Value and derivatives 0..5 of the three edge basis functions at rho.
struct EdgeBasis {
  double sigma[6];
  double left[6];
  double right[6];
};
EdgeBasis edge_basis(double rho);

/// Calabi-symmetric potential u(rho) on the uniform grid [-L, L]:
///   u = a*rho + (b-a)*log(1+e^rho) + edge terms + psi.
/// The edge terms carry the end constants and exponential rates of u, so psi
/// stays small near both ends.
class CalabiProfile {
 public:
  CalabiProfile(int n, KahlerClass cls, double half_width, std::vector<double> psi, EdgeTerms edge = {});

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] const KahlerClass& kahler_class() const { return class_; }
  [[nodiscard]] double half_width() const { return half_width_; }
  [[nodiscard]] std::size_t size() const { return psi_.size(); }
  [[nodiscard]] double spacing() const { return spacing_; }
  [[nodiscard]] double rho(std::size_t i) const { return -half_width_ + spacing_ * static_cast<double>(i); }
  [[nodiscard]] std::vector<double> rho_grid() const;
  [[nodiscard]] std::span<const double> psi() const { return psi_; }
  [[nodiscard]] const EdgeTerms& edge_terms() const { return edge_; }
  [[nodiscard]] const fd::UniformStencils& stencils() const { return *stencils_; }

  [[nodiscard]] ReferenceJet reference(std::size_t i) const { return reference_jet(class_, edge_, rho(i)); }
  [[nodiscard]] double u(std::size_t i) const;
  [[nodiscard]] std::vector<double> u_values() const;

  /// k-th rho-derivative of u at every node (1 <= k <= 5).
  [[nodiscard]] std::vector<double> derivative(int order) const;
  [[nodiscard]] double derivative_at(int order, std::size_t i) const;
  /// Derivative of the correction psi alone.
  [[nodiscard]] double psi_derivative_at(int order, std::size_t i) const;

  /// u' - a and b - u' at every node, without cancellation near the ends.
  [[nodiscard]] std::vector<double> above_a() const;
  [[nodiscard]] std::vector<double> below_b() const;

  /// Same grid and dimension, new class/correction/edge terms.
  [[nodiscard]] CalabiProfile with(KahlerClass cls, std::vector<double> psi, EdgeTerms edge) const;

 private:
  int n_;
  KahlerClass class_;
  double half_width_;
  double spacing_;
  std::vector<double> psi_;
  EdgeTerms edge_;
  std::shared_ptr<const fd::UniformStencils> stencils_;
};

struct Derivatives {
  std::vector<double> u1, u2, u3, u4;
};

CalabiProfile make_reference_profile(int n, KahlerClass cls, double half_width, std::size_t size);

Derivatives derivatives(const CalabiProfile& p);

struct PointValue {
  double u = 0.0;
  double u1 = 0.0;
  double u2 = 0.0;
};

/// Exact reference term plus cubic Hermite interpolation of psi, psi', psi''.
/// u' is clamped to the bracket of its neighbouring node values.
PointValue interpolate(const CalabiProfile& p, double rho);

struct Violation {
  std::string invariant;
  std::size_t index = 0;
  double margin = 0.0;  // negative: by how much the invariant is broken
};

/// Default decay tolerance at the ends, relative to b - a.
inline constexpr double kDefaultEdgeTolerance = 1e-8;

std::vector<Violation> validate(const CalabiProfile& p, double edge_tolerance = kDefaultEdgeTolerance);

using Metadata = std::map<std::string, std::string>;

/// CSV with `#key=value` metadata lines then `rho,psi,u,u1,u2,u3,u4`.
void write_profile_csv(std::ostream& os, const CalabiProfile& p, const Metadata& extra = {});

struct LoadedProfile {
  CalabiProfile profile;
  Metadata metadata;
};

LoadedProfile read_profile_csv(std::istream& is);

}  // namespace calabi
