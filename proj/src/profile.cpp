#include "calabi/profile.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "calabi/errors.hpp"

namespace calabi {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

std::shared_ptr<const fd::UniformStencils> make_stencils(std::size_t size, double spacing) {
  return std::make_shared<const fd::UniformStencils>(size, spacing);
}

std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace

namespace {

// Terms coef * s^i * c^j with s = sigma(rho), c = 1 - s. Since s' = sc and
// c' = -sc, derivatives stay in this form and never cancel near the ends.
struct Monomial {
  double coef;
  int i;
  int j;
};
using Poly = std::vector<Monomial>;

Poly differentiate(const Poly& p) {
  Poly out;
  for (const auto& m : p) {
    if (m.i > 0) out.push_back({m.coef * m.i, m.i, m.j + 1});
    if (m.j > 0) out.push_back({-m.coef * m.j, m.i + 1, m.j});
  }
  Poly merged;
  for (const auto& m : out) {
    auto it = std::find_if(merged.begin(), merged.end(), [&](const Monomial& x) { return x.i == m.i && x.j == m.j; });
    if (it == merged.end()) merged.push_back(m);
    else it->coef += m.coef;
  }
  return merged;
}

struct DerivativeTables {
  Poly sigma[6];  // sigma^(k), k = 0..5
  Poly left[6];   // k = 1..5 used
  Poly right[6];
  DerivativeTables() {
    sigma[0] = {{1.0, 1, 0}};
    left[1] = {{1.0, 1, 3}};
    right[1] = {{1.0, 3, 1}};
    for (int k = 1; k < 6; ++k) sigma[k] = differentiate(sigma[k - 1]);
    for (int k = 2; k < 6; ++k) {
      left[k] = differentiate(left[k - 1]);
      right[k] = differentiate(right[k - 1]);
    }
  }
};

const DerivativeTables& tables() {
  static const DerivativeTables t;
  return t;
}

double evaluate(const Poly& p, const double* sp, const double* cp) {
  double acc = 0.0;
  for (const auto& m : p) acc += m.coef * sp[m.i] * cp[m.j];
  return acc;
}

}  // namespace

EdgeBasis edge_basis(double rho) {
  const double s = 1.0 / (1.0 + std::exp(-rho));
  const double c = 1.0 / (1.0 + std::exp(rho));
  double sp[10];
  double cp[10];
  sp[0] = cp[0] = 1.0;
  for (int k = 1; k < 10; ++k) {
    sp[k] = sp[k - 1] * s;
    cp[k] = cp[k - 1] * c;
  }
  const auto& t = tables();
  EdgeBasis e;
  e.sigma[0] = s;
  e.left[0] = s * (1.0 + c + c * c) / 3.0;
  e.right[0] = sp[3] / 3.0;
  for (int k = 1; k < 6; ++k) {
    e.sigma[k] = evaluate(t.sigma[k], sp, cp);
    e.left[k] = evaluate(t.left[k], sp, cp);
    e.right[k] = evaluate(t.right[k], sp, cp);
  }
  return e;
}

ReferenceJet reference_jet(const KahlerClass& cls, const EdgeTerms& edge, double rho) {
  const auto e = edge_basis(rho);
  const double width = cls.b - cls.a;
  auto extra = [&](int k) { return edge.sigma * e.sigma[k] + edge.left * e.left[k] + edge.right * e.right[k]; };

  ReferenceJet jet;
  jet.d[0] = cls.a * rho + width * softplus(rho) + extra(0);
  // (log(1+e^rho))^(k) = sigma^(k-1)
  for (int k = 1; k <= 5; ++k) jet.d[k] = width * e.sigma[k - 1] + extra(k);
  jet.d[1] = cls.a + jet.d[1];
  jet.value = jet.d[0];
  const double c = 1.0 / (1.0 + std::exp(rho));
  jet.above_a = width * e.sigma[0] + extra(1);
  jet.below_b = width * c - extra(1);
  return jet;
}

CalabiProfile::CalabiProfile(int n, KahlerClass cls, double half_width, std::vector<double> psi, EdgeTerms edge)
    : n_(n), class_(cls), half_width_(half_width), psi_(std::move(psi)), edge_(edge) {
  if (n < 2) throw Error(ErrorKind::Parameter, "dimension n must be >= 2");
  if (!cls.valid()) throw Error(ErrorKind::ClassViolation, "Kahler class needs 0 < a < b");
  if (!(half_width > 0.0)) throw Error(ErrorKind::Parameter, "half width L must be positive");
  if (psi_.size() % 2 == 0) throw Error(ErrorKind::Parameter, "grid size N must be odd");
  if (psi_.size() < 65) throw Error(ErrorKind::Parameter, "grid size N must be at least 65");
  spacing_ = 2.0 * half_width / static_cast<double>(psi_.size() - 1);
  stencils_ = make_stencils(psi_.size(), spacing_);
}

CalabiProfile CalabiProfile::with(KahlerClass cls, std::vector<double> psi, EdgeTerms edge) const {
  if (psi.size() != psi_.size()) throw Error(ErrorKind::Parameter, "correction size does not match grid");
  if (!cls.valid()) throw Error(ErrorKind::ClassViolation, "Kahler class needs 0 < a < b");
  CalabiProfile out = *this;
  out.class_ = cls;
  out.psi_ = std::move(psi);
  out.edge_ = edge;
  return out;
}

std::vector<double> CalabiProfile::rho_grid() const {
  std::vector<double> r(size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = rho(i);
  return r;
}

double CalabiProfile::u(std::size_t i) const { return reference(i).value + psi_[i]; }

std::vector<double> CalabiProfile::u_values() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = u(i);
  return out;
}

double CalabiProfile::psi_derivative_at(int order, std::size_t i) const {
  return stencils_->apply(order, psi_, i);
}

double CalabiProfile::derivative_at(int order, std::size_t i) const {
  if (order < 1 || order > fd::UniformStencils::kMaxOrder) {
    throw Error(ErrorKind::Parameter, "derivative order must be in 1..5");
  }
  return reference(i).d[order] + psi_derivative_at(order, i);
}

std::vector<double> CalabiProfile::derivative(int order) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = derivative_at(order, i);
  return out;
}

std::vector<double> CalabiProfile::above_a() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = reference(i).above_a + psi_derivative_at(1, i);
  return out;
}

std::vector<double> CalabiProfile::below_b() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = reference(i).below_b - psi_derivative_at(1, i);
  return out;
}

CalabiProfile make_reference_profile(int n, KahlerClass cls, double half_width, std::size_t size) {
  if (!cls.valid()) throw Error(ErrorKind::ClassViolation, "Kahler class needs 0 < a < b");
  if (size % 2 == 0) throw Error(ErrorKind::Parameter, "grid size N must be odd");
  if (half_width < 10.0) throw Error(ErrorKind::Parameter, "half width L must be >= 10");
  return CalabiProfile(n, cls, half_width, std::vector<double>(size, 0.0));
}

Derivatives derivatives(const CalabiProfile& p) {
  return {p.derivative(1), p.derivative(2), p.derivative(3), p.derivative(4)};
}

PointValue interpolate(const CalabiProfile& p, double rho) {
  const double L = p.half_width();
  if (!(rho >= -L && rho <= L)) throw Error(ErrorKind::Domain, "rho outside [-L, L]");
  const double h = p.spacing();
  auto cell = static_cast<std::size_t>(std::floor((rho + L) / h));
  cell = std::min(cell, p.size() - 2);
  const double t = (rho - p.rho(cell)) / h;

  const double h00 = (2.0 * t - 3.0) * t * t + 1.0;
  const double h10 = ((t - 2.0) * t + 1.0) * t;
  const double h01 = (3.0 - 2.0 * t) * t * t;
  const double h11 = (t - 1.0) * t * t;

  double d0[4];
  double d1[4];
  const auto psi = p.psi();
  d0[0] = psi[cell];
  d1[0] = psi[cell + 1];
  for (int k = 1; k <= 3; ++k) {
    d0[k] = p.psi_derivative_at(k, cell);
    d1[k] = p.psi_derivative_at(k, cell + 1);
  }
  auto hermite = [&](int k) { return h00 * d0[k] + h10 * h * d0[k + 1] + h01 * d1[k] + h11 * h * d1[k + 1]; };

  const auto ref = reference_jet(p.kahler_class(), p.edge_terms(), rho);
  PointValue out;
  out.u = ref.value + hermite(0);
  out.u1 = ref.d[1] + hermite(1);
  out.u2 = ref.d[2] + hermite(2);

  const double lo = p.reference(cell).d[1] + d0[1];
  const double hi = p.reference(cell + 1).d[1] + d1[1];
  out.u1 = std::clamp(out.u1, std::min(lo, hi), std::max(lo, hi));
  return out;
}

std::vector<Violation> validate(const CalabiProfile& p, double edge_tolerance) {
  std::vector<Violation> out;
  const auto n = p.size();
  const auto above = p.above_a();
  const auto below = p.below_b();
  const auto u1 = p.derivative(1);
  const auto u2 = p.derivative(2);
  for (std::size_t i = 0; i < n; ++i) {
    const double margin = std::min(above[i], below[i]);
    if (!(margin > 0.0)) out.push_back({"u1-in-class-interval", i, margin});
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double margin = u1[i + 1] - u1[i];
    if (!(margin > 0.0)) out.push_back({"u1-increasing", i, margin});
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(u2[i] > 0.0)) out.push_back({"u2-positive", i, u2[i]});
  }
  const double tol = edge_tolerance * p.kahler_class().width();
  const auto psi = p.psi();
  for (std::size_t i : {std::size_t{0}, n - 1}) {
    const double value_margin = tol - std::abs(psi[i]);
    const double slope_margin = tol - std::abs(p.psi_derivative_at(1, i));
    const char* name = i == 0 ? "psi-decay-left" : "psi-decay-right";
    if (!(value_margin >= 0.0)) out.push_back({name, i, value_margin});
    if (!(slope_margin >= 0.0)) out.push_back({std::string(name) + "-slope", i, slope_margin});
  }
  return out;
}

void write_profile_csv(std::ostream& os, const CalabiProfile& p, const Metadata& extra) {
  Metadata meta = extra;
  meta["n"] = std::to_string(p.n());
  meta["a"] = format_double(p.kahler_class().a);
  meta["b"] = format_double(p.kahler_class().b);
  meta["L"] = format_double(p.half_width());
  meta["N"] = std::to_string(p.size());
  meta["edge_sigma"] = format_double(p.edge_terms().sigma);
  meta["edge_left"] = format_double(p.edge_terms().left);
  meta["edge_right"] = format_double(p.edge_terms().right);
  for (const auto& [k, v] : meta) os << '#' << k << '=' << v << '\n';
  os << "rho,psi,u,u1,u2,u3,u4\n";
  const auto d = derivatives(p);
  const auto psi = p.psi();
  os << std::setprecision(17);
  for (std::size_t i = 0; i < p.size(); ++i) {
    os << p.rho(i) << ',' << psi[i] << ',' << p.u(i) << ',' << d.u1[i] << ',' << d.u2[i] << ',' << d.u3[i] << ','
       << d.u4[i] << '\n';
  }
}

namespace {

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Io, std::string("cannot parse ") + what + " from '" + s + "'");
  }
}

const std::string& require(const Metadata& m, const char* key) {
  auto it = m.find(key);
  if (it == m.end()) throw Error(ErrorKind::Io, std::string("profile CSV missing metadata '") + key + "'");
  return it->second;
}

}  // namespace

LoadedProfile read_profile_csv(std::istream& is) {
  Metadata meta;
  std::string line;
  bool header = false;
  std::vector<double> psi;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) meta[line.substr(1, eq - 1)] = line.substr(eq + 1);
      continue;
    }
    if (!header) {
      if (line.rfind("rho,psi", 0) != 0) throw Error(ErrorKind::Io, "profile CSV header not recognised");
      header = true;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw Error(ErrorKind::Io, "malformed profile row");
    psi.push_back(parse_double(line.substr(c1 + 1, c2 - c1 - 1), "psi"));
  }
  if (!header) throw Error(ErrorKind::Io, "profile CSV has no header");
  const int n = static_cast<int>(parse_double(require(meta, "n"), "n"));
  const KahlerClass cls{parse_double(require(meta, "a"), "a"), parse_double(require(meta, "b"), "b")};
  const double L = parse_double(require(meta, "L"), "L");
  const auto N = static_cast<std::size_t>(parse_double(require(meta, "N"), "N"));
  EdgeTerms edge;
  auto optional = [&](const char* key) { return meta.count(key) ? parse_double(meta.at(key), key) : 0.0; };
  edge.sigma = optional("edge_sigma");
  edge.left = optional("edge_left");
  edge.right = optional("edge_right");
  if (psi.size() != N) throw Error(ErrorKind::Io, "profile CSV row count does not match N");
  return {CalabiProfile(n, cls, L, std::move(psi), edge), std::move(meta)};
}

}  // namespace calabi
