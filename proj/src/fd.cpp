#include "calabi/fd.hpp"

#include <algorithm>
#include <cmath>

#include "calabi/errors.hpp"

namespace calabi::fd {

std::vector<double> fornberg_weights(double x0, std::span<const double> nodes, int order) {
  const auto n = nodes.size();
  if (n == 0 || order < 0 || static_cast<std::size_t>(order) >= n) {
    throw Error(ErrorKind::Parameter, "fornberg_weights: need more nodes than the derivative order");
  }
  const auto m = static_cast<std::size_t>(order);
  // c[j][k]: weight of node j for derivative k
  std::vector<std::vector<double>> c(n, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0;
  double c4 = nodes[0] - x0;
  c[0][0] = 1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i] - x0;
    for (std::size_t j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (std::size_t k = mn; k >= 1; --k) {
          c[i][k] = c1 * (static_cast<double>(k) * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        }
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (std::size_t k = mn; k >= 1; --k) {
        c[j][k] = (c4 * c[j][k] - static_cast<double>(k) * c[j][k - 1]) / c3;
      }
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) w[j] = c[j][m];
  return w;
}

std::size_t window_width(int order) {
  // order + 4 points, minus one for even orders where symmetry buys a degree
  return static_cast<std::size_t>(order + 4 - (order % 2 == 0 ? 1 : 0));
}

UniformStencils::UniformStencils(std::size_t size, double spacing)
    : size_(size), spacing_(spacing), weights_(kMaxOrder + 1) {
  if (size < window_width(kMaxOrder)) {
    throw Error(ErrorKind::Parameter, "grid too small for the derivative stencils");
  }
  for (int order = 1; order <= kMaxOrder; ++order) {
    const auto w = window_width(order);
    std::vector<double> nodes(w);
    for (std::size_t j = 0; j < w; ++j) nodes[j] = static_cast<double>(j);
    const double scale = std::pow(spacing, -order);
    auto& per_offset = weights_[order];
    per_offset.resize(w);
    for (std::size_t off = 0; off < w; ++off) {
      auto wts = fornberg_weights(static_cast<double>(off), nodes, order);
      for (auto& x : wts) x *= scale;
      per_offset[off] = std::move(wts);
    }
  }
}

UniformStencils::Window UniformStencils::window(int order, std::size_t node) const {
  const auto w = window_width(order);
  const auto half = w / 2;
  std::size_t first = node >= half ? node - half : 0;
  first = std::min(first, size_ - w);
  const auto& wts = weights_[order][node - first];
  return {first, std::span<const double>(wts)};
}

bool UniformStencils::is_central(int order, std::size_t node) const {
  const auto half = window_width(order) / 2;
  return node >= half && node + half < size_;
}

double UniformStencils::apply(int order, std::span<const double> f, std::size_t node) const {
  const auto win = window(order, node);
  // weights of a derivative sum to zero; differencing against f[node] keeps
  // an additive constant in f from leaking roundoff into the result
  const double base = f[node];
  double acc = 0.0;
  for (std::size_t j = 0; j < win.weights.size(); ++j) acc += win.weights[j] * (f[win.first + j] - base);
  return acc;
}

std::vector<double> UniformStencils::apply_all(int order, std::span<const double> f) const {
  std::vector<double> out(size_);
  for (std::size_t i = 0; i < size_; ++i) out[i] = apply(order, f, i);
  return out;
}

}  // namespace calabi::fd
