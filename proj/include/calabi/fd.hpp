#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace calabi::fd {

/// Fornberg's recursion: weights of the `order`-th derivative at x0 using the
/// given nodes. Exact for polynomials of degree < nodes.size().
std::vector<double> fornberg_weights(double x0, std::span<const double> nodes, int order);

/// Number of points used for derivative `order` (4th-order central in the
/// interior; the same window is shifted against the edges).
std::size_t window_width(int order);

/// Cached stencils for derivatives of order 1..kMaxOrder on a uniform grid.
/// Interior nodes use centered windows; near the ends the window is clamped
/// to the grid, giving one-sided stencils of order >= 3.
class UniformStencils {
 public:
  static constexpr int kMaxOrder = 5;

  UniformStencils(std::size_t size, double spacing);

  struct Window {
    std::size_t first;
    std::span<const double> weights;
  };

  [[nodiscard]] Window window(int order, std::size_t node) const;
  [[nodiscard]] double apply(int order, std::span<const double> f, std::size_t node) const;
  [[nodiscard]] std::vector<double> apply_all(int order, std::span<const double> f) const;

  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] double spacing() const { return spacing_; }
  /// True when node uses the symmetric interior stencil for this order.
  [[nodiscard]] bool is_central(int order, std::size_t node) const;

 private:
  std::size_t size_;
  double spacing_;
  // weights_[order][offset] -> scaled weights; offset = node - window start.
  std::vector<std::vector<std::vector<double>>> weights_;
};

}  // namespace calabi::fd
