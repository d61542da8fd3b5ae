#include "uahmp/dct.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "uahmp/errors.hpp"

namespace uahmp {

Eigen::MatrixXd dct_basis(int length, int rows) {
  if (length < 1 || rows < 1 || rows > length) {
    throw ArgumentError(fmt::format("dct basis needs 1 <= m <= L (m={}, L={})", rows, length));
  }
  Eigen::MatrixXd basis(rows, length);
  const double dc = std::sqrt(1.0 / length);
  const double ac = std::sqrt(2.0 / length);
  for (int k = 0; k < rows; ++k) {
    for (int n = 0; n < length; ++n) {
      basis(k, n) = (k == 0 ? dc : ac) *
                    std::cos(std::numbers::pi * (2.0 * n + 1.0) * k / (2.0 * length));
    }
  }
  return basis;
}

std::vector<double> dct_forward(std::span<const double> series) {
  const int n = static_cast<int>(series.size());
  const auto basis = dct_basis(n, n);
  const Eigen::Map<const Eigen::VectorXd> x(series.data(), n);
  const Eigen::VectorXd c = basis * x;
  return {c.data(), c.data() + n};
}

std::vector<double> dct_inverse(std::span<const double> coeffs) {
  const int n = static_cast<int>(coeffs.size());
  const auto basis = dct_basis(n, n);
  const Eigen::Map<const Eigen::VectorXd> c(coeffs.data(), n);
  const Eigen::VectorXd x = basis.transpose() * c;
  return {x.data(), x.data() + n};
}

std::vector<double> dct_truncate(std::span<const double> coeffs, int m) {
  if (m < 1 || m > static_cast<int>(coeffs.size())) {
    throw ArgumentError(fmt::format("cannot keep {} of {} coefficients", m, coeffs.size()));
  }
  return {coeffs.begin(), coeffs.begin() + m};
}

}  // namespace uahmp
