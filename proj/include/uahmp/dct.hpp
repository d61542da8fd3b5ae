#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace uahmp {

/// Orthonormal DCT-II basis, `rows` lowest frequencies of a length-`length` signal.
/// Row k holds alpha_k cos(pi (2n + 1) k / (2 length)); coefficients = basis * x and,
/// when rows == length, x = basis^T * coefficients.
Eigen::MatrixXd dct_basis(int length, int rows);

std::vector<double> dct_forward(std::span<const double> series);
std::vector<double> dct_inverse(std::span<const double> coeffs);

/// Keeps the `m` lowest-frequency coefficients.
std::vector<double> dct_truncate(std::span<const double> coeffs, int m);

}  // namespace uahmp
