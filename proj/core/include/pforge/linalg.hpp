#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pforge {

// Dense square matrix in double precision, row-major.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t dim() const noexcept { return n_; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * n_ + c]; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * n_, n_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * n_, n_}; }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool is_symmetric() const noexcept;
  std::vector<double> diagonal() const;
  double trace() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// Lower Cholesky factor L with L * L^T == a. Only the lower triangle of `a`
// is read. Throws NotPositiveDefiniteError on the first non-positive pivot.
Matrix cholesky(const Matrix& a);

// Same as cholesky() but reports failure through the return value.
bool try_cholesky(const Matrix& a, Matrix& lower, std::size_t* failed_pivot = nullptr,
                  double* pivot_value = nullptr);

// L * L^T for a lower-triangular L.
Matrix multiply_lower_transpose(const Matrix& lower);

// Solves L w = b in place for lower-triangular L.
void forward_substitute(const Matrix& lower, std::span<double> b);

// out = L * u for lower-triangular L.
void lower_times(const Matrix& lower, std::span<const double> u, std::span<double> out);

// Estimate of the smallest eigenvalue of a symmetric matrix by shifted power
// iteration. Converges from above, so it never overstates how negative the
// spectrum is.
double smallest_eigenvalue_estimate(const Matrix& a, std::size_t iterations);

double dot(std::span<const double> a, std::span<const double> b) noexcept;

}  // namespace pforge
