#include "pforge/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pforge/error.hpp"

namespace pforge {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::is_symmetric() const noexcept {
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t c = r + 1; c < n_; ++c)
      if ((*this)(r, c) != (*this)(c, r)) return false;
  return true;
}

std::vector<double> Matrix::diagonal() const {
  std::vector<double> d(n_);
  for (std::size_t i = 0; i < n_; ++i) d[i] = (*this)(i, i);
  return d;
}

double Matrix::trace() const noexcept {
  double t = 0.0;
  for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  // Four independent accumulators; the summation order is fixed.
  const std::size_t n = std::min(a.size(), b.size());
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

bool try_cholesky(const Matrix& a, Matrix& lower, std::size_t* failed_pivot, double* pivot_value) {
  const std::size_t n = a.dim();
  lower = Matrix(n);
  // Row-oriented Cholesky-Crout: every inner product runs over contiguous
  // prefixes of two rows of L.
  for (std::size_t j = 0; j < n; ++j) {
    const auto lj = lower.row(j).first(j);
    const double pivot = a(j, j) - dot(lj, lj);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) {
      if (failed_pivot) *failed_pivot = j;
      if (pivot_value) *pivot_value = pivot;
      return false;
    }
    const double ljj = std::sqrt(pivot);
    lower(j, j) = ljj;
    const double inv = 1.0 / ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      lower(i, j) = (a(i, j) - dot(lower.row(i).first(j), lj)) * inv;
    }
  }
  return true;
}

Matrix cholesky(const Matrix& a) {
  Matrix lower;
  std::size_t pivot = 0;
  double value = 0.0;
  if (!try_cholesky(a, lower, &pivot, &value)) throw NotPositiveDefiniteError(pivot, value);
  return lower;
}

Matrix multiply_lower_transpose(const Matrix& lower) {
  const std::size_t n = lower.dim();
  Matrix out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = dot(lower.row(i).first(j + 1), lower.row(j).first(j + 1));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

void forward_substitute(const Matrix& lower, std::span<double> b) {
  const std::size_t n = lower.dim();
  if (b.size() != n) throw DimensionError("forward_substitute: length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    b[i] = (b[i] - dot(lower.row(i).first(i), b.first(i))) / lower(i, i);
  }
}

void lower_times(const Matrix& lower, std::span<const double> u, std::span<double> out) {
  const std::size_t n = lower.dim();
  if (u.size() != n || out.size() != n) throw DimensionError("lower_times: length mismatch");
  for (std::size_t i = 0; i < n; ++i) out[i] = dot(lower.row(i).first(i + 1), u.first(i + 1));
}

double smallest_eigenvalue_estimate(const Matrix& a, std::size_t iterations) {
  const std::size_t n = a.dim();
  if (n == 0) return 0.0;
  std::vector<double> v(n), w(n);
  auto restart = [&] {
    for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(static_cast<double>(i) * 1.7 + 0.3);
  };
  auto normalize = [&] {
    const double norm = std::sqrt(dot(v, v));
    if (norm == 0.0) return false;
    for (double& x : v) x /= norm;
    return true;
  };
  // Spectral radius first: a Gershgorin shift is far too loose for dense
  // perturbations and stalls the second iteration.
  restart();
  double radius = 0.0;
  for (std::size_t it = 0; it < iterations && normalize(); ++it) {
    for (std::size_t i = 0; i < n; ++i) w[i] = dot(a.row(i), v);
    radius = std::sqrt(dot(w, w));
    std::swap(v, w);
  }
  if (radius == 0.0) return 0.0;
  // cI - A has dominant eigenvalue c - lambda_min.
  const double c = radius;
  restart();
  double rayleigh = 0.0;
  for (std::size_t it = 0; it < iterations && normalize(); ++it) {
    for (std::size_t i = 0; i < n; ++i) w[i] = c * v[i] - dot(a.row(i), v);
    rayleigh = dot(v, w);
    std::swap(v, w);
  }
  return c - rayleigh;
}

}  // namespace pforge
