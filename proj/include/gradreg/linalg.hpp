#pragma once
// Dense vector kernels and a small Cholesky solver. Everything here works on
// std::span views over contiguous doubles; there is no matrix class.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace gradreg {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(double alpha, std::span<double> x) {
    for (double& v : x) v *= alpha;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

// In-place Cholesky factorization of a row-major symmetric positive definite
// n x n matrix; the lower triangle is overwritten with L (A = L L^T).
// Throws if a pivot is not strictly positive.
inline void cholesky_factor(std::vector<double>& a, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        double pivot = a[k * n + k];
        for (std::size_t j = 0; j < k; ++j) pivot -= a[k * n + j] * a[k * n + j];
        if (!(pivot > 0.0)) throw std::runtime_error("cholesky: matrix not positive definite");
        const double lkk = std::sqrt(pivot);
        a[k * n + k] = lkk;
        for (std::size_t i = k + 1; i < n; ++i) {
            double s = a[i * n + k];
            for (std::size_t j = 0; j < k; ++j) s -= a[i * n + j] * a[k * n + j];
            a[i * n + k] = s / lkk;
        }
    }
}

// Solves A x = b given the factor from cholesky_factor; b is overwritten
// with the solution.
inline void cholesky_solve(const std::vector<double>& l, std::size_t n, std::span<double> b) {
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < i; ++j) s -= l[i * n + j] * b[j];
        b[i] = s / l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= l[j * n + ii] * b[j];
        b[ii] = s / l[ii * n + ii];
    }
}

}  // namespace gradreg
