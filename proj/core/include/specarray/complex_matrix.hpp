#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include "specarray/errors.hpp"

namespace specarray {

using cd = std::complex<double>;

// Dense row-major complex matrix. Sized for sensor-array work: rows are
// elements (small), columns are snapshots (possibly large).
struct CMat {
    int rows = 0;
    int cols = 0;
    std::vector<cd> data;

    CMat() = default;
    CMat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {
        if (r < 0 || c < 0) throw std::invalid_argument("CMat: negative dimension");
    }

    std::size_t index(int r, int c) const {
        return static_cast<std::size_t>(r) * cols + c;
    }
    cd& at(int r, int c) { return data[index(r, c)]; }
    const cd& at(int r, int c) const { return data[index(r, c)]; }

    bool same_shape(const CMat& o) const { return rows == o.rows && cols == o.cols; }

    static CMat identity(int n);
};

CMat operator+(const CMat& a, const CMat& b);
CMat operator-(const CMat& a, const CMat& b);
CMat operator*(const CMat& a, cd s);
CMat operator*(const CMat& a, const CMat& b);

// conjugate transpose
CMat adjoint(const CMat& a);

// w * adjoint(w), Hermitian by construction (computed on the upper triangle
// and mirrored, so it is exactly Hermitian in floating point)
CMat gram(const CMat& w);

cd trace(const CMat& a);
double frobenius_norm(const CMat& a);

// max elementwise |A - adjoint(A)|
double hermitian_error(const CMat& a);

void add_diagonal(CMat& a, double value);

// y = a * x for a vector x
std::vector<cd> matvec(const CMat& a, const std::vector<cd>& x);

double vector_norm(const std::vector<cd>& v);
cd inner_product(const std::vector<cd>& x, const std::vector<cd>& y); // conj(x).y

// Cholesky factorization A = L L^H of a Hermitian positive definite matrix.
// Throws NumericalError with a diagonal-ratio condition estimate when a
// pivot is not positive.
struct CholeskyFactor {
    CMat l;
    // solve A x = b reusing the factor
    std::vector<cd> solve(const std::vector<cd>& b) const;
    // solve A X = B column by column
    CMat solve(const CMat& b) const;
};
CholeskyFactor cholesky(const CMat& a);

// LU factorization with partial pivoting; works for any invertible matrix,
// Hermitian or not. Throws NumericalError on an exactly singular pivot.
struct LuFactor {
    CMat lu;
    std::vector<int> perm;
    std::vector<cd> solve(const std::vector<cd>& b) const;
    CMat solve(const CMat& b) const;
};
LuFactor lu_decompose(const CMat& a);

struct PowerIterationResult {
    std::vector<cd> eigenvector; // unit norm
    cd eigenvalue = 0.0;         // Rayleigh quotient at the final iterate
    int iterations = 0;
    double residual = 0.0;       // ||A v - lambda v|| at the final iterate
    bool converged = false;
};

// Power iteration on a linear operator given as apply(x, y) computing
// y = A x over C^n. Converges when the residual drops below tol.
PowerIterationResult power_iteration(
    const std::vector<cd>& start,
    int max_iterations, double tol,
    const std::function<void(const std::vector<cd>&, std::vector<cd>&)>& apply);

// deterministic non-degenerate start vector for power iterations
std::vector<cd> power_iteration_start(int n);

// Largest singular value via power iteration on A^H A. Runs a fixed
// iteration budget with a relative-change stop; returns the best estimate
// either way (no failure path).
double spectral_norm(const CMat& a, int max_iterations = 200, double rel_tol = 1e-12);

} // namespace specarray
