#include "specarray/complex_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace specarray {

CMat CMat::identity(int n) {
    CMat a(n, n);
    for (int i = 0; i < n; ++i) a.at(i, i) = 1.0;
    return a;
}

CMat operator+(const CMat& a, const CMat& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("CMat +: shape mismatch");
    CMat c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] + b.data[i];
    return c;
}

CMat operator-(const CMat& a, const CMat& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("CMat -: shape mismatch");
    CMat c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] - b.data[i];
    return c;
}

CMat operator*(const CMat& a, cd s) {
    CMat c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] * s;
    return c;
}

CMat operator*(const CMat& a, const CMat& b) {
    if (a.cols != b.rows) throw std::invalid_argument("CMat *: inner dimension mismatch");
    CMat c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const cd aik = a.at(i, k);
            if (aik == cd{0.0, 0.0}) continue;
            const cd* brow = &b.data[b.index(k, 0)];
            cd* crow = &c.data[c.index(i, 0)];
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

CMat adjoint(const CMat& a) {
    CMat c(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) c.at(j, i) = std::conj(a.at(i, j));
    return c;
}

CMat gram(const CMat& w) {
    const int m = w.rows;
    CMat g(m, m);
    for (int i = 0; i < m; ++i) {
        const cd* wi = &w.data[w.index(i, 0)];
        for (int j = i; j < m; ++j) {
            const cd* wj = &w.data[w.index(j, 0)];
            cd s = 0.0;
            for (int t = 0; t < w.cols; ++t) s += wi[t] * std::conj(wj[t]);
            if (i == j) s = cd{s.real(), 0.0};
            g.at(i, j) = s;
            g.at(j, i) = std::conj(s);
        }
    }
    return g;
}

cd trace(const CMat& a) {
    if (a.rows != a.cols) throw std::invalid_argument("trace: matrix not square");
    cd s = 0.0;
    for (int i = 0; i < a.rows; ++i) s += a.at(i, i);
    return s;
}

double frobenius_norm(const CMat& a) {
    double s = 0.0;
    for (const cd& v : a.data) s += std::norm(v);
    return std::sqrt(s);
}

double hermitian_error(const CMat& a) {
    if (a.rows != a.cols) throw std::invalid_argument("hermitian_error: matrix not square");
    double m = 0.0;
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j)
            m = std::max(m, std::abs(a.at(i, j) - std::conj(a.at(j, i))));
    return m;
}

void add_diagonal(CMat& a, double value) {
    if (a.rows != a.cols) throw std::invalid_argument("add_diagonal: matrix not square");
    for (int i = 0; i < a.rows; ++i) a.at(i, i) += value;
}

std::vector<cd> matvec(const CMat& a, const std::vector<cd>& x) {
    if (static_cast<int>(x.size()) != a.cols)
        throw std::invalid_argument("matvec: size mismatch");
    std::vector<cd> y(static_cast<std::size_t>(a.rows));
    for (int i = 0; i < a.rows; ++i) {
        const cd* row = &a.data[a.index(i, 0)];
        cd s = 0.0;
        for (int j = 0; j < a.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

double vector_norm(const std::vector<cd>& v) {
    double s = 0.0;
    for (const cd& x : v) s += std::norm(x);
    return std::sqrt(s);
}

cd inner_product(const std::vector<cd>& x, const std::vector<cd>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("inner_product: size mismatch");
    cd s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::conj(x[i]) * y[i];
    return s;
}

CholeskyFactor cholesky(const CMat& a) {
    if (a.rows != a.cols) throw std::invalid_argument("cholesky: matrix not square");
    const int n = a.rows;
    CMat l(n, n);
    double max_pivot = 0.0;
    for (int j = 0; j < n; ++j) {
        double d = a.at(j, j).real();
        for (int k = 0; k < j; ++k) d -= std::norm(l.at(j, k));
        if (!(d > 0.0) || !std::isfinite(d)) {
            const double cond = (d != 0.0 && std::isfinite(d))
                                    ? max_pivot / std::abs(d)
                                    : std::numeric_limits<double>::infinity();
            throw NumericalError(
                "cholesky: non-positive pivot at column " + std::to_string(j) +
                ", condition estimate " + std::to_string(cond), j);
        }
        const double ljj = std::sqrt(d);
        max_pivot = std::max(max_pivot, d);
        l.at(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            cd s = a.at(i, j);
            for (int k = 0; k < j; ++k) s -= l.at(i, k) * std::conj(l.at(j, k));
            l.at(i, j) = s / ljj;
        }
    }
    return CholeskyFactor{std::move(l)};
}

std::vector<cd> CholeskyFactor::solve(const std::vector<cd>& b) const {
    const int n = l.rows;
    if (static_cast<int>(b.size()) != n)
        throw std::invalid_argument("CholeskyFactor::solve: size mismatch");
    std::vector<cd> y(b);
    // forward substitution L y = b
    for (int i = 0; i < n; ++i) {
        cd s = y[i];
        for (int k = 0; k < i; ++k) s -= l.at(i, k) * y[k];
        y[i] = s / l.at(i, i);
    }
    // back substitution L^H x = y
    for (int i = n - 1; i >= 0; --i) {
        cd s = y[i];
        for (int k = i + 1; k < n; ++k) s -= std::conj(l.at(k, i)) * y[k];
        y[i] = s / std::conj(l.at(i, i));
    }
    return y;
}

CMat CholeskyFactor::solve(const CMat& b) const {
    if (b.rows != l.rows) throw std::invalid_argument("CholeskyFactor::solve: row mismatch");
    CMat x(b.rows, b.cols);
    std::vector<cd> col(static_cast<std::size_t>(b.rows));
    for (int j = 0; j < b.cols; ++j) {
        for (int i = 0; i < b.rows; ++i) col[i] = b.at(i, j);
        const std::vector<cd> sol = solve(col);
        for (int i = 0; i < b.rows; ++i) x.at(i, j) = sol[i];
    }
    return x;
}

LuFactor lu_decompose(const CMat& a) {
    if (a.rows != a.cols) throw std::invalid_argument("lu_decompose: matrix not square");
    const int n = a.rows;
    LuFactor f{a, std::vector<int>(static_cast<std::size_t>(n))};
    for (int i = 0; i < n; ++i) f.perm[i] = i;
    CMat& m = f.lu;
    for (int j = 0; j < n; ++j) {
        int piv = j;
        double best = std::abs(m.at(j, j));
        for (int i = j + 1; i < n; ++i) {
            const double v = std::abs(m.at(i, j));
            if (v > best) { best = v; piv = i; }
        }
        if (best == 0.0)
            throw NumericalError("lu_decompose: singular pivot at column " + std::to_string(j), j);
        if (piv != j) {
            for (int c = 0; c < n; ++c) std::swap(m.at(j, c), m.at(piv, c));
            std::swap(f.perm[j], f.perm[piv]);
        }
        const cd pivot = m.at(j, j);
        for (int i = j + 1; i < n; ++i) {
            const cd factor = m.at(i, j) / pivot;
            m.at(i, j) = factor;
            if (factor == cd{0.0, 0.0}) continue;
            for (int c = j + 1; c < n; ++c) m.at(i, c) -= factor * m.at(j, c);
        }
    }
    return f;
}

std::vector<cd> LuFactor::solve(const std::vector<cd>& b) const {
    const int n = lu.rows;
    if (static_cast<int>(b.size()) != n)
        throw std::invalid_argument("LuFactor::solve: size mismatch");
    std::vector<cd> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[i] = b[static_cast<std::size_t>(perm[i])];
    // L y = P b, unit lower triangle
    for (int i = 0; i < n; ++i) {
        cd s = x[i];
        for (int k = 0; k < i; ++k) s -= lu.at(i, k) * x[k];
        x[i] = s;
    }
    // U x = y
    for (int i = n - 1; i >= 0; --i) {
        cd s = x[i];
        for (int k = i + 1; k < n; ++k) s -= lu.at(i, k) * x[k];
        x[i] = s / lu.at(i, i);
    }
    return x;
}

CMat LuFactor::solve(const CMat& b) const {
    if (b.rows != lu.rows) throw std::invalid_argument("LuFactor::solve: row mismatch");
    CMat x(b.rows, b.cols);
    std::vector<cd> col(static_cast<std::size_t>(b.rows));
    for (int j = 0; j < b.cols; ++j) {
        for (int i = 0; i < b.rows; ++i) col[i] = b.at(i, j);
        const std::vector<cd> sol = solve(col);
        for (int i = 0; i < b.rows; ++i) x.at(i, j) = sol[i];
    }
    return x;
}

PowerIterationResult power_iteration(
    const std::vector<cd>& start,
    int max_iterations, double tol,
    const std::function<void(const std::vector<cd>&, std::vector<cd>&)>& apply) {
    PowerIterationResult res;
    res.eigenvector = start;
    const double n0 = vector_norm(res.eigenvector);
    if (n0 == 0.0) throw std::invalid_argument("power_iteration: zero start vector");
    for (cd& v : res.eigenvector) v /= n0;

    std::vector<cd> next(start.size());
    for (int it = 1; it <= max_iterations; ++it) {
        apply(res.eigenvector, next);
        const cd lambda = inner_product(res.eigenvector, next);
        double rsq = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i)
            rsq += std::norm(next[i] - lambda * res.eigenvector[i]);
        res.iterations = it;
        res.eigenvalue = lambda;
        res.residual = std::sqrt(rsq);
        const double nn = vector_norm(next);
        if (nn == 0.0) {
            // operator annihilated the iterate; treat as converged to 0
            res.converged = true;
            return res;
        }
        for (std::size_t i = 0; i < next.size(); ++i) res.eigenvector[i] = next[i] / nn;
        if (res.residual < tol) {
            res.converged = true;
            return res;
        }
    }
    res.converged = false;
    return res;
}

std::vector<cd> power_iteration_start(int n) {
    // mildly sloped, never orthogonal to a coordinate subspace by symmetry
    std::vector<cd> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = cd{1.0 + 0.01 * i, 0.001 * (i % 3)};
    return v;
}

double spectral_norm(const CMat& a, int max_iterations, double rel_tol) {
    if (a.data.empty()) return 0.0;
    if (frobenius_norm(a) == 0.0) return 0.0;
    const CMat ah = adjoint(a);
    std::vector<cd> v = power_iteration_start(a.cols);
    double vn = vector_norm(v);
    for (cd& x : v) x /= vn;
    std::vector<cd> tmp, w;
    double lambda_prev = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        tmp = matvec(a, v);
        w = matvec(ah, tmp);
        const double lambda = inner_product(v, w).real();
        const double wn = vector_norm(w);
        if (wn == 0.0) return 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i] / wn;
        if (it > 0 && std::abs(lambda - lambda_prev) <= rel_tol * std::abs(lambda)) {
            lambda_prev = lambda;
            break;
        }
        lambda_prev = lambda;
    }
    return std::sqrt(std::max(0.0, lambda_prev));
}

} // namespace specarray
