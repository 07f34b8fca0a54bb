// Independent reference computations for the test suite. Everything here
// deliberately avoids the library's own linear-algebra kernels: dense
// decompositions come from Eigen, covariances from naive loops.
#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "specarray/complex_matrix.hpp"

namespace oracle {

using specarray::CMat;
using specarray::cd;

inline Eigen::MatrixXcd to_eigen(const CMat& a) {
    Eigen::MatrixXcd m(a.rows, a.cols);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) m(r, c) = a.at(r, c);
    return m;
}

inline CMat from_eigen(const Eigen::MatrixXcd& m) {
    CMat a(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) a.at(r, c) = m(r, c);
    return a;
}

inline double spectral_norm(const CMat& a) {
    return to_eigen(a).jacobiSvd().singularValues()(0);
}

inline CMat inverse(const CMat& a) {
    return from_eigen(to_eigen(a).inverse());
}

// tr(r_old^-1 r_new) via dense inversion
inline double inverse_trace_statistic(const CMat& r_old, const CMat& r_new) {
    const Eigen::MatrixXcd m = to_eigen(r_old).inverse() * to_eigen(r_new);
    return m.trace().real();
}

// eigenvector of the largest-|lambda| eigenvalue
inline Eigen::VectorXcd dominant_eigenvector(const CMat& a) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(to_eigen(a));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("oracle: eigensolver failed");
    int best = 0;
    for (int i = 1; i < es.eigenvalues().size(); ++i)
        if (std::abs(es.eigenvalues()(i)) > std::abs(es.eigenvalues()(best))) best = i;
    return es.eigenvectors().col(best);
}

inline double min_eigenvalue_hermitian(const CMat& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(to_eigen(a));
    return es.eigenvalues().minCoeff();
}

// W W^H + zeta I by explicit summation
inline CMat naive_loaded_covariance(const CMat& w, double zeta) {
    CMat r(w.rows, w.rows);
    for (int i = 0; i < w.rows; ++i)
        for (int j = 0; j < w.rows; ++j) {
            cd acc(0.0, 0.0);
            for (int t = 0; t < w.cols; ++t) acc += w.at(i, t) * std::conj(w.at(j, t));
            r.at(i, j) = acc;
        }
    for (int i = 0; i < w.rows; ++i) r.at(i, i) += zeta;
    return r;
}

// column-mean centering, normalized by T - 1
inline CMat naive_centered_covariance(const CMat& z) {
    if (z.cols < 2) throw std::invalid_argument("oracle: need at least 2 snapshots");
    std::vector<cd> mean(static_cast<std::size_t>(z.rows), cd(0.0, 0.0));
    for (int t = 0; t < z.cols; ++t)
        for (int i = 0; i < z.rows; ++i) mean[static_cast<std::size_t>(i)] += z.at(i, t);
    for (cd& v : mean) v /= static_cast<double>(z.cols);
    CMat s(z.rows, z.rows);
    for (int i = 0; i < z.rows; ++i)
        for (int j = 0; j < z.rows; ++j) {
            cd acc(0.0, 0.0);
            for (int t = 0; t < z.cols; ++t)
                acc += (z.at(i, t) - mean[static_cast<std::size_t>(i)]) *
                       std::conj(z.at(j, t) - mean[static_cast<std::size_t>(j)]);
            s.at(i, j) = acc / static_cast<double>(z.cols - 1);
        }
    return s;
}

} // namespace oracle
