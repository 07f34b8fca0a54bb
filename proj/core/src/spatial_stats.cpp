#include "specarray/spatial_stats.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace specarray {

CMat column_block(const CMat& z, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > z.cols)
        throw std::out_of_range("column_block: [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") outside 0.." +
                                std::to_string(z.cols));
    CMat w(z.rows, count);
    for (int m = 0; m < z.rows; ++m)
        for (int c = 0; c < count; ++c) w.at(m, c) = z.at(m, begin + c);
    return w;
}

std::pair<CMat, CMat> detection_windows(const CMat& z, int k, int i) {
    if (k < 1) throw std::out_of_range("detection_windows: k must be >= 1");
    if (i < 0 || i + 2 * k > z.cols)
        throw std::out_of_range("detection_windows: window pair at i=" + std::to_string(i) +
                                ", k=" + std::to_string(k) + " overflows T=" +
                                std::to_string(z.cols));
    return {column_block(z, i, k), column_block(z, i + k, k)};
}

std::pair<CMat, CMat> doa_windows(const CMat& z, int k, int t0) {
    if (k < 1) throw std::out_of_range("doa_windows: k must be >= 1");
    if (t0 - k < 0 || t0 + k > z.cols)
        throw std::out_of_range("doa_windows: windows around t0=" + std::to_string(t0) +
                                ", k=" + std::to_string(k) + " overflow T=" +
                                std::to_string(z.cols));
    return {column_block(z, t0 - k, k), column_block(z, t0, k)};
}

std::pair<CMat, CMat> doa_windows(const ReceivedArray& z, int k) {
    if (z.meta.activation_time < 0)
        throw std::out_of_range("doa_windows: example has no activation time");
    return doa_windows(z.samples, k, z.meta.activation_time);
}

CovarianceMatrix empirical_covariance(const CMat& w, double zeta) {
    if (w.cols < 1) throw std::domain_error("empirical_covariance: empty window");
    if (zeta < 0.0) throw std::domain_error("empirical_covariance: negative loading");
    CovarianceMatrix r{gram(w), zeta};
    add_diagonal(r.values, zeta);
    return r;
}

CovarianceMatrix frobenius_normalize(const CovarianceMatrix& r) {
    const double n = frobenius_norm(r.values);
    if (!(n > 0.0)) throw std::domain_error("frobenius_normalize: zero matrix");
    CovarianceMatrix out{r.values * cd{1.0 / n, 0.0}, r.loading / n};
    return out;
}

CovarianceMatrix centered_sample_covariance(const CMat& z) {
    const int t_count = z.cols;
    if (t_count < 2) throw std::domain_error("centered_sample_covariance: needs T >= 2");
    CMat centered(z.rows, z.cols);
    for (int m = 0; m < z.rows; ++m) {
        cd mean = 0.0;
        for (int t = 0; t < t_count; ++t) mean += z.at(m, t);
        mean /= static_cast<double>(t_count);
        for (int t = 0; t < t_count; ++t) centered.at(m, t) = z.at(m, t) - mean;
    }
    CovarianceMatrix s{gram(centered), 0.0};
    const double inv = 1.0 / (t_count - 1);
    for (cd& v : s.values.data) v *= inv;
    return s;
}

namespace {

double real_view_norm(const CMat& m, LpNorm p) {
    if (p == LpNorm::l2) return frobenius_norm(m);
    double mx = 0.0;
    for (const cd& v : m.data) {
        mx = std::max(mx, std::abs(v.real()));
        mx = std::max(mx, std::abs(v.imag()));
    }
    return mx;
}

CMat center_columns(const CMat& z) {
    CMat c(z.rows, z.cols);
    for (int m = 0; m < z.rows; ++m) {
        cd mean = 0.0;
        for (int t = 0; t < z.cols; ++t) mean += z.at(m, t);
        mean /= static_cast<double>(z.cols);
        for (int t = 0; t < z.cols; ++t) c.at(m, t) = z.at(m, t) - mean;
    }
    return c;
}

} // namespace

ShiftBoundResult covariance_shift_bound(const CMat& z, const CMat& delta,
                                        LpNorm p, double eps,
                                        int snapshot_real_dim) {
    if (!z.same_shape(delta))
        throw std::invalid_argument("covariance_shift_bound: shape mismatch");
    const int t_count = z.cols;
    if (t_count < 2) throw std::domain_error("covariance_shift_bound: needs T >= 2");
    if (eps < 0.0) throw std::invalid_argument("covariance_shift_bound: negative eps");

    const double delta_norm = real_view_norm(delta, p);
    if (delta_norm > eps + 1e-12)
        throw std::invalid_argument("covariance_shift_bound: ||delta||_p = " +
                                    std::to_string(delta_norm) + " exceeds eps = " +
                                    std::to_string(eps));

    const CovarianceMatrix s0 = centered_sample_covariance(z);
    const CovarianceMatrix s1 = centered_sample_covariance(z + delta);
    ShiftBoundResult res;
    res.actual = spectral_norm(s1.values - s0.values);

    const double zc_norm = spectral_norm(center_columns(z));
    const double tt = static_cast<double>(t_count);
    double lin_scale = std::sqrt(tt);
    double quad_scale = tt;
    if (p == LpNorm::linf) {
        const int d = snapshot_real_dim > 0 ? snapshot_real_dim : 2 * z.rows;
        lin_scale = std::sqrt(tt * d);
        quad_scale = tt * d;
    }
    res.bound = (2.0 * lin_scale / (tt - 1.0)) * zc_norm * eps +
                (quad_scale / (tt - 1.0)) * eps * eps;
    return res;
}

} // namespace specarray
