#pragma once

#include <utility>

#include "specarray/complex_matrix.hpp"
#include "specarray/signal_model.hpp"
#include "specarray/tensor.hpp"

namespace specarray {

// Sample covariance with diagonal loading. values = W W^H + loading*I,
// Hermitian and positive definite for loading > 0.
struct CovarianceMatrix {
    CMat values;
    double loading = 0.0;
};

struct CovariancePair {
    CovarianceMatrix r_old;
    CovarianceMatrix r_new;
};

// copy of columns [begin, begin+count)
CMat column_block(const CMat& z, int begin, int count);

// Adjacent disjoint k-column windows starting at 0-based column i:
// old = columns [i, i+k), new = columns [i+k, i+2k).
// Throws std::out_of_range when the pair does not fit in [0, T).
std::pair<CMat, CMat> detection_windows(const CMat& z, int k, int i);

// Windows flanking the 0-based midpoint t0: old = [t0-k, t0), new = [t0, t0+k).
std::pair<CMat, CMat> doa_windows(const CMat& z, int k, int t0);
std::pair<CMat, CMat> doa_windows(const ReceivedArray& z, int k);

// W W^H + zeta*I (no snapshot-count divisor)
CovarianceMatrix empirical_covariance(const CMat& w, double zeta);

// scales to unit Frobenius norm; throws std::domain_error on a zero matrix
CovarianceMatrix frobenius_normalize(const CovarianceMatrix& r);

// S(Z) = Z_c Z_c^H / (T-1) with the column mean removed; no loading.
// Throws std::domain_error for T < 2.
CovarianceMatrix centered_sample_covariance(const CMat& z);

struct ShiftBoundResult {
    double actual = 0.0; // ||S(Z+delta) - S(Z)||_2
    double bound = 0.0;  // stability bound at the given (p, eps)
};

// Covariance-stability bound check. Norms of delta are measured on the
// flattened real view of the matrix (attacks act on the real tensor):
// l2 = Frobenius norm, linf = max over real/imag components. The linf bound
// uses per-snapshot real dimension d; pass 0 to use d = 2M.
//   p = l2:   bound = (2 sqrt(T)/(T-1)) ||Z_c||_2 eps + (T/(T-1)) eps^2
//   p = linf: bound = (2 sqrt(T d)/(T-1)) ||Z_c||_2 eps + (T d/(T-1)) eps^2
// Throws std::invalid_argument when ||delta||_p exceeds eps.
ShiftBoundResult covariance_shift_bound(const CMat& z, const CMat& delta,
                                        LpNorm p, double eps,
                                        int snapshot_real_dim = 0);

} // namespace specarray
