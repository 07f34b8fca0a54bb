#include <doctest.h>

#include <cmath>
#include <complex>

#include "oracles.hpp"
#include "specarray/rng.hpp"
#include "specarray/spatial_stats.hpp"

using namespace specarray;

namespace {

// z(m, t) = m + t/1000 i: window content identifiable from the value
CMat indexed_matrix(int m, int t) {
    CMat z(m, t);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < t; ++c) z.at(r, c) = cd(r, c / 1000.0);
    return z;
}

int column_of(const CMat& block, int r, int c) {
    return static_cast<int>(std::lround(block.at(r, c).imag() * 1000.0));
}

} // namespace

TEST_CASE("column_block copies the requested range") {
    const CMat z = indexed_matrix(3, 10);
    const CMat b = column_block(z, 4, 3);
    REQUIRE(b.rows == 3);
    REQUIRE(b.cols == 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(column_of(b, r, c) == 4 + c);
    CHECK_THROWS_AS(column_block(z, 8, 3), std::out_of_range);
    CHECK_THROWS_AS(column_block(z, -1, 3), std::out_of_range);
}

TEST_CASE("detection windows are adjacent disjoint k-column blocks") {
    const CMat z = indexed_matrix(2, 500);
    const int k = 10;
    SUBCASE("first valid start") {
        const auto [r_old, r_new] = detection_windows(z, k, 0);
        CHECK(column_of(r_old, 0, 0) == 0);
        CHECK(column_of(r_old, 0, 9) == 9);
        CHECK(column_of(r_new, 0, 0) == 10);
        CHECK(column_of(r_new, 0, 9) == 19);
    }
    SUBCASE("last valid start uses the final column") {
        const auto [r_old, r_new] = detection_windows(z, k, 480);
        CHECK(column_of(r_old, 0, 0) == 480);
        CHECK(column_of(r_new, 0, 9) == 499);
    }
    SUBCASE("window pair must fit") {
        CHECK_THROWS_AS(detection_windows(z, k, 481), std::out_of_range);
        CHECK_THROWS_AS(detection_windows(z, k, -1), std::out_of_range);
        CHECK_THROWS_AS(detection_windows(z, 251, 0), std::out_of_range);
    }
}

TEST_CASE("doa windows flank the midpoint") {
    const CMat z = indexed_matrix(2, 1500);
    SUBCASE("full halves at k = 750") {
        const auto [r_old, r_new] = doa_windows(z, 750, 750);
        REQUIRE(r_old.cols == 750);
        CHECK(column_of(r_old, 0, 0) == 0);
        CHECK(column_of(r_old, 0, 749) == 749);
        CHECK(column_of(r_new, 0, 0) == 750);
        CHECK(column_of(r_new, 0, 749) == 1499);
    }
    SUBCASE("k = 1 takes the two columns around the midpoint") {
        const auto [r_old, r_new] = doa_windows(z, 1, 750);
        REQUIRE(r_old.cols == 1);
        CHECK(column_of(r_old, 0, 0) == 749);
        CHECK(column_of(r_new, 0, 0) == 750);
    }
    SUBCASE("out-of-range pair") {
        CHECK_THROWS_AS(doa_windows(z, 751, 750), std::out_of_range);
    }
    SUBCASE("ReceivedArray overload reads the activation time") {
        ReceivedArray ra;
        ra.samples = indexed_matrix(2, 20);
        ra.meta.task = Task::doa;
        ra.meta.activation_time = 10;
        const auto [r_old, r_new] = doa_windows(ra, 4);
        CHECK(column_of(r_old, 0, 0) == 6);
        CHECK(column_of(r_new, 0, 0) == 10);
        CHECK(column_of(r_new, 0, 3) == 13);
    }
}

TEST_CASE("empirical covariance matches the naive loaded product") {
    Rng rng(21);
    CMat w(5, 17);
    for (cd& v : w.data) v = rng.complex_gaussian(1.0);
    const double zeta = 1e-6;
    const CovarianceMatrix r = empirical_covariance(w, zeta);
    CHECK(r.loading == zeta);
    const CMat ref = oracle::naive_loaded_covariance(w, zeta);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(std::abs(r.values.at(i, j) - ref.at(i, j)) < 1e-10);
    CHECK(hermitian_error(r.values) == 0.0);
    // positive definite thanks to the loading
    CHECK(oracle::min_eigenvalue_hermitian(r.values) > 0.0);
}

TEST_CASE("frobenius normalization yields unit norm and rejects zero input") {
    Rng rng(22);
    CMat w(4, 9);
    for (cd& v : w.data) v = rng.complex_gaussian(1.0);
    const CovarianceMatrix r = empirical_covariance(w, 1e-6);
    const CovarianceMatrix n = frobenius_normalize(r);
    CHECK(frobenius_norm(n.values) == doctest::Approx(1.0).epsilon(1e-12));
    CovarianceMatrix zero;
    zero.values = CMat(3, 3);
    CHECK_THROWS_AS(frobenius_normalize(zero), std::domain_error);
}

TEST_CASE("centered sample covariance matches the naive oracle") {
    Rng rng(23);
    CMat z(4, 12);
    for (cd& v : z.data) v = rng.complex_gaussian(1.0);
    // offset columns so centering actually matters
    for (int t = 0; t < 12; ++t) z.at(1, t) += cd(3.0, -2.0);
    const CovarianceMatrix s = centered_sample_covariance(z);
    CHECK(s.loading == 0.0);
    const CMat ref = oracle::naive_centered_covariance(z);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(std::abs(s.values.at(i, j) - ref.at(i, j)) < 1e-10);
    CHECK_THROWS_AS(centered_sample_covariance(CMat(4, 1)), std::domain_error);
}

TEST_CASE("covariance shift bound holds on random in-ball perturbations") {
    Rng rng(24);
    for (int rep = 0; rep < 50; ++rep) {
        const int m = 3 + rep % 3;
        const int t = 8 + rep % 5;
        CMat z(m, t);
        for (cd& v : z.data) v = rng.complex_gaussian(1.0);
        const double eps = rep % 2 == 0 ? 1e-2 : 1e-1;

        CMat delta_inf(m, t);
        for (cd& v : delta_inf.data)
            v = cd(rng.uniform(-eps, eps), rng.uniform(-eps, eps));
        const ShiftBoundResult ri = covariance_shift_bound(z, delta_inf, LpNorm::linf, eps);
        CHECK(ri.actual <= ri.bound);
        CHECK(ri.actual >= 0.0);

        CMat delta_2(m, t);
        double sq = 0.0;
        for (cd& v : delta_2.data) {
            v = rng.complex_gaussian(1.0);
            sq += std::norm(v);
        }
        for (cd& v : delta_2.data) v *= eps / std::sqrt(sq);
        const ShiftBoundResult r2 = covariance_shift_bound(z, delta_2, LpNorm::l2, eps);
        CHECK(r2.actual <= r2.bound);
    }
}

TEST_CASE("shift bound actual term matches an Eigen spectral-norm oracle") {
    Rng rng(25);
    CMat z(4, 10);
    for (cd& v : z.data) v = rng.complex_gaussian(1.0);
    CMat delta(4, 10);
    const double eps = 0.05;
    for (cd& v : delta.data) v = cd(rng.uniform(-eps, eps), rng.uniform(-eps, eps));
    const ShiftBoundResult r = covariance_shift_bound(z, delta, LpNorm::linf, eps);
    const CMat s0 = oracle::naive_centered_covariance(z);
    const CMat s1 = oracle::naive_centered_covariance(z + delta);
    CHECK(r.actual == doctest::Approx(oracle::spectral_norm(s1 - s0)).epsilon(1e-8));
}

TEST_CASE("shift bound rejects perturbations outside the stated ball") {
    CMat z(2, 4);
    z.at(0, 0) = cd(1.0, 0.0);
    z.at(1, 3) = cd(0.0, 1.0);
    CMat delta(2, 4);
    delta.at(0, 2) = cd(0.5, 0.0);
    CHECK_THROWS_AS(covariance_shift_bound(z, delta, LpNorm::linf, 0.1),
                    std::invalid_argument);
    CHECK_THROWS_AS(covariance_shift_bound(z, delta, LpNorm::l2, 0.1),
                    std::invalid_argument);
}
