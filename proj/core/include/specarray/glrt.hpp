#pragma once

#include <optional>
#include <string>
#include <vector>

#include "specarray/signal_model.hpp"
#include "specarray/spatial_stats.hpp"

namespace specarray {

struct GlrtDetectionConfig {
    int k = 10;                    // window length in snapshots
    double zeta = 1e-6;            // diagonal loading
    double percentile = 95.0;      // calibration percentile over H0 maxima
    std::optional<double> gamma_t; // decision threshold, set by calibration

    void validate() const; // throws std::domain_error
};

struct GlrtDoaConfig {
    int k = 750;
    double zeta = 1e-6;
    std::vector<SteeringVector> grid; // ascending angles

    void validate() const;
};

struct StatisticSequence {
    std::vector<double> values; // one statistic per window start
    bool normalized = false;
};

// tr(r_old^-1 r_new); strictly positive for positive definite inputs.
// Conditioning failures surface as NumericalError.
double detection_statistic(const CovariancePair& pair);

// Windowed statistic over every valid start index (0-based), length T-2k+1.
StatisticSequence statistic_sequence(const CMat& z, const GlrtDetectionConfig& cfg);
StatisticSequence statistic_sequence(const ReceivedArray& z, const GlrtDetectionConfig& cfg);

// (x - mean) / (population sigma + 1e-6)
StatisticSequence zscore_normalize(const StatisticSequence& seq);

// Nearest-rank percentile (ceil(p/100 * n)-th order statistic) of the
// H0 max-statistic sample. Throws std::domain_error on an empty sample.
double calibrate_threshold(const std::vector<double>& h0_maxima, double percentile);

// 1 iff max of the z-scored statistic sequence >= gamma_t.
// Throws std::logic_error when the threshold has not been calibrated.
int glrt_detect(const ReceivedArray& z, const GlrtDetectionConfig& cfg);

struct DoaEstimate {
    int class_index = 0;
    double angle_deg = 0.0;
    double score = 0.0; // |a(theta)^H v_max| at the winning angle
    int power_iterations = 0;
};

// Dominant eigenvector of r_old^-1 r_new by power iteration, then matched
// filter over the steering grid. Ties break toward the smaller angle.
// Non-convergence after 500 iterations -> NumericalError with the count.
DoaEstimate glrt_doa(const CovariancePair& pair, const GlrtDoaConfig& cfg);

// Convenience composition: midpoint windows -> loaded covariances -> glrt_doa.
DoaEstimate glrt_doa(const ReceivedArray& z, const GlrtDoaConfig& cfg);

// Rebuilds a covariance pair from an M x 2M x 2 covariance-input tensor
// (possibly perturbed): splits the halves, reassembles complex matrices, and
// Hermitian-symmetrizes each half as (A + A^H) / 2.
CovariancePair covariance_pair_from_tensor(const RealTensor& t, double zeta);

// Calibration artifact (plain JSON: percentile, gamma_T, k, zeta,
// n_calibration). Reading a missing file throws MissingArtifactError.
void write_calibration(const std::string& path, const GlrtDetectionConfig& cfg,
                       int n_calibration);
GlrtDetectionConfig read_calibration(const std::string& path, int* n_calibration = nullptr);

inline constexpr int kPowerIterationLimit = 500;
inline constexpr double kPowerIterationTol = 1e-8;

} // namespace specarray
