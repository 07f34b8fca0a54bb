#pragma once

#include <optional>
#include <vector>

#include "specarray/complex_matrix.hpp"
#include "specarray/rng.hpp"
#include "specarray/tensor.hpp"

namespace specarray {

enum class Task : unsigned char { detection = 0, doa = 1 };

// Uniform linear array geometry plus the angle grid used for DoA classes.
struct ArrayConfig {
    int num_elements = 8;              // M
    double spacing_wavelengths = 0.5;  // d
    double grid_min_deg = -60.0;
    double grid_max_deg = 60.0;
    double grid_step_deg = 2.0;

    void validate() const; // throws std::domain_error
    int grid_size() const;
    double grid_angle(int class_index) const;
    // nearest grid class; throws std::domain_error when theta is off-grid
    int class_index(double theta_deg) const;
};

struct SteeringVector {
    double angle_deg = 0.0;
    std::vector<cd> values; // length M, unit-modulus entries, values[0] = 1
};

// a(theta): entry m = exp(-j 2 pi d m sin(theta)), phase reference element 0
SteeringVector steering_vector(const ArrayConfig& config, double angle_deg);
std::vector<SteeringVector> steering_grid(const ArrayConfig& config);

struct SynthesisParams {
    int snapshots = 500;               // T
    double noise_power = 1.0;          // sigma^2 per element
    double soi_power = 1.0;
    double interference_power = 1.0;
    int onset_min = 20;                // detection onset range, 0-based column index
    int onset_max = 480;

    void validate() const; // throws std::domain_error
};

struct ExampleMeta {
    Task task = Task::detection;
    int label = 0;            // detection: hypothesis bit; doa: grid class index
    int activation_time = -1; // 0-based first SOI-active column, -1 when absent
};

// One synthesized observation, normalized to unit total energy.
struct ReceivedArray {
    CMat samples; // M x T
    ExampleMeta meta;
};

// Noiseless components after the same energy scaling as the returned samples;
// soi columns before the activation time are exactly zero.
struct SynthesisDebug {
    CMat soi;
    CMat interference;
};

// Label 0: one steered Gaussian interferer plus AWGN. Label 1: adds an
// independent steered Gaussian SOI that switches on at a random onset drawn
// from [onset_min, onset_max]. Interferer and SOI angles are uniform over
// the grid span (not snapped to the grid).
ReceivedArray synthesize_detection_example(const ArrayConfig& config,
                                           const SynthesisParams& params,
                                           int label, Rng& rng,
                                           SynthesisDebug* debug = nullptr);

// Spatially white Gaussian interference at every element for all T, plus a
// steered SOI at grid angle theta2 active from the midpoint t0 = T/2 on.
// T must be even.
ReceivedArray synthesize_doa_example(const ArrayConfig& config,
                                     const SynthesisParams& params,
                                     double theta2_deg, Rng& rng,
                                     SynthesisDebug* debug = nullptr);

// M x T complex -> M x T x 2 real (channel 0 = Re, channel 1 = Im)
RealTensor to_real_tensor(const CMat& z);
CMat from_real_tensor(const RealTensor& t);

} // namespace specarray
