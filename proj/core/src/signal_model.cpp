#include "specarray/signal_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace specarray {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
constexpr double kGridSnapTol = 1e-9;
} // namespace

void ArrayConfig::validate() const {
    if (num_elements < 2) throw std::domain_error("ArrayConfig: num_elements < 2");
    if (!(spacing_wavelengths > 0.0))
        throw std::domain_error("ArrayConfig: spacing_wavelengths must be positive");
    if (!(grid_min_deg < grid_max_deg))
        throw std::domain_error("ArrayConfig: grid_min_deg must be below grid_max_deg");
    if (!(grid_step_deg > 0.0))
        throw std::domain_error("ArrayConfig: grid_step_deg must be positive");
    const double span = (grid_max_deg - grid_min_deg) / grid_step_deg;
    if (std::abs(span - std::round(span)) > kGridSnapTol)
        throw std::domain_error("ArrayConfig: grid span is not a multiple of the step");
}

int ArrayConfig::grid_size() const {
    return static_cast<int>(std::round((grid_max_deg - grid_min_deg) / grid_step_deg)) + 1;
}

double ArrayConfig::grid_angle(int class_index) const {
    if (class_index < 0 || class_index >= grid_size())
        throw std::domain_error("ArrayConfig: class index outside grid");
    return grid_min_deg + grid_step_deg * class_index;
}

int ArrayConfig::class_index(double theta_deg) const {
    const double offset = (theta_deg - grid_min_deg) / grid_step_deg;
    const int idx = static_cast<int>(std::round(offset));
    if (idx < 0 || idx >= grid_size() ||
        std::abs(theta_deg - (grid_min_deg + grid_step_deg * idx)) > kGridSnapTol)
        throw std::domain_error("ArrayConfig: angle " + std::to_string(theta_deg) +
                                " is not on the grid");
    return idx;
}

SteeringVector steering_vector(const ArrayConfig& config, double angle_deg) {
    config.validate();
    if (!(angle_deg > -90.0 && angle_deg < 90.0))
        throw std::domain_error("steering_vector: angle must lie in (-90, 90)");
    SteeringVector a;
    a.angle_deg = angle_deg;
    a.values.resize(static_cast<std::size_t>(config.num_elements));
    const double s = std::sin(angle_deg * kDegToRad);
    for (int m = 0; m < config.num_elements; ++m) {
        const double phase = -2.0 * M_PI * config.spacing_wavelengths * m * s;
        a.values[static_cast<std::size_t>(m)] = cd{std::cos(phase), std::sin(phase)};
    }
    return a;
}

std::vector<SteeringVector> steering_grid(const ArrayConfig& config) {
    config.validate();
    std::vector<SteeringVector> grid;
    const int n = config.grid_size();
    grid.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) grid.push_back(steering_vector(config, config.grid_angle(i)));
    return grid;
}

void SynthesisParams::validate() const {
    if (snapshots <= 0) throw std::domain_error("SynthesisParams: snapshots must be positive");
    if (noise_power < 0.0) throw std::domain_error("SynthesisParams: negative noise_power");
    if (soi_power < 0.0) throw std::domain_error("SynthesisParams: negative soi_power");
    if (interference_power < 0.0)
        throw std::domain_error("SynthesisParams: negative interference_power");
    if (onset_min < 1 || onset_max < onset_min || onset_max > snapshots - 1)
        throw std::domain_error("SynthesisParams: onset range must satisfy 1 <= min <= max <= T-1");
}

namespace {

// scales samples (and debug components with the same factor) to unit energy
void normalize_energy(CMat& z, SynthesisDebug* debug) {
    double energy = 0.0;
    for (const cd& v : z.data) energy += std::norm(v);
    if (!(energy > 0.0))
        throw std::domain_error("synthesize: zero-energy observation, check powers");
    const double scale = 1.0 / std::sqrt(energy);
    for (cd& v : z.data) v *= scale;
    if (debug) {
        for (cd& v : debug->soi.data) v *= scale;
        for (cd& v : debug->interference.data) v *= scale;
    }
}

void add_steered_source(CMat& z, CMat* component, const SteeringVector& a,
                        double power, int t_begin, Rng& rng) {
    const int m_count = z.rows;
    for (int t = t_begin; t < z.cols; ++t) {
        const cd s = rng.complex_gaussian(power);
        for (int m = 0; m < m_count; ++m) {
            const cd contrib = a.values[static_cast<std::size_t>(m)] * s;
            z.at(m, t) += contrib;
            if (component) component->at(m, t) += contrib;
        }
    }
}

void add_white_noise(CMat& z, CMat* component, double power, Rng& rng) {
    for (int t = 0; t < z.cols; ++t)
        for (int m = 0; m < z.rows; ++m) {
            const cd n = rng.complex_gaussian(power);
            z.at(m, t) += n;
            if (component) component->at(m, t) += n;
        }
}

} // namespace

ReceivedArray synthesize_detection_example(const ArrayConfig& config,
                                           const SynthesisParams& params,
                                           int label, Rng& rng,
                                           SynthesisDebug* debug) {
    config.validate();
    params.validate();
    if (label != 0 && label != 1)
        throw std::domain_error("synthesize_detection_example: label must be 0 or 1");

    const int m_count = config.num_elements;
    const int t_count = params.snapshots;
    ReceivedArray out;
    out.samples = CMat(m_count, t_count);
    out.meta = ExampleMeta{Task::detection, label, -1};
    if (debug) {
        debug->soi = CMat(m_count, t_count);
        debug->interference = CMat(m_count, t_count);
    }

    const double theta1 = rng.uniform(config.grid_min_deg, config.grid_max_deg);
    const SteeringVector a1 = steering_vector(config, theta1);
    add_steered_source(out.samples, debug ? &debug->interference : nullptr, a1,
                       params.interference_power, 0, rng);

    if (label == 1) {
        const double theta2 = rng.uniform(config.grid_min_deg, config.grid_max_deg);
        const int t0 = static_cast<int>(
            rng.uniform_int(static_cast<std::uint64_t>(params.onset_min),
                            static_cast<std::uint64_t>(params.onset_max)));
        out.meta.activation_time = t0;
        const SteeringVector a2 = steering_vector(config, theta2);
        add_steered_source(out.samples, debug ? &debug->soi : nullptr, a2,
                           params.soi_power, t0, rng);
    }

    add_white_noise(out.samples, nullptr, params.noise_power, rng);
    normalize_energy(out.samples, debug);
    return out;
}

ReceivedArray synthesize_doa_example(const ArrayConfig& config,
                                     const SynthesisParams& params,
                                     double theta2_deg, Rng& rng,
                                     SynthesisDebug* debug) {
    config.validate();
    params.validate();
    if (params.snapshots % 2 != 0)
        throw std::domain_error("synthesize_doa_example: snapshot count must be even");
    const int klass = config.class_index(theta2_deg);

    const int m_count = config.num_elements;
    const int t_count = params.snapshots;
    const int t0 = t_count / 2;
    ReceivedArray out;
    out.samples = CMat(m_count, t_count);
    out.meta = ExampleMeta{Task::doa, klass, t0};
    if (debug) {
        debug->soi = CMat(m_count, t_count);
        debug->interference = CMat(m_count, t_count);
    }

    // interference is spatially white at the array for this task
    add_white_noise(out.samples, debug ? &debug->interference : nullptr,
                    params.interference_power, rng);

    const SteeringVector a2 = steering_vector(config, theta2_deg);
    add_steered_source(out.samples, debug ? &debug->soi : nullptr, a2,
                       params.soi_power, t0, rng);

    add_white_noise(out.samples, nullptr, params.noise_power, rng);
    normalize_energy(out.samples, debug);
    return out;
}

RealTensor to_real_tensor(const CMat& z) {
    RealTensor t(z.rows, z.cols, 2);
    for (int m = 0; m < z.rows; ++m)
        for (int c = 0; c < z.cols; ++c) {
            const cd v = z.at(m, c);
            t.at(m, c, 0) = v.real();
            t.at(m, c, 1) = v.imag();
        }
    return t;
}

CMat from_real_tensor(const RealTensor& t) {
    if (t.shape.channels != 2)
        throw std::invalid_argument("from_real_tensor: tensor must have 2 channels");
    CMat z(t.shape.rows, t.shape.cols);
    for (int m = 0; m < t.shape.rows; ++m)
        for (int c = 0; c < t.shape.cols; ++c)
            z.at(m, c) = cd{t.at(m, c, 0), t.at(m, c, 1)};
    return z;
}

} // namespace specarray
