#include "specarray/glrt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "specarray/errors.hpp"

namespace specarray {

void GlrtDetectionConfig::validate() const {
    if (k < 1) throw std::domain_error("GlrtDetectionConfig: k must be >= 1");
    if (zeta < 0.0) throw std::domain_error("GlrtDetectionConfig: negative loading");
    if (!(percentile > 0.0 && percentile <= 100.0))
        throw std::domain_error("GlrtDetectionConfig: percentile must lie in (0, 100]");
}

void GlrtDoaConfig::validate() const {
    if (k < 1) throw std::domain_error("GlrtDoaConfig: k must be >= 1");
    if (zeta < 0.0) throw std::domain_error("GlrtDoaConfig: negative loading");
    if (grid.empty()) throw std::domain_error("GlrtDoaConfig: empty steering grid");
    const std::size_t m = grid.front().values.size();
    for (const SteeringVector& a : grid)
        if (a.values.size() != m)
            throw std::domain_error("GlrtDoaConfig: steering vectors of mixed length");
}

double detection_statistic(const CovariancePair& pair) {
    if (!pair.r_old.values.same_shape(pair.r_new.values))
        throw std::invalid_argument("detection_statistic: covariance shapes differ");
    const CholeskyFactor f = cholesky(pair.r_old.values);
    const CMat solved = f.solve(pair.r_new.values);
    return trace(solved).real();
}

StatisticSequence statistic_sequence(const CMat& z, const GlrtDetectionConfig& cfg) {
    cfg.validate();
    if (z.cols < 2 * cfg.k)
        throw std::out_of_range("statistic_sequence: T=" + std::to_string(z.cols) +
                                " shorter than 2k=" + std::to_string(2 * cfg.k));
    StatisticSequence seq;
    const int count = z.cols - 2 * cfg.k + 1;
    seq.values.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto [w_old, w_new] = detection_windows(z, cfg.k, i);
        const CovariancePair pair{empirical_covariance(w_old, cfg.zeta),
                                  empirical_covariance(w_new, cfg.zeta)};
        seq.values.push_back(detection_statistic(pair));
    }
    return seq;
}

StatisticSequence statistic_sequence(const ReceivedArray& z, const GlrtDetectionConfig& cfg) {
    return statistic_sequence(z.samples, cfg);
}

StatisticSequence zscore_normalize(const StatisticSequence& seq) {
    if (seq.values.empty()) throw std::domain_error("zscore_normalize: empty sequence");
    const double n = static_cast<double>(seq.values.size());
    double mean = 0.0;
    for (double v : seq.values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : seq.values) var += (v - mean) * (v - mean);
    var /= n;
    const double denom = std::sqrt(var) + 1e-6;
    StatisticSequence out;
    out.normalized = true;
    out.values.reserve(seq.values.size());
    for (double v : seq.values) out.values.push_back((v - mean) / denom);
    return out;
}

double calibrate_threshold(const std::vector<double>& h0_maxima, double percentile) {
    if (h0_maxima.empty()) throw std::domain_error("calibrate_threshold: empty sample");
    if (!(percentile > 0.0 && percentile <= 100.0))
        throw std::domain_error("calibrate_threshold: percentile must lie in (0, 100]");
    std::vector<double> sorted(h0_maxima);
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

int glrt_detect(const ReceivedArray& z, const GlrtDetectionConfig& cfg) {
    if (!cfg.gamma_t)
        throw std::logic_error("glrt_detect: threshold not calibrated");
    const StatisticSequence normalized = zscore_normalize(statistic_sequence(z, cfg));
    const double peak = *std::max_element(normalized.values.begin(), normalized.values.end());
    return peak >= *cfg.gamma_t ? 1 : 0;
}

DoaEstimate glrt_doa(const CovariancePair& pair, const GlrtDoaConfig& cfg) {
    cfg.validate();
    const CMat& r_old = pair.r_old.values;
    const CMat& r_new = pair.r_new.values;
    if (!r_old.same_shape(r_new))
        throw std::invalid_argument("glrt_doa: covariance shapes differ");
    if (static_cast<std::size_t>(r_old.rows) != cfg.grid.front().values.size())
        throw std::invalid_argument("glrt_doa: grid length does not match array size");

    const LuFactor f = lu_decompose(r_old);
    auto apply = [&](const std::vector<cd>& v, std::vector<cd>& out) {
        out = f.solve(matvec(r_new, v));
    };
    const PowerIterationResult pi = power_iteration(
        power_iteration_start(r_old.rows), kPowerIterationLimit, kPowerIterationTol, apply);
    if (!pi.converged)
        throw NumericalError("glrt_doa: power iteration stalled after " +
                                 std::to_string(pi.iterations) + " iterations, residual " +
                                 std::to_string(pi.residual),
                             pi.iterations);

    DoaEstimate best;
    best.power_iterations = pi.iterations;
    best.class_index = -1;
    for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
        const double score = std::abs(inner_product(cfg.grid[g].values, pi.eigenvector));
        if (best.class_index < 0 || score > best.score) {
            best.class_index = static_cast<int>(g);
            best.angle_deg = cfg.grid[g].angle_deg;
            best.score = score;
        }
    }
    return best;
}

DoaEstimate glrt_doa(const ReceivedArray& z, const GlrtDoaConfig& cfg) {
    const auto [w_old, w_new] = doa_windows(z, cfg.k);
    const CovariancePair pair{empirical_covariance(w_old, cfg.zeta),
                              empirical_covariance(w_new, cfg.zeta)};
    return glrt_doa(pair, cfg);
}

CovariancePair covariance_pair_from_tensor(const RealTensor& t, double zeta) {
    if (t.shape.channels != 2 || t.shape.cols != 2 * t.shape.rows)
        throw std::invalid_argument("covariance_pair_from_tensor: expected M x 2M x 2 tensor");
    const int m = t.shape.rows;
    auto half = [&](int offset) {
        CMat a(m, m);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c)
                a.at(r, c) = cd{t.at(r, offset + c, 0), t.at(r, offset + c, 1)};
        // restore Hermitianity lost to elementwise perturbations
        CMat h(m, m);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c)
                h.at(r, c) = 0.5 * (a.at(r, c) + std::conj(a.at(c, r)));
        return h;
    };
    return CovariancePair{CovarianceMatrix{half(0), zeta}, CovarianceMatrix{half(m), zeta}};
}

void write_calibration(const std::string& path, const GlrtDetectionConfig& cfg,
                       int n_calibration) {
    if (!cfg.gamma_t) throw std::logic_error("write_calibration: threshold not set");
    nlohmann::ordered_json j;
    j["percentile"] = cfg.percentile;
    j["gamma_T"] = *cfg.gamma_t;
    j["k"] = cfg.k;
    j["zeta"] = cfg.zeta;
    j["n_calibration"] = n_calibration;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_calibration: cannot open " + path);
    out << j.dump(2) << '\n';
}

GlrtDetectionConfig read_calibration(const std::string& path, int* n_calibration) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError(path);
    nlohmann::json j;
    try {
        in >> j;
        GlrtDetectionConfig cfg;
        cfg.percentile = j.at("percentile").get<double>();
        cfg.gamma_t = j.at("gamma_T").get<double>();
        cfg.k = j.at("k").get<int>();
        cfg.zeta = j.at("zeta").get<double>();
        if (n_calibration) *n_calibration = j.at("n_calibration").get<int>();
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("read_calibration: malformed " + path + ": " + e.what());
    }
}

} // namespace specarray
