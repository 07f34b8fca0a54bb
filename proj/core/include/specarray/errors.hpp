#pragma once

#include <stdexcept>
#include <string>

namespace specarray {

// Iterative numerics gave up (power iteration stall, ill-conditioned solve,
// diverging training loss). Carries enough context to report the failure.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, int iterations = -1)
        : std::runtime_error(what), iterations_(iterations) {}

    // iterations spent before giving up, or -1 when not applicable
    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

// A required on-disk artifact (dataset, model, calibration) is absent.
class MissingArtifactError : public std::runtime_error {
public:
    explicit MissingArtifactError(const std::string& path)
        : std::runtime_error("missing artifact: " + path), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Configuration file or CLI flag combination is invalid.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace specarray
