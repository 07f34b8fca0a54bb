#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specarray/neural.hpp"
#include "specarray/signal_model.hpp"

namespace specarray {

// In-memory mirror of an ARRD container plus its JSON sidecar.
struct Dataset {
    Task task = Task::detection;
    int m = 0, t = 0, channels = 2;
    std::vector<std::uint16_t> labels;
    std::vector<float> payload; // example-major, row-major M x T x C
    ArrayConfig array;
    SynthesisParams synthesis;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(labels.size()); }
    std::size_t example_stride() const {
        return static_cast<std::size_t>(m) * t * channels;
    }
    RealTensor tensor(int i) const;
    // Rebuilds the complex observation. The activation time is T/2 for DoA
    // examples and unknown (-1) for detection examples, which the windowed
    // detector never needs.
    ReceivedArray received(int i) const;
    LabeledExamples to_labeled(int num_classes) const;

    void validate() const;
};

// Balanced alternating labels (exact 50/50 on even counts).
Dataset generate_detection_dataset(const ArrayConfig& array,
                                   const SynthesisParams& params, int count,
                                   std::uint64_t seed);

// Labels cycle through the grid classes in order.
Dataset generate_doa_dataset(const ArrayConfig& array,
                             const SynthesisParams& params, int count,
                             std::uint64_t seed);

// Binary container: magic "ARRD", u16 version, u8 task tag, u32 LE dims
// (N, M, T, C), N x u16 LE labels, float32 LE payload. A plain-JSON sidecar
// at <path>.json records ArrayConfig, SynthesisParams, and the seed.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path); // MissingArtifactError when absent

} // namespace specarray
