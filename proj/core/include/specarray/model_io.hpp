#pragma once

#include <string>
#include <vector>

#include "specarray/neural.hpp"

namespace specarray {

// Model container: magic "SPNN", u16 version, u8 arch tag, input dims,
// class count, a layer table (type tag + dims), then one float32 LE blob per
// state tensor (weights, biases, batch-norm parameters and running stats).
// Optimizer state is not persisted.
void write_model(const std::string& path, Network& net);
Network read_model(const std::string& path); // MissingArtifactError when absent

// Plain-JSON training history next to the model.
void write_history(const std::string& path, const TrainResult& result);

} // namespace specarray
