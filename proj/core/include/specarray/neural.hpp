#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "specarray/rng.hpp"
#include "specarray/signal_model.hpp"
#include "specarray/tensor.hpp"

namespace specarray {

struct AttackConfig; // attacks.hpp

enum class NetMode : unsigned char { train, eval };
enum class NetArch : unsigned char { detection = 0, doa = 1 };

// Contiguous batch of equally shaped tensors, example-major.
struct BatchTensor {
    int n = 0;
    TensorShape shape;
    std::vector<double> data;

    BatchTensor() = default;
    BatchTensor(int n_, TensorShape s)
        : n(n_), shape(s), data(static_cast<std::size_t>(n_) * s.size(), 0.0) {}

    std::size_t stride() const { return shape.size(); }
    double* example(int b) { return data.data() + stride() * b; }
    const double* example(int b) const { return data.data() + stride() * b; }

    RealTensor extract(int b) const {
        RealTensor t(shape);
        const double* src = example(b);
        std::copy(src, src + stride(), t.data.begin());
        return t;
    }
    void insert(int b, const RealTensor& t) {
        std::copy(t.data.begin(), t.data.end(), example(b));
    }
};

// One trainable tensor with its gradient and Adam accumulators.
struct ParamTensor {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
};

// Per-call activation cache; owned by the caller so evaluation on frozen
// parameters stays reentrant.
struct LayerContext {
    BatchTensor input;
    std::vector<int> argmax;          // max-pool routing
    std::vector<std::uint8_t> keep;   // dropout mask
    std::vector<double> bn_mean;      // batch stats seen by this call
    std::vector<double> bn_inv_std;
    std::vector<double> bn_xhat;
    NetMode mode = NetMode::eval;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string type() const = 0;
    virtual TensorShape input_shape() const = 0;
    virtual TensorShape output_shape() const = 0;

    // Train mode may consume rng (dropout) and update running statistics
    // (batch norm); eval mode never mutates the layer and is thread-safe.
    virtual void forward(const BatchTensor& in, BatchTensor& out, NetMode mode,
                         Rng* rng, LayerContext& ctx) = 0;

    // grad_in is written, parameter gradients are accumulated into the
    // layer's ParamTensor::grad buffers when accumulate_param_grads is set.
    virtual void backward(const BatchTensor& grad_out, const LayerContext& ctx,
                          BatchTensor& grad_in, bool accumulate_param_grads) = 0;

    virtual std::vector<ParamTensor*> params() { return {}; }
    // Everything that defines inference behavior: trainable parameters plus
    // persistent state such as batch-norm running statistics.
    virtual std::vector<std::vector<double>*> state_blobs();
    virtual std::vector<int> dims() const = 0; // serialized layer descriptor
};

class Network {
public:
    NetArch arch = NetArch::detection;
    TensorShape in_shape;
    int num_classes = 0;
    std::vector<std::unique_ptr<Layer>> layers;

    // Probabilities (softmax over the final dense layer), one row per example.
    // cache, when given, is filled for a subsequent backward pass.
    BatchTensor forward(const BatchTensor& x, NetMode mode, Rng* rng = nullptr,
                        std::vector<LayerContext>* cache = nullptr);
    std::vector<double> forward(const RealTensor& x, NetMode mode);
    int predict(const RealTensor& x);

    struct BatchResult {
        double mean_loss = 0.0;       // mean categorical cross-entropy
        int correct = 0;              // argmax matches over the batch
        BatchTensor probabilities;
        BatchTensor grad_input;       // d mean_loss / d x
    };
    // Forward + backward. Parameter gradients (when requested) are
    // accumulated into the layers' grad buffers, which are zeroed first.
    BatchResult loss_and_gradients(const BatchTensor& x, const std::vector<int>& y,
                                   NetMode mode, Rng* rng, bool accumulate_param_grads);

    struct ExampleResult {
        double loss = 0.0;
        std::vector<double> probabilities;
        RealTensor grad_input;
    };
    // Single-example convenience in the attack configuration: dropout off,
    // running batch-norm statistics.
    ExampleResult loss_and_gradients(const RealTensor& x, int y);

    std::vector<ParamTensor*> parameters();
    std::size_t parameter_count();
    void zero_grads();

    std::vector<std::vector<double>> save_state() const;
    void load_state(const std::vector<std::vector<double>>& state);
};

// Detection head: 3x3x32 conv + ReLU, 2x2 max pool, 3x3x64 conv + ReLU,
// 1x2 max pool, dense 128 + ReLU, dropout 0.5, dense num_classes.
Network build_detection_network(TensorShape input, int num_classes, std::uint64_t init_seed);

// DoA head: 2x2x32 conv + ReLU, batch norm, 1x2 max pool, 2x2x64 conv +
// ReLU, batch norm, 1x2 max pool, dense 128 + ReLU, dropout 0.3,
// dense num_classes.
Network build_doa_network(TensorShape input, int num_classes, std::uint64_t init_seed);

Network build_network(NetArch arch, TensorShape input, int num_classes,
                      std::uint64_t init_seed);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 15;
    double validation_fraction = 0.2;
    bool early_stopping = false;
    int early_stop_patience = 6;
    bool reduce_lr_on_plateau = false;
    double lr_factor = 0.5;
    int lr_patience = 3;
    bool checkpoint_best = false;
    std::uint64_t rng_seed = 1;

    void validate() const;
};

// Paper-cited defaults per architecture: detection trains a fixed epoch
// budget; DoA adds early stopping, lr reduction, and checkpointing.
TrainConfig default_train_config(NetArch arch);

struct LabeledExamples {
    TensorShape shape;
    int num_classes = 0;
    std::vector<float> data; // example-major, same element order as RealTensor
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    Network net;
    std::vector<EpochStats> history;
    int best_epoch = 0;
};

// Adam (0.9/0.999/1e-8) on mean categorical cross-entropy. Deterministic
// given cfg.rng_seed. Divergence (non-finite loss) raises NumericalError
// naming the epoch.
TrainResult train(const LabeledExamples& ds, NetArch arch, const TrainConfig& cfg);

// Same loop with every minibatch replaced by attack-perturbed copies crafted
// against the current parameters. eps = 0 reproduces train() exactly.
// Defined alongside the attack machinery.
TrainResult adversarial_train(const LabeledExamples& ds, NetArch arch,
                              const TrainConfig& cfg, const AttackConfig& attack);

// DoA classifier input: midpoint windows -> loaded covariances -> per-half
// Frobenius normalization -> [R_old | R_new] -> real/imag split (M x 2M x 2).
RealTensor covariance_input(const ReceivedArray& z, int k, double zeta);

namespace detail {
// Trainer internals shared with adversarial_train; perturb rewrites each
// minibatch in place against the current parameters.
TrainResult train_loop_with_perturbation(
    const LabeledExamples& ds, NetArch arch, const TrainConfig& cfg,
    const std::function<void(Network&, BatchTensor&, const std::vector<int>&)>& perturb);
} // namespace detail

} // namespace specarray
