#include "specarray/neural.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "specarray/errors.hpp"
#include "specarray/parallel.hpp"
#include "specarray/spatial_stats.hpp"

namespace specarray {

std::vector<std::vector<double>*> Layer::state_blobs() {
    std::vector<std::vector<double>*> blobs;
    for (ParamTensor* p : params()) blobs.push_back(&p->value);
    return blobs;
}

namespace {

void he_uniform_init(std::vector<double>& w, int fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / fan_in);
    for (double& v : w) v = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------

class Conv2dLayer final : public Layer {
public:
    Conv2dLayer(TensorShape in, int kh, int kw, int out_ch, Rng& rng)
        : in_(in), kh_(kh), kw_(kw), out_ch_(out_ch) {
        out_ = TensorShape{in.rows - kh + 1, in.cols - kw + 1, out_ch};
        if (out_.rows < 1 || out_.cols < 1)
            throw std::invalid_argument("Conv2dLayer: kernel larger than input");
        weights_.name = "conv_w";
        weights_.value.resize(static_cast<std::size_t>(kh) * kw * in.channels * out_ch);
        he_uniform_init(weights_.value, kh * kw * in.channels, rng);
        bias_.name = "conv_b";
        bias_.value.assign(static_cast<std::size_t>(out_ch), 0.0);
    }

    std::string type() const override { return "conv2d"; }
    TensorShape input_shape() const override { return in_; }
    TensorShape output_shape() const override { return out_; }
    std::vector<ParamTensor*> params() override { return {&weights_, &bias_}; }
    std::vector<int> dims() const override { return {kh_, kw_, in_.channels, out_ch_}; }

    void forward(const BatchTensor& in, BatchTensor& out, NetMode, Rng*,
                 LayerContext& ctx) override {
        ctx.input = in;
        out = BatchTensor(in.n, out_);
        const int ic = in_.channels;
        parallel_chunks(static_cast<std::size_t>(in.n), kReductionChunks,
                        [&](int, std::size_t b0, std::size_t b1) {
            for (std::size_t b = b0; b < b1; ++b) {
                const double* x = in.example(static_cast<int>(b));
                double* y = out.example(static_cast<int>(b));
                for (int r = 0; r < out_.rows; ++r)
                    for (int c = 0; c < out_.cols; ++c) {
                        double* yrc = y + (static_cast<std::size_t>(r) * out_.cols + c) * out_ch_;
                        for (int o = 0; o < out_ch_; ++o) yrc[o] = bias_.value[o];
                        for (int dr = 0; dr < kh_; ++dr) {
                            const double* xrow =
                                x + (static_cast<std::size_t>(r + dr) * in_.cols + c) * ic;
                            const double* wrow =
                                weights_.value.data() +
                                static_cast<std::size_t>(dr) * kw_ * ic * out_ch_;
                            for (int dc = 0; dc < kw_; ++dc)
                                for (int i = 0; i < ic; ++i) {
                                    const double a = xrow[dc * ic + i];
                                    const double* w = wrow + (dc * ic + i) * out_ch_;
                                    for (int o = 0; o < out_ch_; ++o) yrc[o] += a * w[o];
                                }
                        }
                    }
            }
        });
    }

    void backward(const BatchTensor& grad_out, const LayerContext& ctx,
                  BatchTensor& grad_in, bool accumulate_param_grads) override {
        const BatchTensor& in = ctx.input;
        grad_in = BatchTensor(in.n, in_);
        const int ic = in_.channels;
        const std::size_t wsize = weights_.value.size();
        if (accumulate_param_grads) {
            if (wgrad_groups_.size() != static_cast<std::size_t>(kReductionChunks)) {
                wgrad_groups_.assign(kReductionChunks, std::vector<double>(wsize, 0.0));
                bgrad_groups_.assign(kReductionChunks,
                                     std::vector<double>(bias_.value.size(), 0.0));
            } else {
                for (auto& g : wgrad_groups_) std::fill(g.begin(), g.end(), 0.0);
                for (auto& g : bgrad_groups_) std::fill(g.begin(), g.end(), 0.0);
            }
        }
        parallel_chunks(static_cast<std::size_t>(in.n), kReductionChunks,
                        [&](int chunk, std::size_t b0, std::size_t b1) {
            double* gw = accumulate_param_grads ? wgrad_groups_[chunk].data() : nullptr;
            double* gb = accumulate_param_grads ? bgrad_groups_[chunk].data() : nullptr;
            for (std::size_t b = b0; b < b1; ++b) {
                const double* x = in.example(static_cast<int>(b));
                const double* gy = grad_out.example(static_cast<int>(b));
                double* gx = grad_in.example(static_cast<int>(b));
                for (int r = 0; r < out_.rows; ++r)
                    for (int c = 0; c < out_.cols; ++c) {
                        const double* gyrc =
                            gy + (static_cast<std::size_t>(r) * out_.cols + c) * out_ch_;
                        if (gb)
                            for (int o = 0; o < out_ch_; ++o) gb[o] += gyrc[o];
                        for (int dr = 0; dr < kh_; ++dr) {
                            const std::size_t xbase =
                                (static_cast<std::size_t>(r + dr) * in_.cols + c) * ic;
                            const std::size_t wbase =
                                static_cast<std::size_t>(dr) * kw_ * ic * out_ch_;
                            for (int dc = 0; dc < kw_; ++dc)
                                for (int i = 0; i < ic; ++i) {
                                    const std::size_t xi = xbase + static_cast<std::size_t>(dc) * ic + i;
                                    const double* w =
                                        weights_.value.data() + wbase + (dc * ic + i) * out_ch_;
                                    double s = 0.0;
                                    for (int o = 0; o < out_ch_; ++o) s += gyrc[o] * w[o];
                                    gx[xi] += s;
                                    if (gw) {
                                        double* gwp = gw + wbase + (dc * ic + i) * out_ch_;
                                        const double a = x[xi];
                                        for (int o = 0; o < out_ch_; ++o)
                                            gwp[o] += a * gyrc[o];
                                    }
                                }
                        }
                    }
            }
        });
        if (accumulate_param_grads) {
            for (int g = 0; g < kReductionChunks; ++g) {
                for (std::size_t i = 0; i < wsize; ++i)
                    weights_.grad[i] += wgrad_groups_[g][i];
                for (std::size_t i = 0; i < bias_.value.size(); ++i)
                    bias_.grad[i] += bgrad_groups_[g][i];
            }
        }
    }

private:
    TensorShape in_, out_;
    int kh_, kw_, out_ch_;
    ParamTensor weights_, bias_;
    std::vector<std::vector<double>> wgrad_groups_, bgrad_groups_;
};

// ---------------------------------------------------------------------------

class ReluLayer final : public Layer {
public:
    explicit ReluLayer(TensorShape in) : in_(in) {}
    std::string type() const override { return "relu"; }
    TensorShape input_shape() const override { return in_; }
    TensorShape output_shape() const override { return in_; }
    std::vector<int> dims() const override { return {}; }

    void forward(const BatchTensor& in, BatchTensor& out, NetMode, Rng*,
                 LayerContext& ctx) override {
        ctx.input = in;
        out = in;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    }

    void backward(const BatchTensor& grad_out, const LayerContext& ctx,
                  BatchTensor& grad_in, bool) override {
        grad_in = grad_out;
        for (std::size_t i = 0; i < grad_in.data.size(); ++i)
            if (ctx.input.data[i] <= 0.0) grad_in.data[i] = 0.0;
    }

private:
    TensorShape in_;
};

// ---------------------------------------------------------------------------

class MaxPoolLayer final : public Layer {
public:
    MaxPoolLayer(TensorShape in, int ph, int pw) : in_(in), ph_(ph), pw_(pw) {
        if (ph < 1 || pw < 1) throw std::invalid_argument("MaxPoolLayer: bad pool dims");
        out_ = TensorShape{in.rows / ph, in.cols / pw, in.channels};
        if (out_.rows < 1 || out_.cols < 1)
            throw std::invalid_argument("MaxPoolLayer: pool larger than input");
    }

    std::string type() const override { return "maxpool"; }
    TensorShape input_shape() const override { return in_; }
    TensorShape output_shape() const override { return out_; }
    std::vector<int> dims() const override { return {ph_, pw_}; }

    void forward(const BatchTensor& in, BatchTensor& out, NetMode, Rng*,
                 LayerContext& ctx) override {
        out = BatchTensor(in.n, out_);
        ctx.argmax.assign(out.data.size(), 0);
        const int ch = in_.channels;
        parallel_chunks(static_cast<std::size_t>(in.n), kReductionChunks,
                        [&](int, std::size_t b0, std::size_t b1) {
            for (std::size_t b = b0; b < b1; ++b) {
                const double* x = in.example(static_cast<int>(b));
                double* y = out.example(static_cast<int>(b));
                int* am = ctx.argmax.data() + out.stride() * b;
                for (int r = 0; r < out_.rows; ++r)
                    for (int c = 0; c < out_.cols; ++c)
                        for (int k = 0; k < ch; ++k) {
                            double best = -std::numeric_limits<double>::infinity();
                            int best_idx = 0;
                            for (int dr = 0; dr < ph_; ++dr)
                                for (int dc = 0; dc < pw_; ++dc) {
                                    const int idx =
                                        ((r * ph_ + dr) * in_.cols + (c * pw_ + dc)) * ch + k;
                                    if (x[idx] > best) { best = x[idx]; best_idx = idx; }
                                }
                            const std::size_t oi =
                                (static_cast<std::size_t>(r) * out_.cols + c) * ch + k;
                            y[oi] = best;
                            am[oi] = best_idx;
                        }
            }
        });
    }

    void backward(const BatchTensor& grad_out, const LayerContext& ctx,
                  BatchTensor& grad_in, bool) override {
        grad_in = BatchTensor(grad_out.n, in_);
        parallel_chunks(static_cast<std::size_t>(grad_out.n), kReductionChunks,
                        [&](int, std::size_t b0, std::size_t b1) {
            for (std::size_t b = b0; b < b1; ++b) {
                const double* gy = grad_out.example(static_cast<int>(b));
                double* gx = grad_in.example(static_cast<int>(b));
                const int* am = ctx.argmax.data() + grad_out.stride() * b;
                for (std::size_t i = 0; i < grad_out.stride(); ++i)
                    gx[am[i]] += gy[i];
            }
        });
    }

private:
    TensorShape in_, out_;
    int ph_, pw_;
};

// ---------------------------------------------------------------------------

// Channel-wise batch normalization. Train mode uses batch statistics and
// refreshes the running estimates; eval mode applies the running estimates.
class BatchNormLayer final : public Layer {
public:
    BatchNormLayer(TensorShape in, double eps = 1e-5, double momentum = 0.9)
        : in_(in), eps_(eps), momentum_(momentum) {
        const auto ch = static_cast<std::size_t>(in.channels);
        gamma_.name = "bn_gamma";
        gamma_.value.assign(ch, 1.0);
        beta_.name = "bn_beta";
        beta_.value.assign(ch, 0.0);
        running_mean_.assign(ch, 0.0);
        running_var_.assign(ch, 1.0);
    }

    std::string type() const override { return "batchnorm"; }
    TensorShape input_shape() const override { return in_; }
    TensorShape output_shape() const override { return in_; }
    std::vector<ParamTensor*> params() override { return {&gamma_, &beta_}; }
    std::vector<std::vector<double>*> state_blobs() override {
        return {&gamma_.value, &beta_.value, &running_mean_, &running_var_};
    }
    std::vector<int> dims() const override { return {in_.channels}; }

    void forward(const BatchTensor& in, BatchTensor& out, NetMode mode, Rng*,
                 LayerContext& ctx) override {
        ctx.input = in;
        ctx.mode = mode;
        out = BatchTensor(in.n, in_);
        const int ch = in_.channels;
        const std::size_t spatial = static_cast<std::size_t>(in_.rows) * in_.cols;
        const double count = static_cast<double>(in.n) * spatial;

        ctx.bn_mean.assign(static_cast<std::size_t>(ch), 0.0);
        ctx.bn_inv_std.assign(static_cast<std::size_t>(ch), 0.0);
        if (mode == NetMode::train) {
            std::vector<double> var(static_cast<std::size_t>(ch), 0.0);
            for (int b = 0; b < in.n; ++b) {
                const double* x = in.example(b);
                for (std::size_t s = 0; s < spatial; ++s)
                    for (int k = 0; k < ch; ++k) ctx.bn_mean[k] += x[s * ch + k];
            }
            for (int k = 0; k < ch; ++k) ctx.bn_mean[k] /= count;
            for (int b = 0; b < in.n; ++b) {
                const double* x = in.example(b);
                for (std::size_t s = 0; s < spatial; ++s)
                    for (int k = 0; k < ch; ++k) {
                        const double d = x[s * ch + k] - ctx.bn_mean[k];
                        var[k] += d * d;
                    }
            }
            for (int k = 0; k < ch; ++k) {
                var[k] /= count;
                ctx.bn_inv_std[k] = 1.0 / std::sqrt(var[k] + eps_);
                running_mean_[k] = momentum_ * running_mean_[k] + (1.0 - momentum_) * ctx.bn_mean[k];
                running_var_[k] = momentum_ * running_var_[k] + (1.0 - momentum_) * var[k];
            }
        } else {
            for (int k = 0; k < ch; ++k) {
                ctx.bn_mean[k] = running_mean_[k];
                ctx.bn_inv_std[k] = 1.0 / std::sqrt(running_var_[k] + eps_);
            }
        }

        ctx.bn_xhat.resize(in.data.size());
        for (int b = 0; b < in.n; ++b) {
            const double* x = in.example(b);
            double* y = out.example(b);
            double* xh = ctx.bn_xhat.data() + in.stride() * b;
            for (std::size_t s = 0; s < spatial; ++s)
                for (int k = 0; k < ch; ++k) {
                    const std::size_t i = s * ch + k;
                    xh[i] = (x[i] - ctx.bn_mean[k]) * ctx.bn_inv_std[k];
                    y[i] = gamma_.value[k] * xh[i] + beta_.value[k];
                }
        }
    }

    void backward(const BatchTensor& grad_out, const LayerContext& ctx,
                  BatchTensor& grad_in, bool accumulate_param_grads) override {
        const int ch = in_.channels;
        const std::size_t spatial = static_cast<std::size_t>(in_.rows) * in_.cols;
        const double count = static_cast<double>(grad_out.n) * spatial;
        grad_in = BatchTensor(grad_out.n, in_);

        std::vector<double> sum_dy(static_cast<std::size_t>(ch), 0.0);
        std::vector<double> sum_dy_xhat(static_cast<std::size_t>(ch), 0.0);
        for (int b = 0; b < grad_out.n; ++b) {
            const double* gy = grad_out.example(b);
            const double* xh = ctx.bn_xhat.data() + grad_out.stride() * b;
            for (std::size_t s = 0; s < spatial; ++s)
                for (int k = 0; k < ch; ++k) {
                    const std::size_t i = s * ch + k;
                    sum_dy[k] += gy[i];
                    sum_dy_xhat[k] += gy[i] * xh[i];
                }
        }
        if (accumulate_param_grads) {
            for (int k = 0; k < ch; ++k) {
                beta_.grad[k] += sum_dy[k];
                gamma_.grad[k] += sum_dy_xhat[k];
            }
        }

        if (ctx.mode == NetMode::train) {
            for (int b = 0; b < grad_out.n; ++b) {
                const double* gy = grad_out.example(b);
                const double* xh = ctx.bn_xhat.data() + grad_out.stride() * b;
                double* gx = grad_in.example(b);
                for (std::size_t s = 0; s < spatial; ++s)
                    for (int k = 0; k < ch; ++k) {
                        const std::size_t i = s * ch + k;
                        gx[i] = gamma_.value[k] * ctx.bn_inv_std[k] *
                                (gy[i] - sum_dy[k] / count - xh[i] * sum_dy_xhat[k] / count);
                    }
            }
        } else {
            // running statistics are constants in eval mode
            for (int b = 0; b < grad_out.n; ++b) {
                const double* gy = grad_out.example(b);
                double* gx = grad_in.example(b);
                for (std::size_t s = 0; s < spatial; ++s)
                    for (int k = 0; k < ch; ++k) {
                        const std::size_t i = s * ch + k;
                        gx[i] = gamma_.value[k] * ctx.bn_inv_std[k] * gy[i];
                    }
            }
        }
    }

private:
    TensorShape in_;
    double eps_, momentum_;
    ParamTensor gamma_, beta_;
    std::vector<double> running_mean_, running_var_;
};

// ---------------------------------------------------------------------------

class FlattenLayer final : public Layer {
public:
    explicit FlattenLayer(TensorShape in)
        : in_(in), out_{1, 1, static_cast<int>(in.size())} {}
    std::string type() const override { return "flatten"; }
    TensorShape input_shape() const override { return in_; }
    TensorShape output_shape() const override { return out_; }
    std::vector<int> dims() const override { return {}; }

    void forward(const BatchTensor& in, BatchTensor& out, NetMode, Rng*,
                 LayerContext&) override {
        out = in;
        out.shape = out_;
    }
    void backward(const BatchTensor& grad_out, const LayerContext&,
                  BatchTensor& grad_in, bool) override {
        grad_in = grad_out;
        grad_in.shape = in_;
    }

private:
    TensorShape in_, out_;
};

// ---------------------------------------------------------------------------

class DropoutLayer final : public Layer {
public:
    DropoutLayer(TensorShape in, double rate) : in_(in), rate_(rate) {
        if (!(rate >= 0.0 && rate < 1.0))
            throw std::invalid_argument("DropoutLayer: rate must lie in [0, 1)");
    }
    std::string type() const override { return "dropout"; }
    TensorShape input_shape() const override { return in_; }
    TensorShape output_shape() const override { return in_; }
    std::vector<int> dims() const override { return {}; }

    void forward(const BatchTensor& in, BatchTensor& out, NetMode mode, Rng* rng,
                 LayerContext& ctx) override {
        ctx.mode = mode;
        out = in;
        if (mode != NetMode::train || rate_ == 0.0) return;
        if (!rng) throw std::logic_error("DropoutLayer: train mode needs an rng");
        const double keep = 1.0 - rate_;
        const double scale = 1.0 / keep;
        ctx.keep.assign(in.data.size(), 1);
        for (std::size_t i = 0; i < in.data.size(); ++i) {
            if (rng->uniform01() < rate_) {
                ctx.keep[i] = 0;
                out.data[i] = 0.0;
            } else {
                out.data[i] *= scale;
            }
        }
    }

    void backward(const BatchTensor& grad_out, const LayerContext& ctx,
                  BatchTensor& grad_in, bool) override {
        grad_in = grad_out;
        if (ctx.mode != NetMode::train || rate_ == 0.0 || ctx.keep.empty()) return;
        const double scale = 1.0 / (1.0 - rate_);
        for (std::size_t i = 0; i < grad_in.data.size(); ++i)
            grad_in.data[i] = ctx.keep[i] ? grad_in.data[i] * scale : 0.0;
    }

private:
    TensorShape in_;
    double rate_;
};

// ---------------------------------------------------------------------------

class DenseLayer final : public Layer {
public:
    DenseLayer(TensorShape in, int out_features, Rng& rng)
        : in_(in), in_features_(static_cast<int>(in.size())),
          out_{1, 1, out_features} {
        weights_.name = "dense_w";
        weights_.value.resize(static_cast<std::size_t>(in_features_) * out_features);
        he_uniform_init(weights_.value, in_features_, rng);
        bias_.name = "dense_b";
        bias_.value.assign(static_cast<std::size_t>(out_features), 0.0);
    }

    std::string type() const override { return "dense"; }
    TensorShape input_shape() const override { return in_; }
    TensorShape output_shape() const override { return out_; }
    std::vector<ParamTensor*> params() override { return {&weights_, &bias_}; }
    std::vector<int> dims() const override { return {in_features_, out_.channels}; }

    void forward(const BatchTensor& in, BatchTensor& out, NetMode, Rng*,
                 LayerContext& ctx) override {
        ctx.input = in;
        out = BatchTensor(in.n, out_);
        const int of = out_.channels;
        parallel_chunks(static_cast<std::size_t>(in.n), kReductionChunks,
                        [&](int, std::size_t b0, std::size_t b1) {
            for (std::size_t b = b0; b < b1; ++b) {
                const double* x = in.example(static_cast<int>(b));
                double* y = out.example(static_cast<int>(b));
                std::copy(bias_.value.begin(), bias_.value.end(), y);
                for (int i = 0; i < in_features_; ++i) {
                    const double a = x[i];
                    if (a == 0.0) continue;
                    const double* w = weights_.value.data() + static_cast<std::size_t>(i) * of;
                    for (int o = 0; o < of; ++o) y[o] += a * w[o];
                }
            }
        });
    }

    void backward(const BatchTensor& grad_out, const LayerContext& ctx,
                  BatchTensor& grad_in, bool accumulate_param_grads) override {
        const BatchTensor& in = ctx.input;
        grad_in = BatchTensor(in.n, in_);
        const int of = out_.channels;
        const std::size_t wsize = weights_.value.size();
        if (accumulate_param_grads) {
            if (wgrad_groups_.size() != static_cast<std::size_t>(kReductionChunks)) {
                wgrad_groups_.assign(kReductionChunks, std::vector<double>(wsize, 0.0));
                bgrad_groups_.assign(kReductionChunks,
                                     std::vector<double>(bias_.value.size(), 0.0));
            } else {
                for (auto& g : wgrad_groups_) std::fill(g.begin(), g.end(), 0.0);
                for (auto& g : bgrad_groups_) std::fill(g.begin(), g.end(), 0.0);
            }
        }
        parallel_chunks(static_cast<std::size_t>(in.n), kReductionChunks,
                        [&](int chunk, std::size_t b0, std::size_t b1) {
            double* gw = accumulate_param_grads ? wgrad_groups_[chunk].data() : nullptr;
            double* gb = accumulate_param_grads ? bgrad_groups_[chunk].data() : nullptr;
            for (std::size_t b = b0; b < b1; ++b) {
                const double* x = in.example(static_cast<int>(b));
                const double* gy = grad_out.example(static_cast<int>(b));
                double* gx = grad_in.example(static_cast<int>(b));
                if (gb)
                    for (int o = 0; o < of; ++o) gb[o] += gy[o];
                for (int i = 0; i < in_features_; ++i) {
                    const double* w = weights_.value.data() + static_cast<std::size_t>(i) * of;
                    double s = 0.0;
                    for (int o = 0; o < of; ++o) s += gy[o] * w[o];
                    gx[i] = s;
                    if (gw) {
                        const double a = x[i];
                        if (a != 0.0) {
                            double* gwp = gw + static_cast<std::size_t>(i) * of;
                            for (int o = 0; o < of; ++o) gwp[o] += a * gy[o];
                        }
                    }
                }
            }
        });
        if (accumulate_param_grads) {
            for (int g = 0; g < kReductionChunks; ++g) {
                for (std::size_t i = 0; i < wsize; ++i)
                    weights_.grad[i] += wgrad_groups_[g][i];
                for (std::size_t i = 0; i < bias_.value.size(); ++i)
                    bias_.grad[i] += bgrad_groups_[g][i];
            }
        }
    }

private:
    TensorShape in_, out_;
    int in_features_;
    ParamTensor weights_, bias_;
    std::vector<std::vector<double>> wgrad_groups_, bgrad_groups_;
};

void softmax_row(const double* logits, double* probs, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (int i = 0; i < n; ++i) probs[i] /= sum;
}

// cross-entropy via log-sum-exp, exact for finite logits
double cross_entropy_row(const double* logits, int n, int label) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
    return mx + std::log(sum) - logits[label];
}

} // namespace

// ---------------------------------------------------------------------------

BatchTensor Network::forward(const BatchTensor& x, NetMode mode, Rng* rng,
                             std::vector<LayerContext>* cache) {
    if (!(x.shape == in_shape))
        throw std::invalid_argument("Network::forward: input shape mismatch");
    std::vector<LayerContext> local;
    std::vector<LayerContext>& ctxs = cache ? *cache : local;
    ctxs.clear();
    ctxs.resize(layers.size());

    BatchTensor cur = x;
    BatchTensor next;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        layers[li]->forward(cur, next, mode, rng, ctxs[li]);
        cur = std::move(next);
    }
    // cur now holds logits (1 x 1 x num_classes per example)
    BatchTensor probs = cur;
    for (int b = 0; b < cur.n; ++b)
        softmax_row(cur.example(b), probs.example(b), num_classes);
    if (cache) {
        // stash logits for the loss; reuse the context list tail
        cache->push_back(LayerContext{});
        cache->back().input = std::move(cur);
    }
    return probs;
}

std::vector<double> Network::forward(const RealTensor& x, NetMode mode) {
    BatchTensor batch(1, x.shape);
    batch.insert(0, x);
    const BatchTensor probs = forward(batch, mode);
    return {probs.data.begin(), probs.data.end()};
}

int Network::predict(const RealTensor& x) {
    const std::vector<double> p = forward(x, NetMode::eval);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

Network::BatchResult Network::loss_and_gradients(const BatchTensor& x,
                                                 const std::vector<int>& y,
                                                 NetMode mode, Rng* rng,
                                                 bool accumulate_param_grads) {
    if (static_cast<int>(y.size()) != x.n)
        throw std::invalid_argument("loss_and_gradients: label count mismatch");
    for (int label : y)
        if (label < 0 || label >= num_classes)
            throw std::invalid_argument("loss_and_gradients: label outside class range");

    if (accumulate_param_grads) zero_grads();
    std::vector<LayerContext> ctxs;
    BatchResult res;
    res.probabilities = forward(x, mode, rng, &ctxs);
    const BatchTensor& logits = ctxs.back().input;

    const double inv_n = 1.0 / x.n;
    BatchTensor grad = res.probabilities; // (p - onehot) / n at the logits
    for (int b = 0; b < x.n; ++b) {
        res.mean_loss += cross_entropy_row(logits.example(b), num_classes, y[b]) * inv_n;
        const double* p = res.probabilities.example(b);
        double* g = grad.example(b);
        int arg = 0;
        for (int k = 0; k < num_classes; ++k) {
            g[k] = p[k] * inv_n;
            if (p[k] > p[arg]) arg = k;
        }
        g[y[b]] -= inv_n;
        if (arg == y[b]) ++res.correct;
    }

    BatchTensor next;
    for (std::size_t li = layers.size(); li-- > 0;) {
        layers[li]->backward(grad, ctxs[li], next, accumulate_param_grads);
        grad = std::move(next);
    }
    res.grad_input = std::move(grad);
    return res;
}

Network::ExampleResult Network::loss_and_gradients(const RealTensor& x, int y) {
    BatchTensor batch(1, x.shape);
    batch.insert(0, x);
    BatchResult br = loss_and_gradients(batch, {y}, NetMode::eval, nullptr, false);
    ExampleResult res;
    res.loss = br.mean_loss;
    res.probabilities.assign(br.probabilities.data.begin(), br.probabilities.data.end());
    res.grad_input = br.grad_input.extract(0);
    return res;
}

std::vector<ParamTensor*> Network::parameters() {
    std::vector<ParamTensor*> all;
    for (auto& l : layers)
        for (ParamTensor* p : l->params()) all.push_back(p);
    return all;
}

std::size_t Network::parameter_count() {
    std::size_t n = 0;
    for (ParamTensor* p : parameters()) n += p->value.size();
    return n;
}

void Network::zero_grads() {
    for (ParamTensor* p : parameters()) {
        p->grad.assign(p->value.size(), 0.0);
    }
}

std::vector<std::vector<double>> Network::save_state() const {
    std::vector<std::vector<double>> state;
    for (const auto& l : layers)
        for (std::vector<double>* blob : const_cast<Layer&>(*l).state_blobs())
            state.push_back(*blob);
    return state;
}

void Network::load_state(const std::vector<std::vector<double>>& state) {
    std::size_t i = 0;
    for (auto& l : layers)
        for (std::vector<double>* blob : l->state_blobs()) {
            if (i >= state.size() || state[i].size() != blob->size())
                throw std::invalid_argument("Network::load_state: blob layout mismatch");
            *blob = state[i++];
        }
    if (i != state.size())
        throw std::invalid_argument("Network::load_state: extra blobs");
}

// ---------------------------------------------------------------------------

Network build_detection_network(TensorShape input, int num_classes,
                                std::uint64_t init_seed) {
    Rng rng(init_seed);
    Network net;
    net.arch = NetArch::detection;
    net.in_shape = input;
    net.num_classes = num_classes;
    TensorShape s = input;
    auto push = [&](std::unique_ptr<Layer> l) {
        s = l->output_shape();
        net.layers.push_back(std::move(l));
    };
    push(std::make_unique<Conv2dLayer>(s, 3, 3, 32, rng));
    push(std::make_unique<ReluLayer>(s));
    push(std::make_unique<MaxPoolLayer>(s, 2, 2));
    push(std::make_unique<Conv2dLayer>(s, 3, 3, 64, rng));
    push(std::make_unique<ReluLayer>(s));
    push(std::make_unique<MaxPoolLayer>(s, 1, 2));
    push(std::make_unique<FlattenLayer>(s));
    push(std::make_unique<DenseLayer>(s, 128, rng));
    push(std::make_unique<ReluLayer>(s));
    push(std::make_unique<DropoutLayer>(s, 0.5));
    push(std::make_unique<DenseLayer>(s, num_classes, rng));
    net.zero_grads();
    return net;
}

Network build_doa_network(TensorShape input, int num_classes, std::uint64_t init_seed) {
    Rng rng(init_seed);
    Network net;
    net.arch = NetArch::doa;
    net.in_shape = input;
    net.num_classes = num_classes;
    TensorShape s = input;
    auto push = [&](std::unique_ptr<Layer> l) {
        s = l->output_shape();
        net.layers.push_back(std::move(l));
    };
    push(std::make_unique<Conv2dLayer>(s, 2, 2, 32, rng));
    push(std::make_unique<ReluLayer>(s));
    push(std::make_unique<BatchNormLayer>(s));
    push(std::make_unique<MaxPoolLayer>(s, 1, 2));
    push(std::make_unique<Conv2dLayer>(s, 2, 2, 64, rng));
    push(std::make_unique<ReluLayer>(s));
    push(std::make_unique<BatchNormLayer>(s));
    push(std::make_unique<MaxPoolLayer>(s, 1, 2));
    push(std::make_unique<FlattenLayer>(s));
    push(std::make_unique<DenseLayer>(s, 128, rng));
    push(std::make_unique<ReluLayer>(s));
    push(std::make_unique<DropoutLayer>(s, 0.3));
    push(std::make_unique<DenseLayer>(s, num_classes, rng));
    net.zero_grads();
    return net;
}

Network build_network(NetArch arch, TensorShape input, int num_classes,
                      std::uint64_t init_seed) {
    return arch == NetArch::detection
               ? build_detection_network(input, num_classes, init_seed)
               : build_doa_network(input, num_classes, init_seed);
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::domain_error("TrainConfig: learning_rate <= 0");
    if (batch_size < 1) throw std::domain_error("TrainConfig: batch_size < 1");
    if (epochs < 1) throw std::domain_error("TrainConfig: epochs < 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw std::domain_error("TrainConfig: validation_fraction outside [0, 1)");
    if ((early_stopping || checkpoint_best || reduce_lr_on_plateau) &&
        validation_fraction == 0.0)
        throw std::domain_error("TrainConfig: validation-based controls need a split");
    if (!(lr_factor > 0.0 && lr_factor < 1.0))
        throw std::domain_error("TrainConfig: lr_factor outside (0, 1)");
    if (early_stop_patience < 1 || lr_patience < 1)
        throw std::domain_error("TrainConfig: patience must be >= 1");
}

TrainConfig default_train_config(NetArch arch) {
    TrainConfig cfg;
    if (arch == NetArch::doa) {
        cfg.epochs = 60;
        cfg.early_stopping = true;
        cfg.reduce_lr_on_plateau = true;
        cfg.checkpoint_best = true;
    }
    return cfg;
}

void LabeledExamples::validate() const {
    if (labels.empty()) throw std::domain_error("LabeledExamples: empty dataset");
    if (num_classes < 2) throw std::domain_error("LabeledExamples: needs >= 2 classes");
    if (data.size() != shape.size() * labels.size())
        throw std::domain_error("LabeledExamples: data size mismatch");
    for (int l : labels)
        if (l < 0 || l >= num_classes)
            throw std::domain_error("LabeledExamples: label outside class range");
}

namespace {

BatchTensor gather_batch(const LabeledExamples& ds, const std::vector<int>& order,
                         int begin, int count, std::vector<int>& labels_out) {
    BatchTensor batch(count, ds.shape);
    labels_out.resize(static_cast<std::size_t>(count));
    const std::size_t stride = ds.shape.size();
    for (int b = 0; b < count; ++b) {
        const int idx = order[static_cast<std::size_t>(begin + b)];
        const float* src = ds.data.data() + stride * static_cast<std::size_t>(idx);
        double* dst = batch.example(b);
        for (std::size_t i = 0; i < stride; ++i) dst[i] = static_cast<double>(src[i]);
        labels_out[static_cast<std::size_t>(b)] = ds.labels[static_cast<std::size_t>(idx)];
    }
    return batch;
}

struct EvalMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalMetrics evaluate(Network& net, const LabeledExamples& ds,
                     const std::vector<int>& order, int begin, int end,
                     int batch_size) {
    EvalMetrics m;
    const int total = end - begin;
    if (total <= 0) return m;
    int correct = 0;
    double loss_sum = 0.0;
    std::vector<int> labels;
    for (int at = begin; at < end; at += batch_size) {
        const int count = std::min(batch_size, end - at);
        BatchTensor batch = gather_batch(ds, order, at, count, labels);
        const BatchTensor probs = net.forward(batch, NetMode::eval);
        for (int b = 0; b < count; ++b) {
            const double* p = probs.example(b);
            const int y = labels[static_cast<std::size_t>(b)];
            loss_sum += -std::log(std::max(p[y], 1e-300));
            const double* arg = std::max_element(p, p + net.num_classes);
            if (static_cast<int>(arg - p) == y) ++correct;
        }
    }
    m.loss = loss_sum / total;
    m.accuracy = static_cast<double>(correct) / total;
    return m;
}

void adam_step(std::vector<ParamTensor*>& params, double lr, int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (ParamTensor* p : params) {
        if (p->adam_m.size() != p->value.size()) {
            p->adam_m.assign(p->value.size(), 0.0);
            p->adam_v.assign(p->value.size(), 0.0);
        }
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            p->adam_m[i] = b1 * p->adam_m[i] + (1.0 - b1) * g;
            p->adam_v[i] = b2 * p->adam_v[i] + (1.0 - b2) * g * g;
            const double mhat = p->adam_m[i] / c1;
            const double vhat = p->adam_v[i] / c2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// Shared trainer; perturb_batch (when set) rewrites the minibatch in place
// against the current parameters before the training step.
TrainResult train_loop(
    const LabeledExamples& ds, NetArch arch, const TrainConfig& cfg,
    const std::function<void(Network&, BatchTensor&, const std::vector<int>&)>& perturb_batch) {
    cfg.validate();
    ds.validate();

    Rng rng(cfg.rng_seed);
    TrainResult out;
    out.net = build_network(arch, ds.shape, ds.num_classes, derive_seed(cfg.rng_seed, 0xA11));
    Network& net = out.net;
    std::vector<ParamTensor*> params = net.parameters();

    std::vector<int> order(static_cast<std::size_t>(ds.size()));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const int val_count = static_cast<int>(std::floor(ds.size() * cfg.validation_fraction));
    const int train_count = ds.size() - val_count;
    if (train_count < 1) throw std::domain_error("train: empty training split");
    std::vector<int> train_order(order.begin(), order.begin() + train_count);

    double lr = cfg.learning_rate;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_state;
    int since_improve = 0, since_lr_drop = 0, adam_t = 0;
    std::vector<int> labels;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(train_order);
        double loss_sum = 0.0;
        int correct = 0;
        for (int at = 0; at < train_count; at += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, train_count - at);
            BatchTensor batch = gather_batch(ds, train_order, at, count, labels);
            if (perturb_batch) perturb_batch(net, batch, labels);
            Network::BatchResult r =
                net.loss_and_gradients(batch, labels, NetMode::train, &rng, true);
            if (!std::isfinite(r.mean_loss))
                throw NumericalError("train: non-finite loss at epoch " +
                                         std::to_string(epoch),
                                     epoch);
            loss_sum += r.mean_loss * count;
            correct += r.correct;
            adam_step(params, lr, ++adam_t);
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / train_count;
        st.train_accuracy = static_cast<double>(correct) / train_count;
        st.learning_rate = lr;
        if (val_count > 0) {
            const EvalMetrics vm =
                evaluate(net, ds, order, train_count, ds.size(), cfg.batch_size);
            st.val_loss = vm.loss;
            st.val_accuracy = vm.accuracy;
        } else {
            st.val_loss = std::numeric_limits<double>::quiet_NaN();
            st.val_accuracy = std::numeric_limits<double>::quiet_NaN();
        }
        out.history.push_back(st);

        if (val_count > 0 && st.val_loss < best_val - 1e-9) {
            best_val = st.val_loss;
            out.best_epoch = epoch;
            since_improve = 0;
            since_lr_drop = 0;
            if (cfg.checkpoint_best) best_state = net.save_state();
        } else {
            ++since_improve;
            ++since_lr_drop;
        }
        if (cfg.reduce_lr_on_plateau && since_lr_drop >= cfg.lr_patience) {
            lr *= cfg.lr_factor;
            since_lr_drop = 0;
        }
        if (cfg.early_stopping && since_improve >= cfg.early_stop_patience) break;
    }

    if (cfg.checkpoint_best && !best_state.empty()) net.load_state(best_state);
    if (out.best_epoch == 0) out.best_epoch = static_cast<int>(out.history.size());
    return out;
}

} // namespace

TrainResult train(const LabeledExamples& ds, NetArch arch, const TrainConfig& cfg) {
    return train_loop(ds, arch, cfg, nullptr);
}

namespace detail {
// used by adversarial_train (attacks.cpp) to share the exact trainer
TrainResult train_loop_with_perturbation(
    const LabeledExamples& ds, NetArch arch, const TrainConfig& cfg,
    const std::function<void(Network&, BatchTensor&, const std::vector<int>&)>& perturb) {
    return train_loop(ds, arch, cfg, perturb);
}
} // namespace detail

RealTensor covariance_input(const ReceivedArray& z, int k, double zeta) {
    const auto [w_old, w_new] = doa_windows(z, k);
    const CovarianceMatrix r_old = frobenius_normalize(empirical_covariance(w_old, zeta));
    const CovarianceMatrix r_new = frobenius_normalize(empirical_covariance(w_new, zeta));
    const int m = r_old.values.rows;
    RealTensor t(m, 2 * m, 2);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            t.at(r, c, 0) = r_old.values.at(r, c).real();
            t.at(r, c, 1) = r_old.values.at(r, c).imag();
            t.at(r, m + c, 0) = r_new.values.at(r, c).real();
            t.at(r, m + c, 1) = r_new.values.at(r, c).imag();
        }
    return t;
}

} // namespace specarray
