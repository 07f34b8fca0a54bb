#include <doctest.h>

#include <cmath>
#include <limits>
#include <filesystem>
#include <string>
#include <vector>

#include "specarray/errors.hpp"
#include "specarray/model_io.hpp"
#include "specarray/neural.hpp"
#include "specarray/rng.hpp"
#include "specarray/signal_model.hpp"

using namespace specarray;

namespace {

BatchTensor random_batch(int n, TensorShape shape, std::uint64_t seed) {
    BatchTensor x(n, shape);
    Rng rng(seed);
    for (double& v : x.data) v = rng.gaussian();
    return x;
}

// mean cross-entropy via the forward pass only, with a fresh rng so dropout
// masks repeat across probes
double probe_loss(Network& net, const BatchTensor& x, const std::vector<int>& y,
                  NetMode mode, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    const BatchTensor probs = net.forward(x, mode, &rng);
    double loss = 0.0;
    for (int b = 0; b < x.n; ++b)
        loss -= std::log(std::max(probs.example(b)[y[static_cast<std::size_t>(b)]],
                                  1e-300));
    return loss / x.n;
}

struct GradCheckStats {
    double max_rel_err = 0.0;
    int checked = 0;
};

double rel_err(double num, double ana) {
    return std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6});
}

// Central finite differences against the analytic gradients. Probes start at
// h ~ 1e-5 and retry at 1e-7 when disagreeing: a probe that straddles a relu
// kink or pooling argmax switch is one-sided at the larger step, and the
// retry verifies the difference quotient converges to the analytic value.
GradCheckStats grad_check(Network& net, const BatchTensor& x, const std::vector<int>& y,
                          NetMode mode, std::uint64_t rng_seed, int param_stride) {
    GradCheckStats stats;
    Rng ana_rng(rng_seed);
    const Network::BatchResult res = net.loss_and_gradients(x, y, mode, &ana_rng, true);

    BatchTensor xp = x;
    const auto fd_rel = [&](double& slot, const BatchTensor& probe_x, double ana) {
        const double base = slot;
        double best = std::numeric_limits<double>::infinity();
        for (const double scale : {1e-5, 1e-7}) {
            const double h = scale * std::max(1.0, std::abs(base));
            slot = base + h;
            const double up = probe_loss(net, probe_x, y, mode, rng_seed);
            slot = base - h;
            const double down = probe_loss(net, probe_x, y, mode, rng_seed);
            slot = base;
            best = std::min(best, rel_err((up - down) / (2.0 * h), ana));
            if (best < 1e-4) break;
        }
        return best;
    };

    for (std::size_t i = 0; i < x.data.size(); i += 7) { // every input coordinate class
        stats.max_rel_err =
            std::max(stats.max_rel_err, fd_rel(xp.data[i], xp, res.grad_input.data[i]));
        ++stats.checked;
    }
    for (ParamTensor* p : net.parameters()) {
        for (std::size_t i = 0; i < p->value.size();
             i += static_cast<std::size_t>(param_stride)) {
            stats.max_rel_err =
                std::max(stats.max_rel_err, fd_rel(p->value[i], x, p->grad[i]));
            ++stats.checked;
        }
    }
    return stats;
}

std::string temp_model_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("detection architecture shapes and parameter count are frozen") {
    Network net = build_detection_network({8, 500, 2}, 2, 42);
    REQUIRE(net.layers.size() == 11);
    CHECK(net.layers[0]->output_shape() == TensorShape{6, 498, 32});  // conv 3x3
    CHECK(net.layers[2]->output_shape() == TensorShape{3, 249, 32});  // pool 2x2
    CHECK(net.layers[3]->output_shape() == TensorShape{1, 247, 64});  // conv 3x3
    CHECK(net.layers[5]->output_shape() == TensorShape{1, 123, 64});  // pool 1x2
    CHECK(net.layers[6]->output_shape() == TensorShape{1, 1, 7872});  // flatten
    CHECK(net.layers[7]->output_shape() == TensorShape{1, 1, 128});
    CHECK(net.layers[10]->output_shape() == TensorShape{1, 1, 2});
    CHECK(net.parameter_count() == 1027106);
    CHECK(net.num_classes == 2);
}

TEST_CASE("doa architecture shapes and parameter count are frozen") {
    Network net = build_doa_network({8, 16, 2}, 61, 42);
    CHECK(net.parameter_count() == 164189);
    bool saw_batchnorm = false;
    for (const auto& layer : net.layers) saw_batchnorm |= layer->type() == "batchnorm";
    CHECK(saw_batchnorm);
    // flatten feeds 6 x 3 x 64 = 1152 features into the dense head
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i]->type() == "flatten")
            CHECK(net.layers[i]->output_shape().size() == 1152);
}

TEST_CASE("initialization is deterministic in the seed") {
    Network a = build_doa_network({8, 8, 2}, 5, 7);
    Network b = build_doa_network({8, 8, 2}, 5, 7);
    Network c = build_doa_network({8, 8, 2}, 5, 8);
    const auto sa = a.save_state(), sb = b.save_state(), sc = c.save_state();
    CHECK(sa == sb);
    CHECK(sa != sc);
}

TEST_CASE("gradients match finite differences on a small detection net") {
    Network net = build_detection_network({8, 12, 2}, 2, 11);
    const BatchTensor x = random_batch(3, {8, 12, 2}, 900);
    const std::vector<int> y = {0, 1, 0};
    // train mode exercises dropout; the fixed rng seed freezes its mask
    const GradCheckStats stats = grad_check(net, x, y, NetMode::train, 501, 173);
    CHECK(stats.checked > 200);
    CHECK(stats.max_rel_err < 1e-4);
}

TEST_CASE("gradients match finite differences on a small doa net with batch norm") {
    Network net = build_doa_network({8, 8, 2}, 4, 12);
    const BatchTensor x = random_batch(3, {8, 8, 2}, 901);
    const std::vector<int> y = {1, 3, 0};
    const GradCheckStats stats = grad_check(net, x, y, NetMode::train, 502, 97);
    CHECK(stats.checked > 200);
    CHECK(stats.max_rel_err < 1e-4);
}

TEST_CASE("eval-mode gradients (attack configuration) also match finite differences") {
    Network net = build_doa_network({8, 8, 2}, 4, 13);
    // move the running statistics away from their initialization first
    BatchTensor warm = random_batch(4, {8, 8, 2}, 902);
    std::vector<int> wy = {0, 1, 2, 3};
    Rng rng(55);
    (void)net.loss_and_gradients(warm, wy, NetMode::train, &rng, false);

    const BatchTensor x = random_batch(2, {8, 8, 2}, 903);
    const std::vector<int> y = {2, 0};
    const GradCheckStats stats = grad_check(net, x, y, NetMode::eval, 503, 131);
    CHECK(stats.max_rel_err < 1e-4);
}

TEST_CASE("dropout requires an rng in train mode and is inert in eval mode") {
    Network net = build_detection_network({8, 12, 2}, 2, 14);
    const BatchTensor x = random_batch(1, {8, 12, 2}, 904);
    CHECK_THROWS_AS(net.forward(x, NetMode::train, nullptr), std::logic_error);
    const BatchTensor p1 = net.forward(x, NetMode::eval);
    const BatchTensor p2 = net.forward(x, NetMode::eval);
    CHECK(p1.data == p2.data);
}

TEST_CASE("eval-mode rows are independent of batch composition") {
    Network net = build_doa_network({8, 8, 2}, 4, 15);
    const BatchTensor pair = random_batch(2, {8, 8, 2}, 905);
    const BatchTensor probs = net.forward(pair, NetMode::eval);
    const std::vector<double> alone = net.forward(pair.extract(0), NetMode::eval);
    for (int c = 0; c < 4; ++c)
        CHECK(probs.example(0)[c] == doctest::Approx(alone[static_cast<std::size_t>(c)])
                                         .epsilon(1e-12));
}

TEST_CASE("train-mode batch norm couples examples, eval mode does not") {
    Network net = build_doa_network({8, 8, 2}, 4, 16);
    BatchTensor pair = random_batch(2, {8, 8, 2}, 906);
    Rng r1(1), r2(1);
    const BatchTensor train_pair = net.forward(pair, NetMode::train, &r1);
    BatchTensor other = pair;
    Rng rother(2);
    for (std::size_t i = pair.stride(); i < other.data.size(); ++i)
        other.data[i] = rother.gaussian(); // replace the second example
    Rng r3(1);
    const BatchTensor train_other = net.forward(other, NetMode::train, &r3);
    double diff = 0.0;
    for (int c = 0; c < 4; ++c)
        diff += std::abs(train_pair.example(0)[c] - train_other.example(0)[c]);
    CHECK(diff > 0.0); // first row changed because its batchmates changed
}

TEST_CASE("train-mode forward updates running statistics, eval does not") {
    Network net = build_doa_network({8, 8, 2}, 4, 17);
    const auto before = net.save_state();
    const BatchTensor x = random_batch(3, {8, 8, 2}, 907);
    (void)net.forward(x, NetMode::eval);
    CHECK(net.save_state() == before); // eval never mutates
    Rng rng(3);
    (void)net.forward(x, NetMode::train, &rng);
    CHECK(net.save_state() != before); // running stats moved
}

TEST_CASE("predict returns the argmax of the forward probabilities") {
    Network net = build_detection_network({8, 12, 2}, 2, 18);
    Rng rng(908);
    for (int rep = 0; rep < 10; ++rep) {
        RealTensor x(8, 12, 2);
        for (double& v : x.data) v = rng.gaussian();
        const std::vector<double> probs = net.forward(x, NetMode::eval);
        int best = 0;
        for (std::size_t c = 1; c < probs.size(); ++c)
            if (probs[c] > probs[static_cast<std::size_t>(best)])
                best = static_cast<int>(c);
        CHECK(net.predict(x) == best);
    }
}

TEST_CASE("training is deterministic and records its history") {
    LabeledExamples ds;
    ds.shape = {8, 12, 2};
    ds.num_classes = 2;
    const int n = 24;
    Rng rng(909);
    ds.data.resize(static_cast<std::size_t>(n) * ds.shape.size());
    for (float& v : ds.data) v = static_cast<float>(rng.gaussian());
    for (int i = 0; i < n; ++i) ds.labels.push_back(i % 2);

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.validation_fraction = 0.25;
    cfg.rng_seed = 77;

    TrainResult a = train(ds, NetArch::detection, cfg);
    TrainResult b = train(ds, NetArch::detection, cfg);
    CHECK(a.net.save_state() == b.net.save_state());
    REQUIRE(a.history.size() == 2);
    for (const EpochStats& e : a.history) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(std::isfinite(e.val_loss));
        CHECK(e.learning_rate > 0.0);
        CHECK(e.train_accuracy >= 0.0);
        CHECK(e.train_accuracy <= 1.0);
    }
}

TEST_CASE("diverging training raises NumericalError naming the epoch") {
    LabeledExamples ds;
    ds.shape = {8, 12, 2};
    ds.num_classes = 2;
    Rng rng(910);
    ds.data.resize(16 * ds.shape.size());
    for (float& v : ds.data) v = static_cast<float>(rng.gaussian());
    for (int i = 0; i < 16; ++i) ds.labels.push_back(i % 2);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.validation_fraction = 0.25;
    // Adam steps are ~lr in magnitude, and the stable log-sum-exp keeps the
    // loss finite as long as activations are; 1e100 weights push the dense
    // head product chain past the double range into inf/nan within an epoch.
    cfg.learning_rate = 1e100;
    cfg.rng_seed = 5;
    CHECK_THROWS_AS(train(ds, NetArch::detection, cfg), NumericalError);
}

TEST_CASE("validation-based controls require a validation split") {
    TrainConfig cfg;
    cfg.validation_fraction = 0.0;
    cfg.early_stopping = true;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
    cfg.early_stopping = false;
    cfg.reduce_lr_on_plateau = true;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
    cfg.reduce_lr_on_plateau = false;
    cfg.checkpoint_best = true;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
    cfg.checkpoint_best = false;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("model files round-trip the exact network state") {
    Network net = build_doa_network({8, 8, 2}, 4, 19);
    // move weights and running stats off their initialization
    BatchTensor x = random_batch(4, {8, 8, 2}, 911);
    std::vector<int> y = {0, 1, 2, 3};
    Rng rng(6);
    (void)net.loss_and_gradients(x, y, NetMode::train, &rng, true);

    const std::string path = temp_model_path("specarray_test_model.spnn");
    write_model(path, net);
    Network back = read_model(path);
    CHECK(back.arch == net.arch);
    CHECK(back.in_shape == net.in_shape);
    CHECK(back.num_classes == net.num_classes);

    RealTensor probe(8, 8, 2);
    Rng prng(912);
    for (double& v : probe.data) v = prng.gaussian();
    const std::vector<double> p_orig = net.forward(probe, NetMode::eval);
    const std::vector<double> p_back = back.forward(probe, NetMode::eval);
    REQUIRE(p_orig.size() == p_back.size());
    for (std::size_t i = 0; i < p_orig.size(); ++i) {
        // float32 storage quantizes the weights; outputs agree to that scale
        CHECK(p_orig[i] == doctest::Approx(p_back[i]).epsilon(1e-5));
    }
    // a second save of the loaded net is byte-stable
    const std::string path2 = temp_model_path("specarray_test_model2.spnn");
    write_model(path2, back);
    Network back2 = read_model(path2);
    CHECK(back2.save_state() == back.save_state());

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
    CHECK_THROWS_AS(read_model(temp_model_path("specarray_absent.spnn")),
                    MissingArtifactError);
}

TEST_CASE("covariance input stacks two unit-norm covariance halves") {
    const ArrayConfig array;
    SynthesisParams params;
    params.snapshots = 40;
    params.onset_min = 1;
    params.onset_max = 39;
    Rng rng(913);
    const ReceivedArray z = synthesize_doa_example(array, params, 10.0, rng);
    const RealTensor t = covariance_input(z, 20, 1e-6);
    REQUIRE(t.shape == TensorShape{8, 16, 2});
    for (int half = 0; half < 2; ++half) {
        double sq = 0.0;
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                const int cc = half * 8 + c;
                sq += t.at(r, cc, 0) * t.at(r, cc, 0) + t.at(r, cc, 1) * t.at(r, cc, 1);
            }
        CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-10));
    }
}
