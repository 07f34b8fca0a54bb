#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "specarray/rng.hpp"
#include "specarray/signal_model.hpp"

using namespace specarray;

TEST_CASE("steering vector phases follow the element-0-referenced ULA model") {
    const ArrayConfig cfg; // 8 elements, half-wavelength spacing
    const double theta = 30.0;
    const SteeringVector a = steering_vector(cfg, theta);
    REQUIRE(a.values.size() == 8);
    CHECK(a.values[0] == cd(1.0, 0.0)); // reference element
    const double s = std::sin(theta * std::numbers::pi / 180.0);
    for (int m = 0; m < 8; ++m) {
        const double phase = -2.0 * std::numbers::pi * 0.5 * m * s;
        CHECK(std::abs(a.values[static_cast<std::size_t>(m)] -
                       std::polar(1.0, phase)) < 1e-14);
        CHECK(std::abs(std::abs(a.values[static_cast<std::size_t>(m)]) - 1.0) < 1e-14);
    }
}

TEST_CASE("broadside steering is all ones and a^H a equals M") {
    const ArrayConfig cfg;
    const SteeringVector a0 = steering_vector(cfg, 0.0);
    for (const cd& v : a0.values) CHECK(std::abs(v - cd(1.0, 0.0)) < 1e-15);
    for (double theta : {-60.0, -17.0, 0.0, 42.5, 60.0}) {
        const SteeringVector a = steering_vector(cfg, theta);
        cd acc(0.0, 0.0);
        for (const cd& v : a.values) acc += std::conj(v) * v;
        CHECK(acc.real() == doctest::Approx(8.0).epsilon(1e-14));
        CHECK(acc.imag() == 0.0);
    }
}

TEST_CASE("steering rejects endfire and out-of-range angles") {
    const ArrayConfig cfg;
    CHECK_THROWS_AS(steering_vector(cfg, 90.0), std::domain_error);
    CHECK_THROWS_AS(steering_vector(cfg, -90.0), std::domain_error);
    CHECK_THROWS_AS(steering_vector(cfg, 123.0), std::domain_error);
    CHECK_NOTHROW(steering_vector(cfg, 89.9));
}

TEST_CASE("candidate grid spans -60..60 in 2 degree steps") {
    const ArrayConfig cfg;
    CHECK(cfg.grid_size() == 61);
    CHECK(cfg.grid_angle(0) == doctest::Approx(-60.0));
    CHECK(cfg.grid_angle(30) == doctest::Approx(0.0));
    CHECK(cfg.grid_angle(60) == doctest::Approx(60.0));
    for (int i = 1; i < 61; ++i)
        CHECK(cfg.grid_angle(i) - cfg.grid_angle(i - 1) == doctest::Approx(2.0));
    const std::vector<SteeringVector> grid = steering_grid(cfg);
    REQUIRE(grid.size() == 61);
    for (int i = 0; i < 61; ++i)
        CHECK(grid[static_cast<std::size_t>(i)].angle_deg ==
              doctest::Approx(cfg.grid_angle(i)));
}

TEST_CASE("class_index inverts grid_angle and rejects off-grid angles") {
    const ArrayConfig cfg;
    for (int i = 0; i < cfg.grid_size(); ++i)
        CHECK(cfg.class_index(cfg.grid_angle(i)) == i);
    CHECK_THROWS_AS(cfg.class_index(-61.0), std::domain_error);
    CHECK_THROWS_AS(cfg.class_index(1.0), std::domain_error);
}

TEST_CASE("array config validation") {
    ArrayConfig bad;
    bad.num_elements = 0;
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
    bad = ArrayConfig{};
    bad.grid_step_deg = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
    bad = ArrayConfig{};
    bad.grid_max_deg = 59.0; // span not a multiple of the step
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
}

TEST_CASE("synthesis params validation") {
    SynthesisParams p;
    p.snapshots = 500;
    p.onset_min = 20;
    p.onset_max = 480;
    CHECK_NOTHROW(p.validate());
    p.onset_min = 0;
    CHECK_THROWS_AS(p.validate(), std::domain_error);
    p = SynthesisParams{};
    p.onset_max = p.snapshots; // must leave at least one active column
    CHECK_THROWS_AS(p.validate(), std::domain_error);
    p = SynthesisParams{};
    p.noise_power = -1.0;
    CHECK_THROWS_AS(p.validate(), std::domain_error);
}

TEST_CASE("detection examples have unit energy and correct metadata") {
    const ArrayConfig cfg;
    SynthesisParams params;
    params.snapshots = 120;
    params.onset_min = 10;
    params.onset_max = 100;
    Rng rng(100);
    for (int label : {0, 1}) {
        const ReceivedArray z = synthesize_detection_example(cfg, params, label, rng);
        REQUIRE(z.samples.rows == 8);
        REQUIRE(z.samples.cols == 120);
        CHECK(z.meta.task == Task::detection);
        CHECK(z.meta.label == label);
        double energy = 0.0;
        for (const cd& v : z.samples.data) energy += std::norm(v);
        CHECK(energy == doctest::Approx(1.0).epsilon(1e-12));
        if (label == 0) {
            CHECK(z.meta.activation_time == -1);
        } else {
            CHECK(z.meta.activation_time >= 10);
            CHECK(z.meta.activation_time <= 100);
        }
    }
}

TEST_CASE("H1 signal component is exactly zero before the onset") {
    const ArrayConfig cfg;
    SynthesisParams params;
    params.snapshots = 80;
    params.onset_min = 30;
    params.onset_max = 50;
    Rng rng(101);
    SynthesisDebug debug;
    const ReceivedArray z = synthesize_detection_example(cfg, params, 1, rng, &debug);
    const int t0 = z.meta.activation_time;
    REQUIRE(t0 >= 30);
    for (int t = 0; t < t0; ++t)
        for (int m = 0; m < 8; ++m) CHECK(debug.soi.at(m, t) == cd(0.0, 0.0));
    double active = 0.0;
    for (int t = t0; t < 80; ++t)
        for (int m = 0; m < 8; ++m) active += std::norm(debug.soi.at(m, t));
    CHECK(active > 0.0);
}

TEST_CASE("DoA examples activate at the midpoint with on-grid labels") {
    const ArrayConfig cfg;
    SynthesisParams params;
    params.snapshots = 200;
    params.onset_min = 1;
    params.onset_max = 199; // unused by the DoA path but still validated
    Rng rng(102);
    SynthesisDebug debug;
    const ReceivedArray z =
        synthesize_doa_example(cfg, params, cfg.grid_angle(17), rng, &debug);
    CHECK(z.meta.task == Task::doa);
    CHECK(z.meta.label == 17);
    CHECK(z.meta.activation_time == 100);
    for (int t = 0; t < 100; ++t)
        for (int m = 0; m < 8; ++m) CHECK(debug.soi.at(m, t) == cd(0.0, 0.0));
    double energy = 0.0;
    for (const cd& v : z.samples.data) energy += std::norm(v);
    CHECK(energy == doctest::Approx(1.0).epsilon(1e-12));

    SynthesisParams odd = params;
    odd.snapshots = 201;
    Rng rng2(103);
    CHECK_THROWS_AS(synthesize_doa_example(cfg, odd, 0.0, rng2), std::domain_error);
}

TEST_CASE("synthesis is deterministic in the rng seed") {
    const ArrayConfig cfg;
    SynthesisParams params;
    params.snapshots = 64;
    params.onset_min = 5;
    params.onset_max = 60;
    Rng a(7), b(7);
    const ReceivedArray za = synthesize_detection_example(cfg, params, 1, a);
    const ReceivedArray zb = synthesize_detection_example(cfg, params, 1, b);
    REQUIRE(za.samples.data.size() == zb.samples.data.size());
    for (std::size_t i = 0; i < za.samples.data.size(); ++i)
        CHECK(za.samples.data[i] == zb.samples.data[i]);
    CHECK(za.meta.activation_time == zb.meta.activation_time);
}

TEST_CASE("real tensor round trip preserves the complex observation") {
    Rng rng(104);
    CMat z(3, 5);
    for (cd& v : z.data) v = rng.complex_gaussian(2.0);
    const RealTensor t = to_real_tensor(z);
    REQUIRE(t.shape.rows == 3);
    REQUIRE(t.shape.cols == 5);
    REQUIRE(t.shape.channels == 2);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 5; ++c) {
            CHECK(t.at(r, c, 0) == z.at(r, c).real());
            CHECK(t.at(r, c, 1) == z.at(r, c).imag());
        }
    const CMat back = from_real_tensor(t);
    for (std::size_t i = 0; i < z.data.size(); ++i) CHECK(back.data[i] == z.data[i]);
}
