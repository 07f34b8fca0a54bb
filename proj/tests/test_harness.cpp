#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "specarray/dataset_io.hpp"
#include "specarray/errors.hpp"
#include "specarray/experiment.hpp"
#include "specarray/glrt.hpp"
#include "specarray/svg_plot.hpp"

using namespace specarray;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// desk-scale defaults shrunk to seconds of compute
ExperimentConfig tiny_config(const std::string& out_dir, std::uint64_t seed = 7) {
    ExperimentConfig cfg = default_experiment_config();
    cfg.seed = seed;
    cfg.out_dir = out_dir;
    cfg.threads = 1;
    cfg.detection.synthesis.snapshots = 40;
    cfg.detection.synthesis.onset_min = 5;
    cfg.detection.synthesis.onset_max = 35;
    cfg.detection.train_examples = 8;
    cfg.detection.test_examples = 6;
    cfg.detection.train.epochs = 1;
    cfg.detection.train.batch_size = 4;
    cfg.detection.calibration_trials = 8;
    cfg.doa.synthesis.snapshots = 20;
    cfg.doa.synthesis.onset_min = 1;
    cfg.doa.synthesis.onset_max = 19;
    cfg.doa.glrt.k = 10;
    cfg.doa.train_examples = 8;
    cfg.doa.test_examples = 6;
    cfg.doa.train.epochs = 1;
    cfg.doa.train.batch_size = 4;
    cfg.theorem.trials = 3;
    cfg.theorem.eps = {1e-2};
    return cfg;
}

void write_json(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

void expect_config_error(const fs::path& dir, const std::string& name,
                         const std::string& json_text) {
    const fs::path p = dir / name;
    write_json(p, json_text);
    CHECK_THROWS_AS(load_experiment_config(p.string()), ConfigError);
}

} // namespace

TEST_CASE("desk-scale defaults form a valid config") {
    const ExperimentConfig cfg = default_experiment_config();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.psr_grid_db.size() == 11);
    CHECK(cfg.psr_grid_db.front() == doctest::Approx(-35.0));
    CHECK(cfg.psr_grid_db.back() == doctest::Approx(-10.0));
    CHECK(cfg.models == std::vector<std::string>{"cnn", "cnn_advtrain", "glrt",
                                                 "speculative"});
    CHECK(cfg.attacks.size() == 4);
    CHECK(cfg.doa.glrt.grid.size() == 61);
    CHECK(cfg.doa.glrt.k == 750);
    CHECK(cfg.doa.synthesis.snapshots == 1500);
}

TEST_CASE("config files round-trip and re-serialize to identical bytes") {
    const fs::path dir = fresh_dir("specarray_cfg_roundtrip");
    ExperimentConfig cfg = tiny_config((dir / "out").string(), 99);
    cfg.speculative.tau_dl_s = 0.25e-3;
    cfg.models = {"cnn", "glrt"};

    const std::string p1 = (dir / "a.json").string();
    write_experiment_config(p1, cfg);
    const ExperimentConfig back = load_experiment_config(p1);
    CHECK(back.seed == cfg.seed);
    CHECK(back.out_dir == cfg.out_dir);
    CHECK(back.models == cfg.models);
    CHECK(back.psr_grid_db == cfg.psr_grid_db);
    CHECK(back.detection.synthesis.snapshots == 40);
    CHECK(back.doa.glrt.k == 10);
    CHECK(back.speculative.tau_dl_s == doctest::Approx(0.25e-3));
    CHECK(back.adv_train.target_psr_db.has_value());
    CHECK(back.doa.glrt.grid.size() == 61); // rebuilt from the array geometry

    const std::string p2 = (dir / "b.json").string();
    write_experiment_config(p2, back);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove_all(dir);
}

TEST_CASE("missing and malformed config files") {
    const fs::path dir = fresh_dir("specarray_cfg_errors");
    CHECK_THROWS_AS(load_experiment_config((dir / "absent.json").string()),
                    MissingArtifactError);
    expect_config_error(dir, "notjson.json", "{ not json");
    expect_config_error(dir, "schema.json", R"({"schema_version": 2})");
    expect_config_error(dir, "grid_order.json", R"({"psr_grid_db": [-10, -20]})");
    expect_config_error(dir, "grid_sign.json", R"({"psr_grid_db": [-20, 10]})");
    expect_config_error(dir, "model_unknown.json", R"({"models": ["transformer"]})");
    expect_config_error(dir, "model_dup.json", R"({"models": ["cnn", "cnn"]})");
    expect_config_error(dir, "models_empty.json", R"({"models": []})");
    expect_config_error(dir, "attacks_empty.json", R"({"attacks": []})");
    expect_config_error(dir, "odd_doa.json",
                        R"({"doa": {"synthesis": {"snapshots": 21},
                            "glrt": {"k": 10}}})");
    expect_config_error(dir, "doa_k.json",
                        R"({"doa": {"synthesis": {"snapshots": 20, "onset_min": 1,
                            "onset_max": 19}, "glrt": {"k": 11}}})");
    expect_config_error(dir, "calib.json",
                        R"({"detection": {"calibration_trials": 1}})");
    expect_config_error(dir, "theorem_eps.json", R"({"theorem": {"eps": [-1.0]}})");
    expect_config_error(dir, "tau.json", R"({"speculative": {"tau_dl_ms": 0.0}})");
    expect_config_error(dir, "advtrain.json",
                        R"({"adv_train": {"method": "fgsm", "norm": "linf",
                            "eps": 0.0}})");
    expect_config_error(dir, "badtype.json", R"({"seed": "not a number"})");
    fs::remove_all(dir);
}

TEST_CASE("config overrides land in the loaded struct") {
    const fs::path dir = fresh_dir("specarray_cfg_override");
    const fs::path p = dir / "cfg.json";
    write_json(p, R"({
        "seed": 42,
        "out_dir": "elsewhere",
        "psr_grid_db": [-30.0, -20.0],
        "models": ["glrt"],
        "array": {"grid_step_deg": 5.0},
        "attacks": [{"method": "pgd", "norm": "l2", "steps": 4}]
    })");
    const ExperimentConfig cfg = load_experiment_config(p.string());
    CHECK(cfg.seed == 42);
    CHECK(cfg.out_dir == "elsewhere");
    CHECK(cfg.psr_grid_db == std::vector<double>{-30.0, -20.0});
    CHECK(cfg.models == std::vector<std::string>{"glrt"});
    CHECK(cfg.doa.glrt.grid.size() == 25); // -60..60 in 5 degree steps
    REQUIRE(cfg.attacks.size() == 1);
    CHECK(cfg.attacks[0].method == AttackConfig::Method::pgd);
    CHECK(cfg.attacks[0].norm == LpNorm::l2);
    CHECK(cfg.attacks[0].steps == 4);
    // untouched fields keep their desk defaults
    CHECK(cfg.detection.synthesis.snapshots == 500);
    fs::remove_all(dir);
}

TEST_CASE("artifact paths follow the canonical layout") {
    const ArtifactPaths paths("o");
    CHECK(paths.dataset(Task::detection, true) == "o/det_train.arrd");
    CHECK(paths.dataset(Task::doa, false) == "o/doa_test.arrd");
    CHECK(paths.model(Task::detection, "cnn") == "o/det_cnn.spnn");
    CHECK(paths.model(Task::doa, "cnn_advtrain") == "o/doa_cnn_advtrain.spnn");
    CHECK(paths.history(Task::detection, "cnn") == "o/det_cnn.history.json");
    CHECK(paths.calibration() == "o/det_calibration.json");
    CHECK(paths.sweep_csv(Task::detection) == "o/sweep_det.csv");
    CHECK(paths.sweep_manifest(Task::doa) == "o/sweep_doa_attacks.json");
    AttackConfig a;
    a.method = AttackConfig::Method::pgd;
    a.norm = LpNorm::l2;
    CHECK(paths.sweep_svg(Task::doa, a) == "o/sweep_doa_pgd_l2.svg");
    CHECK(paths.trace_csv(Task::detection) == "o/speculate_det_trace.csv");
    CHECK(paths.speculate_summary(Task::doa) == "o/speculate_doa_summary.json");
    CHECK(paths.theorem_csv() == "o/theorem_report.csv");
}

TEST_CASE("sweep and theorem reports serialize to fixed byte formats") {
    const fs::path dir = fresh_dir("specarray_reports");
    SweepResult sweep;
    sweep.rows.push_back({-20.0, "fgsm", "linf", "cnn", 0.5, 100});
    sweep.rows.push_back({-17.5, "pgd", "l2", "glrt", 0.98, 64});
    const std::string sp = (dir / "sweep.csv").string();
    write_sweep_csv(sp, sweep);
    CHECK(slurp(sp) ==
          "psr_db,attack,norm,model,accuracy,n\n"
          "-20,fgsm,linf,cnn,0.500000,100\n"
          "-17.5,pgd,l2,glrt,0.980000,64\n");

    TheoremReport rep;
    rep.rows.push_back({3, "inf", 0.01, 0.5, 1.25, 0.4, false});
    rep.rows.push_back({4, "2", 0.1, 2.0, 1.0, 2.0, true});
    const std::string tp = (dir / "theorem.csv").string();
    write_theorem_csv(tp, rep);
    CHECK(slurp(tp) ==
          "trial,p,eps,actual,bound,ratio,violation\n"
          "3,inf,0.01,5.000000000e-01,1.250000000e+00,4.000000000e-01,0\n"
          "4,2,0.1,2.000000000e+00,1.000000000e+00,2.000000000e+00,1\n");
    fs::remove_all(dir);
}

TEST_CASE("dataset generation writes reproducible containers") {
    const fs::path dir = fresh_dir("specarray_generate");
    const ExperimentConfig cfg = tiny_config((dir / "out").string());
    run_generate(cfg, Task::detection);
    run_generate(cfg, Task::doa);

    const ArtifactPaths paths(cfg.out_dir);
    for (const std::string& p :
         {paths.dataset(Task::detection, true), paths.dataset(Task::detection, false),
          paths.dataset(Task::doa, true), paths.dataset(Task::doa, false)}) {
        CHECK(fs::exists(p));
        CHECK(fs::exists(p + ".json")); // sidecar
    }

    const Dataset det = read_dataset(paths.dataset(Task::detection, true));
    CHECK(det.task == Task::detection);
    CHECK(det.size() == 8);
    CHECK(det.m == 8);
    CHECK(det.t == 40);
    for (int i = 0; i < det.size(); ++i)
        CHECK(det.labels[static_cast<std::size_t>(i)] == i % 2); // balanced

    const Dataset doa = read_dataset(paths.dataset(Task::doa, false));
    CHECK(doa.task == Task::doa);
    CHECK(doa.t == 20);
    for (int i = 0; i < doa.size(); ++i)
        CHECK(doa.labels[static_cast<std::size_t>(i)] == i % 61); // grid cycle

    const std::string before = slurp(paths.dataset(Task::detection, true));
    run_generate(cfg, Task::detection);
    CHECK(slurp(paths.dataset(Task::detection, true)) == before);

    CHECK_THROWS_AS(read_dataset((dir / "nothing.arrd").string()),
                    MissingArtifactError);
    fs::remove_all(dir);
}

TEST_CASE("threshold calibration writes a readable artifact") {
    const fs::path dir = fresh_dir("specarray_calibrate");
    const ExperimentConfig cfg = tiny_config((dir / "out").string());
    run_calibrate(cfg);
    const ArtifactPaths paths(cfg.out_dir);
    int n = 0;
    const GlrtDetectionConfig cal = read_calibration(paths.calibration(), &n);
    CHECK(cal.gamma_t.has_value());
    CHECK(n == cfg.detection.calibration_trials);
    CHECK(cal.percentile == doctest::Approx(95.0));
    CHECK(cal.k == cfg.detection.glrt.k);

    const std::string before = slurp(paths.calibration());
    run_calibrate(cfg);
    CHECK(slurp(paths.calibration()) == before);
    fs::remove_all(dir);
}

TEST_CASE("covariance-shift verification emits one row per trial and norm") {
    const fs::path dir = fresh_dir("specarray_theorem_run");
    const ExperimentConfig cfg = tiny_config((dir / "out").string());
    const TheoremReport rep = run_verify_theorem(cfg);
    REQUIRE(rep.rows.size() == 2 * 3 * 1); // norms x trials x eps values
    int flagged = 0;
    for (const TheoremRow& r : rep.rows) {
        CHECK((r.p == "2" || r.p == "inf"));
        CHECK(r.bound > 0.0);
        CHECK(r.actual >= 0.0);
        CHECK(r.ratio == doctest::Approx(r.actual / r.bound));
        flagged += r.violation ? 1 : 0;
    }
    CHECK(rep.violations == flagged);
    CHECK(fs::exists(ArtifactPaths(cfg.out_dir).theorem_csv()));
    fs::remove_all(dir);
}

TEST_CASE("line charts render deterministic self-contained svg") {
    SvgChart chart;
    chart.title = "accuracy <&> psr";
    chart.x_label = "psr (db)";
    chart.y_label = "accuracy";
    chart.series.push_back({"cnn", {-30, -20, -10}, {0.9, 0.6, 0.2}});
    chart.series.push_back({"glrt", {-30, -20, -10}, {0.95, 0.94, 0.93}});

    const std::string svg = render_line_chart(chart);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("accuracy &lt;&amp;&gt; psr") != std::string::npos);
    std::size_t polylines = 0;
    for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos;
         pos = svg.find("<polyline", pos + 1))
        ++polylines;
    CHECK(polylines == 2);
    CHECK(svg.find(">cnn<") != std::string::npos);  // legend entries
    CHECK(svg.find(">glrt<") != std::string::npos);
    CHECK(render_line_chart(chart) == svg);

    SvgChart bad = chart;
    bad.series[0].y.pop_back();
    CHECK_THROWS_AS(render_line_chart(bad), std::invalid_argument);
    SvgChart small = chart;
    small.width = 100;
    CHECK_THROWS_AS(render_line_chart(small), std::invalid_argument);

    const fs::path dir = fresh_dir("specarray_svg");
    const std::string path = (dir / "chart.svg").string();
    write_line_chart(path, chart);
    CHECK(slurp(path) == svg);
    fs::remove_all(dir);
}
