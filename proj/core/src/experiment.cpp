#include "specarray/experiment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "specarray/errors.hpp"
#include "specarray/model_io.hpp"
#include "specarray/parallel.hpp"
#include "specarray/rng.hpp"
#include "specarray/svg_plot.hpp"

namespace specarray {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// seed streams, one per independent random process
constexpr std::uint64_t kStreamDetTrainData = 0x01;
constexpr std::uint64_t kStreamDetTestData = 0x02;
constexpr std::uint64_t kStreamDoaTrainData = 0x03;
constexpr std::uint64_t kStreamDoaTestData = 0x04;
constexpr std::uint64_t kStreamDetTrainer = 0x11;
constexpr std::uint64_t kStreamDetAdvTrainer = 0x12;
constexpr std::uint64_t kStreamDoaTrainer = 0x13;
constexpr std::uint64_t kStreamDoaAdvTrainer = 0x14;
constexpr std::uint64_t kStreamCalibration = 0x0500000;
constexpr std::uint64_t kStreamTheorem = 0x0600000;

std::string task_tag(Task task) { return task == Task::detection ? "det" : "doa"; }

bool has_model(const ExperimentConfig& cfg, const std::string& name) {
    return std::find(cfg.models.begin(), cfg.models.end(), name) != cfg.models.end();
}

Network clone_network(const Network& src) {
    Network net = build_network(src.arch, src.in_shape, src.num_classes, 0);
    net.load_state(src.save_state());
    return net;
}

[[noreturn]] void config_fail(const std::string& msg) { throw ConfigError(msg); }

const json& require_object(const json& j, const std::string& where) {
    if (!j.is_object()) config_fail("config: " + where + " must be an object");
    return j;
}

template <typename T>
void get_if(const json& j, const char* key, T& out, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        it->get_to(out);
    } catch (const json::exception& e) {
        config_fail("config: bad value for " + where + "." + key + ": " + e.what());
    }
}

LpNorm parse_norm(const std::string& s, const std::string& where) {
    if (s == "l2") return LpNorm::l2;
    if (s == "linf") return LpNorm::linf;
    config_fail("config: " + where + ".norm must be \"l2\" or \"linf\", got \"" + s + "\"");
}

AttackConfig::Method parse_method(const std::string& s, const std::string& where) {
    if (s == "fgsm") return AttackConfig::Method::fgsm;
    if (s == "pgd") return AttackConfig::Method::pgd;
    config_fail("config: " + where + ".method must be \"fgsm\" or \"pgd\", got \"" + s + "\"");
}

AttackConfig parse_attack(const json& j, const std::string& where) {
    require_object(j, where);
    AttackConfig a;
    std::string method = "fgsm", norm = "linf";
    get_if(j, "method", method, where);
    get_if(j, "norm", norm, where);
    a.method = parse_method(method, where);
    a.norm = parse_norm(norm, where);
    get_if(j, "eps", a.eps, where);
    get_if(j, "steps", a.steps, where);
    if (j.contains("target_psr_db")) {
        double v = 0.0;
        get_if(j, "target_psr_db", v, where);
        a.target_psr_db = v;
    }
    if (j.contains("l2_power_cap")) {
        double v = 0.0;
        get_if(j, "l2_power_cap", v, where);
        a.l2_power_cap = v;
    }
    return a;
}

ordered_json attack_to_json(const AttackConfig& a) {
    ordered_json j;
    j["method"] = method_name(a.method);
    j["norm"] = norm_name(a.norm);
    if (a.eps != 0.0) j["eps"] = a.eps;
    j["steps"] = a.steps;
    if (a.target_psr_db) j["target_psr_db"] = *a.target_psr_db;
    if (a.l2_power_cap) j["l2_power_cap"] = *a.l2_power_cap;
    return j;
}

void parse_synthesis(const json& j, SynthesisParams& p, const std::string& where) {
    require_object(j, where);
    get_if(j, "snapshots", p.snapshots, where);
    get_if(j, "noise_power", p.noise_power, where);
    get_if(j, "soi_power", p.soi_power, where);
    get_if(j, "interference_power", p.interference_power, where);
    get_if(j, "onset_min", p.onset_min, where);
    get_if(j, "onset_max", p.onset_max, where);
}

ordered_json synthesis_to_json(const SynthesisParams& p) {
    return ordered_json{{"snapshots", p.snapshots},
                        {"noise_power", p.noise_power},
                        {"soi_power", p.soi_power},
                        {"interference_power", p.interference_power},
                        {"onset_min", p.onset_min},
                        {"onset_max", p.onset_max}};
}

void parse_train(const json& j, TrainConfig& t, const std::string& where) {
    require_object(j, where);
    get_if(j, "learning_rate", t.learning_rate, where);
    get_if(j, "batch_size", t.batch_size, where);
    get_if(j, "epochs", t.epochs, where);
    get_if(j, "validation_fraction", t.validation_fraction, where);
    get_if(j, "early_stopping", t.early_stopping, where);
    get_if(j, "early_stop_patience", t.early_stop_patience, where);
    get_if(j, "reduce_lr_on_plateau", t.reduce_lr_on_plateau, where);
    get_if(j, "lr_factor", t.lr_factor, where);
    get_if(j, "lr_patience", t.lr_patience, where);
    get_if(j, "checkpoint_best", t.checkpoint_best, where);
    get_if(j, "rng_seed", t.rng_seed, where);
}

ordered_json train_to_json(const TrainConfig& t) {
    ordered_json j{{"learning_rate", t.learning_rate},
                   {"batch_size", t.batch_size},
                   {"epochs", t.epochs},
                   {"validation_fraction", t.validation_fraction},
                   {"early_stopping", t.early_stopping},
                   {"early_stop_patience", t.early_stop_patience},
                   {"reduce_lr_on_plateau", t.reduce_lr_on_plateau},
                   {"lr_factor", t.lr_factor},
                   {"lr_patience", t.lr_patience},
                   {"checkpoint_best", t.checkpoint_best}};
    if (t.rng_seed != 0) j["rng_seed"] = t.rng_seed;
    return j;
}

// trainer seed: explicit rng_seed wins, 0 means derive from the master seed
TrainConfig effective_train(const ExperimentConfig& cfg, Task task, bool adversarial) {
    TrainConfig t = task == Task::detection ? cfg.detection.train : cfg.doa.train;
    if (t.rng_seed == 0) {
        const std::uint64_t stream =
            task == Task::detection
                ? (adversarial ? kStreamDetAdvTrainer : kStreamDetTrainer)
                : (adversarial ? kStreamDoaAdvTrainer : kStreamDoaTrainer);
        t.rng_seed = derive_seed(cfg.seed, stream);
    }
    return t;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

void apply_thread_config(const ExperimentConfig& cfg) { set_max_threads(cfg.threads); }

void ensure_out_dir(const ExperimentConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) config_fail("config: cannot create output directory " + cfg.out_dir + ": " +
                        ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("short write to " + path);
}

} // namespace

// ---------------------------------------------------------------------------
// configuration

void ExperimentConfig::validate() const {
    if (schema_version != 1)
        config_fail("config: unsupported schema_version " + std::to_string(schema_version));
    if (out_dir.empty()) config_fail("config: out_dir is empty");
    if (threads < 0) config_fail("config: threads must be >= 0");
    try {
        array.validate();
        detection.synthesis.validate();
        detection.train.validate();
        detection.glrt.validate();
        doa.synthesis.validate();
        doa.train.validate();
        doa.glrt.validate();
        for (const AttackConfig& a : attacks) a.validate();
        adv_train.validate();
    } catch (const std::exception& e) {
        config_fail(std::string("config: ") + e.what());
    }
    if (detection.train_examples < 1 || detection.test_examples < 1 ||
        doa.train_examples < 1 || doa.test_examples < 1)
        config_fail("config: dataset sizes must be positive");
    if (detection.calibration_trials < 2)
        config_fail("config: calibration_trials must be >= 2");
    if (detection.sweep_examples < 0 || doa.sweep_examples < 0 ||
        detection.speculate_examples < 0 || doa.speculate_examples < 0)
        config_fail("config: example limits must be >= 0");
    if (doa.synthesis.snapshots % 2 != 0)
        config_fail("config: doa.synthesis.snapshots must be even");
    if (2 * doa.glrt.k > doa.synthesis.snapshots)
        config_fail("config: doa.glrt.k exceeds half the snapshot count");
    if (attacks.empty()) config_fail("config: attacks list is empty");
    if (psr_grid_db.empty()) config_fail("config: psr_grid_db is empty");
    for (std::size_t i = 0; i < psr_grid_db.size(); ++i) {
        if (psr_grid_db[i] >= 0.0)
            config_fail("config: psr_grid_db entries must be negative");
        if (i > 0 && psr_grid_db[i] <= psr_grid_db[i - 1])
            config_fail("config: psr_grid_db must be strictly increasing");
    }
    if (models.empty()) config_fail("config: models list is empty");
    const std::set<std::string> known{"cnn", "cnn_advtrain", "glrt", "speculative"};
    std::set<std::string> seen;
    for (const std::string& m : models) {
        if (!known.count(m)) config_fail("config: unknown model \"" + m + "\"");
        if (!seen.insert(m).second) config_fail("config: duplicate model \"" + m + "\"");
    }
    if (std::find(models.begin(), models.end(), "cnn_advtrain") != models.end() &&
        !adv_train.target_psr_db && adv_train.eps <= 0.0)
        config_fail("config: adv_train needs eps > 0 or a target_psr_db");
    if (speculative.tau_dl_s <= 0.0 || speculative.tau_glrt_s <= 0.0 ||
        speculative.postprocess_s < 0.0)
        config_fail("config: speculative latencies must be positive");
    if (theorem.trials < 1) config_fail("config: theorem.trials must be >= 1");
    if (theorem.eps.empty()) config_fail("config: theorem.eps is empty");
    for (double e : theorem.eps)
        if (e <= 0.0) config_fail("config: theorem.eps entries must be positive");
    if (theorem.elements < 1 || theorem.snapshots < 2)
        config_fail("config: theorem needs elements >= 1 and snapshots >= 2");
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.seed = 1;
    cfg.out_dir = "out";
    cfg.threads = 1;

    cfg.detection.synthesis.snapshots = 500;
    cfg.detection.synthesis.onset_min = 20;
    cfg.detection.synthesis.onset_max = 480;
    cfg.detection.train = default_train_config(NetArch::detection);
    cfg.detection.train.rng_seed = 0;
    cfg.detection.glrt = GlrtDetectionConfig{};

    cfg.doa.synthesis.snapshots = 1500;
    cfg.doa.train = default_train_config(NetArch::doa);
    cfg.doa.train.rng_seed = 0;
    cfg.doa.glrt.k = 750;
    cfg.doa.glrt.grid = steering_grid(cfg.array);

    cfg.attacks = {
        {AttackConfig::Method::fgsm, LpNorm::linf},
        {AttackConfig::Method::fgsm, LpNorm::l2},
        {AttackConfig::Method::pgd, LpNorm::linf},
        {AttackConfig::Method::pgd, LpNorm::l2},
    };
    for (double v = -35.0; v <= -10.0 + 1e-9; v += 2.5) cfg.psr_grid_db.push_back(v);
    cfg.models = {"cnn", "cnn_advtrain", "glrt", "speculative"};
    cfg.adv_train.method = AttackConfig::Method::fgsm;
    cfg.adv_train.norm = LpNorm::linf;
    cfg.adv_train.target_psr_db = -15.0;
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        config_fail("config: " + path + " is not valid JSON: " + e.what());
    }
    require_object(j, "top level");

    ExperimentConfig cfg = default_experiment_config();
    get_if(j, "schema_version", cfg.schema_version, "top level");
    get_if(j, "seed", cfg.seed, "top level");
    get_if(j, "out_dir", cfg.out_dir, "top level");
    get_if(j, "threads", cfg.threads, "top level");

    if (j.contains("array")) {
        const json& a = require_object(j["array"], "array");
        get_if(a, "num_elements", cfg.array.num_elements, "array");
        get_if(a, "spacing_wavelengths", cfg.array.spacing_wavelengths, "array");
        get_if(a, "grid_min_deg", cfg.array.grid_min_deg, "array");
        get_if(a, "grid_max_deg", cfg.array.grid_max_deg, "array");
        get_if(a, "grid_step_deg", cfg.array.grid_step_deg, "array");
    }
    if (j.contains("detection")) {
        const json& d = require_object(j["detection"], "detection");
        if (d.contains("synthesis"))
            parse_synthesis(d["synthesis"], cfg.detection.synthesis, "detection.synthesis");
        get_if(d, "train_examples", cfg.detection.train_examples, "detection");
        get_if(d, "test_examples", cfg.detection.test_examples, "detection");
        if (d.contains("train")) parse_train(d["train"], cfg.detection.train, "detection.train");
        if (d.contains("glrt")) {
            const json& g = require_object(d["glrt"], "detection.glrt");
            get_if(g, "k", cfg.detection.glrt.k, "detection.glrt");
            get_if(g, "zeta", cfg.detection.glrt.zeta, "detection.glrt");
            get_if(g, "percentile", cfg.detection.glrt.percentile, "detection.glrt");
        }
        get_if(d, "calibration_trials", cfg.detection.calibration_trials, "detection");
        get_if(d, "sweep_examples", cfg.detection.sweep_examples, "detection");
        get_if(d, "speculate_examples", cfg.detection.speculate_examples, "detection");
    }
    if (j.contains("doa")) {
        const json& d = require_object(j["doa"], "doa");
        if (d.contains("synthesis"))
            parse_synthesis(d["synthesis"], cfg.doa.synthesis, "doa.synthesis");
        get_if(d, "train_examples", cfg.doa.train_examples, "doa");
        get_if(d, "test_examples", cfg.doa.test_examples, "doa");
        if (d.contains("train")) parse_train(d["train"], cfg.doa.train, "doa.train");
        if (d.contains("glrt")) {
            const json& g = require_object(d["glrt"], "doa.glrt");
            get_if(g, "k", cfg.doa.glrt.k, "doa.glrt");
            get_if(g, "zeta", cfg.doa.glrt.zeta, "doa.glrt");
        }
        get_if(d, "sweep_examples", cfg.doa.sweep_examples, "doa");
        get_if(d, "speculate_examples", cfg.doa.speculate_examples, "doa");
    }
    if (j.contains("attacks")) {
        if (!j["attacks"].is_array()) config_fail("config: attacks must be an array");
        cfg.attacks.clear();
        int idx = 0;
        for (const json& a : j["attacks"])
            cfg.attacks.push_back(parse_attack(a, "attacks[" + std::to_string(idx++) + "]"));
    }
    get_if(j, "psr_grid_db", cfg.psr_grid_db, "top level");
    get_if(j, "models", cfg.models, "top level");
    if (j.contains("adv_train")) cfg.adv_train = parse_attack(j["adv_train"], "adv_train");
    if (j.contains("speculative")) {
        const json& s = require_object(j["speculative"], "speculative");
        get_if(s, "concurrent", cfg.speculative.concurrent, "speculative");
        get_if(s, "inject_latencies", cfg.speculative.inject_latencies, "speculative");
        double tau_dl_ms = cfg.speculative.tau_dl_s * 1e3;
        double tau_glrt_ms = cfg.speculative.tau_glrt_s * 1e3;
        double post_ms = cfg.speculative.postprocess_s * 1e3;
        get_if(s, "tau_dl_ms", tau_dl_ms, "speculative");
        get_if(s, "tau_glrt_ms", tau_glrt_ms, "speculative");
        get_if(s, "postprocess_ms", post_ms, "speculative");
        cfg.speculative.tau_dl_s = tau_dl_ms * 1e-3;
        cfg.speculative.tau_glrt_s = tau_glrt_ms * 1e-3;
        cfg.speculative.postprocess_s = post_ms * 1e-3;
    }
    if (j.contains("theorem")) {
        const json& t = require_object(j["theorem"], "theorem");
        get_if(t, "trials", cfg.theorem.trials, "theorem");
        get_if(t, "eps", cfg.theorem.eps, "theorem");
        get_if(t, "elements", cfg.theorem.elements, "theorem");
        get_if(t, "snapshots", cfg.theorem.snapshots, "theorem");
    }

    // the steering grid always follows the (possibly overridden) array geometry
    try {
        cfg.array.validate();
    } catch (const std::exception& e) {
        config_fail(std::string("config: ") + e.what());
    }
    cfg.doa.glrt.grid = steering_grid(cfg.array);
    cfg.validate();
    return cfg;
}

void write_experiment_config(const std::string& path, const ExperimentConfig& cfg) {
    ordered_json j;
    j["schema_version"] = cfg.schema_version;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["threads"] = cfg.threads;
    j["array"] = {{"num_elements", cfg.array.num_elements},
                  {"spacing_wavelengths", cfg.array.spacing_wavelengths},
                  {"grid_min_deg", cfg.array.grid_min_deg},
                  {"grid_max_deg", cfg.array.grid_max_deg},
                  {"grid_step_deg", cfg.array.grid_step_deg}};
    j["detection"] = {{"synthesis", synthesis_to_json(cfg.detection.synthesis)},
                      {"train_examples", cfg.detection.train_examples},
                      {"test_examples", cfg.detection.test_examples},
                      {"train", train_to_json(cfg.detection.train)},
                      {"glrt",
                       {{"k", cfg.detection.glrt.k},
                        {"zeta", cfg.detection.glrt.zeta},
                        {"percentile", cfg.detection.glrt.percentile}}},
                      {"calibration_trials", cfg.detection.calibration_trials},
                      {"sweep_examples", cfg.detection.sweep_examples},
                      {"speculate_examples", cfg.detection.speculate_examples}};
    j["doa"] = {{"synthesis", synthesis_to_json(cfg.doa.synthesis)},
                {"train_examples", cfg.doa.train_examples},
                {"test_examples", cfg.doa.test_examples},
                {"train", train_to_json(cfg.doa.train)},
                {"glrt", {{"k", cfg.doa.glrt.k}, {"zeta", cfg.doa.glrt.zeta}}},
                {"sweep_examples", cfg.doa.sweep_examples},
                {"speculate_examples", cfg.doa.speculate_examples}};
    ordered_json attacks = ordered_json::array();
    for (const AttackConfig& a : cfg.attacks) attacks.push_back(attack_to_json(a));
    j["attacks"] = std::move(attacks);
    j["psr_grid_db"] = cfg.psr_grid_db;
    j["models"] = cfg.models;
    j["adv_train"] = attack_to_json(cfg.adv_train);
    j["speculative"] = {{"concurrent", cfg.speculative.concurrent},
                        {"inject_latencies", cfg.speculative.inject_latencies},
                        {"tau_dl_ms", cfg.speculative.tau_dl_s * 1e3},
                        {"tau_glrt_ms", cfg.speculative.tau_glrt_s * 1e3},
                        {"postprocess_ms", cfg.speculative.postprocess_s * 1e3}};
    j["theorem"] = {{"trials", cfg.theorem.trials},
                    {"eps", cfg.theorem.eps},
                    {"elements", cfg.theorem.elements},
                    {"snapshots", cfg.theorem.snapshots}};
    write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// artifact layout

std::string ArtifactPaths::dataset(Task task, bool train) const {
    return dir + "/" + task_tag(task) + (train ? "_train.arrd" : "_test.arrd");
}
std::string ArtifactPaths::model(Task task, const std::string& name) const {
    return dir + "/" + task_tag(task) + "_" + name + ".spnn";
}
std::string ArtifactPaths::history(Task task, const std::string& name) const {
    return dir + "/" + task_tag(task) + "_" + name + ".history.json";
}
std::string ArtifactPaths::calibration() const { return dir + "/det_calibration.json"; }
std::string ArtifactPaths::sweep_csv(Task task) const {
    return dir + "/sweep_" + task_tag(task) + ".csv";
}
std::string ArtifactPaths::sweep_manifest(Task task) const {
    return dir + "/sweep_" + task_tag(task) + "_attacks.json";
}
std::string ArtifactPaths::sweep_svg(Task task, const AttackConfig& attack) const {
    return dir + "/sweep_" + task_tag(task) + "_" + method_name(attack.method) + "_" +
           norm_name(attack.norm) + ".svg";
}
std::string ArtifactPaths::trace_csv(Task task) const {
    return dir + "/speculate_" + task_tag(task) + "_trace.csv";
}
std::string ArtifactPaths::speculate_summary(Task task) const {
    return dir + "/speculate_" + task_tag(task) + "_summary.json";
}
std::string ArtifactPaths::theorem_csv() const { return dir + "/theorem_report.csv"; }

// ---------------------------------------------------------------------------
// report writers

void write_sweep_csv(const std::string& path, const SweepResult& result) {
    std::string text = "psr_db,attack,norm,model,accuracy,n\n";
    char buf[160];
    for (const SweepRow& r : result.rows) {
        std::snprintf(buf, sizeof(buf), "%g,%s,%s,%s,%.6f,%d\n", r.psr_db,
                      r.attack.c_str(), r.norm.c_str(), r.model.c_str(), r.accuracy,
                      r.n);
        text += buf;
    }
    write_text_file(path, text);
}

void write_theorem_csv(const std::string& path, const TheoremReport& report) {
    std::string text = "trial,p,eps,actual,bound,ratio,violation\n";
    char buf[200];
    for (const TheoremRow& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%g,%.9e,%.9e,%.9e,%d\n", r.trial,
                      r.p.c_str(), r.eps, r.actual, r.bound, r.ratio,
                      r.violation ? 1 : 0);
        text += buf;
    }
    write_text_file(path, text);
}

// ---------------------------------------------------------------------------
// pipeline stages

void run_generate(const ExperimentConfig& cfg, Task task) {
    apply_thread_config(cfg);
    ensure_out_dir(cfg);
    const ArtifactPaths paths(cfg.out_dir);
    if (task == Task::detection) {
        write_dataset(paths.dataset(task, true),
                      generate_detection_dataset(cfg.array, cfg.detection.synthesis,
                                                 cfg.detection.train_examples,
                                                 derive_seed(cfg.seed, kStreamDetTrainData)));
        write_dataset(paths.dataset(task, false),
                      generate_detection_dataset(cfg.array, cfg.detection.synthesis,
                                                 cfg.detection.test_examples,
                                                 derive_seed(cfg.seed, kStreamDetTestData)));
    } else {
        write_dataset(paths.dataset(task, true),
                      generate_doa_dataset(cfg.array, cfg.doa.synthesis,
                                           cfg.doa.train_examples,
                                           derive_seed(cfg.seed, kStreamDoaTrainData)));
        write_dataset(paths.dataset(task, false),
                      generate_doa_dataset(cfg.array, cfg.doa.synthesis,
                                           cfg.doa.test_examples,
                                           derive_seed(cfg.seed, kStreamDoaTestData)));
    }
}

void run_train(const ExperimentConfig& cfg, Task task) {
    apply_thread_config(cfg);
    ensure_out_dir(cfg);
    const ArtifactPaths paths(cfg.out_dir);
    const Dataset ds = read_dataset(paths.dataset(task, true));
    const int classes = task == Task::detection ? 2 : cfg.array.grid_size();
    const NetArch arch = task == Task::detection ? NetArch::detection : NetArch::doa;

    LabeledExamples examples;
    if (task == Task::doa) {
        // the DoA classifier consumes covariance tensors, not raw snapshots
        const TensorShape shape{cfg.array.num_elements, 2 * cfg.array.num_elements, 2};
        examples.shape = shape;
        examples.num_classes = classes;
        examples.labels.assign(ds.labels.begin(), ds.labels.end());
        examples.data.resize(static_cast<std::size_t>(ds.size()) * shape.size());
        std::vector<RealTensor> slots(static_cast<std::size_t>(ds.size()));
        parallel_chunks(ds.size(), kReductionChunks, [&](int, int b0, int b1) {
            for (int i = b0; i < b1; ++i)
                slots[static_cast<std::size_t>(i)] =
                    covariance_input(ds.received(i), cfg.doa.glrt.k, cfg.doa.glrt.zeta);
        });
        for (int i = 0; i < ds.size(); ++i) {
            const RealTensor& t = slots[static_cast<std::size_t>(i)];
            float* dst = examples.data.data() + static_cast<std::size_t>(i) * shape.size();
            for (std::size_t v = 0; v < t.data.size(); ++v)
                dst[v] = static_cast<float>(t.data[v]);
        }
        examples.validate();
    } else {
        examples = ds.to_labeled(classes);
    }

    if (has_model(cfg, "cnn")) {
        TrainResult r = train(examples, arch, effective_train(cfg, task, false));
        write_model(paths.model(task, "cnn"), r.net);
        write_history(paths.history(task, "cnn"), r);
    }
    if (has_model(cfg, "cnn_advtrain")) {
        TrainResult r = adversarial_train(examples, arch, effective_train(cfg, task, true),
                                          cfg.adv_train);
        write_model(paths.model(task, "cnn_advtrain"), r.net);
        write_history(paths.history(task, "cnn_advtrain"), r);
    }
}

void run_calibrate(const ExperimentConfig& cfg) {
    apply_thread_config(cfg);
    ensure_out_dir(cfg);
    const ArtifactPaths paths(cfg.out_dir);
    const int n = cfg.detection.calibration_trials;
    std::vector<double> maxima(static_cast<std::size_t>(n));
    parallel_chunks(n, kReductionChunks, [&](int, int b0, int b1) {
        for (int i = b0; i < b1; ++i) {
            Rng rng(derive_seed(cfg.seed, kStreamCalibration + static_cast<std::uint64_t>(i)));
            const ReceivedArray z =
                synthesize_detection_example(cfg.array, cfg.detection.synthesis, 0, rng);
            const StatisticSequence seq =
                zscore_normalize(statistic_sequence(z, cfg.detection.glrt));
            maxima[static_cast<std::size_t>(i)] =
                *std::max_element(seq.values.begin(), seq.values.end());
        }
    });
    GlrtDetectionConfig calibrated = cfg.detection.glrt;
    calibrated.gamma_t = calibrate_threshold(maxima, cfg.detection.glrt.percentile);
    write_calibration(paths.calibration(), calibrated, n);
}

namespace {

// per-(attack, psr) accumulation, one slot per reduction chunk
struct CellAccum {
    long long correct_cnn = 0;
    long long correct_adv = 0;
    long long correct_glrt = 0;
    long long failures = 0;   // eigsolver non-convergence, counted wrong
    double sum_eps = 0.0;     // resolved ball radii
    double sum_psr = 0.0;     // achieved PSR over non-degenerate examples
    long long finite_psr = 0;
    long long degenerate = 0;
};

struct SweepModels {
    Network* plain = nullptr; // nullptr when the row set does not need it
    Network* adv = nullptr;
};

} // namespace

SweepResult run_attack_sweep(const ExperimentConfig& cfg, Task task) {
    apply_thread_config(cfg);
    ensure_out_dir(cfg);
    const ArtifactPaths paths(cfg.out_dir);
    const Dataset test = read_dataset(paths.dataset(task, false));

    const int limit =
        task == Task::detection ? cfg.detection.sweep_examples : cfg.doa.sweep_examples;
    const int n = limit > 0 ? std::min(limit, test.size()) : test.size();
    if (n < 1) config_fail("config: attack sweep needs at least one test example");

    const bool want_cnn = has_model(cfg, "cnn");
    const bool want_adv = has_model(cfg, "cnn_advtrain");
    const bool want_glrt = has_model(cfg, "glrt");
    const bool want_spec = has_model(cfg, "speculative");
    // the plain network crafts the perturbation evaluated by cnn/glrt/speculative
    const bool need_plain = want_cnn || want_glrt || want_spec;

    Network plain, adv;
    if (need_plain) plain = read_model(paths.model(task, "cnn"));
    if (want_adv) adv = read_model(paths.model(task, "cnn_advtrain"));

    GlrtDetectionConfig det_glrt;
    if (task == Task::detection && (want_glrt || want_spec))
        det_glrt = read_calibration(paths.calibration());
    const GlrtDoaConfig& doa_glrt = cfg.doa.glrt;

    // DoA inputs live in the covariance-tensor domain; build them once
    std::vector<RealTensor> doa_inputs;
    if (task == Task::doa) {
        doa_inputs.resize(static_cast<std::size_t>(n));
        parallel_chunks(n, kReductionChunks, [&](int, int b0, int b1) {
            for (int i = b0; i < b1; ++i)
                doa_inputs[static_cast<std::size_t>(i)] =
                    covariance_input(test.received(i), doa_glrt.k, doa_glrt.zeta);
        });
    }

    const int hw = max_threads() == 0
                       ? static_cast<int>(std::thread::hardware_concurrency())
                       : max_threads();
    const bool threaded = hw > 1 && n > 1;
    // gradient scratch inside a network is not reentrant; clone per chunk
    std::vector<Network> plain_clones, adv_clones;
    if (threaded) {
        for (int c = 0; c < kReductionChunks; ++c) {
            if (need_plain) plain_clones.push_back(clone_network(plain));
            if (want_adv) adv_clones.push_back(clone_network(adv));
        }
    }

    SweepResult result;
    ordered_json manifest_attacks = ordered_json::array();

    for (std::size_t ai = 0; ai < cfg.attacks.size(); ++ai) {
        const AttackConfig& base = cfg.attacks[ai];
        ordered_json points = ordered_json::array();
        // accuracy curves for the per-attack plot, keyed by model order
        std::vector<std::vector<double>> curves(cfg.models.size());

        for (double psr : cfg.psr_grid_db) {
            AttackConfig cell_cfg = base;
            cell_cfg.eps = 0.0;
            cell_cfg.target_psr_db = psr; // resolved per example inside the attack

            std::vector<CellAccum> acc(static_cast<std::size_t>(kReductionChunks));
            parallel_chunks(n, kReductionChunks, [&](int chunk, int b0, int b1) {
                CellAccum& a = acc[static_cast<std::size_t>(chunk)];
                Network* net_plain =
                    threaded ? (need_plain ? &plain_clones[static_cast<std::size_t>(chunk)]
                                           : nullptr)
                             : (need_plain ? &plain : nullptr);
                Network* net_adv =
                    threaded
                        ? (want_adv ? &adv_clones[static_cast<std::size_t>(chunk)] : nullptr)
                        : (want_adv ? &adv : nullptr);
                for (int i = b0; i < b1; ++i) {
                    const int y = static_cast<int>(test.labels[static_cast<std::size_t>(i)]);
                    const RealTensor x = task == Task::detection
                                             ? test.tensor(i)
                                             : doa_inputs[static_cast<std::size_t>(i)];
                    if (net_plain) {
                        const Perturbation pert = craft_attack(*net_plain, x, y, cell_cfg);
                        a.sum_eps += cell_cfg.resolved_for(x).eps;
                        if (pert.degenerate) {
                            ++a.degenerate;
                        } else if (std::isfinite(pert.psr_db)) {
                            a.sum_psr += pert.psr_db;
                            ++a.finite_psr;
                        }
                        RealTensor xa = x;
                        xa += pert.delta;
                        if (want_cnn && net_plain->predict(xa) == y) ++a.correct_cnn;
                        if (want_glrt || want_spec) {
                            int g = -1;
                            if (task == Task::detection) {
                                ReceivedArray ra;
                                ra.samples = from_real_tensor(xa);
                                ra.meta.task = Task::detection;
                                ra.meta.label = y;
                                g = glrt_detect(ra, det_glrt);
                            } else {
                                try {
                                    g = glrt_doa(covariance_pair_from_tensor(xa, doa_glrt.zeta),
                                                 doa_glrt)
                                            .class_index;
                                } catch (const NumericalError&) {
                                    ++a.failures;
                                }
                            }
                            if (g == y) ++a.correct_glrt;
                        }
                    }
                    if (net_adv) {
                        const Perturbation pert = craft_attack(*net_adv, x, y, cell_cfg);
                        if (!net_plain) {
                            a.sum_eps += cell_cfg.resolved_for(x).eps;
                            if (pert.degenerate) {
                                ++a.degenerate;
                            } else if (std::isfinite(pert.psr_db)) {
                                a.sum_psr += pert.psr_db;
                                ++a.finite_psr;
                            }
                        }
                        RealTensor xb = x;
                        xb += pert.delta;
                        if (net_adv->predict(xb) == y) ++a.correct_adv;
                    }
                }
            });

            CellAccum total;
            for (const CellAccum& a : acc) { // fixed chunk order
                total.correct_cnn += a.correct_cnn;
                total.correct_adv += a.correct_adv;
                total.correct_glrt += a.correct_glrt;
                total.failures += a.failures;
                total.sum_eps += a.sum_eps;
                total.sum_psr += a.sum_psr;
                total.finite_psr += a.finite_psr;
                total.degenerate += a.degenerate;
            }
            result.numerical_failures += static_cast<int>(total.failures);

            for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
                const std::string& model = cfg.models[mi];
                long long correct = 0;
                if (model == "cnn") correct = total.correct_cnn;
                else if (model == "cnn_advtrain") correct = total.correct_adv;
                else correct = total.correct_glrt; // glrt and speculative coincide
                const double accuracy = static_cast<double>(correct) / n;
                result.rows.push_back({psr, method_name(base.method), norm_name(base.norm),
                                       model, accuracy, n});
                curves[mi].push_back(accuracy);
            }

            ordered_json point;
            point["psr_db"] = psr;
            point["mean_eps"] = total.sum_eps / n;
            point["mean_achieved_psr_db"] =
                total.finite_psr > 0 ? total.sum_psr / static_cast<double>(total.finite_psr)
                                     : 0.0;
            point["degenerate"] = total.degenerate;
            point["numerical_failures"] = total.failures;
            points.push_back(std::move(point));
        }

        SvgChart chart;
        chart.title = (task == Task::detection ? "detection" : "doa") +
                      std::string(" accuracy vs psr (") + method_name(base.method) + " " +
                      norm_name(base.norm) + ")";
        chart.x_label = "PSR (dB)";
        chart.y_label = "accuracy";
        for (std::size_t mi = 0; mi < cfg.models.size(); ++mi)
            chart.series.push_back({cfg.models[mi], cfg.psr_grid_db, curves[mi]});
        write_line_chart(paths.sweep_svg(task, base), chart);

        ordered_json entry;
        entry["method"] = method_name(base.method);
        entry["norm"] = norm_name(base.norm);
        entry["steps"] = base.steps;
        entry["points"] = std::move(points);
        manifest_attacks.push_back(std::move(entry));
    }

    write_sweep_csv(paths.sweep_csv(task), result);

    ordered_json manifest;
    manifest["schema_version"] = 1;
    manifest["task"] = task_tag(task);
    manifest["examples"] = n;
    manifest["models"] = cfg.models;
    manifest["numerical_failures"] = result.numerical_failures;
    manifest["attacks"] = std::move(manifest_attacks);
    write_text_file(paths.sweep_manifest(task), manifest.dump(2) + "\n");
    return result;
}

void run_speculate(const ExperimentConfig& cfg, Task task) {
    apply_thread_config(cfg);
    ensure_out_dir(cfg);
    const ArtifactPaths paths(cfg.out_dir);
    const Dataset test = read_dataset(paths.dataset(task, false));
    Network net = read_model(paths.model(task, "cnn"));

    const int limit = task == Task::detection ? cfg.detection.speculate_examples
                                              : cfg.doa.speculate_examples;
    const int n = limit > 0 ? std::min(limit, test.size()) : test.size();
    if (n < 1) config_fail("config: speculate needs at least one test example");

    GlrtDetectionConfig det_glrt;
    if (task == Task::detection) det_glrt = read_calibration(paths.calibration());

    std::vector<SpeculativeTrace> traces;
    traces.reserve(static_cast<std::size_t>(n));
    long long dl_correct = 0, glrt_correct = 0, final_correct = 0;
    for (int i = 0; i < n; ++i) {
        SpeculativeTrace tr;
        if (task == Task::detection) {
            tr = speculative_infer(test.received(i), net, det_glrt, cfg.speculative);
        } else {
            const RealTensor x =
                covariance_input(test.received(i), cfg.doa.glrt.k, cfg.doa.glrt.zeta);
            tr = speculative_infer(x, static_cast<int>(test.labels[static_cast<std::size_t>(i)]),
                                   net, cfg.doa.glrt, cfg.speculative);
        }
        dl_correct += tr.dl_output == tr.true_label;
        glrt_correct += tr.glrt_output == tr.true_label;
        final_correct += tr.final_output == tr.true_label;
        traces.push_back(tr);
    }
    write_trace_csv(paths.trace_csv(task), traces);

    const double p_agree = agreement_rate(traces);
    LatencyModel lat{p_agree, cfg.speculative.tau_dl_s, cfg.speculative.tau_glrt_s};
    long long restarts = 0;
    for (const SpeculativeTrace& tr : traces) restarts += tr.restarted;

    ordered_json summary;
    summary["schema_version"] = 1;
    summary["task"] = task_tag(task);
    summary["examples"] = n;
    summary["agreement_rate"] = p_agree;
    summary["restarts"] = restarts;
    summary["mean_decision_latency_ms"] = mean_decision_latency(traces) * 1e3;
    summary["expected_latency_ms"] = expected_latency(lat) * 1e3;
    summary["tau_dl_ms"] = cfg.speculative.tau_dl_s * 1e3;
    summary["tau_glrt_ms"] = cfg.speculative.tau_glrt_s * 1e3;
    summary["accuracy_dl"] = static_cast<double>(dl_correct) / n;
    summary["accuracy_glrt"] = static_cast<double>(glrt_correct) / n;
    summary["accuracy_final"] = static_cast<double>(final_correct) / n;
    write_text_file(paths.speculate_summary(task), summary.dump(2) + "\n");
}

TheoremReport run_verify_theorem(const ExperimentConfig& cfg) {
    apply_thread_config(cfg);
    ensure_out_dir(cfg);
    const ArtifactPaths paths(cfg.out_dir);
    const int trials = cfg.theorem.trials;
    const int m = cfg.theorem.elements;
    const int t = cfg.theorem.snapshots;

    TheoremReport report;
    const LpNorm norms[2] = {LpNorm::l2, LpNorm::linf};
    for (int ni = 0; ni < 2; ++ni) {
        const LpNorm p = norms[ni];
        for (std::size_t ei = 0; ei < cfg.theorem.eps.size(); ++ei) {
            const double eps = cfg.theorem.eps[ei];
            std::vector<TheoremRow> rows(static_cast<std::size_t>(trials));
            parallel_chunks(trials, kReductionChunks, [&](int, int b0, int b1) {
                for (int trial = b0; trial < b1; ++trial) {
                    const std::uint64_t g =
                        (static_cast<std::uint64_t>(ni) * cfg.theorem.eps.size() + ei) *
                            static_cast<std::uint64_t>(trials) +
                        static_cast<std::uint64_t>(trial);
                    Rng rng(derive_seed(cfg.seed, kStreamTheorem + g));
                    CMat z(m, t);
                    for (cd& v : z.data) v = rng.complex_gaussian(1.0);
                    CMat delta(m, t);
                    if (p == LpNorm::linf) {
                        for (cd& v : delta.data)
                            v = cd(rng.uniform(-eps, eps), rng.uniform(-eps, eps));
                    } else {
                        double sq = 0.0;
                        for (cd& v : delta.data) {
                            v = cd(rng.gaussian(), rng.gaussian());
                            sq += std::norm(v);
                        }
                        // alternate boundary and interior radii
                        const double radius =
                            trial % 2 == 0 ? eps : eps * rng.uniform01();
                        if (sq > 0.0) {
                            const double scale = radius / std::sqrt(sq);
                            for (cd& v : delta.data) v *= scale;
                        }
                    }
                    const ShiftBoundResult r = covariance_shift_bound(z, delta, p, eps);
                    TheoremRow& row = rows[static_cast<std::size_t>(trial)];
                    row.trial = trial;
                    row.p = p == LpNorm::l2 ? "2" : "inf";
                    row.eps = eps;
                    row.actual = r.actual;
                    row.bound = r.bound;
                    row.ratio = r.bound > 0.0 ? r.actual / r.bound : 0.0;
                    row.violation = r.actual > r.bound;
                }
            });
            for (TheoremRow& row : rows) {
                report.violations += row.violation;
                report.rows.push_back(std::move(row));
            }
        }
    }
    write_theorem_csv(paths.theorem_csv(), report);
    return report;
}

} // namespace specarray
