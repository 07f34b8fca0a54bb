#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specarray/attacks.hpp"
#include "specarray/dataset_io.hpp"
#include "specarray/glrt.hpp"
#include "specarray/neural.hpp"
#include "specarray/signal_model.hpp"
#include "specarray/speculative.hpp"

namespace specarray {

// Everything a detection pipeline run needs beyond the shared array geometry.
struct DetectionPlan {
    SynthesisParams synthesis;      // snapshots = 500, onset window 20..480
    int train_examples = 4000;
    int test_examples = 1000;
    TrainConfig train;              // fixed-epoch schedule
    GlrtDetectionConfig glrt;       // k = 10, zeta = 1e-6, percentile = 95
    int calibration_trials = 2000;  // H0 draws behind the threshold
    int sweep_examples = 0;         // 0 = whole test set
    int speculate_examples = 0;     // 0 = whole test set
};

struct DoaPlan {
    SynthesisParams synthesis;      // snapshots = 1500 (even; onset fields unused)
    int train_examples = 4000;
    int test_examples = 1000;
    TrainConfig train;              // early stopping + lr schedule + checkpointing
    GlrtDoaConfig glrt;             // k = 750
    int sweep_examples = 0;
    int speculate_examples = 0;
};

// Covariance-shift bound verification: random observations, random in-ball
// perturbations, inequality evaluated per trial.
struct TheoremParams {
    int trials = 1000; // per (p, eps) cell
    std::vector<double> eps = {1e-3, 1e-2, 1e-1};
    int elements = 4;
    int snapshots = 32;
};

// One JSON file drives a full pipeline run. All artifact paths derive from
// out_dir; all randomness derives from seed.
struct ExperimentConfig {
    int schema_version = 1;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    int threads = 1; // 0 = hardware concurrency
    ArrayConfig array;
    DetectionPlan detection;
    DoaPlan doa;
    std::vector<AttackConfig> attacks; // eps resolved per example from the PSR axis
    std::vector<double> psr_grid_db;   // strictly increasing
    std::vector<std::string> models;   // subset of {cnn, cnn_advtrain, glrt, speculative}
    AttackConfig adv_train;            // perturbation used when training cnn_advtrain
    SpeculativeOptions speculative;
    TheoremParams theorem;

    void validate() const; // throws ConfigError
};

// Desk-scale defaults: 4000/1000 examples per task, 11-point PSR grid
// -35..-10 dB, four attacks, all four models.
ExperimentConfig default_experiment_config();

// MissingArtifactError when absent, ConfigError on malformed or invalid
// content. Fields omitted from the file keep their desk-scale defaults.
ExperimentConfig load_experiment_config(const std::string& path);
void write_experiment_config(const std::string& path, const ExperimentConfig& cfg);

// Canonical artifact layout under an output directory.
struct ArtifactPaths {
    std::string dir;

    explicit ArtifactPaths(std::string out_dir) : dir(std::move(out_dir)) {}
    std::string dataset(Task task, bool train) const;
    std::string model(Task task, const std::string& name) const;   // .spnn
    std::string history(Task task, const std::string& name) const; // .json
    std::string calibration() const;                               // detection threshold
    std::string sweep_csv(Task task) const;
    std::string sweep_manifest(Task task) const;
    std::string sweep_svg(Task task, const AttackConfig& attack) const;
    std::string trace_csv(Task task) const;
    std::string speculate_summary(Task task) const;
    std::string theorem_csv() const;
};

struct SweepRow {
    double psr_db = 0.0;
    std::string attack; // "fgsm" | "pgd"
    std::string norm;   // "l2" | "linf"
    std::string model;  // "cnn" | "cnn_advtrain" | "glrt" | "speculative"
    double accuracy = 0.0;
    int n = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    // DoA eigsolver non-convergence under heavy perturbation, counted as
    // misclassification in the affected rows and tallied here.
    int numerical_failures = 0;
};

// header: psr_db,attack,norm,model,accuracy,n
void write_sweep_csv(const std::string& path, const SweepResult& result);

struct TheoremRow {
    int trial = 0;
    std::string p; // "2" | "inf"
    double eps = 0.0;
    double actual = 0.0;
    double bound = 0.0;
    double ratio = 0.0; // actual / bound
    bool violation = false;
};

struct TheoremReport {
    std::vector<TheoremRow> rows;
    int violations = 0;
};

// header: trial,p,eps,actual,bound,ratio,violation
void write_theorem_csv(const std::string& path, const TheoremReport& report);

// Pipeline stages. Each consumes the config plus previously written
// artifacts, creates out_dir as needed, and overwrites its outputs with
// identical bytes when re-run with the same config + seed.
void run_generate(const ExperimentConfig& cfg, Task task);
void run_train(const ExperimentConfig& cfg, Task task); // every neural model in cfg.models
void run_calibrate(const ExperimentConfig& cfg);        // detection threshold JSON
SweepResult run_attack_sweep(const ExperimentConfig& cfg, Task task);
void run_speculate(const ExperimentConfig& cfg, Task task);
TheoremReport run_verify_theorem(const ExperimentConfig& cfg);

} // namespace specarray
