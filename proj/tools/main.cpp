// Pipeline driver: generate -> train -> calibrate -> attack-sweep ->
// speculate, plus the covariance-shift bound verifier. One JSON config plus
// a master seed fully determine every artifact.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "specarray/errors.hpp"
#include "specarray/experiment.hpp"

namespace {

using namespace specarray;

struct CliArgs {
    std::string command;
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> task;
    std::optional<int> threads;
};

Task parse_task(const CliArgs& args) {
    if (!args.task)
        throw ConfigError("missing --task (det or doa) for command " + args.command);
    return *args.task == "det" ? Task::detection : Task::doa;
}

ExperimentConfig resolve_config(const CliArgs& args) {
    ExperimentConfig cfg = args.config_path ? load_experiment_config(*args.config_path)
                                            : default_experiment_config();
    if (args.seed) cfg.seed = *args.seed;
    if (args.out_dir) cfg.out_dir = *args.out_dir;
    if (args.threads) cfg.threads = *args.threads;
    cfg.validate();
    return cfg;
}

int dispatch(const CliArgs& args) {
    if (args.command == "init-config") {
        ExperimentConfig cfg = default_experiment_config();
        if (args.seed) cfg.seed = *args.seed;
        if (args.out_dir) cfg.out_dir = *args.out_dir;
        if (args.threads) cfg.threads = *args.threads;
        cfg.validate();
        const std::string path = args.config_path.value_or("experiment.json");
        write_experiment_config(path, cfg);
        std::cout << "wrote " << path << "\n";
        return 0;
    }

    const ExperimentConfig cfg = resolve_config(args);
    const ArtifactPaths paths(cfg.out_dir);

    if (args.command == "generate") {
        const Task task = parse_task(args);
        run_generate(cfg, task);
        std::cout << "wrote " << paths.dataset(task, true) << " and "
                  << paths.dataset(task, false) << "\n";
    } else if (args.command == "train") {
        const Task task = parse_task(args);
        run_train(cfg, task);
        for (const std::string& m : cfg.models)
            if (m == "cnn" || m == "cnn_advtrain")
                std::cout << "wrote " << paths.model(task, m) << "\n";
    } else if (args.command == "calibrate") {
        run_calibrate(cfg);
        int n = 0;
        const GlrtDetectionConfig calibrated = read_calibration(paths.calibration(), &n);
        std::cout << "wrote " << paths.calibration() << " (gamma_T = "
                  << *calibrated.gamma_t << " from " << n << " trials)\n";
    } else if (args.command == "attack-sweep") {
        const Task task = parse_task(args);
        const SweepResult result = run_attack_sweep(cfg, task);
        std::cout << "wrote " << paths.sweep_csv(task) << " (" << result.rows.size()
                  << " rows)\n";
        if (result.numerical_failures > 0)
            std::cerr << "note: " << result.numerical_failures
                      << " eigsolver failures counted as misclassifications\n";
    } else if (args.command == "speculate") {
        const Task task = parse_task(args);
        run_speculate(cfg, task);
        std::cout << "wrote " << paths.trace_csv(task) << " and "
                  << paths.speculate_summary(task) << "\n";
    } else if (args.command == "verify-theorem") {
        const TheoremReport report = run_verify_theorem(cfg);
        std::cout << "wrote " << paths.theorem_csv() << " (" << report.rows.size()
                  << " trials, " << report.violations << " violations)\n";
        if (report.violations > 0)
            std::cerr << "warning: bound violated in " << report.violations
                      << " trials\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarially resilient array processing pipeline"};
    app.require_subcommand(1);

    CliArgs args;
    const auto add_common = [&](CLI::App* sub, bool with_task) {
        sub->add_option("--config", args.config_path, "experiment config JSON");
        sub->add_option("--seed", args.seed, "master seed override");
        sub->add_option("--out", args.out_dir, "output directory override");
        sub->add_option("--threads", args.threads,
                        "worker thread cap (0 = hardware concurrency)");
        if (with_task)
            sub->add_option("--task", args.task, "det or doa")
                ->check(CLI::IsMember({"det", "doa"}));
    };

    add_common(app.add_subcommand("generate", "synthesize train/test datasets"), true);
    add_common(app.add_subcommand("train", "train the configured classifiers"), true);
    add_common(app.add_subcommand("calibrate",
                                  "calibrate the detection threshold on H0 draws"),
               false);
    add_common(app.add_subcommand("attack-sweep",
                                  "accuracy versus PSR under the configured attacks"),
               true);
    add_common(app.add_subcommand("speculate",
                                  "speculative inference traces over the test set"),
               true);
    add_common(app.add_subcommand("verify-theorem",
                                  "covariance-shift bound verification report"),
               false);
    {
        CLI::App* init = app.add_subcommand(
            "init-config", "write the default experiment config as JSON");
        init->add_option("path", args.config_path, "output path")->required();
        init->add_option("--seed", args.seed, "master seed override");
        init->add_option("--out", args.out_dir, "output directory override");
        init->add_option("--threads", args.threads,
                         "worker thread cap (0 = hardware concurrency)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    args.command = app.get_subcommands().front()->get_name();
    try {
        return dispatch(args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const MissingArtifactError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
