#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "burdenlab/harness.hpp"

namespace fs = std::filesystem;
using namespace burdenlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRunFailure = 2;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open file: " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write file: " + path.string());
    }
    out << content;
}

// BURDENLAB_OUT beats both the config file and --out.
std::string resolve_out_dir(const std::string& flag_value, const std::string& config_value) {
    if (const char* env = std::getenv("BURDENLAB_OUT"); env != nullptr && *env != '\0') {
        return env;
    }
    if (!flag_value.empty()) {
        return flag_value;
    }
    return config_value;
}

tasks::SequenceTask pick_task(const harness::ExperimentConfig& config,
                              const std::string& task_name) {
    if (task_name.empty()) {
        return config.task_list.front();
    }
    for (const auto& task : config.task_list) {
        if (task.name() == task_name) {
            return task;
        }
    }
    throw ConfigError("config defines no task named '" + task_name + "'");
}

int run_train_teacher(const std::string& config_path, const std::string& arm,
                      std::uint64_t seed, const std::string& task_name,
                      const std::string& out_flag) {
    const auto config = harness::ExperimentConfig::from_file(config_path);
    const auto task = pick_task(config, task_name);
    const std::string out_dir = resolve_out_dir(out_flag, config.output_dir);

    const auto artifacts = harness::train_teacher(config, task, arm, seed);
    const fs::path dir = fs::path(out_dir) / task.name() / ("seed" + std::to_string(seed));
    const fs::path model_path = dir / ("teacher_" + arm + ".json");
    const fs::path log_path = dir / ("teacher_" + arm + "_log.csv");
    write_file(model_path, harness::model_document_to_json(artifacts.doc));
    write_file(log_path, training::metrics_to_csv(artifacts.log));

    std::cout << "trained " << artifacts.doc.model_id << "\n"
              << "  model: " << model_path.string() << "\n"
              << "  log:   " << log_path.string() << "\n";
    if (!artifacts.log.empty()) {
        const auto& last = artifacts.log.back();
        std::cout << "  final task loss " << last.task << ", burden violation rate "
                  << last.burden_violation_rate << "\n";
    }
    return kExitOk;
}

int run_distill(const std::string& teacher_path, int budget, std::optional<std::uint64_t> seed,
                double shrink, double temperature, int epochs, double learning_rate,
                const std::string& out_flag) {
    const auto teacher = harness::model_document_from_json(read_file(teacher_path));

    distill::DistillConfig dcfg;
    dcfg.budget = budget;
    dcfg.shrink = shrink;
    dcfg.kd_temperature = temperature;
    dcfg.student_optim.epochs = epochs;
    dcfg.student_optim.learning_rate = learning_rate;
    const std::uint64_t student_seed =
        seed.value_or(harness::student_seed_for(teacher.task, teacher.seed, budget));

    const auto artifacts = harness::distill_student(teacher, dcfg, student_seed);
    const std::string out_dir = resolve_out_dir(out_flag, ".");
    const fs::path dir =
        fs::path(out_dir) / teacher.task.name() / ("seed" + std::to_string(teacher.seed));
    const fs::path model_path =
        dir / ("student_" + teacher.family + "_b" + std::to_string(budget) + ".json");
    write_file(model_path, harness::model_document_to_json(artifacts.doc));

    std::cout << "distilled " << artifacts.doc.model_id << " from " << teacher.model_id << "\n"
              << "  model: " << model_path.string() << "\n"
              << "  final distill loss " << artifacts.arm.final_distill_loss
              << ", discrepancy " << artifacts.arm.discrepancy_mean << " +/- "
              << artifacts.arm.discrepancy_stderr << "\n";
    return kExitOk;
}

int run_evaluate(const std::string& model_path, int samples,
                 std::optional<std::uint64_t> probe_seed, const std::string& out_file) {
    const auto doc = harness::model_document_from_json(read_file(model_path));
    profiles::ProbeConfig probe;
    probe.eval_samples = samples;
    probe.seed = probe_seed.value_or(
        harness::derived_seed(doc.seed, "probe/" + doc.task.name()));

    const auto record = harness::evaluate_document(doc, probe);
    const std::string text = profiles::eval_record_to_json(record);
    if (out_file.empty()) {
        std::cout << text << "\n";
    } else {
        write_file(out_file, text + "\n");
        std::cout << "wrote " << out_file << "\n";
    }
    return kExitOk;
}

int run_experiment_cmd(const std::string& config_path, const std::string& out_flag) {
    auto config = harness::ExperimentConfig::from_file(config_path);
    config.output_dir = resolve_out_dir(out_flag, config.output_dir);

    const auto bundle = harness::run_experiment(config);
    std::cout << "experiment complete\n"
              << "  report:     " << (fs::path(config.output_dir) / "report.json").string()
              << "\n"
              << "  summary:    " << (fs::path(config.output_dir) / "summary.csv").string()
              << "\n"
              << "  hypotheses: " << (fs::path(config.output_dir) / "hypotheses.csv").string()
              << "\n";
    int failed = 0;
    for (const auto& task_entry : bundle.document.at("tasks")) {
        for (const auto& seed_entry : task_entry.at("seeds")) {
            if (seed_entry.at("status") != "ok") ++failed;
        }
    }
    if (failed > 0) {
        std::cout << "  " << failed << " seed arm(s) failed; see report diagnostics\n";
    }
    return kExitOk;
}

int run_report(const std::string& bundle_path, const std::string& format,
               const std::string& out_flag) {
    harness::ReportBundle bundle;
    try {
        bundle.document = nlohmann::json::parse(read_file(bundle_path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bundle is not valid JSON: ") + e.what());
    }
    const std::string fallback = fs::path(bundle_path).has_parent_path()
                                     ? fs::path(bundle_path).parent_path().string()
                                     : std::string(".");
    const std::string out_dir = resolve_out_dir(out_flag, fallback);
    harness::emit_report(bundle, out_dir, format);
    std::cout << "emitted " << format << " report to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"burdenlab: constraint-coupled teachers, output-only students, "
                 "capability/stability profiling"};
    app.require_subcommand(1);

    std::string config_path;
    std::string arm;
    std::uint64_t seed = 1;
    std::string task_name;
    std::string out_dir;

    auto* train_cmd = app.add_subcommand("train-teacher", "Train one teacher arm");
    train_cmd->add_option("--config", config_path, "Experiment config file")->required();
    train_cmd->add_option("--arm", arm, "Teacher family: base or cc")
        ->required()
        ->check(CLI::IsMember({"base", "cc"}));
    train_cmd->add_option("--seed", seed, "Experiment seed")->required();
    train_cmd->add_option("--task", task_name, "Task name (default: first in config)");
    train_cmd->add_option("--out", out_dir, "Output directory");

    std::string teacher_path;
    int budget = 1000;
    std::optional<std::uint64_t> opt_seed;
    double shrink = distill::DistillConfig{}.shrink;
    double temperature = distill::DistillConfig{}.kd_temperature;
    int distill_epochs = distill::DistillConfig{}.student_optim.epochs;
    double distill_lr = distill::DistillConfig{}.student_optim.learning_rate;

    auto* distill_cmd = app.add_subcommand("distill", "Distill a student from a saved teacher");
    distill_cmd->add_option("--teacher", teacher_path, "Teacher model JSON")->required();
    distill_cmd->add_option("--budget", budget, "Teacher-labeled sequences")->required();
    distill_cmd->add_option("--seed", opt_seed,
                            "Student seed (default: the experiment's derived arm seed)");
    distill_cmd->add_option("--shrink", shrink, "Student hidden-size ratio");
    distill_cmd->add_option("--temperature", temperature, "Distillation temperature");
    distill_cmd->add_option("--epochs", distill_epochs, "Student training epochs");
    distill_cmd->add_option("--learning-rate", distill_lr, "Student SGD step size");
    distill_cmd->add_option("--out", out_dir, "Output directory");

    std::string model_path;
    int samples = 2000;
    std::optional<std::uint64_t> probe_seed;
    std::string out_file;

    auto* eval_cmd = app.add_subcommand("evaluate", "Capability and stability of a saved model");
    eval_cmd->add_option("--model", model_path, "Model JSON")->required();
    eval_cmd->add_option("--samples", samples, "Evaluation sample count");
    eval_cmd->add_option("--probe-seed", probe_seed, "Probe stream seed");
    eval_cmd->add_option("--out", out_file, "Write the profile JSON here instead of stdout");

    auto* experiment_cmd = app.add_subcommand("experiment", "Run the full experiment program");
    experiment_cmd->add_option("--config", config_path, "Experiment config file")->required();
    experiment_cmd->add_option("--out", out_dir, "Output directory override");

    std::string bundle_path;
    std::string format = "all";

    auto* report_cmd = app.add_subcommand("report", "Re-emit files from a report bundle");
    report_cmd->add_option("--bundle", bundle_path, "report.json produced by `experiment`")
        ->required();
    report_cmd->add_option("--format", format, "json, csv or all")
        ->check(CLI::IsMember({"json", "csv", "all"}));
    report_cmd->add_option("--out", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (train_cmd->parsed()) {
            return run_train_teacher(config_path, arm, seed, task_name, out_dir);
        }
        if (distill_cmd->parsed()) {
            return run_distill(teacher_path, budget, opt_seed, shrink, temperature,
                               distill_epochs, distill_lr, out_dir);
        }
        if (eval_cmd->parsed()) {
            return run_evaluate(model_path, samples, probe_seed, out_file);
        }
        if (experiment_cmd->parsed()) {
            return run_experiment_cmd(config_path, out_dir);
        }
        if (report_cmd->parsed()) {
            return run_report(bundle_path, format, out_dir);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "run failure: " << e.what() << "\n";
        return kExitRunFailure;
    }
    return kExitConfigError;
}
