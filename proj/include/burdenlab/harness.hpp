#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "burdenlab/cell.hpp"
#include "burdenlab/common.hpp"
#include "burdenlab/config_file.hpp"
#include "burdenlab/distillation.hpp"
#include "burdenlab/dynamics.hpp"
#include "burdenlab/profiles.hpp"
#include "burdenlab/tasks.hpp"
#include "burdenlab/training.hpp"

namespace burdenlab::harness {

// Everything the experiment needs, loaded from one sectioned key/value file.
struct ExperimentConfig {
    std::vector<tasks::SequenceTask> task_list;
    int hidden = 32;
    int embedding = 16;
    dynamics::ConstraintConfig constraints;
    training::ObjectiveWeights cc_weights{1.0, 1.0, 0.5};
    training::OptimConfig teacher_optim;
    distill::DistillConfig distill_defaults;
    std::vector<int> budgets{1000, 4000, 16000};
    profiles::ProbeConfig probe;
    profiles::OutcomeThresholds thresholds;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string output_dir = "out";

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_config(const ConfigFile& file);
    void validate() const;
    nlohmann::json to_json() const;
};

// Stable derivation of child seeds from a root seed and a label; the same
// (root, label) pair always yields the same child.
std::uint64_t derived_seed(std::uint64_t root, const std::string& label);

// A self-contained serialized model: parameters plus everything needed to
// re-run it (task, constraint yardstick, deployed enforcement).
struct ModelDocument {
    std::string model_id;
    std::string role;    // "teacher" or "student"
    std::string family;  // "base" or "cc"
    tasks::SequenceTask task;
    dynamics::ConstraintConfig constraints;
    dynamics::Enforcement enforcement = dynamics::Enforcement::Soft;
    CellParams params;
    std::uint64_t seed = 0;
    // student-only distillation metadata; zero for teachers
    int budget = 0;
    double final_distill_loss = 0.0;
    double discrepancy_mean = 0.0;
    double discrepancy_stderr = 0.0;
};

std::string model_document_to_json(const ModelDocument& doc);
ModelDocument model_document_from_json(const std::string& text);

// The experiment's arm seeds and initial weights, exposed so standalone runs
// reproduce experiment arms exactly.
CellParams initial_teacher(const ExperimentConfig& config, const tasks::SequenceTask& task,
                           std::uint64_t seed);
training::OptimConfig teacher_optim_for(const ExperimentConfig& config,
                                        const tasks::SequenceTask& task, std::uint64_t seed);
std::uint64_t student_seed_for(const tasks::SequenceTask& task, std::uint64_t seed, int budget);
profiles::ProbeConfig probe_for(const ExperimentConfig& config, const tasks::SequenceTask& task,
                                std::uint64_t seed);

struct TeacherArtifacts {
    ModelDocument doc;
    std::vector<training::EpochMetrics> log;
};

// Trains one teacher arm ("base" trains with weights (0,0,0) and deploys
// soft; "cc" trains with the configured weights and deploys as configured).
TeacherArtifacts train_teacher(const ExperimentConfig& config, const tasks::SequenceTask& task,
                               const std::string& family, std::uint64_t seed);

struct StudentArtifacts {
    ModelDocument doc;
    distill::StudentArm arm;
};

StudentArtifacts distill_student(const ModelDocument& teacher,
                                 const distill::DistillConfig& dcfg, std::uint64_t seed);

profiles::EvalRecord evaluate_document(const ModelDocument& doc,
                                       const profiles::ProbeConfig& probe);

struct ReportBundle {
    nlohmann::json document;

    bool has_seed_records() const;
};

// Runs the full program: per task and seed, trains both teacher families on
// identical data streams, distills matched students at every budget,
// evaluates all models, fits coupling curves, classifies outcomes and
// assembles the H1-H4 summaries. Artifacts are written under
// config.output_dir as a side effect; the returned bundle carries the
// manifest of everything written.
ReportBundle run_experiment(const ExperimentConfig& config);

// Writes report.json ("json"), summary.csv + hypotheses.csv ("csv"), or all
// three ("all") into out_dir. Throws on a bundle without seed records.
void emit_report(const ReportBundle& bundle, const std::string& out_dir,
                 const std::string& format);

std::string summary_csv(const ReportBundle& bundle);
std::string hypotheses_csv(const ReportBundle& bundle);

}  // namespace burdenlab::harness
