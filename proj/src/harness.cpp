#include "burdenlab/harness.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

namespace burdenlab::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t derived_seed(std::uint64_t root, const std::string& label) {
    return RngStream(root, label).next_u64();
}

// ---------------------------------------------------------------------------
// JSON forms of the sub-configs

namespace {

json task_to_json(const tasks::SequenceTask& task) {
    json j;
    j["kind"] = tasks::to_string(task.kind);
    j["vocab"] = task.vocab;
    j["length"] = task.length;
    j["delay"] = task.delay;
    j["modulus"] = task.modulus;
    j["horizon_factor"] = task.horizon_factor;
    return j;
}

tasks::SequenceTask task_from_json(const json& j) {
    tasks::SequenceTask task;
    task.kind = tasks::task_kind_from_string(j.at("kind").get<std::string>());
    task.vocab = j.at("vocab").get<int>();
    task.length = j.at("length").get<int>();
    task.delay = j.at("delay").get<int>();
    task.modulus = j.at("modulus").get<int>();
    task.horizon_factor = j.at("horizon_factor").get<int>();
    task.validate();
    return task;
}

json constraints_to_json(const dynamics::ConstraintConfig& cfg) {
    json j;
    j["w_disp"] = cfg.w_disp;
    j["w_grow"] = cfg.w_grow;
    j["burden_threshold"] = cfg.burden_threshold;
    j["path_mode"] = dynamics::to_string(cfg.path_mode);
    j["alpha"] = cfg.alpha;
    j["lambda_path"] = cfg.lambda_path;
    j["r0"] = cfg.r0;
    j["kappa"] = cfg.kappa;
    j["r_min"] = cfg.r_min;
    j["enforcement"] = dynamics::to_string(cfg.enforcement);
    return j;
}

dynamics::ConstraintConfig constraints_from_json(const json& j) {
    dynamics::ConstraintConfig cfg;
    cfg.w_disp = j.at("w_disp").get<double>();
    cfg.w_grow = j.at("w_grow").get<double>();
    cfg.burden_threshold = j.at("burden_threshold").get<double>();
    cfg.path_mode = dynamics::path_mode_from_string(j.at("path_mode").get<std::string>());
    cfg.alpha = j.at("alpha").get<double>();
    cfg.lambda_path = j.at("lambda_path").get<double>();
    cfg.r0 = j.at("r0").get<double>();
    cfg.kappa = j.at("kappa").get<double>();
    cfg.r_min = j.at("r_min").get<double>();
    cfg.enforcement = dynamics::enforcement_from_string(j.at("enforcement").get<std::string>());
    cfg.validate();
    return cfg;
}

json optim_to_json(const training::OptimConfig& optim) {
    json j;
    j["learning_rate"] = optim.learning_rate;
    j["epochs"] = optim.epochs;
    j["batches_per_epoch"] = optim.batches_per_epoch;
    j["batch_size"] = optim.batch_size;
    j["clip_norm"] = optim.clip_norm;
    j["sigma_stab"] = optim.sigma_stab;
    return j;
}

json eval_to_json(const profiles::EvalRecord& record) {
    return json::parse(profiles::eval_record_to_json(record));
}

std::string hash_hex(const std::string& content) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(content));
    return std::string(buf);
}

// Writes artifacts under a root directory and remembers path + content hash.
class ManifestCollector {
  public:
    explicit ManifestCollector(fs::path root) : root_(std::move(root)) {}

    void write(const std::string& rel_path, const std::string& content) {
        const fs::path full = root_ / rel_path;
        fs::create_directories(full.parent_path());
        std::ofstream out(full, std::ios::binary);
        if (!out) {
            throw Error("cannot write artifact: " + full.string());
        }
        out << content;
        out.close();
        json entry;
        entry["path"] = rel_path;
        entry["fnv1a64"] = hash_hex(content);
        entry["bytes"] = content.size();
        entries_.push_back(std::move(entry));
    }

    const json& entries() const { return entries_; }

  private:
    fs::path root_;
    json entries_ = json::array();
};

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_config(ConfigFile::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& file) {
    ExperimentConfig config;

    config.seeds = file.get_u64_list("experiment", "seeds");
    config.budgets = file.get_int_list("experiment", "budgets");
    config.output_dir = file.get_string("experiment", "output_dir", config.output_dir);

    config.task_list.clear();
    for (const std::string& name : file.get_list("experiment", "tasks")) {
        const std::string section = "task." + name;
        tasks::SequenceTask task;
        task.kind = tasks::task_kind_from_string(file.get_string(section, "kind", name));
        task.vocab = file.get_int(section, "vocab", task.vocab);
        task.length = file.get_int(section, "length", task.length);
        task.delay = file.get_int(section, "delay", task.delay);
        task.modulus = file.get_int(section, "modulus", task.modulus);
        task.validate();
        config.task_list.push_back(task);
    }

    config.hidden = file.get_int("model", "hidden", config.hidden);
    config.embedding = file.get_int("model", "embedding", config.embedding);

    auto& cc = config.constraints;
    cc.w_disp = file.get_double("constraints", "w_disp", cc.w_disp);
    cc.w_grow = file.get_double("constraints", "w_grow", cc.w_grow);
    cc.burden_threshold = file.get_double("constraints", "burden_threshold", cc.burden_threshold);
    cc.path_mode =
        dynamics::path_mode_from_string(file.get_string("constraints", "path_mode", "uniform"));
    cc.alpha = file.get_double("constraints", "alpha", cc.alpha);
    cc.lambda_path = file.get_double("constraints", "lambda_path", cc.lambda_path);
    cc.r0 = file.get_double("constraints", "r0", cc.r0);
    cc.kappa = file.get_double("constraints", "kappa", cc.kappa);
    cc.r_min = file.get_double("constraints", "r_min", cc.r_min);
    cc.enforcement =
        dynamics::enforcement_from_string(file.get_string("constraints", "enforcement", "soft"));

    config.cc_weights.lambda1 = file.get_double("objective", "lambda1", config.cc_weights.lambda1);
    config.cc_weights.lambda2 = file.get_double("objective", "lambda2", config.cc_weights.lambda2);
    config.cc_weights.lambda3 = file.get_double("objective", "lambda3", config.cc_weights.lambda3);

    auto& optim = config.teacher_optim;
    optim.learning_rate = file.get_double("optim", "learning_rate", optim.learning_rate);
    optim.epochs = file.get_int("optim", "epochs", optim.epochs);
    optim.batches_per_epoch = file.get_int("optim", "batches_per_epoch", optim.batches_per_epoch);
    optim.batch_size = file.get_int("optim", "batch_size", optim.batch_size);
    optim.clip_norm = file.get_double("optim", "clip_norm", optim.clip_norm);
    optim.sigma_stab = file.get_double("optim", "sigma_stab", optim.sigma_stab);

    auto& dd = config.distill_defaults;
    dd.kd_temperature = file.get_double("distill", "kd_temperature", dd.kd_temperature);
    dd.shrink = file.get_double("distill", "shrink", dd.shrink);
    dd.epsilon_target = file.get_double("distill", "epsilon_target", dd.epsilon_target);
    dd.discrepancy_samples =
        file.get_int("distill", "discrepancy_samples", dd.discrepancy_samples);
    dd.student_optim.learning_rate =
        file.get_double("distill", "learning_rate", dd.student_optim.learning_rate);
    dd.student_optim.epochs = file.get_int("distill", "epochs", dd.student_optim.epochs);
    dd.student_optim.batch_size =
        file.get_int("distill", "batch_size", dd.student_optim.batch_size);
    dd.student_optim.clip_norm =
        file.get_double("distill", "clip_norm", dd.student_optim.clip_norm);
    dd.student_optim.batches_per_epoch = 1;  // corpus-driven; unused by distillation

    auto& probe = config.probe;
    probe.eval_samples = file.get_int("probe", "eval_samples", probe.eval_samples);
    probe.noise_sigma_low = file.get_double("probe", "noise_sigma_low", probe.noise_sigma_low);
    probe.noise_sigma_high = file.get_double("probe", "noise_sigma_high", probe.noise_sigma_high);
    if (file.has("probe", "horizon_factors")) {
        const auto factors = file.get_int_list("probe", "horizon_factors");
        if (factors.size() != 2) {
            throw ConfigError("probe.horizon_factors must list exactly two factors");
        }
        probe.horizon_low = factors[0];
        probe.horizon_high = factors[1];
    }

    config.thresholds.epsilon_k =
        file.get_double("thresholds", "epsilon_k", config.thresholds.epsilon_k);
    config.thresholds.epsilon_r =
        file.get_double("thresholds", "epsilon_r", config.thresholds.epsilon_r);
    config.thresholds.rho_b = file.get_double("thresholds", "rho_b", config.thresholds.rho_b);

    const auto unknown = file.unconsumed_keys();
    if (!unknown.empty()) {
        std::string joined;
        for (const auto& key : unknown) {
            if (!joined.empty()) joined += ", ";
            joined += key;
        }
        throw ConfigError("config has unknown keys: " + joined);
    }

    config.validate();
    return config;
}

void ExperimentConfig::validate() const {
    if (task_list.empty()) throw ConfigError("experiment needs at least one task");
    if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
    if (budgets.empty()) throw ConfigError("experiment needs at least one budget");
    for (size_t i = 0; i < budgets.size(); ++i) {
        if (budgets[i] < 0) throw ConfigError("budgets must be >= 0");
        if (i > 0 && budgets[i] <= budgets[i - 1]) {
            throw ConfigError("budgets must be strictly increasing");
        }
    }
    if (hidden < 2) throw ConfigError("model.hidden must be >= 2");
    if (embedding < 1) throw ConfigError("model.embedding must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
    for (const auto& task : task_list) task.validate();
    constraints.validate();
    cc_weights.validate();
    teacher_optim.validate();
    distill_defaults.validate();
    probe.validate();
}

json ExperimentConfig::to_json() const {
    json j;
    json task_array = json::array();
    for (const auto& task : task_list) task_array.push_back(task_to_json(task));
    j["tasks"] = std::move(task_array);
    j["model"] = {{"hidden", hidden}, {"embedding", embedding}};
    j["constraints"] = constraints_to_json(constraints);
    j["objective"] = {{"lambda1", cc_weights.lambda1},
                      {"lambda2", cc_weights.lambda2},
                      {"lambda3", cc_weights.lambda3}};
    j["optim"] = optim_to_json(teacher_optim);
    j["distill"] = {{"kd_temperature", distill_defaults.kd_temperature},
                    {"shrink", distill_defaults.shrink},
                    {"epsilon_target", distill_defaults.epsilon_target},
                    {"discrepancy_samples", distill_defaults.discrepancy_samples},
                    {"learning_rate", distill_defaults.student_optim.learning_rate},
                    {"epochs", distill_defaults.student_optim.epochs},
                    {"batch_size", distill_defaults.student_optim.batch_size},
                    {"clip_norm", distill_defaults.student_optim.clip_norm}};
    j["budgets"] = budgets;
    j["probe"] = {{"eval_samples", probe.eval_samples},
                  {"noise_sigma_low", probe.noise_sigma_low},
                  {"noise_sigma_high", probe.noise_sigma_high},
                  {"horizon_factors", json::array({probe.horizon_low, probe.horizon_high})}};
    j["thresholds"] = {{"epsilon_k", thresholds.epsilon_k},
                       {"epsilon_r", thresholds.epsilon_r},
                       {"rho_b", thresholds.rho_b}};
    j["seeds"] = seeds;
    j["output_dir"] = output_dir;
    return j;
}

// ---------------------------------------------------------------------------
// Model documents

std::string model_document_to_json(const ModelDocument& doc) {
    json j;
    j["format_version"] = 1;
    j["kind"] = "model";
    j["model_id"] = doc.model_id;
    j["role"] = doc.role;
    j["family"] = doc.family;
    j["task"] = task_to_json(doc.task);
    j["constraints"] = constraints_to_json(doc.constraints);
    j["enforcement"] = dynamics::to_string(doc.enforcement);
    j["seed"] = doc.seed;
    j["budget"] = doc.budget;
    j["final_distill_loss"] = doc.final_distill_loss;
    j["discrepancy_mean"] = doc.discrepancy_mean;
    j["discrepancy_stderr"] = doc.discrepancy_stderr;
    j["cell"] = json::parse(cell_to_json(doc.params));
    return j.dump(2);
}

ModelDocument model_document_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model document is not valid JSON: ") + e.what());
    }
    if (j.value("kind", "") != "model") {
        throw ConfigError("model document has wrong kind");
    }
    if (j.value("format_version", -1) != 1) {
        throw ConfigError("unsupported model format_version");
    }
    ModelDocument doc;
    doc.model_id = j.at("model_id").get<std::string>();
    doc.role = j.at("role").get<std::string>();
    doc.family = j.at("family").get<std::string>();
    doc.task = task_from_json(j.at("task"));
    doc.constraints = constraints_from_json(j.at("constraints"));
    doc.enforcement = dynamics::enforcement_from_string(j.at("enforcement").get<std::string>());
    doc.seed = j.at("seed").get<std::uint64_t>();
    doc.budget = j.at("budget").get<int>();
    doc.final_distill_loss = j.at("final_distill_loss").get<double>();
    doc.discrepancy_mean = j.at("discrepancy_mean").get<double>();
    doc.discrepancy_stderr = j.at("discrepancy_stderr").get<double>();
    doc.params = cell_from_json(j.at("cell").dump());
    return doc;
}

// ---------------------------------------------------------------------------
// Arm-level operations

CellParams initial_teacher(const ExperimentConfig& config, const tasks::SequenceTask& task,
                           std::uint64_t seed) {
    RngStream init(seed, "teacher-init/" + task.name());
    return make_random_cell({config.hidden, config.embedding, task.vocab}, init);
}

training::OptimConfig teacher_optim_for(const ExperimentConfig& config,
                                        const tasks::SequenceTask& task, std::uint64_t seed) {
    training::OptimConfig optim = config.teacher_optim;
    optim.seed = derived_seed(seed, "teacher-optim/" + task.name());
    return optim;
}

std::uint64_t student_seed_for(const tasks::SequenceTask& task, std::uint64_t seed, int budget) {
    return derived_seed(seed, "student/" + task.name() + "/b" + std::to_string(budget));
}

profiles::ProbeConfig probe_for(const ExperimentConfig& config, const tasks::SequenceTask& task,
                                std::uint64_t seed) {
    profiles::ProbeConfig probe = config.probe;
    probe.seed = derived_seed(seed, "probe/" + task.name());
    return probe;
}

TeacherArtifacts train_teacher(const ExperimentConfig& config, const tasks::SequenceTask& task,
                               const std::string& family, std::uint64_t seed) {
    if (family != "base" && family != "cc") {
        throw ConfigError("teacher family must be 'base' or 'cc'");
    }
    const bool constrained = family == "cc";
    training::ObjectiveWeights weights;  // zero for the baseline arm
    dynamics::ConstraintConfig train_cfg = config.constraints;
    if (constrained) {
        weights = config.cc_weights;
    } else {
        train_cfg.enforcement = dynamics::Enforcement::Soft;
    }

    const CellParams init = initial_teacher(config, task, seed);
    const training::OptimConfig optim = teacher_optim_for(config, task, seed);
    training::TrainResult result = training::train(init, train_cfg, weights, task, optim);

    TeacherArtifacts artifacts;
    artifacts.doc.model_id =
        task.name() + "/seed" + std::to_string(seed) + "/teacher-" + family;
    artifacts.doc.role = "teacher";
    artifacts.doc.family = family;
    artifacts.doc.task = task;
    artifacts.doc.constraints = config.constraints;
    artifacts.doc.enforcement =
        constrained ? config.constraints.enforcement : dynamics::Enforcement::Soft;
    artifacts.doc.params = std::move(result.params);
    artifacts.doc.seed = seed;
    artifacts.log = std::move(result.log);
    return artifacts;
}

StudentArtifacts distill_student(const ModelDocument& teacher,
                                 const distill::DistillConfig& dcfg, std::uint64_t seed) {
    if (teacher.role != "teacher") {
        throw ConfigError("distill_student: document is not a teacher model");
    }
    dynamics::ConstraintConfig deployed = teacher.constraints;
    deployed.enforcement = teacher.enforcement;

    StudentArtifacts artifacts;
    artifacts.arm = distill::distill(teacher.params, deployed, teacher.task, dcfg, seed,
                                     teacher.model_id);

    const auto scope_end = teacher.model_id.rfind('/');
    const std::string scope =
        scope_end == std::string::npos ? "" : teacher.model_id.substr(0, scope_end + 1);
    artifacts.doc.model_id =
        scope + "student-" + teacher.family + "-b" + std::to_string(dcfg.budget);
    artifacts.doc.role = "student";
    artifacts.doc.family = teacher.family;
    artifacts.doc.task = teacher.task;
    artifacts.doc.constraints = teacher.constraints;
    artifacts.doc.enforcement = dynamics::Enforcement::Soft;  // students deploy unconstrained
    artifacts.doc.params = artifacts.arm.student;
    artifacts.doc.seed = seed;
    artifacts.doc.budget = dcfg.budget;
    artifacts.doc.final_distill_loss = artifacts.arm.final_distill_loss;
    artifacts.doc.discrepancy_mean = artifacts.arm.discrepancy_mean;
    artifacts.doc.discrepancy_stderr = artifacts.arm.discrepancy_stderr;
    return artifacts;
}

profiles::EvalRecord evaluate_document(const ModelDocument& doc,
                                       const profiles::ProbeConfig& probe) {
    profiles::DeployedModel model;
    model.params = doc.params;
    model.enforcement = doc.enforcement;
    model.id = doc.model_id;
    return profiles::evaluate_model(model, doc.constraints, doc.task, probe);
}

// ---------------------------------------------------------------------------
// Hypotheses

namespace {

struct ArmSummary {
    std::string family;
    int budget = 0;
    profiles::EvalRecord eval;
    profiles::GapPair gap;
};

json coupling_to_json(const std::vector<std::pair<double, double>>& points) {
    json out;
    try {
        const auto fit = profiles::coupling_fit(points);
        out["slope"] = fit.slope;
        out["intercept"] = fit.intercept;
        out["residual"] = fit.residual;
    } catch (const Error& e) {
        out["slope"] = nullptr;
        out["intercept"] = nullptr;
        out["residual"] = nullptr;
        out["error"] = e.what();
    }
    json pts = json::array();
    for (const auto& [x, y] : points) {
        pts.push_back(json::array({x, y}));
    }
    out["points"] = std::move(pts);
    return out;
}

json subtract_or_null(const json& a, const json& b) {
    if (a.is_null() || b.is_null()) return nullptr;
    return a.get<double>() - b.get<double>();
}

// H1-H4 statistics over one pool of arms (a single seed, or all seeds of a
// task pooled together).
json hypotheses_from_arms(const std::vector<ArmSummary>& arms, const json& coupling_base,
                          const json& coupling_cc, double epsilon_k) {
    json h;

    const json slope_base = coupling_base.at("slope");
    const json slope_cc = coupling_cc.at("slope");
    h["h1"] = {{"slope_base", slope_base},
               {"slope_cc", slope_cc},
               {"effect", subtract_or_null(slope_cc, slope_base)}};

    double drop2[2] = {0.0, 0.0};
    double drop4[2] = {0.0, 0.0};
    int counts[2] = {0, 0};
    for (const auto& arm : arms) {
        const int f = arm.family == "cc" ? 1 : 0;
        drop2[f] += arm.eval.capability.accuracy - arm.eval.stability.acc_h2;
        drop4[f] += arm.eval.capability.accuracy - arm.eval.stability.acc_h4;
        counts[f] += 1;
    }
    json drop2_base = counts[0] > 0 ? json(drop2[0] / counts[0]) : json(nullptr);
    json drop2_cc = counts[1] > 0 ? json(drop2[1] / counts[1]) : json(nullptr);
    json drop4_base = counts[0] > 0 ? json(drop4[0] / counts[0]) : json(nullptr);
    json drop4_cc = counts[1] > 0 ? json(drop4[1] / counts[1]) : json(nullptr);
    h["h2"] = {{"drop_x2_base", drop2_base},
               {"drop_x2_cc", drop2_cc},
               {"effect_x2", subtract_or_null(drop2_cc, drop2_base)},
               {"drop_x4_base", drop4_base},
               {"drop_x4_cc", drop4_cc},
               {"effect_x4", subtract_or_null(drop4_cc, drop4_base)}};

    json min_budget[2] = {nullptr, nullptr};
    for (const auto& arm : arms) {
        if (arm.gap.delta_k <= epsilon_k) {
            const int f = arm.family == "cc" ? 1 : 0;
            if (min_budget[f].is_null() || arm.budget < min_budget[f].get<int>()) {
                min_budget[f] = arm.budget;
            }
        }
    }
    h["h3"] = {{"min_budget_base", min_budget[0]},
               {"min_budget_cc", min_budget[1]},
               {"effect", subtract_or_null(min_budget[1], min_budget[0])}};

    double dr[2] = {0.0, 0.0};
    int dr_counts[2] = {0, 0};
    for (const auto& arm : arms) {
        if (arm.gap.delta_k <= epsilon_k) {
            const int f = arm.family == "cc" ? 1 : 0;
            dr[f] += arm.gap.delta_r;
            dr_counts[f] += 1;
        }
    }
    json dr_base = dr_counts[0] > 0 ? json(dr[0] / dr_counts[0]) : json(nullptr);
    json dr_cc = dr_counts[1] > 0 ? json(dr[1] / dr_counts[1]) : json(nullptr);
    h["h4"] = {{"delta_r_base", dr_base},
               {"count_base", dr_counts[0]},
               {"delta_r_cc", dr_cc},
               {"count_cc", dr_counts[1]},
               {"effect", subtract_or_null(dr_base, dr_cc)}};
    return h;
}

std::vector<std::pair<double, double>> family_points(const std::vector<ArmSummary>& arms,
                                                     const std::string& family) {
    std::vector<std::pair<double, double>> points;
    for (const auto& arm : arms) {
        if (arm.family == family) {
            points.emplace_back(arm.gap.delta_k, arm.gap.delta_r);
        }
    }
    return points;
}

std::string artifact_dir(const tasks::SequenceTask& task, std::uint64_t seed) {
    return task.name() + "/seed" + std::to_string(seed);
}

}  // namespace

// ---------------------------------------------------------------------------
// The experiment

bool ReportBundle::has_seed_records() const {
    if (!document.contains("tasks")) return false;
    for (const auto& task_entry : document.at("tasks")) {
        if (!task_entry.at("seeds").empty()) return true;
    }
    return false;
}

ReportBundle run_experiment(const ExperimentConfig& config) {
    config.validate();
    ManifestCollector files((fs::path(config.output_dir)));

    json tasks_json = json::array();
    for (const auto& task : config.task_list) {
        json task_entry;
        task_entry["task"] = task_to_json(task);
        json seeds_json = json::array();

        std::vector<ArmSummary> pooled_arms;
        std::vector<std::pair<double, double>> pooled_points_base;
        std::vector<std::pair<double, double>> pooled_points_cc;
        std::vector<json> seed_hypotheses;

        for (const std::uint64_t seed : config.seeds) {
            json seed_entry;
            seed_entry["seed"] = seed;
            try {
                const std::string dir = artifact_dir(task, seed);

                TeacherArtifacts base = train_teacher(config, task, "base", seed);
                TeacherArtifacts cc = train_teacher(config, task, "cc", seed);
                files.write(dir + "/teacher_base.json", model_document_to_json(base.doc));
                files.write(dir + "/teacher_base_log.csv", training::metrics_to_csv(base.log));
                files.write(dir + "/teacher_cc.json", model_document_to_json(cc.doc));
                files.write(dir + "/teacher_cc_log.csv", training::metrics_to_csv(cc.log));

                const profiles::ProbeConfig probe = probe_for(config, task, seed);
                const profiles::EvalRecord base_eval = evaluate_document(base.doc, probe);
                const profiles::EvalRecord cc_eval = evaluate_document(cc.doc, probe);

                seed_entry["teachers"] = {
                    {"base",
                     {{"model_id", base.doc.model_id},
                      {"path", dir + "/teacher_base.json"},
                      {"log_path", dir + "/teacher_base_log.csv"},
                      {"eval", eval_to_json(base_eval)}}},
                    {"cc",
                     {{"model_id", cc.doc.model_id},
                      {"path", dir + "/teacher_cc.json"},
                      {"log_path", dir + "/teacher_cc_log.csv"},
                      {"eval", eval_to_json(cc_eval)}}}};

                std::vector<ArmSummary> arms;
                json students_json = json::array();
                for (const int budget : config.budgets) {
                    distill::DistillConfig dcfg = config.distill_defaults;
                    dcfg.budget = budget;
                    const std::uint64_t sseed = student_seed_for(task, seed, budget);

                    const std::vector<
                        std::pair<const TeacherArtifacts*, const profiles::EvalRecord*>>
                        pairs{{&base, &base_eval}, {&cc, &cc_eval}};
                    for (const auto& [teacher, teacher_eval] : pairs) {
                        StudentArtifacts student = distill_student(teacher->doc, dcfg, sseed);
                        const std::string fname = "student_" + teacher->doc.family + "_b" +
                                                  std::to_string(budget) + ".json";
                        files.write(dir + "/" + fname, model_document_to_json(student.doc));

                        const profiles::EvalRecord student_eval =
                            evaluate_document(student.doc, probe);
                        const profiles::GapPair gap =
                            profiles::gaps(teacher_eval->capability, student_eval.capability,
                                           teacher_eval->stability, student_eval.stability);
                        const profiles::PropositionOutcome outcome = profiles::proposition_outcome(
                            gap.delta_k, gap.delta_r, student_eval.mean_burden,
                            teacher_eval->mean_burden, config.thresholds);

                        json arm_json;
                        arm_json["family"] = teacher->doc.family;
                        arm_json["budget"] = budget;
                        arm_json["model_id"] = student.doc.model_id;
                        arm_json["path"] = dir + "/" + fname;
                        arm_json["final_distill_loss"] = student.arm.final_distill_loss;
                        arm_json["discrepancy_mean"] = student.arm.discrepancy_mean;
                        arm_json["discrepancy_stderr"] = student.arm.discrepancy_stderr;
                        arm_json["eval"] = eval_to_json(student_eval);
                        arm_json["delta_k"] = gap.delta_k;
                        arm_json["delta_r"] = gap.delta_r;
                        arm_json["outcome"] = outcome.label();
                        arm_json["proposition_violated"] = outcome.proposition_violated();
                        students_json.push_back(std::move(arm_json));

                        arms.push_back(
                            {teacher->doc.family, budget, student_eval, gap});
                    }
                }
                seed_entry["students"] = std::move(students_json);

                const json coupling_base = coupling_to_json(family_points(arms, "base"));
                const json coupling_cc = coupling_to_json(family_points(arms, "cc"));
                seed_entry["coupling"] = {{"base", coupling_base}, {"cc", coupling_cc}};
                const json hyp = hypotheses_from_arms(arms, coupling_base, coupling_cc,
                                                      config.thresholds.epsilon_k);
                seed_entry["hypotheses"] = hyp;
                seed_entry["status"] = "ok";
                seed_entry["diagnostic"] = nullptr;

                seed_hypotheses.push_back(hyp);
                for (auto& arm : arms) pooled_arms.push_back(std::move(arm));
            } catch (const std::exception& e) {
                seed_entry["status"] = "failed";
                seed_entry["diagnostic"] = e.what();
            }
            seeds_json.push_back(std::move(seed_entry));
        }

        pooled_points_base = family_points(pooled_arms, "base");
        pooled_points_cc = family_points(pooled_arms, "cc");
        json pooled;
        if (!pooled_arms.empty()) {
            const json coupling_base = coupling_to_json(pooled_points_base);
            const json coupling_cc = coupling_to_json(pooled_points_cc);
            pooled["coupling"] = {{"base", coupling_base}, {"cc", coupling_cc}};
            pooled["hypotheses"] = hypotheses_from_arms(pooled_arms, coupling_base, coupling_cc,
                                                        config.thresholds.epsilon_k);
            pooled["ok_seeds"] = seed_hypotheses.size();
        } else {
            pooled = nullptr;
        }

        task_entry["seeds"] = std::move(seeds_json);
        task_entry["pooled"] = std::move(pooled);
        tasks_json.push_back(std::move(task_entry));
    }

    // overall: per-task pooled effects side by side plus their plain means
    json overall;
    json per_task = json::array();
    const char* effect_keys[5] = {"h1", "h2", "h2", "h3", "h4"};
    const char* effect_fields[5] = {"effect", "effect_x2", "effect_x4", "effect", "effect"};
    const char* effect_names[5] = {"h1_effect", "h2_effect_x2", "h2_effect_x4", "h3_effect",
                                   "h4_effect"};
    double effect_sums[5] = {0, 0, 0, 0, 0};
    int effect_counts[5] = {0, 0, 0, 0, 0};
    for (const auto& task_entry : tasks_json) {
        json row;
        row["task"] = task_entry.at("task").at("kind");
        if (task_entry.at("pooled").is_null()) {
            for (int k = 0; k < 5; ++k) row[effect_names[k]] = nullptr;
        } else {
            const json& hyp = task_entry.at("pooled").at("hypotheses");
            for (int k = 0; k < 5; ++k) {
                const json value = hyp.at(effect_keys[k]).at(effect_fields[k]);
                row[effect_names[k]] = value;
                if (!value.is_null()) {
                    effect_sums[k] += value.get<double>();
                    effect_counts[k] += 1;
                }
            }
        }
        per_task.push_back(std::move(row));
    }
    overall["per_task"] = std::move(per_task);
    json means;
    for (int k = 0; k < 5; ++k) {
        means[effect_names[k]] =
            effect_counts[k] > 0 ? json(effect_sums[k] / effect_counts[k]) : json(nullptr);
    }
    overall["mean_effects"] = std::move(means);

    ReportBundle bundle;
    bundle.document["format_version"] = 1;
    bundle.document["config"] = config.to_json();
    bundle.document["tasks"] = std::move(tasks_json);
    bundle.document["overall"] = std::move(overall);

    // summary and hypotheses CSVs are artifacts too; hash them before the
    // manifest is frozen into report.json
    files.write("summary.csv", summary_csv(bundle));
    files.write("hypotheses.csv", hypotheses_csv(bundle));
    bundle.document["manifest"] = files.entries();

    {
        const fs::path report_path = fs::path(config.output_dir) / "report.json";
        std::ofstream out(report_path, std::ios::binary);
        if (!out) {
            throw Error("cannot write report: " + report_path.string());
        }
        out << bundle.document.dump(2) << "\n";
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

std::string csv_number(const json& value) {
    if (value.is_null()) return "";
    if (value.is_number_integer()) return std::to_string(value.get<long long>());
    if (value.is_number_unsigned()) return std::to_string(value.get<unsigned long long>());
    return to_short_string(value.get<double>());
}

}  // namespace

std::string summary_csv(const ReportBundle& bundle) {
    std::string out =
        "task,seed,family,budget,delta_k,delta_r,outcome,"
        "burden_violation_rate,feas_violation_rate\n";
    for (const auto& task_entry : bundle.document.at("tasks")) {
        const std::string task_name = task_entry.at("task").at("kind").get<std::string>();
        for (const auto& seed_entry : task_entry.at("seeds")) {
            if (seed_entry.at("status") != "ok") continue;
            const std::string seed = csv_number(seed_entry.at("seed"));
            for (const auto& arm : seed_entry.at("students")) {
                const auto& stability = arm.at("eval").at("stability");
                out += task_name + "," + seed + "," + arm.at("family").get<std::string>() + "," +
                       csv_number(arm.at("budget")) + "," + csv_number(arm.at("delta_k")) + "," +
                       csv_number(arm.at("delta_r")) + "," + arm.at("outcome").get<std::string>() +
                       "," + csv_number(stability.at("burden_violation_rate")) + "," +
                       csv_number(stability.at("feasibility_violation_rate")) + "\n";
            }
        }
    }
    return out;
}

std::string hypotheses_csv(const ReportBundle& bundle) {
    std::string out =
        "task,seed,h1_slope_base,h1_slope_cc,h1_effect,"
        "h2_drop_x2_base,h2_drop_x2_cc,h2_effect_x2,"
        "h2_drop_x4_base,h2_drop_x4_cc,h2_effect_x4,"
        "h3_min_budget_base,h3_min_budget_cc,h3_effect,"
        "h4_delta_r_base,h4_delta_r_cc,h4_effect\n";
    const auto append_row = [&out](const std::string& task_name, const std::string& seed,
                                   const json& hyp) {
        const json& h1 = hyp.at("h1");
        const json& h2 = hyp.at("h2");
        const json& h3 = hyp.at("h3");
        const json& h4 = hyp.at("h4");
        out += task_name + "," + seed + "," + csv_number(h1.at("slope_base")) + "," +
               csv_number(h1.at("slope_cc")) + "," + csv_number(h1.at("effect")) + "," +
               csv_number(h2.at("drop_x2_base")) + "," + csv_number(h2.at("drop_x2_cc")) + "," +
               csv_number(h2.at("effect_x2")) + "," + csv_number(h2.at("drop_x4_base")) + "," +
               csv_number(h2.at("drop_x4_cc")) + "," + csv_number(h2.at("effect_x4")) + "," +
               csv_number(h3.at("min_budget_base")) + "," + csv_number(h3.at("min_budget_cc")) +
               "," + csv_number(h3.at("effect")) + "," + csv_number(h4.at("delta_r_base")) + "," +
               csv_number(h4.at("delta_r_cc")) + "," + csv_number(h4.at("effect")) + "\n";
    };
    for (const auto& task_entry : bundle.document.at("tasks")) {
        const std::string task_name = task_entry.at("task").at("kind").get<std::string>();
        for (const auto& seed_entry : task_entry.at("seeds")) {
            if (seed_entry.at("status") != "ok") continue;
            append_row(task_name, csv_number(seed_entry.at("seed")),
                       seed_entry.at("hypotheses"));
        }
        if (!task_entry.at("pooled").is_null()) {
            append_row(task_name, "pooled", task_entry.at("pooled").at("hypotheses"));
        }
    }
    return out;
}

void emit_report(const ReportBundle& bundle, const std::string& out_dir,
                 const std::string& format) {
    if (!bundle.has_seed_records()) {
        throw Error("emit_report: bundle has no seed records");
    }
    if (format != "json" && format != "csv" && format != "all") {
        throw ConfigError("emit_report: format must be json, csv or all");
    }
    fs::create_directories(out_dir);
    if (format == "json" || format == "all") {
        std::ofstream out(fs::path(out_dir) / "report.json", std::ios::binary);
        if (!out) throw Error("cannot write report.json under " + out_dir);
        out << bundle.document.dump(2) << "\n";
    }
    if (format == "csv" || format == "all") {
        std::ofstream summary(fs::path(out_dir) / "summary.csv", std::ios::binary);
        if (!summary) throw Error("cannot write summary.csv under " + out_dir);
        summary << summary_csv(bundle);
        std::ofstream hypotheses(fs::path(out_dir) / "hypotheses.csv", std::ios::binary);
        if (!hypotheses) throw Error("cannot write hypotheses.csv under " + out_dir);
        hypotheses << hypotheses_csv(bundle);
    }
}

}  // namespace burdenlab::harness
