#include "burdenlab/profiles.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace burdenlab::profiles {

using dynamics::ConstraintConfig;

void ProbeConfig::validate() const {
    if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
    if (noise_sigma_low < 0.0 || noise_sigma_high < 0.0) {
        throw ConfigError("noise sigmas must be >= 0");
    }
    if (horizon_low < 1 || horizon_high < 1) {
        throw ConfigError("horizon factors must be >= 1");
    }
}

namespace {

// Accuracy of argmax predictions over all scored positions of `count` fresh
// draws. Optional per-sequence embedding noise of scale sigma.
CapabilityScore accuracy_probe(const CellParams& params, const ConstraintConfig& run_cfg,
                               const tasks::SequenceTask& task, int count, double sigma,
                               RngStream& stream) {
    const tasks::Batch batch = tasks::generate(task, count, stream);
    long scored = 0;
    long correct = 0;
    for (int s = 0; s < batch.size(); ++s) {
        const size_t idx = static_cast<size_t>(s);
        const auto& tokens = batch.sequences[idx];
        Matrix noise;
        const Matrix* noise_ptr = nullptr;
        if (sigma > 0.0) {
            noise = tasks::embedding_noise(params.dims.embedding,
                                           static_cast<int>(tokens.size()), sigma, stream);
            noise_ptr = &noise;
        }
        const auto rec = dynamics::rollout(params, run_cfg, tokens, noise_ptr);
        const auto& positions = batch.target_positions[idx];
        const auto& labels = batch.target_labels[idx];
        for (size_t k = 0; k < positions.size(); ++k) {
            const Vector& logits = rec.logits[static_cast<size_t>(positions[k])];
            Eigen::Index argmax = 0;
            logits.maxCoeff(&argmax);
            ++scored;
            if (static_cast<int>(argmax) == labels[k]) ++correct;
        }
    }
    CapabilityScore score;
    score.sample_size = static_cast<int>(scored);
    score.accuracy = static_cast<double>(correct) / static_cast<double>(scored);
    score.stderr =
        std::sqrt(score.accuracy * (1.0 - score.accuracy) / static_cast<double>(scored));
    return score;
}

ConstraintConfig deployed_config(const DeployedModel& model, const ConstraintConfig& yardstick) {
    ConstraintConfig cfg = yardstick;
    cfg.enforcement = model.enforcement;
    return cfg;
}

RngStream probe_stream(const ProbeConfig& probe, const std::string& model_id,
                       const std::string& probe_id) {
    return RngStream(probe.seed, "eval/" + model_id + "/" + probe_id);
}

}  // namespace

CapabilityScore capability(const DeployedModel& model, const ConstraintConfig& yardstick,
                           const tasks::SequenceTask& task, const ProbeConfig& probe) {
    probe.validate();
    const ConstraintConfig cfg = deployed_config(model, yardstick);
    RngStream stream = probe_stream(probe, model.id, "capability");
    return accuracy_probe(model.params, cfg, task, probe.eval_samples, 0.0, stream);
}

StabilityProfile stability_profile(const DeployedModel& model, const ConstraintConfig& yardstick,
                                   const tasks::SequenceTask& task, const ProbeConfig& probe) {
    probe.validate();
    const ConstraintConfig cfg = deployed_config(model, yardstick);
    StabilityProfile out;

    {
        RngStream stream = probe_stream(probe, model.id, "noise_low");
        out.acc_noise_005 = accuracy_probe(model.params, cfg, task, probe.eval_samples,
                                           probe.noise_sigma_low, stream)
                                .accuracy;
    }
    {
        RngStream stream = probe_stream(probe, model.id, "noise_high");
        out.acc_noise_010 = accuracy_probe(model.params, cfg, task, probe.eval_samples,
                                           probe.noise_sigma_high, stream)
                                .accuracy;
    }
    {
        RngStream stream = probe_stream(probe, model.id, "horizon_low");
        out.acc_h2 = accuracy_probe(model.params, cfg,
                                    tasks::extend_horizon(task, probe.horizon_low),
                                    probe.eval_samples, 0.0, stream)
                         .accuracy;
    }
    {
        RngStream stream = probe_stream(probe, model.id, "horizon_high");
        out.acc_h4 = accuracy_probe(model.params, cfg,
                                    tasks::extend_horizon(task, probe.horizon_high),
                                    probe.eval_samples, 0.0, stream)
                         .accuracy;
    }
    {
        RngStream stream = probe_stream(probe, model.id, "violations");
        const tasks::Batch batch = tasks::generate(task, probe.eval_samples, stream);
        long steps = 0;
        long burden_violations = 0;
        long feas_violations = 0;
        for (const auto& tokens : batch.sequences) {
            const auto rec = dynamics::rollout(model.params, cfg, tokens);
            steps += rec.steps();
            for (int t = 0; t < rec.steps(); ++t) {
                burden_violations += rec.burden_violations[static_cast<size_t>(t)];
                feas_violations += rec.feasibility_violations[static_cast<size_t>(t)];
            }
        }
        out.burden_violation_rate =
            static_cast<double>(burden_violations) / static_cast<double>(steps);
        out.feasibility_violation_rate =
            static_cast<double>(feas_violations) / static_cast<double>(steps);
    }
    {
        RngStream stream = probe_stream(probe, model.id, "divergence");
        const tasks::Batch batch = tasks::generate(task, probe.eval_samples, stream);
        const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(model.params.dims.hidden));
        double total = 0.0;
        for (const auto& tokens : batch.sequences) {
            const Matrix noise =
                tasks::embedding_noise(model.params.dims.embedding,
                                       static_cast<int>(tokens.size()),
                                       probe.noise_sigma_low, stream);
            const auto clean = dynamics::rollout(model.params, cfg, tokens);
            const auto perturbed = dynamics::rollout(model.params, cfg, tokens, &noise);
            total += (clean.states.back() - perturbed.states.back()).norm() * inv_sqrt_n;
        }
        out.divergence = total / static_cast<double>(batch.size());
    }
    return out;
}

EvalRecord evaluate_model(const DeployedModel& model, const ConstraintConfig& yardstick,
                          const tasks::SequenceTask& task, const ProbeConfig& probe) {
    EvalRecord record;
    record.capability = capability(model, yardstick, task, probe);
    record.stability = stability_profile(model, yardstick, task, probe);
    {
        const ConstraintConfig cfg = deployed_config(model, yardstick);
        RngStream stream = probe_stream(probe, model.id, "burden");
        const tasks::Batch batch = tasks::generate(task, probe.eval_samples, stream);
        double total = 0.0;
        long steps = 0;
        for (const auto& tokens : batch.sequences) {
            const auto rec = dynamics::rollout(model.params, cfg, tokens);
            for (double b : rec.burdens) total += b;
            steps += rec.steps();
        }
        record.mean_burden = total / static_cast<double>(steps);
    }
    return record;
}

GapPair gaps(const CapabilityScore& teacher_k, const CapabilityScore& student_k,
             const StabilityProfile& teacher_r, const StabilityProfile& student_r) {
    GapPair out;
    out.delta_k = std::max(0.0, teacher_k.accuracy - student_k.accuracy);
    const auto tc = teacher_r.components();
    const auto sc = student_r.components();
    double total = 0.0;
    for (size_t i = 0; i < tc.size(); ++i) {
        double a = tc[i];
        double b = sc[i];
        if (i == tc.size() - 1) {  // divergence is unbounded; clamp into [0, 1]
            a = std::min(1.0, a);
            b = std::min(1.0, b);
        }
        total += std::abs(a - b);
    }
    out.delta_r = total / static_cast<double>(tc.size());
    return out;
}

CouplingEstimate coupling_fit(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) {
        throw Error("coupling_fit: need at least 2 points");
    }
    bool all_equal = true;
    for (const auto& [x, y] : points) {
        all_equal = all_equal && x == points.front().first;
    }
    if (all_equal) {
        throw Error("coupling_fit: degenerate regressor (all delta_k equal)");
    }
    const double n = static_cast<double>(points.size());
    double mean_x = 0.0;
    double mean_y = 0.0;
    for (const auto& [x, y] : points) {
        mean_x += x;
        mean_y += y;
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if (sxx == 0.0) {
        throw Error("coupling_fit: degenerate regressor (all delta_k equal)");
    }
    CouplingEstimate est;
    est.points = points;
    est.slope = sxy / sxx;
    est.intercept = mean_y - est.slope * mean_x;
    for (const auto& [x, y] : points) {
        const double r = y - (est.slope * x + est.intercept);
        est.residual += r * r;
    }
    return est;
}

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::CapabilityGap: return "capability_gap";
        case Outcome::StabilityGap: return "stability_gap";
        case Outcome::HiddenBurden: return "hidden_burden";
    }
    throw Error("unreachable outcome");
}

std::string PropositionOutcome::label() const {
    if (satisfied.empty()) {
        return "proposition_violated";
    }
    std::string out;
    for (size_t i = 0; i < satisfied.size(); ++i) {
        if (i > 0) out += "+";
        out += to_string(satisfied[i]);
    }
    return out;
}

PropositionOutcome proposition_outcome(double delta_k, double delta_r,
                                       double student_burden_mean, double teacher_burden_mean,
                                       const OutcomeThresholds& thresholds) {
    PropositionOutcome out;
    if (delta_k > thresholds.epsilon_k) {
        out.satisfied.push_back(Outcome::CapabilityGap);
    }
    if (delta_r > thresholds.epsilon_r) {
        out.satisfied.push_back(Outcome::StabilityGap);
    }
    if (student_burden_mean > thresholds.rho_b * teacher_burden_mean) {
        out.satisfied.push_back(Outcome::HiddenBurden);
    }
    return out;
}

std::string eval_record_to_json(const EvalRecord& record) {
    nlohmann::json doc;
    doc["capability"] = {{"accuracy", record.capability.accuracy},
                         {"sample_size", record.capability.sample_size},
                         {"stderr", record.capability.stderr}};
    doc["stability"] = {{"acc_noise_005", record.stability.acc_noise_005},
                        {"acc_noise_010", record.stability.acc_noise_010},
                        {"acc_h2", record.stability.acc_h2},
                        {"acc_h4", record.stability.acc_h4},
                        {"burden_violation_rate", record.stability.burden_violation_rate},
                        {"feasibility_violation_rate", record.stability.feasibility_violation_rate},
                        {"divergence", record.stability.divergence}};
    doc["mean_burden"] = record.mean_burden;
    return doc.dump(2);
}

}  // namespace burdenlab::profiles
