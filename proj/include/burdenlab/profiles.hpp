#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "burdenlab/cell.hpp"
#include "burdenlab/common.hpp"
#include "burdenlab/dynamics.hpp"
#include "burdenlab/tasks.hpp"

namespace burdenlab::profiles {

struct CapabilityScore {
    double accuracy = 0.0;  // exact-match accuracy over scored positions
    int sample_size = 0;    // number of scored positions
    double stderr = 0.0;

    bool operator==(const CapabilityScore&) const = default;
};

// Seven-component robustness summary. Accuracy components live in [0, 1];
// divergence is clamped to [0, 1] only inside gap computations.
struct StabilityProfile {
    double acc_noise_005 = 0.0;
    double acc_noise_010 = 0.0;
    double acc_h2 = 0.0;
    double acc_h4 = 0.0;
    double burden_violation_rate = 0.0;
    double feasibility_violation_rate = 0.0;
    double divergence = 0.0;  // mean final-state L2 under sigma=0.05, / sqrt(n)

    std::array<double, 7> components() const {
        return {acc_noise_005, acc_noise_010,        acc_h2,    acc_h4,
                burden_violation_rate, feasibility_violation_rate, divergence};
    }
    bool operator==(const StabilityProfile&) const = default;
};

struct ProbeConfig {
    int eval_samples = 2000;
    double noise_sigma_low = 0.05;
    double noise_sigma_high = 0.10;
    int horizon_low = 2;
    int horizon_high = 4;
    std::uint64_t seed = 0;  // root of all evaluation streams

    void validate() const;
};

// A deployable model: parameters plus the enforcement mode it runs under.
// Students deploy soft (no projection); teachers deploy as configured.
struct DeployedModel {
    CellParams params;
    dynamics::Enforcement enforcement = dynamics::Enforcement::Soft;
    std::string id;  // keys the model's evaluation streams
};

// Exact-match accuracy at nominal horizon on a held-out stream keyed by
// (probe seed, model id).
CapabilityScore capability(const DeployedModel& model,
                           const dynamics::ConstraintConfig& yardstick,
                           const tasks::SequenceTask& task, const ProbeConfig& probe);

// All seven stability components. Violation rates are always measured
// against `yardstick` (the teacher family's constraint config) regardless of
// how the model was trained.
StabilityProfile stability_profile(const DeployedModel& model,
                                   const dynamics::ConstraintConfig& yardstick,
                                   const tasks::SequenceTask& task, const ProbeConfig& probe);

// Capability, stability and mean transition burden in one evaluation pass
// bundle; mean_burden feeds the hidden-burden disjunct of the outcome
// classifier.
struct EvalRecord {
    CapabilityScore capability;
    StabilityProfile stability;
    double mean_burden = 0.0;
};

EvalRecord evaluate_model(const DeployedModel& model,
                          const dynamics::ConstraintConfig& yardstick,
                          const tasks::SequenceTask& task, const ProbeConfig& probe);

struct GapPair {
    double delta_k = 0.0;  // max{0, K_T - K_S}
    double delta_r = 0.0;  // mean absolute componentwise distance, in [0, 1]
};

GapPair gaps(const CapabilityScore& teacher_k, const CapabilityScore& student_k,
             const StabilityProfile& teacher_r, const StabilityProfile& student_r);

struct CouplingEstimate {
    std::vector<std::pair<double, double>> points;  // (delta_k, delta_r)
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // residual sum of squares
};

// Ordinary least squares delta_r = slope * delta_k + intercept. Throws on
// fewer than 2 points or a degenerate regressor (all delta_k equal).
CouplingEstimate coupling_fit(const std::vector<std::pair<double, double>>& points);

struct OutcomeThresholds {
    double epsilon_k = 0.05;
    double epsilon_r = 0.10;
    double rho_b = 1.5;
};

enum class Outcome { CapabilityGap, StabilityGap, HiddenBurden };

std::string to_string(Outcome o);

// The satisfied disjuncts of the mechanism claim; empty means the claim is
// violated for this arm.
struct PropositionOutcome {
    std::vector<Outcome> satisfied;
    bool proposition_violated() const { return satisfied.empty(); }
    std::string label() const;  // "capability_gap+stability_gap" or "proposition_violated"
};

PropositionOutcome proposition_outcome(double delta_k, double delta_r,
                                       double student_burden_mean, double teacher_burden_mean,
                                       const OutcomeThresholds& thresholds);

std::string eval_record_to_json(const EvalRecord& record);

}  // namespace burdenlab::profiles
