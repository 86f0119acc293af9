#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "burdenlab/cell.hpp"
#include "burdenlab/common.hpp"
#include "burdenlab/dynamics.hpp"
#include "burdenlab/graph.hpp"
#include "burdenlab/rng.hpp"
#include "burdenlab/tasks.hpp"

namespace burdenlab::training {

// lambda1 scales the burden hinge, lambda2 the feasibility penalty, lambda3
// the stability loss. All zero reduces the objective to the task loss, and
// the trainer then never constructs a constraint node at all.
struct ObjectiveWeights {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double lambda3 = 0.0;

    bool unconstrained() const { return lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0; }
    void validate() const;
};

struct OptimConfig {
    double learning_rate = 0.05;
    int epochs = 1;
    int batches_per_epoch = 10;
    int batch_size = 32;
    double clip_norm = 5.0;
    std::uint64_t seed = 0;
    double sigma_stab = 0.01;

    void validate() const;
};

// Raw (unweighted) component values; total carries the lambda weighting.
struct LossBreakdown {
    double total = 0.0;
    double task = 0.0;
    double hinge = 0.0;
    double feasibility = 0.0;
    double stability = 0.0;
};

struct EpochMetrics {
    int epoch = 0;
    double task = 0.0;
    double hinge = 0.0;
    double feasibility = 0.0;
    double stability = 0.0;
    double burden_violation_rate = 0.0;
    double feasibility_violation_rate = 0.0;
};

// sum_t max{0, b_t - B}
double burden_hinge(std::span<const double> burdens, double threshold);

// Mean over the batch of (1/n)||h_T(clean) - h_T(perturbed)||^2, with one
// Gaussian embedding-noise sample per sequence drawn from `noise_stream`.
double stability_loss(const CellParams& params, const dynamics::ConstraintConfig& cfg,
                      const tasks::Batch& batch, double sigma_stab, RngStream& noise_stream);

// Differentiable batch objective. Component Vals are invalid when the
// corresponding weight is zero (the subgraph is never built); hard
// enforcement forces the constraint machinery on since projection shapes the
// trajectory itself.
struct BatchLossNodes {
    dynamics::CellLeaves leaves;
    ad::Val total;
    ad::Val task;
    ad::Val hinge;
    ad::Val feasibility;
    ad::Val stability;
};

BatchLossNodes build_batch_loss(ad::Graph& graph, const CellParams& params,
                                const dynamics::ConstraintConfig& cfg,
                                const ObjectiveWeights& weights, const tasks::Batch& batch,
                                double sigma_stab, RngStream* noise_stream);

LossBreakdown total_loss(const CellParams& params, const dynamics::ConstraintConfig& cfg,
                         const ObjectiveWeights& weights, const tasks::Batch& batch,
                         double sigma_stab, RngStream& noise_stream);

// Constraint quantities of a batch measured by plain rollouts: per-sequence
// sums averaged over the batch, violation rates pooled over steps.
struct BatchConstraintStats {
    double hinge = 0.0;
    double feasibility = 0.0;
    double burden_violation_rate = 0.0;
    double feasibility_violation_rate = 0.0;
    double mean_burden = 0.0;
};

BatchConstraintStats observe_constraints(const CellParams& params,
                                         const dynamics::ConstraintConfig& cfg,
                                         const tasks::Batch& batch);

struct TrainResult {
    CellParams params;
    std::vector<EpochMetrics> log;
};

// Minibatch SGD with global-norm gradient clipping. Fresh batches are drawn
// per epoch from a stream derived from optim.seed; stability noise lives on
// its own stream so constrained and unconstrained runs consume identical
// data. Deterministic given the seed.
TrainResult train(const CellParams& initial, const dynamics::ConstraintConfig& cfg,
                  const ObjectiveWeights& weights, const tasks::SequenceTask& task,
                  const OptimConfig& optim);

// CSV with header: epoch,task,hinge,feas,stab,burden_violation_rate,feas_violation_rate
std::string metrics_to_csv(const std::vector<EpochMetrics>& log);

}  // namespace burdenlab::training
