#include "burdenlab/training.hpp"

#include <cmath>
#include <sstream>

namespace burdenlab::training {

using dynamics::ConstraintConfig;
using dynamics::Enforcement;

void ObjectiveWeights::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
        throw ConfigError("objective weights must be nonnegative");
    }
}

void OptimConfig::validate() const {
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batches_per_epoch < 1) throw ConfigError("batches_per_epoch must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
    if (sigma_stab < 0.0) throw ConfigError("sigma_stab must be >= 0");
}

double burden_hinge(std::span<const double> burdens, double threshold) {
    double total = 0.0;
    for (double b : burdens) {
        total += std::max(0.0, b - threshold);
    }
    return total;
}

double stability_loss(const CellParams& params, const ConstraintConfig& cfg,
                      const tasks::Batch& batch, double sigma_stab, RngStream& noise_stream) {
    if (sigma_stab < 0.0) throw Error("stability_loss: sigma_stab must be >= 0");
    if (batch.size() == 0) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(params.dims.hidden);
    double total = 0.0;
    for (const auto& tokens : batch.sequences) {
        const Matrix noise = tasks::embedding_noise(
            params.dims.embedding, static_cast<int>(tokens.size()), sigma_stab, noise_stream);
        const auto clean = dynamics::rollout(params, cfg, tokens);
        const auto perturbed = dynamics::rollout(params, cfg, tokens, &noise);
        total += inv_n * (clean.states.back() - perturbed.states.back()).squaredNorm();
    }
    return total / static_cast<double>(batch.size());
}

namespace {

// Left-fold sum of graph scalars; invalid when the list is empty.
ad::Val sum_of(ad::Graph& graph, const std::vector<ad::Val>& terms) {
    if (terms.empty()) return ad::Val{};
    ad::Val acc = terms.front();
    for (size_t i = 1; i < terms.size(); ++i) {
        acc = graph.add(acc, terms[i]);
    }
    return acc;
}

}  // namespace

BatchLossNodes build_batch_loss(ad::Graph& graph, const CellParams& params,
                                const ConstraintConfig& cfg, const ObjectiveWeights& weights,
                                const tasks::Batch& batch, double sigma_stab,
                                RngStream* noise_stream) {
    weights.validate();
    cfg.validate();
    if (batch.size() == 0) {
        throw Error("build_batch_loss: empty batch");
    }
    const bool want_hinge = weights.lambda1 > 0.0;
    const bool want_feas = weights.lambda2 > 0.0;
    const bool want_stab = weights.lambda3 > 0.0;
    if (want_stab && noise_stream == nullptr) {
        throw Error("build_batch_loss: stability term requires a noise stream");
    }
    const bool with_constraints = want_hinge || want_feas || cfg.enforcement == Enforcement::Hard;

    BatchLossNodes out;
    out.leaves = dynamics::make_cell_leaves(graph, params);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const double inv_n = 1.0 / static_cast<double>(params.dims.hidden);

    std::vector<ad::Val> task_terms;
    std::vector<ad::Val> hinge_terms;
    std::vector<ad::Val> feas_terms;
    std::vector<ad::Val> stab_terms;

    for (int s = 0; s < batch.size(); ++s) {
        const auto& tokens = batch.sequences[static_cast<size_t>(s)];
        const auto& positions = batch.target_positions[static_cast<size_t>(s)];
        const auto& labels = batch.target_labels[static_cast<size_t>(s)];
        const auto traj = dynamics::unroll(graph, out.leaves, params.dims, cfg, tokens,
                                           with_constraints);

        std::vector<ad::Val> ce_terms;
        ce_terms.reserve(positions.size());
        for (size_t k = 0; k < positions.size(); ++k) {
            ce_terms.push_back(graph.softmax_cross_entropy(
                traj.logits[static_cast<size_t>(positions[k])], labels[k]));
        }
        if (ce_terms.empty()) {
            throw Error("build_batch_loss: sequence has no target positions");
        }
        task_terms.push_back(
            graph.scale(sum_of(graph, ce_terms), 1.0 / static_cast<double>(ce_terms.size())));

        if (want_hinge) {
            std::vector<ad::Val> hs;
            hs.reserve(traj.burdens.size());
            for (ad::Val b : traj.burdens) {
                hs.push_back(graph.hinge(b - cfg.burden_threshold));
            }
            hinge_terms.push_back(sum_of(graph, hs));
        }
        if (want_feas) {
            std::vector<ad::Val> fs;
            fs.reserve(tokens.size());
            ad::Val r0_leaf = graph.leaf(dynamics::feasible_radius(0.0, cfg));
            for (size_t t = 0; t < tokens.size(); ++t) {
                const ad::Val radius = t == 0 ? r0_leaf : traj.radii[t - 1];
                fs.push_back(graph.overflow_penalty(traj.states[t + 1], radius));
            }
            feas_terms.push_back(sum_of(graph, fs));
        }
        if (want_stab) {
            const Matrix noise = tasks::embedding_noise(
                params.dims.embedding, static_cast<int>(tokens.size()), sigma_stab,
                *noise_stream);
            const auto perturbed = dynamics::unroll(graph, out.leaves, params.dims, cfg, tokens,
                                                    cfg.enforcement == Enforcement::Hard, &noise);
            stab_terms.push_back(graph.scale(
                graph.squared_norm(traj.states.back() - perturbed.states.back()), inv_n));
        }
    }

    out.task = graph.scale(sum_of(graph, task_terms), inv_batch);
    out.total = out.task;
    if (want_hinge) {
        out.hinge = graph.scale(sum_of(graph, hinge_terms), inv_batch);
        out.total = out.total + graph.scale(out.hinge, weights.lambda1);
    }
    if (want_feas) {
        out.feasibility = graph.scale(sum_of(graph, feas_terms), inv_batch);
        out.total = out.total + graph.scale(out.feasibility, weights.lambda2);
    }
    if (want_stab) {
        out.stability = graph.scale(sum_of(graph, stab_terms), inv_batch);
        out.total = out.total + graph.scale(out.stability, weights.lambda3);
    }
    return out;
}

LossBreakdown total_loss(const CellParams& params, const ConstraintConfig& cfg,
                         const ObjectiveWeights& weights, const tasks::Batch& batch,
                         double sigma_stab, RngStream& noise_stream) {
    ad::Graph graph;
    const auto nodes = build_batch_loss(graph, params, cfg, weights, batch, sigma_stab,
                                        &noise_stream);
    LossBreakdown out;
    out.total = graph.forward(nodes.total);
    out.task = graph.scalar_value(nodes.task);
    out.hinge = nodes.hinge.valid() ? graph.scalar_value(nodes.hinge) : 0.0;
    out.feasibility = nodes.feasibility.valid() ? graph.scalar_value(nodes.feasibility) : 0.0;
    out.stability = nodes.stability.valid() ? graph.scalar_value(nodes.stability) : 0.0;
    return out;
}

BatchConstraintStats observe_constraints(const CellParams& params, const ConstraintConfig& cfg,
                                         const tasks::Batch& batch) {
    BatchConstraintStats stats;
    if (batch.size() == 0) return stats;
    long steps = 0;
    long burden_violations = 0;
    long feas_violations = 0;
    double burden_total = 0.0;
    for (const auto& tokens : batch.sequences) {
        const auto rec = dynamics::rollout(params, cfg, tokens);
        stats.hinge += burden_hinge(rec.burdens, cfg.burden_threshold);
        double feas = 0.0;
        double radius = dynamics::feasible_radius(0.0, cfg);
        for (int t = 0; t < rec.steps(); ++t) {
            feas += dynamics::feasibility_penalty(rec.states[static_cast<size_t>(t) + 1], radius);
            radius = rec.radii[static_cast<size_t>(t)];
            burden_violations += rec.burden_violations[static_cast<size_t>(t)];
            feas_violations += rec.feasibility_violations[static_cast<size_t>(t)];
            burden_total += rec.burdens[static_cast<size_t>(t)];
        }
        stats.feasibility += feas;
        steps += rec.steps();
    }
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    stats.hinge *= inv_batch;
    stats.feasibility *= inv_batch;
    stats.burden_violation_rate = static_cast<double>(burden_violations) / static_cast<double>(steps);
    stats.feasibility_violation_rate =
        static_cast<double>(feas_violations) / static_cast<double>(steps);
    stats.mean_burden = burden_total / static_cast<double>(steps);
    return stats;
}

namespace {

std::string describe_nonfinite(const CellParams& params, const ConstraintConfig& cfg,
                               const tasks::Batch& batch) {
    if (!params.all_finite()) {
        return "parameters";
    }
    try {
        for (const auto& tokens : batch.sequences) {
            const auto rec = dynamics::rollout(params, cfg, tokens);
            for (const auto& h : rec.states) {
                if (!h.allFinite()) return "task (states)";
            }
            for (double b : rec.burdens) {
                if (!std::isfinite(b)) return "hinge (burdens)";
            }
            for (double r : rec.radii) {
                if (!std::isfinite(r)) return "feasibility (radii)";
            }
        }
    } catch (const Error&) {
        return "task (rollout failed)";
    }
    return "stability";
}

}  // namespace

TrainResult train(const CellParams& initial, const ConstraintConfig& cfg,
                  const ObjectiveWeights& weights, const tasks::SequenceTask& task,
                  const OptimConfig& optim) {
    initial.check_consistent();
    cfg.validate();
    weights.validate();
    task.validate();
    optim.validate();

    TrainResult result;
    result.params = initial;
    RngStream data_stream(optim.seed, "train-data");
    RngStream noise_stream(optim.seed, "train-stab-noise");

    for (int epoch = 0; epoch < optim.epochs; ++epoch) {
        EpochMetrics metrics;
        metrics.epoch = epoch;
        for (int bi = 0; bi < optim.batches_per_epoch; ++bi) {
            const tasks::Batch batch = tasks::generate(task, optim.batch_size, data_stream);

            ad::Graph graph;
            const auto nodes = build_batch_loss(graph, result.params, cfg, weights, batch,
                                                optim.sigma_stab, &noise_stream);
            try {
                graph.forward(nodes.total);
            } catch (const NumericsError& e) {
                throw NumericsError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    " batch " + std::to_string(bi) + "; offending component: " +
                                    describe_nonfinite(result.params, cfg, batch) + " (" +
                                    e.what() + ")");
            }
            graph.backward(nodes.total);

            metrics.task += graph.scalar_value(nodes.task);
            if (nodes.stability.valid()) {
                metrics.stability += graph.scalar_value(nodes.stability);
            }
            const auto observed = observe_constraints(result.params, cfg, batch);
            metrics.hinge += observed.hinge;
            metrics.feasibility += observed.feasibility;
            metrics.burden_violation_rate += observed.burden_violation_rate;
            metrics.feasibility_violation_rate += observed.feasibility_violation_rate;

            // global-norm clipping, then plain SGD
            const auto named = nodes.leaves.named();
            double squared = 0.0;
            for (const auto& [name, leaf] : named) {
                squared += graph.adjoint(leaf).squaredNorm();
            }
            const double norm = std::sqrt(squared);
            const double scale = norm > optim.clip_norm ? optim.clip_norm / norm : 1.0;
            auto entries = result.params.entries();
            for (size_t k = 0; k < named.size(); ++k) {
                *entries[k].second -= optim.learning_rate * scale * graph.adjoint(named[k].second);
            }
        }
        const double inv = 1.0 / static_cast<double>(optim.batches_per_epoch);
        metrics.task *= inv;
        metrics.hinge *= inv;
        metrics.feasibility *= inv;
        metrics.stability *= inv;
        metrics.burden_violation_rate *= inv;
        metrics.feasibility_violation_rate *= inv;
        result.log.push_back(metrics);
    }
    return result;
}

std::string metrics_to_csv(const std::vector<EpochMetrics>& log) {
    std::ostringstream out;
    out << "epoch,task,hinge,feas,stab,burden_violation_rate,feas_violation_rate\n";
    for (const EpochMetrics& m : log) {
        out << m.epoch << ',' << to_short_string(m.task) << ',' << to_short_string(m.hinge) << ','
            << to_short_string(m.feasibility) << ',' << to_short_string(m.stability) << ','
            << to_short_string(m.burden_violation_rate) << ','
            << to_short_string(m.feasibility_violation_rate) << '\n';
    }
    return out.str();
}

}  // namespace burdenlab::training
