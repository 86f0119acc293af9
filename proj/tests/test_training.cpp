#include <doctest.h>

#include <cmath>

#include "burdenlab/training.hpp"

using namespace burdenlab;
using dynamics::ConstraintConfig;
using dynamics::Enforcement;
using training::ObjectiveWeights;
using training::OptimConfig;

namespace {

tasks::SequenceTask small_modsum() {
    tasks::SequenceTask task;
    task.kind = tasks::TaskKind::ModSum;
    task.vocab = 4;
    task.length = 3;
    task.modulus = 4;
    return task;
}

tasks::SequenceTask small_parity(int length = 6) {
    tasks::SequenceTask task;
    task.kind = tasks::TaskKind::Parity;
    task.vocab = 4;
    task.length = length;
    return task;
}

// Constraint constants sized so that a 2-unit state (norm <= sqrt(2)) can
// actually hit both the burden hinge and the feasibility boundary.
ConstraintConfig tight_constraints() {
    ConstraintConfig cfg;
    cfg.burden_threshold = 0.15;
    cfg.r0 = 0.8;
    cfg.r_min = 0.2;
    cfg.kappa = 0.8;
    return cfg;
}

}  // namespace

TEST_CASE("burden hinge sums only the excess") {
    const std::vector<double> under{0.1, 0.2};
    CHECK(training::burden_hinge(under, 0.5) == 0.0);
    const std::vector<double> mixed{0.6, 0.4};
    CHECK(training::burden_hinge(mixed, 0.5) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(training::burden_hinge({}, 0.5) == 0.0);
}

TEST_CASE("stability loss") {
    const ConstraintConfig cfg{};
    RngStream gen(5, "batch");
    const auto batch = tasks::generate(small_modsum(), 4, gen);

    SUBCASE("zero sigma gives zero loss") {
        RngStream init(1, "init");
        const CellParams p = make_random_cell({3, 2, 4}, init);
        RngStream noise(2, "noise");
        CHECK(training::stability_loss(p, cfg, batch, 0.0, noise) == 0.0);
    }
    SUBCASE("zero parameters ignore the perturbation") {
        const CellParams p = make_zero_cell({3, 2, 4});
        RngStream noise(2, "noise");
        CHECK(training::stability_loss(p, cfg, batch, 0.5, noise) == 0.0);
    }
    SUBCASE("always nonnegative") {
        RngStream init(7, "init");
        const CellParams p = make_random_cell({3, 2, 4}, init);
        RngStream noise(3, "noise");
        CHECK(training::stability_loss(p, cfg, batch, 0.05, noise) >= 0.0);
    }
}

TEST_CASE("total loss reduces to the task loss at zero weights") {
    RngStream init(11, "init");
    const CellParams p = make_random_cell({4, 3, 4}, init);
    RngStream gen(13, "batch");
    const auto batch = tasks::generate(small_modsum(), 6, gen);

    RngStream noise(17, "noise");
    const auto zero = training::total_loss(p, ConstraintConfig{}, {0.0, 0.0, 0.0}, batch, 0.01,
                                           noise);
    CHECK(zero.total == zero.task);
    CHECK(zero.hinge == 0.0);
    CHECK(zero.feasibility == 0.0);
    CHECK(zero.stability == 0.0);
}

TEST_CASE("inactive constraints leave only task and stability terms") {
    // parameters in [-0.2, 0.2] keep transitions tiny: burdens stay under the
    // default threshold and states deep inside the default radius
    RngStream init(19, "init");
    const CellParams p = make_random_cell({4, 3, 4}, init);
    RngStream gen(23, "batch");
    const auto batch = tasks::generate(small_modsum(), 6, gen);

    const ObjectiveWeights weights{1.0, 1.0, 0.5};
    RngStream noise(29, "noise");
    const auto loss = training::total_loss(p, ConstraintConfig{}, weights, batch, 0.01, noise);
    CHECK(loss.hinge == 0.0);
    CHECK(loss.feasibility == 0.0);
    CHECK(loss.total == loss.task + weights.lambda3 * loss.stability);
}

TEST_CASE("component breakdown sums to the total and matches independent routes") {
    RngStream init(31, "init");
    CellParams p = make_random_cell({2, 3, 4}, init);
    for (auto& [name, m] : p.entries()) *m *= 6.0;  // push into the active regime
    const ConstraintConfig cfg = tight_constraints();
    const ObjectiveWeights weights{0.7, 1.3, 0.4};
    RngStream gen(37, "batch");
    const auto batch = tasks::generate(small_modsum(), 5, gen);

    RngStream noise_a(41, "noise");
    const auto loss = training::total_loss(p, cfg, weights, batch, 0.05, noise_a);

    CHECK(loss.total == doctest::Approx(loss.task + weights.lambda1 * loss.hinge +
                                        weights.lambda2 * loss.feasibility +
                                        weights.lambda3 * loss.stability)
                            .epsilon(1e-12));
    CHECK(loss.hinge > 0.0);
    CHECK(loss.feasibility > 0.0);

    // each component recomputed through the plain (non-graph) route
    double task_sum = 0.0;
    double hinge_sum = 0.0;
    double feas_sum = 0.0;
    for (int s = 0; s < batch.size(); ++s) {
        const size_t idx = static_cast<size_t>(s);
        const auto rec = dynamics::rollout(p, cfg, batch.sequences[idx]);
        const auto& positions = batch.target_positions[idx];
        double ce = 0.0;
        for (size_t k = 0; k < positions.size(); ++k) {
            const Vector& logits = rec.logits[static_cast<size_t>(positions[k])];
            const double m = logits.maxCoeff();
            const double lse = m + std::log((logits.array() - m).exp().sum());
            ce += lse - logits(batch.target_labels[idx][k]);
        }
        task_sum += ce / static_cast<double>(positions.size());
        hinge_sum += training::burden_hinge(rec.burdens, cfg.burden_threshold);
        double radius = dynamics::feasible_radius(0.0, cfg);
        for (int t = 0; t < rec.steps(); ++t) {
            feas_sum +=
                dynamics::feasibility_penalty(rec.states[static_cast<size_t>(t) + 1], radius);
            radius = rec.radii[static_cast<size_t>(t)];
        }
    }
    const double inv = 1.0 / batch.size();
    CHECK(loss.task == doctest::Approx(task_sum * inv).epsilon(1e-9));
    CHECK(loss.hinge == doctest::Approx(hinge_sum * inv).epsilon(1e-9));
    CHECK(loss.feasibility == doctest::Approx(feas_sum * inv).epsilon(1e-9));

    RngStream noise_b(41, "noise");
    const double stab = training::stability_loss(p, cfg, batch, 0.05, noise_b);
    CHECK(loss.stability == doctest::Approx(stab).epsilon(1e-9));
}

TEST_CASE("objective gradients pass the finite-difference check") {
    const ConstraintConfig cfg = tight_constraints();
    RngStream trial_stream(43, "trials");
    const auto task = small_modsum();

    const auto check_weights = [&](const ObjectiveWeights& weights, Enforcement enforcement) {
        ConstraintConfig run_cfg = cfg;
        run_cfg.enforcement = enforcement;
        int done = 0;
        int attempt = 0;
        while (done < 8) {
            REQUIRE(attempt < 200);
            const std::uint64_t sub_seed = trial_stream.next_u64();
            RngStream init(sub_seed, "init");
            CellParams p = make_random_cell({2, 3, 4}, init);
            for (auto& [name, m] : p.entries()) *m *= 5.0;
            RngStream gen(sub_seed, "batch");
            const auto batch = tasks::generate(task, 2, gen);

            ad::Graph graph;
            RngStream noise(sub_seed, "noise");
            const auto nodes =
                training::build_batch_loss(graph, p, run_cfg, weights, batch, 0.05, &noise);
            graph.forward(nodes.total);
            ++attempt;
            if (graph.near_kink(1e-3)) continue;

            const auto named = nodes.leaves.named();
            std::vector<ad::Val> leaves;
            for (const auto& [name, leaf] : named) leaves.push_back(leaf);
            const auto report = ad::grad_check(graph, nodes.total,
                                               std::span<const ad::Val>(leaves), 1e-5, 1e-4);
            CHECK(report.pass);
            ++done;
        }
    };

    SUBCASE("task only") { check_weights({0.0, 0.0, 0.0}, Enforcement::Soft); }
    SUBCASE("hinge only") { check_weights({1.0, 0.0, 0.0}, Enforcement::Soft); }
    SUBCASE("feasibility only") { check_weights({0.0, 1.0, 0.0}, Enforcement::Soft); }
    SUBCASE("stability only") { check_weights({0.0, 0.0, 1.0}, Enforcement::Soft); }
    SUBCASE("joint soft") { check_weights({0.7, 1.3, 0.4}, Enforcement::Soft); }
    SUBCASE("joint hard") { check_weights({0.7, 1.3, 0.4}, Enforcement::Hard); }
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    RngStream init(47, "init");
    const CellParams p = make_random_cell({3, 2, 4}, init);
    OptimConfig optim;
    optim.learning_rate = 0.0;
    optim.epochs = 3;
    optim.batches_per_epoch = 2;
    optim.batch_size = 4;
    optim.seed = 7;
    const auto result =
        training::train(p, ConstraintConfig{}, {1.0, 1.0, 0.5}, small_modsum(), optim);
    for (size_t k = 0; k < result.params.entries().size(); ++k) {
        CHECK(*result.params.entries()[k].second == *p.entries()[k].second);
    }
}

TEST_CASE("training is deterministic given the seed") {
    RngStream init(53, "init");
    const CellParams p = make_random_cell({3, 2, 4}, init);
    OptimConfig optim;
    optim.epochs = 4;
    optim.batches_per_epoch = 3;
    optim.batch_size = 6;
    optim.seed = 7;
    const auto a = training::train(p, ConstraintConfig{}, {1.0, 1.0, 0.5}, small_parity(), optim);
    const auto b = training::train(p, ConstraintConfig{}, {1.0, 1.0, 0.5}, small_parity(), optim);
    CHECK(training::metrics_to_csv(a.log) == training::metrics_to_csv(b.log));
    for (size_t k = 0; k < a.params.entries().size(); ++k) {
        CHECK(*a.params.entries()[k].second == *b.params.entries()[k].second);
    }
}

TEST_CASE("descent on the task loss") {
    RngStream init(59, "init");
    const CellParams p = make_random_cell({8, 4, 4}, init);
    OptimConfig optim;
    optim.learning_rate = 0.1;
    optim.epochs = 20;
    optim.batches_per_epoch = 5;
    optim.batch_size = 16;
    optim.seed = 11;
    const auto result =
        training::train(p, ConstraintConfig{}, {0.0, 0.0, 0.0}, small_parity(4), optim);
    REQUIRE(result.log.size() == 20);
    CHECK(result.log.back().task < result.log.front().task);
}

TEST_CASE("raising the hinge weight never raises the converged violation rate") {
    RngStream init(61, "init");
    CellParams p = make_random_cell({6, 3, 4}, init);
    for (auto& [name, m] : p.entries()) *m *= 4.0;  // start in a violating regime

    ConstraintConfig cfg;
    cfg.burden_threshold = 0.02;
    cfg.r0 = 2.0;
    cfg.r_min = 0.3;

    OptimConfig optim;
    optim.learning_rate = 0.1;
    optim.epochs = 15;
    optim.batches_per_epoch = 4;
    optim.batch_size = 8;
    optim.seed = 13;

    std::vector<double> rates;
    for (const double lambda1 : {0.0, 1.0, 4.0}) {
        const auto result =
            training::train(p, cfg, {lambda1, 0.0, 0.0}, small_parity(5), optim);
        rates.push_back(result.log.back().burden_violation_rate);
    }
    CHECK(rates[1] <= rates[0]);
    CHECK(rates[2] <= rates[1]);
}

TEST_CASE("metric log serializes with fixed columns") {
    std::vector<training::EpochMetrics> log(2);
    log[0].epoch = 0;
    log[0].task = 1.5;
    log[1].epoch = 1;
    log[1].task = 0.75;
    const std::string csv = training::metrics_to_csv(log);
    CHECK(csv.find("epoch,task,hinge,feas,stab,burden_violation_rate,feas_violation_rate\n") ==
          0);
    CHECK(csv.find("0,1.5,0,0,0,0,0\n") != std::string::npos);
    CHECK(csv.find("1,0.75,0,0,0,0,0\n") != std::string::npos);
}

TEST_CASE("config validation") {
    OptimConfig optim;
    optim.learning_rate = -1.0;
    CHECK_THROWS_AS(optim.validate(), ConfigError);
    optim = OptimConfig{};
    optim.batch_size = 0;
    CHECK_THROWS_AS(optim.validate(), ConfigError);
    ObjectiveWeights weights{-0.1, 0.0, 0.0};
    CHECK_THROWS_AS(weights.validate(), ConfigError);
}
