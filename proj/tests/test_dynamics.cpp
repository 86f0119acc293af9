#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "burdenlab/dynamics.hpp"
#include "burdenlab/rng.hpp"

using namespace burdenlab;
using dynamics::ConstraintConfig;
using dynamics::Enforcement;
using dynamics::PathMode;

namespace {

CellParams random_cell(const CellDims& dims, std::uint64_t seed, double scale = 1.0) {
    RngStream stream(seed, "dynamics-test-cell");
    CellParams p = make_random_cell(dims, stream);
    for (auto& [name, ptr] : p.entries()) {
        *ptr *= scale;
    }
    return p;
}

std::vector<int> random_tokens(int count, int vocab, RngStream& stream) {
    std::vector<int> tokens(static_cast<size_t>(count));
    for (int& t : tokens) t = stream.uniform_int(vocab);
    return tokens;
}

}  // namespace

TEST_CASE("cell step with zero parameters halves the state") {
    const CellParams p = make_zero_cell({2, 3, 4});
    Vector h(2);
    h << 1.0, -1.0;
    const Vector next = dynamics::step(p, h, 0);
    CHECK(next(0) == 0.5);
    CHECK(next(1) == -0.5);

    const Vector zero_next = dynamics::step(p, Vector::Zero(2), 2);
    CHECK(zero_next.isZero(0.0));
}

TEST_CASE("cell step stays finite and rejects bad tokens") {
    const CellParams p = random_cell({6, 4, 5}, 11, 20.0);
    RngStream stream(3, "tokens");
    Vector h = Vector::Constant(6, 0.9);
    for (int i = 0; i < 50; ++i) {
        h = dynamics::step(p, h, stream.uniform_int(5));
        CHECK(h.allFinite());
    }
    CHECK_THROWS_AS(dynamics::step(p, h, 5), DimensionError);
    CHECK_THROWS_AS(dynamics::step(p, h, -1), DimensionError);
}

TEST_CASE("transition burden formula") {
    const ConstraintConfig cfg{};
    SUBCASE("no movement, no burden") {
        RngStream stream(5, "burden");
        for (int i = 0; i < 20; ++i) {
            Vector h(3);
            h << stream.uniform(-2, 2), stream.uniform(-2, 2), stream.uniform(-2, 2);
            CHECK(dynamics::transition_burden(h, h, 0, cfg) == 0.0);
        }
    }
    SUBCASE("growth and displacement both active") {
        Vector h = Vector::Zero(2);
        Vector next(2);
        next << 1.0, 1.0;
        CHECK(dynamics::transition_burden(h, next, 0, cfg) == 1.5);
    }
    SUBCASE("shrinking transition pays only displacement") {
        Vector h(2);
        h << 2.0, 0.0;
        Vector next(2);
        next << 1.0, 0.0;
        CHECK(dynamics::transition_burden(h, next, 0, cfg) == 0.5);
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(dynamics::transition_burden(Vector::Zero(2), Vector::Zero(3), 0, cfg),
                        DimensionError);
    }
}

TEST_CASE("path load updates") {
    ConstraintConfig cfg{};
    SUBCASE("uniform accumulates") {
        CHECK(dynamics::path_load_update(0.0, 0.3, cfg) == 0.3);
        CHECK(dynamics::path_load_update(0.3, 0.2, cfg) == 0.5);
    }
    SUBCASE("discounted decays the past") {
        cfg.path_mode = PathMode::Discounted;
        cfg.lambda_path = 0.9;
        CHECK(dynamics::path_load_update(1.0, 0.5, cfg) == doctest::Approx(1.4).epsilon(1e-15));
    }
    SUBCASE("negative burden is rejected") {
        CHECK_THROWS_AS(dynamics::path_load_update(0.0, -0.1, cfg), NumericsError);
    }
}

TEST_CASE("feasible radius contraction") {
    const ConstraintConfig cfg{};
    CHECK(dynamics::feasible_radius(0.0, cfg) == 3.0);
    // closed form 3 * exp(-0.05 * 10)
    CHECK(dynamics::feasible_radius(10.0, cfg) ==
          doctest::Approx(1.8195919791379003).epsilon(1e-12));
    CHECK(dynamics::feasible_radius(10.0, cfg) == doctest::Approx(1.81959).epsilon(1e-5));
    // 3 * exp(-10) is far below the floor
    CHECK(dynamics::feasible_radius(200.0, cfg) == 0.5);
}

TEST_CASE("feasibility penalty") {
    Vector inside(2);
    inside << 1.0, 0.0;
    CHECK(dynamics::feasibility_penalty(inside, 2.0) == 0.0);
    Vector boundary(2);
    boundary << 2.0, 0.0;
    CHECK(dynamics::feasibility_penalty(boundary, 2.0) == 0.0);
    Vector outside(2);
    outside << 3.0, 0.0;
    CHECK(dynamics::feasibility_penalty(outside, 2.0) == 1.0);
}

TEST_CASE("ball projection") {
    Vector h(2);
    h << 3.0, 4.0;
    const Vector projected = dynamics::project(h, 2.5);
    CHECK(projected(0) == 1.5);
    CHECK(projected(1) == 2.0);

    Vector small(2);
    small << 0.3, -0.4;
    CHECK(dynamics::project(small, 2.5) == small);
    CHECK(dynamics::project(Vector::Zero(3), 0.1).isZero(0.0));
}

TEST_CASE("constraint machinery properties over randomized cases") {
    RngStream stream(21, "props");
    ConstraintConfig cfg{};
    for (int i = 0; i < 1000; ++i) {
        const int n = 1 + stream.uniform_int(5);
        Vector h(n);
        Vector next(n);
        for (int k = 0; k < n; ++k) {
            h(k) = stream.uniform(-3, 3);
            next(k) = stream.uniform(-3, 3);
        }
        const double b = dynamics::transition_burden(h, next, 0, cfg);
        CHECK(b >= 0.0);
        CHECK(dynamics::transition_burden(h, h, 0, cfg) == 0.0);

        const double l0 = stream.uniform(0, 5);
        const double l1 = dynamics::path_load_update(l0, b, cfg);
        CHECK(l1 >= l0);  // uniform mode is nondecreasing

        ConstraintConfig disc = cfg;
        disc.path_mode = PathMode::Discounted;
        disc.lambda_path = stream.uniform(0.5, 0.99);
        const double ld = dynamics::path_load_update(l0, b, disc);
        CHECK(ld <= std::max(l0, b / (1.0 - disc.lambda_path)) + 1e-12);

        const double r_lo = dynamics::feasible_radius(l1, cfg);
        const double r_hi = dynamics::feasible_radius(l0, cfg);
        CHECK(r_lo <= r_hi);  // nonincreasing in load, so regions nest
        CHECK(r_lo >= cfg.r_min);
        CHECK(r_hi <= cfg.r0);

        const double radius = stream.uniform(0.2, 2.0);
        const Vector p1 = dynamics::project(next, radius);
        const Vector p2 = dynamics::project(p1, radius);
        CHECK(p1 == p2);  // idempotent
        CHECK(p1.norm() <= radius);

        const double phi = dynamics::feasibility_penalty(next, radius);
        CHECK((phi == 0.0) == (next.norm() <= radius));
    }
}

TEST_CASE("rollout of zero parameters never accumulates load") {
    const CellParams p = make_zero_cell({4, 3, 6});
    const ConstraintConfig cfg{};
    RngStream stream(9, "tokens");
    const auto rec = dynamics::rollout(p, cfg, random_tokens(12, 6, stream));
    REQUIRE(rec.steps() == 12);
    for (int t = 0; t < rec.steps(); ++t) {
        CHECK(rec.states[static_cast<size_t>(t) + 1].isZero(0.0));
        CHECK(rec.burdens[static_cast<size_t>(t)] == 0.0);
        CHECK(rec.loads[static_cast<size_t>(t)] == 0.0);
        CHECK(rec.radii[static_cast<size_t>(t)] == cfg.r0);
        CHECK(rec.burden_violations[static_cast<size_t>(t)] == 0);
        CHECK(rec.feasibility_violations[static_cast<size_t>(t)] == 0);
    }
}

TEST_CASE("hard enforcement keeps every state feasible") {
    ConstraintConfig cfg{};
    cfg.enforcement = Enforcement::Hard;
    cfg.r0 = 0.4;
    cfg.r_min = 0.1;
    cfg.kappa = 0.5;
    const CellParams p = random_cell({8, 4, 6}, 13, 8.0);
    RngStream stream(17, "tokens");
    for (int trial = 0; trial < 50; ++trial) {
        const auto rec = dynamics::rollout(p, cfg, random_tokens(15, 6, stream));
        double radius = dynamics::feasible_radius(0.0, cfg);
        for (int t = 0; t < rec.steps(); ++t) {
            CHECK(rec.feasibility_violations[static_cast<size_t>(t)] == 0);
            CHECK(rec.states[static_cast<size_t>(t) + 1].norm() <= radius);
            radius = rec.radii[static_cast<size_t>(t)];
        }
    }
}

TEST_CASE("uniform loads match an independent prefix sum") {
    ConstraintConfig cfg{};
    cfg.alpha = 0.7;
    const CellParams p = random_cell({6, 4, 6}, 29, 4.0);
    RngStream stream(31, "tokens");
    const auto rec = dynamics::rollout(p, cfg, random_tokens(20, 6, stream));
    double prefix = 0.0;
    for (int t = 0; t < rec.steps(); ++t) {
        prefix = prefix + cfg.alpha * rec.burdens[static_cast<size_t>(t)];
        CHECK(rec.loads[static_cast<size_t>(t)] == prefix);
    }
}

TEST_CASE("soft-mode states do not depend on the constraint constants") {
    const CellParams p = random_cell({5, 3, 6}, 37, 3.0);
    RngStream stream(41, "tokens");
    const auto tokens = random_tokens(10, 6, stream);

    ConstraintConfig observing{};  // defaults: nonzero burden weights
    ConstraintConfig silent{};
    silent.w_disp = 0.0;
    silent.w_grow = 0.0;
    silent.kappa = 1.5;

    const auto a = dynamics::rollout(p, observing, tokens);
    const auto b = dynamics::rollout(p, silent, tokens);
    REQUIRE(a.states.size() == b.states.size());
    for (size_t t = 0; t < a.states.size(); ++t) {
        CHECK(a.states[t] == b.states[t]);
    }
    for (int t = 0; t < b.steps(); ++t) {
        CHECK(b.burdens[static_cast<size_t>(t)] == 0.0);
    }
}

TEST_CASE("rollout rejects empty input") {
    const CellParams p = make_zero_cell({2, 2, 4});
    CHECK_THROWS_AS(dynamics::rollout(p, ConstraintConfig{}, {}), Error);
}

TEST_CASE("trajectory serializes to JSON") {
    const CellParams p = random_cell({3, 2, 4}, 43, 2.0);
    RngStream stream(47, "tokens");
    const auto rec = dynamics::rollout(p, ConstraintConfig{}, random_tokens(6, 4, stream));
    const auto doc = nlohmann::json::parse(rec.to_json());
    CHECK(doc.at("steps") == 6);
    CHECK(doc.at("states").size() == 7);
    CHECK(doc.at("burdens").size() == 6);
    CHECK(doc.at("loads").size() == 6);
    CHECK(doc.at("radii").size() == 6);
    CHECK(doc.at("burden_violations").size() == 6);
    CHECK(doc.at("feasibility_violations").size() == 6);
    CHECK(doc.at("logits").size() == 6);
    CHECK(doc.at("logits").at(0).size() == 4);
}

TEST_CASE("graph unroll agrees with the plain rollout") {
    RngStream stream(53, "tokens");
    for (const auto enforcement : {Enforcement::Soft, Enforcement::Hard}) {
        ConstraintConfig cfg{};
        cfg.enforcement = enforcement;
        cfg.r0 = 0.6;  // small enough that projection actually engages
        cfg.r_min = 0.2;
        cfg.kappa = 0.4;
        const CellParams p = random_cell({5, 3, 6}, 59, 5.0);
        const auto tokens = random_tokens(8, 6, stream);

        const auto plain = dynamics::rollout(p, cfg, tokens);

        ad::Graph g;
        const auto leaves = dynamics::make_cell_leaves(g, p);
        const auto traj = dynamics::unroll(g, leaves, p.dims, cfg, tokens, true);
        g.forward(g.squared_norm(traj.states.back()));

        for (int t = 0; t < plain.steps(); ++t) {
            const size_t ut = static_cast<size_t>(t);
            CHECK((g.value(traj.states[ut + 1]) - Matrix(plain.states[ut + 1])).norm() <
                  1e-12);
            CHECK(g.scalar_value(traj.burdens[ut]) ==
                  doctest::Approx(plain.burdens[ut]).epsilon(1e-12));
            CHECK(g.scalar_value(traj.loads[ut]) ==
                  doctest::Approx(plain.loads[ut]).epsilon(1e-12));
            CHECK(g.scalar_value(traj.radii[ut]) ==
                  doctest::Approx(plain.radii[ut]).epsilon(1e-12));
            CHECK((g.value(traj.logits[ut]) - Matrix(plain.logits[ut])).norm() < 1e-12);
        }
    }
}

TEST_CASE("config invariants are enforced") {
    ConstraintConfig cfg{};
    cfg.w_disp = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ConstraintConfig{};
    cfg.r_min = 4.0;  // above r0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ConstraintConfig{};
    cfg.lambda_path = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ConstraintConfig{};
    cfg.burden_threshold = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(ConstraintConfig{}.validate());
}
