#include <doctest.h>

#include <cmath>
#include <cstring>

#include "burdenlab/graph.hpp"
#include "burdenlab/rng.hpp"

using namespace burdenlab;
using ad::Graph;
using ad::Val;

namespace {

Matrix random_matrix(long rows, long cols, RngStream& stream, double lo = -2.0, double hi = 2.0) {
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        for (long j = 0; j < cols; ++j) {
            m(i, j) = stream.uniform(lo, hi);
        }
    }
    return m;
}

}  // namespace

TEST_CASE("square evaluates and differentiates") {
    Graph g;
    Val x = g.leaf(3.0);
    Val y = g.mul(x, x);
    CHECK(g.forward(y) == 9.0);
    g.backward(y);
    CHECK(g.adjoint(x)(0, 0) == 6.0);

    const Val leaves[] = {x};
    const auto report = ad::grad_check(g, y, leaves, 1e-4, 1e-6);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("tanh at the origin") {
    Graph g;
    Val x = g.leaf(0.0);
    Val y = g.tanh(x);
    CHECK(g.forward(y) == 0.0);
    g.backward(y);
    CHECK(g.adjoint(x)(0, 0) == 1.0);
}

TEST_CASE("logsumexp of [0, 0] is ln 2") {
    Graph g;
    Val x = g.leaf(Matrix::Zero(2, 1));
    Val y = g.logsumexp(x);
    CHECK(g.forward(y) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("hinge derivative at the kink is zero") {
    const double threshold = 0.7;
    Graph g;
    Val x = g.leaf(threshold);
    Val y = g.hinge(g.add_const(x, -threshold));
    CHECK(g.forward(y) == 0.0);
    g.backward(y);
    CHECK(g.adjoint(x)(0, 0) == 0.0);
}

TEST_CASE("constant graph has zero gradients and passes the check") {
    Graph g;
    Val x = g.leaf(Matrix::Constant(3, 1, 1.25));
    Val c = g.leaf(Matrix::Constant(3, 1, 2.0));
    Val y = g.squared_norm(c);  // x never feeds the output
    g.forward(y);
    g.backward(y);
    CHECK(g.adjoint(x).isZero(0.0));

    const Val leaves[] = {x};
    const auto report = ad::grad_check(g, y, leaves, 1e-4, 1e-10);
    CHECK(report.pass);
}

TEST_CASE("forward is deterministic bit for bit") {
    RngStream stream(42, "determinism");
    const Matrix a = random_matrix(4, 4, stream);
    const Matrix v = random_matrix(4, 1, stream);

    const auto run = [&]() {
        Graph g;
        Val A = g.leaf(a);
        Val x = g.leaf(v);
        Val y = g.squared_norm(g.tanh(g.matvec(A, x)));
        return g.forward(y);
    };
    const double first = run();
    const double second = run();
    CHECK(std::memcmp(&first, &second, sizeof(double)) == 0);
}

TEST_CASE("shape and usage errors") {
    Graph g;
    Val a = g.leaf(Matrix::Zero(2, 1));
    Val b = g.leaf(Matrix::Zero(3, 1));
    CHECK_THROWS_AS(g.add(a, b), DimensionError);
    CHECK_THROWS_AS(g.matvec(a, b), DimensionError);
    CHECK_THROWS_AS(g.backward(a), Error);  // no forward yet
    CHECK_THROWS_AS(g.column(a, 5), DimensionError);
    CHECK_THROWS_AS(g.softmax_cross_entropy(a, 7), DimensionError);
}

TEST_CASE("non-finite intermediate values abort forward") {
    Graph g;
    Val x = g.leaf(1000.0);
    Val y = g.exp(x);
    CHECK_THROWS_AS(g.forward(y), NumericsError);
}

TEST_CASE("adjoint of the output is one after backward") {
    Graph g;
    Val x = g.leaf(2.0);
    Val y = g.exp(g.scale(x, 0.25));
    g.forward(y);
    g.backward(y);
    CHECK(g.adjoint(y)(0, 0) == 1.0);
}

// Finite-difference oracle over the whole op set, randomized instances with
// kink resampling. 100 trials per op family.
TEST_CASE("every op matches central finite differences") {
    constexpr double kStep = 1e-5;
    constexpr double kTol = 1e-4;
    constexpr double kKinkMargin = 1e-3;
    RngStream stream(7, "fd-oracle");

    const auto check = [&](auto build) {
        for (int trial = 0; trial < 100; ++trial) {
            for (int attempt = 0;; ++attempt) {
                Graph g;
                std::vector<Val> leaves;
                Val out = build(g, leaves);
                g.forward(out);
                if (g.near_kink(kKinkMargin)) {
                    REQUIRE(attempt < 50);
                    continue;
                }
                const auto report =
                    ad::grad_check(g, out, std::span<const Val>(leaves), kStep, kTol);
                CHECK(report.pass);
                break;
            }
        }
    };

    SUBCASE("matvec") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val A = g.leaf(random_matrix(3, 4, stream));
            Val x = g.leaf(random_matrix(4, 1, stream));
            leaves = {A, x};
            return g.squared_norm(g.matvec(A, x));
        });
    }
    SUBCASE("add sub mul scale add_const") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val a = g.leaf(random_matrix(3, 1, stream));
            Val b = g.leaf(random_matrix(3, 1, stream));
            leaves = {a, b};
            Val expr = g.add_const(g.scale(g.mul(g.add(a, b), g.sub(a, b)), 0.75), 0.3);
            return g.squared_norm(expr);
        });
    }
    SUBCASE("tanh sigmoid exp") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val x = g.leaf(random_matrix(4, 1, stream, -1.5, 1.5));
            leaves = {x};
            return g.squared_norm(g.exp(g.scale(g.tanh(g.sigmoid(x)), 0.5)));
        });
    }
    SUBCASE("hinge") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val x = g.leaf(random_matrix(4, 1, stream));
            leaves = {x};
            return g.squared_norm(g.hinge(x));
        });
    }
    SUBCASE("logsumexp") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val x = g.leaf(random_matrix(5, 1, stream));
            leaves = {x};
            return g.logsumexp(x);
        });
    }
    SUBCASE("softmax cross entropy") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val x = g.leaf(random_matrix(5, 1, stream));
            leaves = {x};
            return g.softmax_cross_entropy(x, stream.uniform_int(5));
        });
    }
    SUBCASE("tempered softmax KL in both arguments") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val t = g.leaf(random_matrix(4, 1, stream));
            Val s = g.leaf(random_matrix(4, 1, stream));
            leaves = {t, s};
            return g.kl_tempered_softmax(t, s, stream.uniform(0.5, 3.0));
        });
    }
    SUBCASE("column lookup") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val E = g.leaf(random_matrix(3, 5, stream));
            leaves = {E};
            return g.squared_norm(g.tanh(g.column(E, stream.uniform_int(5))));
        });
    }
    SUBCASE("overflow penalty") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val h = g.leaf(random_matrix(3, 1, stream, -1.0, 1.0));
            Val r = g.leaf(stream.uniform(0.3, 2.0));
            leaves = {h, r};
            return g.overflow_penalty(h, r);
        });
    }
    SUBCASE("ball projection") {
        check([&](Graph& g, std::vector<Val>& leaves) {
            Val h = g.leaf(random_matrix(3, 1, stream, -1.0, 1.0));
            Val r = g.leaf(stream.uniform(0.3, 2.0));
            leaves = {h, r};
            return g.squared_norm(g.tanh(g.project_ball(h, r)));
        });
    }
}

TEST_CASE("grad_check reports per-leaf errors") {
    Graph g;
    Val a = g.leaf(1.5);
    Val b = g.leaf(-0.5);
    Val y = g.add(g.mul(a, a), g.exp(b));
    const Val leaves[] = {a, b};
    const auto report = ad::grad_check(g, y, leaves, 1e-5, 1e-6);
    REQUIRE(report.per_leaf.size() == 2);
    CHECK(report.pass);
    for (const auto& leaf : report.per_leaf) {
        CHECK(leaf.pass);
        CHECK(leaf.max_rel_err <= report.max_rel_err);
    }
    CHECK_THROWS_AS(ad::grad_check(g, y, leaves, 0.0, 1e-6), Error);
}
