#pragma once

#include <span>
#include <string>
#include <vector>

#include "burdenlab/common.hpp"

namespace burdenlab::ad {

// Reverse-mode differentiation over scalar-valued computation graphs.
//
// Values are dense doubles: scalars are 1x1, column vectors nx1, matrices
// nxm. The op set is exactly what the surrounding modules emit; there is no
// broadcasting and no rank above 2. Graphs are built bottom-up, so node
// inputs always precede the node and the node list is its own topological
// order.

enum class OpKind {
    Leaf,
    MatVec,          // A (n x m) * x (m x 1)
    Add,             // elementwise, equal shapes
    Sub,             // elementwise, equal shapes
    Mul,             // elementwise, equal shapes
    Scale,           // c * x
    AddConst,        // x + c, elementwise
    Tanh,
    Sigmoid,
    Hinge,           // max{0, x}, elementwise; derivative at 0 is 0
    Exp,
    SquaredNorm,     // sum of squares -> scalar
    LogSumExp,       // vector -> scalar
    SoftmaxCrossEntropy,  // (logits, target index) -> scalar
    KlTemperedSoftmax,    // KL(softmax(p/T) || softmax(q/T)) -> scalar
    Column,          // E (d x v) -> column j (d x 1)
    OverflowPenalty, // (h, r) -> (max{0, ||h|| - r})^2
    ProjectBall,     // (h, r) -> h if ||h|| <= r else h * r/||h||
};

// Handle to a node inside a specific Graph.
struct Val {
    class Graph* graph = nullptr;
    int id = -1;
    bool valid() const { return graph != nullptr && id >= 0; }
};

class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    Val leaf(Matrix value);
    Val leaf(double scalar);

    Val matvec(Val a, Val x);
    Val add(Val a, Val b);
    Val sub(Val a, Val b);
    Val mul(Val a, Val b);
    Val scale(Val a, double c);
    Val add_const(Val a, double c);
    Val tanh(Val a);
    Val sigmoid(Val a);
    Val hinge(Val a);
    Val exp(Val a);
    Val squared_norm(Val a);
    Val logsumexp(Val a);
    Val softmax_cross_entropy(Val logits, int target);
    Val kl_tempered_softmax(Val teacher_logits, Val student_logits, double temperature);
    Val column(Val table, int index);
    Val overflow_penalty(Val h, Val radius);
    Val project_ball(Val h, Val radius);

    // Evaluates every node in topological order and returns the scalar value
    // of `out`. Throws NumericsError if any node value is non-finite.
    double forward(Val out);

    // Accumulates adjoints of every node reachable from `out`; the adjoint
    // of `out` itself is 1. Requires a prior forward().
    void backward(Val out);

    const Matrix& value(Val v) const;
    double scalar_value(Val v) const;
    const Matrix& adjoint(Val v) const;

    // Mutable access to a leaf value for finite-difference probing.
    // Invalidates cached forward results.
    Matrix& leaf_value_mut(Val v);

    int node_count() const { return static_cast<int>(nodes_.size()); }
    bool forward_done() const { return forward_done_; }

    // True when any kinked op (hinge, overflow penalty, ball projection)
    // currently sits within `margin` of its kink. Gradient-check drivers use
    // this to resample instead of probing across a nondifferentiable point.
    bool near_kink(double margin) const;

  private:
    struct Node {
        OpKind op = OpKind::Leaf;
        int in0 = -1;
        int in1 = -1;
        double c = 0.0;  // scale factor / additive constant / temperature
        int index = -1;  // column or cross-entropy target
        Matrix value;
        Matrix adjoint;
    };

    int push(Node node, long rows, long cols);
    Val wrap(int id) { return Val{this, id}; }
    const Node& at(Val v) const;
    void eval_node(Node& n);
    void backprop_node(int id);
    void require_same_shape(const Matrix& a, const Matrix& b, const char* what) const;

    std::vector<Node> nodes_;
    bool forward_done_ = false;
};

// Expression helpers so unrolled dynamics read like the math.
inline Val operator+(Val a, Val b) { return a.graph->add(a, b); }
inline Val operator-(Val a, Val b) { return a.graph->sub(a, b); }
inline Val operator*(Val a, Val b) { return a.graph->mul(a, b); }
inline Val operator*(double c, Val a) { return a.graph->scale(a, c); }
inline Val operator+(Val a, double c) { return a.graph->add_const(a, c); }
inline Val operator-(Val a, double c) { return a.graph->add_const(a, -c); }
inline Val operator-(double c, Val a) { return a.graph->add_const(a.graph->scale(a, -1.0), c); }
inline Val tanh(Val a) { return a.graph->tanh(a); }
inline Val sigmoid(Val a) { return a.graph->sigmoid(a); }
inline Val hinge(Val a) { return a.graph->hinge(a); }
inline Val exp(Val a) { return a.graph->exp(a); }
inline Val squared_norm(Val a) { return a.graph->squared_norm(a); }
inline Val logsumexp(Val a) { return a.graph->logsumexp(a); }
inline Val matvec(Val a, Val x) { return a.graph->matvec(a, x); }

struct LeafGradReport {
    int leaf_id = -1;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<LeafGradReport> per_leaf;
    double max_rel_err = 0.0;
    bool pass = true;
};

// Compares backward() gradients of `out` w.r.t. each listed leaf against
// central finite differences with the given step. Relative error is
// |g - g_fd| / max(1e-8, |g| + |g_fd|).
GradCheckReport grad_check(Graph& graph, Val out, std::span<const Val> leaves,
                           double step, double tolerance);

}  // namespace burdenlab::ad
