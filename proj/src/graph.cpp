#include "burdenlab/graph.hpp"

#include <cmath>

namespace burdenlab::ad {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(sum(exp(x))) with max-shift; also fills `softmax` if non-null.
double logsumexp_of(const Matrix& x, Matrix* softmax) {
    const double m = x.maxCoeff();
    const Matrix shifted = (x.array() - m).exp().matrix();
    const double z = shifted.sum();
    if (softmax != nullptr) {
        *softmax = shifted / z;
    }
    return m + std::log(z);
}

}  // namespace

int Graph::push(Node node, long rows, long cols) {
    node.value = Matrix::Zero(rows, cols);
    nodes_.push_back(std::move(node));
    forward_done_ = false;
    return static_cast<int>(nodes_.size()) - 1;
}

const Graph::Node& Graph::at(Val v) const {
    if (v.graph != this || v.id < 0 || v.id >= node_count()) {
        throw Error("Val does not belong to this graph");
    }
    return nodes_[static_cast<size_t>(v.id)];
}

void Graph::require_same_shape(const Matrix& a, const Matrix& b, const char* what) const {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(what) + ": shape mismatch (" +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

Val Graph::leaf(Matrix value) {
    const long r = value.rows();
    const long c = value.cols();
    Node n;
    n.op = OpKind::Leaf;
    const int id = push(std::move(n), r, c);
    nodes_.back().value = std::move(value);
    return wrap(id);
}

Val Graph::leaf(double scalar) {
    Matrix m(1, 1);
    m(0, 0) = scalar;
    return leaf(std::move(m));
}

Val Graph::matvec(Val a, Val x) {
    const Node& na = at(a);
    const Node& nx = at(x);
    if (nx.value.cols() != 1 || na.value.cols() != nx.value.rows()) {
        throw DimensionError("matvec: incompatible shapes");
    }
    Node n;
    n.op = OpKind::MatVec;
    n.in0 = a.id;
    n.in1 = x.id;
    return wrap(push(std::move(n), na.value.rows(), 1));
}

Val Graph::add(Val a, Val b) {
    require_same_shape(at(a).value, at(b).value, "add");
    Node n;
    n.op = OpKind::Add;
    n.in0 = a.id;
    n.in1 = b.id;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::sub(Val a, Val b) {
    require_same_shape(at(a).value, at(b).value, "sub");
    Node n;
    n.op = OpKind::Sub;
    n.in0 = a.id;
    n.in1 = b.id;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::mul(Val a, Val b) {
    require_same_shape(at(a).value, at(b).value, "mul");
    Node n;
    n.op = OpKind::Mul;
    n.in0 = a.id;
    n.in1 = b.id;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::scale(Val a, double c) {
    Node n;
    n.op = OpKind::Scale;
    n.in0 = a.id;
    n.c = c;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::add_const(Val a, double c) {
    Node n;
    n.op = OpKind::AddConst;
    n.in0 = a.id;
    n.c = c;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::tanh(Val a) {
    Node n;
    n.op = OpKind::Tanh;
    n.in0 = a.id;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::sigmoid(Val a) {
    Node n;
    n.op = OpKind::Sigmoid;
    n.in0 = a.id;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::hinge(Val a) {
    Node n;
    n.op = OpKind::Hinge;
    n.in0 = a.id;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::exp(Val a) {
    Node n;
    n.op = OpKind::Exp;
    n.in0 = a.id;
    return wrap(push(std::move(n), at(a).value.rows(), at(a).value.cols()));
}

Val Graph::squared_norm(Val a) {
    Node n;
    n.op = OpKind::SquaredNorm;
    n.in0 = a.id;
    return wrap(push(std::move(n), 1, 1));
}

Val Graph::logsumexp(Val a) {
    if (at(a).value.cols() != 1) {
        throw DimensionError("logsumexp: expects a column vector");
    }
    Node n;
    n.op = OpKind::LogSumExp;
    n.in0 = a.id;
    return wrap(push(std::move(n), 1, 1));
}

Val Graph::softmax_cross_entropy(Val logits, int target) {
    const Node& nl = at(logits);
    if (nl.value.cols() != 1) {
        throw DimensionError("softmax_cross_entropy: expects a column vector");
    }
    if (target < 0 || target >= nl.value.rows()) {
        throw DimensionError("softmax_cross_entropy: target out of range");
    }
    Node n;
    n.op = OpKind::SoftmaxCrossEntropy;
    n.in0 = logits.id;
    n.index = target;
    return wrap(push(std::move(n), 1, 1));
}

Val Graph::kl_tempered_softmax(Val teacher_logits, Val student_logits, double temperature) {
    require_same_shape(at(teacher_logits).value, at(student_logits).value, "kl_tempered_softmax");
    if (at(teacher_logits).value.cols() != 1) {
        throw DimensionError("kl_tempered_softmax: expects column vectors");
    }
    if (!(temperature > 0.0)) {
        throw Error("kl_tempered_softmax: temperature must be positive");
    }
    Node n;
    n.op = OpKind::KlTemperedSoftmax;
    n.in0 = teacher_logits.id;
    n.in1 = student_logits.id;
    n.c = temperature;
    return wrap(push(std::move(n), 1, 1));
}

Val Graph::column(Val table, int index) {
    const Node& nt = at(table);
    if (index < 0 || index >= nt.value.cols()) {
        throw DimensionError("column: index " + std::to_string(index) + " out of range for " +
                             std::to_string(nt.value.cols()) + " columns");
    }
    Node n;
    n.op = OpKind::Column;
    n.in0 = table.id;
    n.index = index;
    return wrap(push(std::move(n), nt.value.rows(), 1));
}

Val Graph::overflow_penalty(Val h, Val radius) {
    if (at(h).value.cols() != 1 || at(radius).value.size() != 1) {
        throw DimensionError("overflow_penalty: expects (vector, scalar)");
    }
    Node n;
    n.op = OpKind::OverflowPenalty;
    n.in0 = h.id;
    n.in1 = radius.id;
    return wrap(push(std::move(n), 1, 1));
}

Val Graph::project_ball(Val h, Val radius) {
    if (at(h).value.cols() != 1 || at(radius).value.size() != 1) {
        throw DimensionError("project_ball: expects (vector, scalar)");
    }
    Node n;
    n.op = OpKind::ProjectBall;
    n.in0 = h.id;
    n.in1 = radius.id;
    return wrap(push(std::move(n), at(h).value.rows(), 1));
}

void Graph::eval_node(Node& n) {
    const auto in0 = [&]() -> const Matrix& { return nodes_[static_cast<size_t>(n.in0)].value; };
    const auto in1 = [&]() -> const Matrix& { return nodes_[static_cast<size_t>(n.in1)].value; };
    switch (n.op) {
        case OpKind::Leaf:
            break;
        case OpKind::MatVec:
            n.value.noalias() = in0() * in1();
            break;
        case OpKind::Add:
            n.value = in0() + in1();
            break;
        case OpKind::Sub:
            n.value = in0() - in1();
            break;
        case OpKind::Mul:
            n.value = in0().cwiseProduct(in1());
            break;
        case OpKind::Scale:
            n.value = n.c * in0();
            break;
        case OpKind::AddConst:
            n.value = in0().array() + n.c;
            break;
        case OpKind::Tanh:
            n.value = in0().array().tanh();
            break;
        case OpKind::Sigmoid:
            n.value = in0().unaryExpr([](double x) { return stable_sigmoid(x); });
            break;
        case OpKind::Hinge:
            n.value = in0().cwiseMax(0.0);
            break;
        case OpKind::Exp:
            n.value = in0().array().exp();
            break;
        case OpKind::SquaredNorm:
            n.value(0, 0) = in0().squaredNorm();
            break;
        case OpKind::LogSumExp:
            n.value(0, 0) = logsumexp_of(in0(), nullptr);
            break;
        case OpKind::SoftmaxCrossEntropy:
            n.value(0, 0) = logsumexp_of(in0(), nullptr) - in0()(n.index, 0);
            break;
        case OpKind::KlTemperedSoftmax: {
            const Matrix tp = in0() / n.c;
            const Matrix sp = in1() / n.c;
            Matrix p;
            Matrix q;
            const double lse_t = logsumexp_of(tp, &p);
            const double lse_s = logsumexp_of(sp, &q);
            double kl = 0.0;
            for (long i = 0; i < p.rows(); ++i) {
                const double log_p = tp(i, 0) - lse_t;
                const double log_q = sp(i, 0) - lse_s;
                kl += p(i, 0) * (log_p - log_q);
            }
            n.value(0, 0) = kl;
            break;
        }
        case OpKind::Column:
            n.value = in0().col(n.index);
            break;
        case OpKind::OverflowPenalty: {
            const double over = std::max(0.0, in0().norm() - in1()(0, 0));
            n.value(0, 0) = over * over;
            break;
        }
        case OpKind::ProjectBall: {
            const double norm = in0().norm();
            const double r = in1()(0, 0);
            n.value = (norm <= r) ? in0() : Matrix(in0() * (r / norm));
            break;
        }
    }
}

double Graph::forward(Val out) {
    const Node& o = at(out);
    if (o.value.size() != 1) {
        throw DimensionError("forward: output node must be scalar");
    }
    for (size_t i = 0; i < nodes_.size(); ++i) {
        eval_node(nodes_[i]);
        if (!nodes_[i].value.allFinite()) {
            throw NumericsError("forward: non-finite value at node " + std::to_string(i));
        }
    }
    forward_done_ = true;
    return nodes_[static_cast<size_t>(out.id)].value(0, 0);
}

void Graph::backprop_node(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op == OpKind::Leaf) {
        return;
    }
    const Matrix& g = n.adjoint;
    const auto val0 = [&]() -> const Matrix& { return nodes_[static_cast<size_t>(n.in0)].value; };
    const auto val1 = [&]() -> const Matrix& { return nodes_[static_cast<size_t>(n.in1)].value; };
    const auto adj0 = [&]() -> Matrix& { return nodes_[static_cast<size_t>(n.in0)].adjoint; };
    const auto adj1 = [&]() -> Matrix& { return nodes_[static_cast<size_t>(n.in1)].adjoint; };
    switch (n.op) {
        case OpKind::Leaf:
            break;
        case OpKind::MatVec:
            adj0().noalias() += g * val1().transpose();
            adj1().noalias() += val0().transpose() * g;
            break;
        case OpKind::Add:
            adj0() += g;
            adj1() += g;
            break;
        case OpKind::Sub:
            adj0() += g;
            adj1() -= g;
            break;
        case OpKind::Mul:
            adj0() += g.cwiseProduct(val1());
            adj1() += g.cwiseProduct(val0());
            break;
        case OpKind::Scale:
            adj0() += n.c * g;
            break;
        case OpKind::AddConst:
            adj0() += g;
            break;
        case OpKind::Tanh:
            adj0().array() += g.array() * (1.0 - n.value.array().square());
            break;
        case OpKind::Sigmoid:
            adj0().array() += g.array() * n.value.array() * (1.0 - n.value.array());
            break;
        case OpKind::Hinge:
            // derivative at the kink is 0 by convention, hence the strict >
            adj0().array() += g.array() * (val0().array() > 0.0).cast<double>();
            break;
        case OpKind::Exp:
            adj0().array() += g.array() * n.value.array();
            break;
        case OpKind::SquaredNorm:
            adj0() += 2.0 * g(0, 0) * val0();
            break;
        case OpKind::LogSumExp: {
            Matrix sm;
            logsumexp_of(val0(), &sm);
            adj0() += g(0, 0) * sm;
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            Matrix sm;
            logsumexp_of(val0(), &sm);
            sm(n.index, 0) -= 1.0;
            adj0() += g(0, 0) * sm;
            break;
        }
        case OpKind::KlTemperedSoftmax: {
            const Matrix tp = val0() / n.c;
            const Matrix sp = val1() / n.c;
            Matrix p;
            Matrix q;
            const double lse_t = logsumexp_of(tp, &p);
            const double lse_s = logsumexp_of(sp, &q);
            const double kl = n.value(0, 0);
            for (long i = 0; i < p.rows(); ++i) {
                const double log_ratio = (tp(i, 0) - lse_t) - (sp(i, 0) - lse_s);
                adj0()(i, 0) += g(0, 0) * p(i, 0) * (log_ratio - kl) / n.c;
                adj1()(i, 0) += g(0, 0) * (q(i, 0) - p(i, 0)) / n.c;
            }
            break;
        }
        case OpKind::Column:
            adj0().col(n.index) += g;
            break;
        case OpKind::OverflowPenalty: {
            const double norm = val0().norm();
            const double over = norm - val1()(0, 0);
            if (over > 0.0) {
                adj0() += g(0, 0) * 2.0 * over * (val0() / norm);
                adj1()(0, 0) -= g(0, 0) * 2.0 * over;
            }
            break;
        }
        case OpKind::ProjectBall: {
            const double norm = val0().norm();
            const double r = val1()(0, 0);
            if (norm <= r) {
                adj0() += g;
            } else {
                const double hg = val0().col(0).dot(g.col(0));
                adj0() += (r / norm) * g - (r * hg / (norm * norm * norm)) * val0();
                adj1()(0, 0) += hg / norm;
            }
            break;
        }
    }
}

void Graph::backward(Val out) {
    if (!forward_done_) {
        throw Error("backward called before forward");
    }
    const Node& o = at(out);
    if (o.value.size() != 1) {
        throw DimensionError("backward: output node must be scalar");
    }
    for (Node& n : nodes_) {
        n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    nodes_[static_cast<size_t>(out.id)].adjoint(0, 0) = 1.0;
    for (int id = out.id; id >= 0; --id) {
        backprop_node(id);
    }
}

const Matrix& Graph::value(Val v) const { return at(v).value; }

double Graph::scalar_value(Val v) const {
    const Node& n = at(v);
    if (n.value.size() != 1) {
        throw DimensionError("scalar_value: node is not scalar");
    }
    return n.value(0, 0);
}

const Matrix& Graph::adjoint(Val v) const { return at(v).adjoint; }

Matrix& Graph::leaf_value_mut(Val v) {
    at(v);  // ownership and range check
    Node& n = nodes_[static_cast<size_t>(v.id)];
    if (n.op != OpKind::Leaf) {
        throw Error("leaf_value_mut: node is not a leaf");
    }
    forward_done_ = false;
    return n.value;
}

bool Graph::near_kink(double margin) const {
    for (const Node& n : nodes_) {
        switch (n.op) {
            case OpKind::Hinge: {
                const Matrix& x = nodes_[static_cast<size_t>(n.in0)].value;
                if ((x.array().abs() < margin).any()) return true;
                break;
            }
            case OpKind::OverflowPenalty:
            case OpKind::ProjectBall: {
                const double norm = nodes_[static_cast<size_t>(n.in0)].value.norm();
                const double r = nodes_[static_cast<size_t>(n.in1)].value(0, 0);
                if (std::abs(norm - r) < margin) return true;
                break;
            }
            default:
                break;
        }
    }
    return false;
}

GradCheckReport grad_check(Graph& graph, Val out, std::span<const Val> leaves,
                           double step, double tolerance) {
    if (!(step > 0.0)) {
        throw Error("grad_check: step must be positive");
    }
    graph.forward(out);
    graph.backward(out);

    std::vector<Matrix> analytic;
    analytic.reserve(leaves.size());
    for (const Val& leaf : leaves) {
        const Matrix& a = graph.adjoint(leaf);
        if (!a.allFinite()) {
            throw NumericsError("grad_check: non-finite analytic gradient");
        }
        analytic.push_back(a);
    }

    GradCheckReport report;
    for (size_t k = 0; k < leaves.size(); ++k) {
        LeafGradReport lr;
        lr.leaf_id = leaves[k].id;
        Matrix& value = graph.leaf_value_mut(leaves[k]);
        for (long i = 0; i < value.rows(); ++i) {
            for (long j = 0; j < value.cols(); ++j) {
                const double saved = value(i, j);
                value(i, j) = saved + step;
                const double up = graph.forward(out);
                value(i, j) = saved - step;
                const double down = graph.forward(out);
                value(i, j) = saved;
                const double numeric = (up - down) / (2.0 * step);
                const double g = analytic[k](i, j);
                const double rel = std::abs(g - numeric) /
                                   std::max(1e-8, std::abs(g) + std::abs(numeric));
                lr.max_rel_err = std::max(lr.max_rel_err, rel);
            }
        }
        lr.pass = lr.max_rel_err <= tolerance;
        report.max_rel_err = std::max(report.max_rel_err, lr.max_rel_err);
        report.pass = report.pass && lr.pass;
        report.per_leaf.push_back(lr);
    }
    // restore caches so value()/adjoint() reflect the unperturbed graph
    graph.forward(out);
    graph.backward(out);
    return report;
}

}  // namespace burdenlab::ad
