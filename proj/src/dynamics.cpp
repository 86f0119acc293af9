#include "burdenlab/dynamics.hpp"

#include <cmath>

#include <json.hpp>

namespace burdenlab::dynamics {

std::string to_string(PathMode mode) {
    return mode == PathMode::Uniform ? "uniform" : "discounted";
}

std::string to_string(Enforcement mode) {
    return mode == Enforcement::Soft ? "soft" : "hard";
}

PathMode path_mode_from_string(const std::string& s) {
    if (s == "uniform") return PathMode::Uniform;
    if (s == "discounted") return PathMode::Discounted;
    throw ConfigError("unknown path_mode: " + s);
}

Enforcement enforcement_from_string(const std::string& s) {
    if (s == "soft") return Enforcement::Soft;
    if (s == "hard") return Enforcement::Hard;
    throw ConfigError("unknown enforcement: " + s);
}

void ConstraintConfig::validate() const {
    if (w_disp < 0.0 || w_grow < 0.0 || alpha < 0.0) {
        throw ConfigError("constraint weights must be nonnegative");
    }
    if (!(burden_threshold > 0.0)) {
        throw ConfigError("burden_threshold must be positive");
    }
    if (!(r0 > r_min && r_min > 0.0)) {
        throw ConfigError("radii must satisfy r0 > r_min > 0");
    }
    if (kappa < 0.0) {
        throw ConfigError("kappa must be nonnegative");
    }
    if (!(lambda_path > 0.0 && lambda_path <= 1.0)) {
        throw ConfigError("lambda_path must lie in (0, 1]");
    }
}

std::string TrajectoryRecord::to_json() const {
    nlohmann::json doc;
    doc["steps"] = steps();
    auto state_rows = nlohmann::json::array();
    for (const Vector& h : states) {
        state_rows.push_back(std::vector<double>(h.data(), h.data() + h.size()));
    }
    doc["states"] = std::move(state_rows);
    doc["burdens"] = burdens;
    doc["loads"] = loads;
    doc["radii"] = radii;
    doc["burden_violations"] = std::vector<bool>(burden_violations.begin(), burden_violations.end());
    doc["feasibility_violations"] =
        std::vector<bool>(feasibility_violations.begin(), feasibility_violations.end());
    auto logit_rows = nlohmann::json::array();
    for (const Vector& y : logits) {
        logit_rows.push_back(std::vector<double>(y.data(), y.data() + y.size()));
    }
    doc["logits"] = std::move(logit_rows);
    return doc.dump(2);
}

Vector step(const CellParams& params, const Vector& h, int token,
            const Vector* embedding_noise) {
    if (token < 0 || token >= params.dims.vocab) {
        throw DimensionError("step: token " + std::to_string(token) + " out of vocabulary");
    }
    if (h.size() != params.dims.hidden) {
        throw DimensionError("step: state has wrong dimension");
    }
    Vector e = params.E.col(token);
    if (embedding_noise != nullptr) {
        e += *embedding_noise;
    }
    const Vector z_pre = params.U_h * h + params.U_x * e + params.c;
    const Vector cand_pre = params.W_h * h + params.W_x * e + params.b;
    const Vector z = z_pre.unaryExpr([](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    const Vector cand = cand_pre.array().tanh();
    return ((1.0 - z.array()) * h.array() + z.array() * cand.array()).matrix();
}

double transition_burden(const Vector& h, const Vector& h_next, int /*token*/,
                         const ConstraintConfig& cfg) {
    if (h.size() != h_next.size() || h.size() < 1) {
        throw DimensionError("transition_burden: state dimension mismatch");
    }
    const double n = static_cast<double>(h.size());
    const double disp = (h_next - h).squaredNorm() / n;
    const double growth = std::max(0.0, h_next.squaredNorm() - h.squaredNorm()) / n;
    return cfg.w_disp * disp + cfg.w_grow * growth;
}

double path_load_update(double load_prev, double burden, const ConstraintConfig& cfg) {
    if (burden < 0.0) {
        throw NumericsError("path_load_update: negative burden");
    }
    if (cfg.path_mode == PathMode::Uniform) {
        return load_prev + cfg.alpha * burden;
    }
    return cfg.lambda_path * load_prev + burden;
}

double feasible_radius(double load, const ConstraintConfig& cfg) {
    return std::max(cfg.r_min, cfg.r0 * std::exp(-cfg.kappa * load));
}

double feasibility_penalty(const Vector& h_next, double radius) {
    const double over = std::max(0.0, h_next.norm() - radius);
    return over * over;
}

Vector project(const Vector& h, double radius) {
    const double norm = h.norm();
    if (norm <= radius) {
        return h;
    }
    Vector out = h * (radius / norm);
    // rounding can leave the rescaled norm an ulp above the radius; nudge
    // down so the norm bound holds exactly and projection is idempotent
    while (out.norm() > radius) {
        double factor = radius / out.norm();
        if (factor >= 1.0) {
            factor = std::nextafter(1.0, 0.0);
        }
        out *= factor;
    }
    return out;
}

TrajectoryRecord rollout(const CellParams& params, const ConstraintConfig& cfg,
                         const std::vector<int>& tokens, const Matrix* embedding_noise) {
    if (tokens.empty()) {
        throw Error("rollout: empty token sequence");
    }
    if (embedding_noise != nullptr &&
        (embedding_noise->rows() != params.dims.embedding ||
         embedding_noise->cols() < static_cast<long>(tokens.size()))) {
        throw DimensionError("rollout: embedding noise has wrong shape");
    }
    const int T = static_cast<int>(tokens.size());
    TrajectoryRecord rec;
    rec.states.reserve(static_cast<size_t>(T) + 1);
    rec.states.push_back(Vector::Zero(params.dims.hidden));
    rec.burdens.reserve(T);
    rec.loads.reserve(T);
    rec.radii.reserve(T);
    rec.burden_violations.reserve(T);
    rec.feasibility_violations.reserve(T);
    rec.logits.reserve(T);

    double load = 0.0;
    double radius_in_effect = feasible_radius(0.0, cfg);  // r0, since Gamma(0) is empty
    for (int t = 0; t < T; ++t) {
        const Vector& h = rec.states.back();
        Vector noise;
        const Vector* noise_ptr = nullptr;
        if (embedding_noise != nullptr) {
            noise = embedding_noise->col(t);
            noise_ptr = &noise;
        }
        Vector h_next = step(params, h, tokens[t], noise_ptr);
        const bool violates = h_next.norm() > radius_in_effect;
        if (cfg.enforcement == Enforcement::Hard) {
            h_next = project(h_next, radius_in_effect);
            rec.feasibility_violations.push_back(0);
        } else {
            rec.feasibility_violations.push_back(violates ? 1 : 0);
        }
        const double b = transition_burden(h, h_next, tokens[t], cfg);
        load = path_load_update(load, b, cfg);
        const double r = feasible_radius(load, cfg);
        rec.burdens.push_back(b);
        rec.loads.push_back(load);
        rec.radii.push_back(r);
        rec.burden_violations.push_back(b > cfg.burden_threshold ? 1 : 0);
        rec.logits.push_back(params.W_o * h_next + params.b_o);
        rec.states.push_back(std::move(h_next));
        radius_in_effect = r;
    }
    return rec;
}

std::vector<std::pair<std::string, ad::Val>> CellLeaves::named() const {
    return {{"W_h", W_h}, {"W_x", W_x}, {"b", b},     {"U_h", U_h}, {"U_x", U_x},
            {"c", c},     {"W_o", W_o}, {"b_o", b_o}, {"E", E}};
}

CellLeaves make_cell_leaves(ad::Graph& graph, const CellParams& params) {
    params.check_consistent();
    CellLeaves leaves;
    leaves.W_h = graph.leaf(params.W_h);
    leaves.W_x = graph.leaf(params.W_x);
    leaves.b = graph.leaf(params.b);
    leaves.U_h = graph.leaf(params.U_h);
    leaves.U_x = graph.leaf(params.U_x);
    leaves.c = graph.leaf(params.c);
    leaves.W_o = graph.leaf(params.W_o);
    leaves.b_o = graph.leaf(params.b_o);
    leaves.E = graph.leaf(params.E);
    return leaves;
}

UnrolledTrajectory unroll(ad::Graph& graph, const CellLeaves& leaves, const CellDims& dims,
                          const ConstraintConfig& cfg, const std::vector<int>& tokens,
                          bool with_constraints, const Matrix* embedding_noise) {
    if (tokens.empty()) {
        throw Error("unroll: empty token sequence");
    }
    const int T = static_cast<int>(tokens.size());
    UnrolledTrajectory out;
    out.states.reserve(static_cast<size_t>(T) + 1);
    out.logits.reserve(T);

    ad::Val h = graph.leaf(Matrix::Zero(dims.hidden, 1));
    out.states.push_back(h);
    ad::Val load;   // valid after the first step when constraints are on
    ad::Val radius_in_effect;  // invalid means "r0", the pre-contraction radius
    for (int t = 0; t < T; ++t) {
        ad::Val e = graph.column(leaves.E, tokens[t]);
        if (embedding_noise != nullptr) {
            e = e + graph.leaf(Matrix(embedding_noise->col(t)));
        }
        ad::Val z = sigmoid(matvec(leaves.U_h, h) + matvec(leaves.U_x, e) + leaves.c);
        ad::Val cand = tanh(matvec(leaves.W_h, h) + matvec(leaves.W_x, e) + leaves.b);
        ad::Val h_next = (1.0 - z) * h + z * cand;

        if (with_constraints) {
            if (cfg.enforcement == Enforcement::Hard) {
                ad::Val r_node = radius_in_effect.valid()
                                     ? radius_in_effect
                                     : graph.leaf(feasible_radius(0.0, cfg));
                h_next = graph.project_ball(h_next, r_node);
            }
            // burden of this transition, on the possibly projected state
            const double inv_n = 1.0 / static_cast<double>(dims.hidden);
            ad::Val disp = (cfg.w_disp * inv_n) * squared_norm(h_next - h);
            ad::Val growth =
                (cfg.w_grow * inv_n) * hinge(squared_norm(h_next) - squared_norm(h));
            ad::Val b = disp + growth;
            out.burdens.push_back(b);

            ad::Val new_load;
            if (cfg.path_mode == PathMode::Uniform) {
                new_load = load.valid() ? (load + cfg.alpha * b) : cfg.alpha * b;
            } else {
                new_load = load.valid() ? (cfg.lambda_path * load + b) : b;
            }
            load = new_load;
            out.loads.push_back(load);

            // r = max{r_min, r0 exp(-kappa L)}, floor via hinge so the kink
            // convention matches feasible_radius
            ad::Val decayed = cfg.r0 * exp((-cfg.kappa) * load);
            ad::Val r = hinge(decayed - cfg.r_min) + cfg.r_min;
            out.radii.push_back(r);
            radius_in_effect = r;
        }

        out.logits.push_back(matvec(leaves.W_o, h_next) + leaves.b_o);
        out.states.push_back(h_next);
        h = h_next;
    }
    return out;
}

}  // namespace burdenlab::dynamics
