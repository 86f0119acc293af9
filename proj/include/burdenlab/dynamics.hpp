#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "burdenlab/cell.hpp"
#include "burdenlab/common.hpp"
#include "burdenlab/graph.hpp"

namespace burdenlab::dynamics {

enum class PathMode { Uniform, Discounted };
enum class Enforcement { Soft, Hard };

std::string to_string(PathMode mode);
std::string to_string(Enforcement mode);
PathMode path_mode_from_string(const std::string& s);
Enforcement enforcement_from_string(const std::string& s);

// Constants governing the transition burden, its threshold, path-load
// accumulation and the shrinking feasible region.
struct ConstraintConfig {
    double w_disp = 1.0;          // displacement weight in the burden
    double w_grow = 0.5;          // norm-growth weight in the burden
    double burden_threshold = 0.5;  // B, constant schedule
    PathMode path_mode = PathMode::Uniform;
    double alpha = 1.0;           // uniform path-load weight
    double lambda_path = 0.95;    // discount for the discounted mode
    double r0 = 3.0;              // initial feasible radius
    double kappa = 0.05;          // contraction rate
    double r_min = 0.5;           // radius floor
    Enforcement enforcement = Enforcement::Soft;

    void validate() const;  // throws ConfigError on violated invariants
};

// Per-step record of one constrained rollout.
//
// states[0] is the initial state; states[t] for t = 1..T is the state after
// consuming token t-1. burdens/loads/radii/flags/logits are indexed 0..T-1
// for the transition into states[t+1 - 1]... i.e. entry t describes the
// transition states[t] -> states[t+1]. The radius in effect for that
// transition is radii of the previous entry (r0 for the first).
struct TrajectoryRecord {
    std::vector<Vector> states;               // T + 1 entries
    std::vector<double> burdens;              // T entries, b_t >= 0
    std::vector<double> loads;                // T entries, L_t
    std::vector<double> radii;                // T entries, r(L_t)
    std::vector<std::uint8_t> burden_violations;       // b_t > B
    std::vector<std::uint8_t> feasibility_violations;  // ||h_{t+1}|| > r_t
    std::vector<Vector> logits;               // T entries, W_o h_{t+1} + b_o

    int steps() const { return static_cast<int>(burdens.size()); }
    std::string to_json() const;
};

// One application of the gated recurrent cell. Throws if token is out of
// vocabulary. `embedding_noise`, when given, is added to the token embedding.
Vector step(const CellParams& params, const Vector& h, int token,
            const Vector* embedding_noise = nullptr);

// Burden of the transition h -> h_next:
//   w_disp * (1/n) ||h_next - h||^2 + w_grow * (1/n) max{0, ||h_next||^2 - ||h||^2}
// The token argument is unused by this functional but kept in the signature
// so burden definitions that depend on the input remain drop-in.
double transition_burden(const Vector& h, const Vector& h_next, int token,
                         const ConstraintConfig& cfg);

// L_t from L_{t-1} and the new burden. Uniform: L + alpha*b.
// Discounted: lambda*L + b. Throws on negative burden.
double path_load_update(double load_prev, double burden, const ConstraintConfig& cfg);

// max{r_min, r0 * exp(-kappa * L)}
double feasible_radius(double load, const ConstraintConfig& cfg);

// (max{0, ||h_next|| - r})^2 ; zero on and inside the boundary.
double feasibility_penalty(const Vector& h_next, double radius);

// Nearest point of the radius-r ball: identity inside, rescale outside.
Vector project(const Vector& h, double radius);

// Full constrained rollout from h_0 = 0 over the token sequence. Under hard
// enforcement each new state is projected into the current feasible region
// before the burden is computed.
TrajectoryRecord rollout(const CellParams& params, const ConstraintConfig& cfg,
                         const std::vector<int>& tokens,
                         const Matrix* embedding_noise = nullptr);

// Graph-building twin of rollout(), used to differentiate objectives through
// the constrained dynamics. Leaves for the cell weights are created once and
// shared by every unroll on the same graph.
struct CellLeaves {
    ad::Val W_h, W_x, b, U_h, U_x, c, W_o, b_o, E;
    std::vector<std::pair<std::string, ad::Val>> named() const;
};

CellLeaves make_cell_leaves(ad::Graph& graph, const CellParams& params);

struct UnrolledTrajectory {
    std::vector<ad::Val> states;   // T + 1 entries, states[0] is the zero leaf
    std::vector<ad::Val> burdens;  // T entries
    std::vector<ad::Val> loads;    // T entries
    std::vector<ad::Val> radii;    // T entries
    std::vector<ad::Val> logits;   // T entries
};

// When `with_constraints` is false only states and logits are populated; no
// burden, load or radius node is ever constructed.
UnrolledTrajectory unroll(ad::Graph& graph, const CellLeaves& leaves, const CellDims& dims,
                          const ConstraintConfig& cfg, const std::vector<int>& tokens,
                          bool with_constraints, const Matrix* embedding_noise = nullptr);

}  // namespace burdenlab::dynamics
