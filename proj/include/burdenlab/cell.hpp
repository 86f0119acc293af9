#pragma once

#include <string>
#include <vector>

#include "burdenlab/common.hpp"
#include "burdenlab/rng.hpp"

namespace burdenlab {

struct CellDims {
    int hidden = 0;     // n
    int embedding = 0;  // d
    int vocab = 0;      // v
    bool operator==(const CellDims&) const = default;
};

// Weights of the gated recurrent cell plus output head and token embedding.
//
//   z    = sigmoid(U_h h + U_x E[:,x] + c)
//   cand = tanh(W_h h + W_x E[:,x] + b)
//   h'   = (1 - z) .* h + z .* cand
//   y    = W_o h' + b_o
struct CellParams {
    CellDims dims;
    Matrix W_h;  // n x n
    Matrix W_x;  // n x d
    Matrix b;    // n x 1
    Matrix U_h;  // n x n
    Matrix U_x;  // n x d
    Matrix c;    // n x 1
    Matrix W_o;  // v x n
    Matrix b_o;  // v x 1
    Matrix E;    // d x v

    // Named views over every weight matrix, in a fixed order. Vectors appear
    // as n x 1 blocks. Used for SGD updates, gradient plumbing and
    // serialization.
    std::vector<std::pair<std::string, Matrix*>> entries();
    std::vector<std::pair<std::string, const Matrix*>> entries() const;

    long parameter_count() const;
    bool all_finite() const;
    void check_consistent() const;  // throws DimensionError
};

// Zero-valued parameters of the given dimensions.
CellParams make_zero_cell(const CellDims& dims);

// Entries drawn uniformly from [-0.2, 0.2].
CellParams make_random_cell(const CellDims& dims, RngStream& stream);

// Versioned JSON document with row-major flattened weights.
std::string cell_to_json(const CellParams& params);
CellParams cell_from_json(const std::string& text);

}  // namespace burdenlab
