#include "burdenlab/cell.hpp"

#include <json.hpp>

namespace burdenlab {

namespace {

constexpr int kCellFormatVersion = 1;

void check_dims(const CellDims& d) {
    if (d.hidden < 1 || d.embedding < 1 || d.vocab < 2) {
        throw DimensionError("cell dims must satisfy n >= 1, d >= 1, v >= 2");
    }
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> CellParams::entries() {
    return {{"W_h", &W_h}, {"W_x", &W_x}, {"b", &b},     {"U_h", &U_h}, {"U_x", &U_x},
            {"c", &c},     {"W_o", &W_o}, {"b_o", &b_o}, {"E", &E}};
}

std::vector<std::pair<std::string, const Matrix*>> CellParams::entries() const {
    auto mutable_entries = const_cast<CellParams*>(this)->entries();
    std::vector<std::pair<std::string, const Matrix*>> out;
    out.reserve(mutable_entries.size());
    for (auto& [name, ptr] : mutable_entries) {
        out.emplace_back(name, ptr);
    }
    return out;
}

long CellParams::parameter_count() const {
    long total = 0;
    for (const auto& [name, ptr] : entries()) {
        total += ptr->size();
    }
    return total;
}

bool CellParams::all_finite() const {
    for (const auto& [name, ptr] : entries()) {
        if (!ptr->allFinite()) return false;
    }
    return true;
}

void CellParams::check_consistent() const {
    check_dims(dims);
    const long n = dims.hidden;
    const long d = dims.embedding;
    const long v = dims.vocab;
    const auto expect = [](const Matrix& m, long r, long c, const char* name) {
        if (m.rows() != r || m.cols() != c) {
            throw DimensionError(std::string("cell weight ") + name + " has wrong shape");
        }
    };
    expect(W_h, n, n, "W_h");
    expect(W_x, n, d, "W_x");
    expect(b, n, 1, "b");
    expect(U_h, n, n, "U_h");
    expect(U_x, n, d, "U_x");
    expect(c, n, 1, "c");
    expect(W_o, v, n, "W_o");
    expect(b_o, v, 1, "b_o");
    expect(E, d, v, "E");
    if (!all_finite()) {
        throw NumericsError("cell weights contain non-finite entries");
    }
}

CellParams make_zero_cell(const CellDims& dims) {
    check_dims(dims);
    CellParams p;
    p.dims = dims;
    const long n = dims.hidden;
    const long d = dims.embedding;
    const long v = dims.vocab;
    p.W_h = Matrix::Zero(n, n);
    p.W_x = Matrix::Zero(n, d);
    p.b = Vector::Zero(n);
    p.U_h = Matrix::Zero(n, n);
    p.U_x = Matrix::Zero(n, d);
    p.c = Vector::Zero(n);
    p.W_o = Matrix::Zero(v, n);
    p.b_o = Vector::Zero(v);
    p.E = Matrix::Zero(d, v);
    return p;
}

CellParams make_random_cell(const CellDims& dims, RngStream& stream) {
    CellParams p = make_zero_cell(dims);
    for (auto& [name, ptr] : p.entries()) {
        Matrix& m = *ptr;
        for (long i = 0; i < m.rows(); ++i) {
            for (long j = 0; j < m.cols(); ++j) {
                m(i, j) = stream.uniform(-0.2, 0.2);
            }
        }
    }
    return p;
}

std::string cell_to_json(const CellParams& params) {
    params.check_consistent();
    nlohmann::json doc;
    doc["format_version"] = kCellFormatVersion;
    doc["kind"] = "cell_params";
    doc["hidden"] = params.dims.hidden;
    doc["embedding"] = params.dims.embedding;
    doc["vocab"] = params.dims.vocab;
    nlohmann::json weights;
    for (const auto& [name, ptr] : params.entries()) {
        std::vector<double> flat;
        flat.reserve(static_cast<size_t>(ptr->size()));
        for (long i = 0; i < ptr->rows(); ++i) {
            for (long j = 0; j < ptr->cols(); ++j) {
                flat.push_back((*ptr)(i, j));
            }
        }
        weights[name] = std::move(flat);
    }
    doc["weights"] = std::move(weights);
    return doc.dump(2);
}

CellParams cell_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("cell document is not valid JSON: ") + e.what());
    }
    if (doc.value("kind", "") != "cell_params") {
        throw ConfigError("cell document has wrong kind");
    }
    if (doc.value("format_version", -1) != kCellFormatVersion) {
        throw ConfigError("unsupported cell format_version");
    }
    CellDims dims{doc.at("hidden").get<int>(), doc.at("embedding").get<int>(),
                  doc.at("vocab").get<int>()};
    CellParams p = make_zero_cell(dims);
    for (auto& [name, ptr] : p.entries()) {
        const auto& flat = doc.at("weights").at(name);
        if (static_cast<long>(flat.size()) != ptr->size()) {
            throw ConfigError("cell weight " + name + " has wrong length");
        }
        size_t k = 0;
        for (long i = 0; i < ptr->rows(); ++i) {
            for (long j = 0; j < ptr->cols(); ++j) {
                (*ptr)(i, j) = flat[k++].get<double>();
            }
        }
    }
    p.check_consistent();
    return p;
}

}  // namespace burdenlab
