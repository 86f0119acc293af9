#include "burdenlab/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace burdenlab::tasks {

namespace {

// Copy-task alphabet: payload symbols are 0..v-3, v-2 is neutral filler,
// v-1 is the query marker.
int filler_token(const SequenceTask& task) { return task.vocab - 2; }
int marker_token(const SequenceTask& task) { return task.vocab - 1; }
int payload_symbols(const SequenceTask& task) { return task.vocab - 2; }

}  // namespace

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Copy: return "copy";
        case TaskKind::Parity: return "parity";
        case TaskKind::ModSum: return "modsum";
    }
    throw Error("unreachable task kind");
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "copy") return TaskKind::Copy;
    if (s == "parity") return TaskKind::Parity;
    if (s == "modsum") return TaskKind::ModSum;
    throw ConfigError("unknown task kind: " + s);
}

void SequenceTask::validate() const {
    if (length < 1) throw ConfigError("task length must be >= 1");
    if (horizon_factor < 1) throw ConfigError("horizon factor must be >= 1");
    switch (kind) {
        case TaskKind::Copy:
            if (vocab < 4) throw ConfigError("copy task needs vocab >= 4");
            if (delay < 0) throw ConfigError("copy delay must be >= 0");
            break;
        case TaskKind::Parity:
            if (vocab < 2) throw ConfigError("parity task needs vocab >= 2");
            break;
        case TaskKind::ModSum:
            if (modulus < 2) throw ConfigError("modsum modulus must be >= 2");
            if (modulus > vocab) throw ConfigError("modsum modulus cannot exceed vocab");
            break;
    }
}

int SequenceTask::sequence_tokens() const {
    const int content = content_length();
    if (kind == TaskKind::Copy) {
        return content + 1 + delay + content;
    }
    return content;
}

std::string SequenceTask::name() const {
    std::string base = to_string(kind);
    if (horizon_factor > 1) {
        base += "_x" + std::to_string(horizon_factor);
    }
    return base;
}

Batch generate(const SequenceTask& task, int count, RngStream& stream) {
    task.validate();
    if (count < 1) throw Error("generate: count must be >= 1");
    const int content = task.content_length();
    Batch batch;
    batch.sequences.reserve(count);
    batch.target_positions.reserve(count);
    batch.target_labels.reserve(count);

    for (int s = 0; s < count; ++s) {
        std::vector<int> tokens;
        std::vector<int> positions;
        std::vector<int> labels;
        switch (task.kind) {
            case TaskKind::Copy: {
                std::vector<int> payload(content);
                for (int& sym : payload) sym = stream.uniform_int(payload_symbols(task));
                tokens = payload;
                tokens.push_back(marker_token(task));
                tokens.insert(tokens.end(), static_cast<size_t>(task.delay + content),
                              filler_token(task));
                const int first_recall = content + 1 + task.delay;
                for (int j = 0; j < content; ++j) {
                    positions.push_back(first_recall + j);
                    labels.push_back(payload[static_cast<size_t>(j)]);
                }
                break;
            }
            case TaskKind::Parity: {
                int running = 0;
                tokens.resize(content);
                for (int& bit : tokens) {
                    bit = stream.uniform_int(2);
                    running ^= bit;
                }
                positions.push_back(content - 1);
                labels.push_back(running);
                break;
            }
            case TaskKind::ModSum: {
                int running = 0;
                tokens.resize(content);
                for (int& digit : tokens) {
                    digit = stream.uniform_int(task.modulus);
                    running += digit;
                }
                positions.push_back(content - 1);
                labels.push_back(running % task.modulus);
                break;
            }
        }
        batch.sequences.push_back(std::move(tokens));
        batch.target_positions.push_back(std::move(positions));
        batch.target_labels.push_back(std::move(labels));
    }
    return batch;
}

std::pair<std::vector<int>, std::vector<int>> reference_labels(const SequenceTask& task,
                                                               const std::vector<int>& tokens) {
    task.validate();
    std::vector<int> positions;
    std::vector<int> labels;
    switch (task.kind) {
        case TaskKind::Copy: {
            const auto marker_it = std::find(tokens.begin(), tokens.end(), marker_token(task));
            if (marker_it == tokens.end()) {
                throw Error("reference_labels: copy sequence has no marker");
            }
            const int payload_len = static_cast<int>(marker_it - tokens.begin());
            const int first_recall =
                payload_len + 1 + task.delay;
            if (first_recall + payload_len > static_cast<int>(tokens.size())) {
                throw Error("reference_labels: copy sequence too short for its payload");
            }
            for (int j = 0; j < payload_len; ++j) {
                positions.push_back(first_recall + j);
                labels.push_back(tokens[static_cast<size_t>(j)]);
            }
            break;
        }
        case TaskKind::Parity: {
            const int total = std::accumulate(tokens.begin(), tokens.end(), 0);
            positions.push_back(static_cast<int>(tokens.size()) - 1);
            labels.push_back(total % 2);
            break;
        }
        case TaskKind::ModSum: {
            const int label = std::accumulate(tokens.begin(), tokens.end(), 0,
                                              [&](int acc, int digit) {
                                                  return (acc + digit) % task.modulus;
                                              });
            positions.push_back(static_cast<int>(tokens.size()) - 1);
            labels.push_back(label);
            break;
        }
    }
    return {positions, labels};
}

SequenceTask extend_horizon(const SequenceTask& task, int factor) {
    if (factor < 1) throw ConfigError("extend_horizon: factor must be >= 1");
    SequenceTask out = task;
    out.horizon_factor = task.horizon_factor * factor;
    return out;
}

Matrix perturb_embeddings(const Matrix& embeddings, double sigma, RngStream& stream) {
    if (sigma < 0.0) throw Error("perturb_embeddings: sigma must be >= 0");
    Matrix out = embeddings;
    if (sigma == 0.0) {
        return out;
    }
    for (long j = 0; j < out.cols(); ++j) {
        for (long i = 0; i < out.rows(); ++i) {
            out(i, j) += stream.normal(sigma);
        }
    }
    return out;
}

Matrix embedding_noise(int embedding_dim, int steps, double sigma, RngStream& stream) {
    return perturb_embeddings(Matrix::Zero(embedding_dim, steps), sigma, stream);
}

void write_jsonl(const Batch& batch, std::ostream& out) {
    for (int i = 0; i < batch.size(); ++i) {
        nlohmann::json line;
        line["tokens"] = batch.sequences[static_cast<size_t>(i)];
        line["target_positions"] = batch.target_positions[static_cast<size_t>(i)];
        line["target_labels"] = batch.target_labels[static_cast<size_t>(i)];
        out << line.dump() << "\n";
    }
}

}  // namespace burdenlab::tasks
