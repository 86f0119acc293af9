#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "burdenlab/common.hpp"
#include "burdenlab/rng.hpp"

namespace burdenlab::tasks {

enum class TaskKind { Copy, Parity, ModSum };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

// A seeded synthetic sequence task. `length` is the content length: the
// number of random payload symbols. Copy sequences append a query marker,
// `delay` neutral filler steps and one recall slot per payload symbol, so
// their token count exceeds `length`.
struct SequenceTask {
    TaskKind kind = TaskKind::Parity;
    int vocab = 8;
    int length = 8;
    int delay = 2;    // copy only
    int modulus = 5;  // modsum only
    int horizon_factor = 1;  // bookkeeping for extended-horizon variants

    void validate() const;
    int content_length() const { return length * horizon_factor; }
    // Token count of one generated sequence.
    int sequence_tokens() const;
    std::string name() const;
};

struct Batch {
    std::vector<std::vector<int>> sequences;
    std::vector<std::vector<int>> target_positions;  // indices into the sequence
    std::vector<std::vector<int>> target_labels;

    int size() const { return static_cast<int>(sequences.size()); }
};

// Draws `count` sequences. Labels are produced by the generator's own
// bookkeeping; reference_labels() recomputes them from raw tokens.
Batch generate(const SequenceTask& task, int count, RngStream& stream);

// Independent re-derivation of (target positions, labels) from a raw token
// sequence. Kept free of any generator state on purpose: tests compare the
// two implementations.
std::pair<std::vector<int>, std::vector<int>> reference_labels(const SequenceTask& task,
                                                               const std::vector<int>& tokens);

// Same task at `factor` times the content length. Horizon variants keep the
// task parameters and seed lineage; their samples come from whatever stream
// the caller passes to generate().
SequenceTask extend_horizon(const SequenceTask& task, int factor);

// Adds i.i.d. Gaussian noise of scale sigma to every column of a d x T
// embedding matrix. Token ids are never touched; noise probes the dynamics.
Matrix perturb_embeddings(const Matrix& embeddings, double sigma, RngStream& stream);

// Convenience: pure noise for a d x T rollout, i.e. perturb_embeddings of a
// zero matrix.
Matrix embedding_noise(int embedding_dim, int steps, double sigma, RngStream& stream);

// One JSON object per sequence: {"tokens": [...], "target_positions": [...],
// "target_labels": [...]}.
void write_jsonl(const Batch& batch, std::ostream& out);

}  // namespace burdenlab::tasks
