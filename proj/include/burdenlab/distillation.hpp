#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "burdenlab/cell.hpp"
#include "burdenlab/common.hpp"
#include "burdenlab/dynamics.hpp"
#include "burdenlab/tasks.hpp"
#include "burdenlab/training.hpp"

namespace burdenlab::distill {

struct DistillConfig {
    int budget = 1000;             // teacher-labeled sequences
    double kd_temperature = 2.0;   // T_kd
    double shrink = 0.5;           // student hidden-size ratio
    double epsilon_target = 0.05;  // capability tolerance the arm aims for
    int discrepancy_samples = 500;
    training::OptimConfig student_optim;

    void validate() const;
};

// What the student sees: input tokens and the teacher's output logits at the
// scored positions. Deliberately has no field that could carry hidden
// states, burdens or path loads.
struct LabeledCorpus {
    std::vector<std::vector<int>> sequences;
    std::vector<std::vector<int>> target_positions;
    std::vector<std::vector<Vector>> teacher_logits;

    int size() const { return static_cast<int>(sequences.size()); }
};

struct StudentArm {
    std::string teacher_id;
    CellParams student;
    int budget_used = 0;
    double final_distill_loss = 0.0;
    double discrepancy_mean = 0.0;
    double discrepancy_stderr = 0.0;
};

// Fresh student with hidden size ceil(shrink * n); embedding and vocabulary
// match the teacher. Throws when the shrunken hidden size falls below 2.
CellParams make_student(const CellDims& teacher_dims, double shrink, std::uint64_t seed);

// T^2 * sum_k KL(softmax(teacher_k / T) || softmax(student_k / T))
double distill_loss(const std::vector<Vector>& student_logits,
                    const std::vector<Vector>& teacher_logits, double kd_temperature);

// Runs the teacher over `budget` fresh task draws under its deployed
// enforcement mode and keeps only the logits at target positions.
LabeledCorpus label_corpus(const CellParams& teacher,
                           const dynamics::ConstraintConfig& teacher_deployed,
                           const tasks::SequenceTask& task, int budget, RngStream& data_stream);

// Output-only distillation: initializes a student, labels a corpus, and
// trains the student on the tempered KL alone; no constraint term is ever
// part of the student's objective. Deterministic given `seed`.
StudentArm distill(const CellParams& teacher, const dynamics::ConstraintConfig& teacher_deployed,
                   const tasks::SequenceTask& task, const DistillConfig& dcfg,
                   std::uint64_t seed, const std::string& teacher_id);

struct Discrepancy {
    double mean = 0.0;
    double stderr = 0.0;
    int samples = 0;
};

// Monte Carlo estimate of the per-sequence discrepancy at T = 1 on fresh
// draws from the task distribution.
Discrepancy behavior_discrepancy(const CellParams& student,
                                 const dynamics::ConstraintConfig& student_deployed,
                                 const CellParams& teacher,
                                 const dynamics::ConstraintConfig& teacher_deployed,
                                 const tasks::SequenceTask& task, int sample_size,
                                 std::uint64_t seed);

std::string student_arm_to_json(const StudentArm& arm);
StudentArm student_arm_from_json(const std::string& text);

}  // namespace burdenlab::distill
