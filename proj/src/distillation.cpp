#include "burdenlab/distillation.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

namespace burdenlab::distill {

using dynamics::ConstraintConfig;

void DistillConfig::validate() const {
    if (budget < 0) throw ConfigError("distill budget must be >= 0");
    if (!(kd_temperature > 0.0)) throw ConfigError("kd_temperature must be > 0");
    if (!(shrink > 0.0 && shrink <= 1.0)) throw ConfigError("shrink must lie in (0, 1]");
    if (epsilon_target < 0.0) throw ConfigError("epsilon_target must be >= 0");
    if (discrepancy_samples < 1) throw ConfigError("discrepancy_samples must be >= 1");
    student_optim.validate();
}

CellParams make_student(const CellDims& teacher_dims, double shrink, std::uint64_t seed) {
    if (!(shrink > 0.0 && shrink <= 1.0)) {
        throw ConfigError("make_student: shrink must lie in (0, 1]");
    }
    const int hidden = static_cast<int>(
        std::ceil(shrink * static_cast<double>(teacher_dims.hidden)));
    if (hidden < 2) {
        throw ConfigError("make_student: shrink " + std::to_string(shrink) +
                          " yields hidden size < 2");
    }
    RngStream init(seed, "student-init");
    return make_random_cell({hidden, teacher_dims.embedding, teacher_dims.vocab}, init);
}

namespace {

// Stable log-softmax at temperature T.
Vector log_softmax_tempered(const Vector& logits, double temperature) {
    const Vector scaled = logits / temperature;
    const double m = scaled.maxCoeff();
    const double lse = m + std::log((scaled.array() - m).exp().sum());
    return (scaled.array() - lse).matrix();
}

double kl_pair(const Vector& teacher, const Vector& student, double temperature) {
    if (teacher.size() != student.size()) {
        throw DimensionError("distill_loss: logit length mismatch");
    }
    const Vector log_p = log_softmax_tempered(teacher, temperature);
    const Vector log_q = log_softmax_tempered(student, temperature);
    double kl = 0.0;
    for (long i = 0; i < teacher.size(); ++i) {
        kl += std::exp(log_p(i)) * (log_p(i) - log_q(i));
    }
    return kl;
}

}  // namespace

double distill_loss(const std::vector<Vector>& student_logits,
                    const std::vector<Vector>& teacher_logits, double kd_temperature) {
    if (student_logits.size() != teacher_logits.size()) {
        throw DimensionError("distill_loss: position count mismatch");
    }
    if (!(kd_temperature > 0.0)) {
        throw Error("distill_loss: temperature must be positive");
    }
    double total = 0.0;
    for (size_t k = 0; k < student_logits.size(); ++k) {
        total += kl_pair(teacher_logits[k], student_logits[k], kd_temperature);
    }
    return kd_temperature * kd_temperature * total;
}

LabeledCorpus label_corpus(const CellParams& teacher, const ConstraintConfig& teacher_deployed,
                           const tasks::SequenceTask& task, int budget, RngStream& data_stream) {
    LabeledCorpus corpus;
    if (budget == 0) {
        return corpus;
    }
    const tasks::Batch batch = tasks::generate(task, budget, data_stream);
    corpus.sequences = batch.sequences;
    corpus.target_positions = batch.target_positions;
    corpus.teacher_logits.reserve(static_cast<size_t>(budget));
    for (int s = 0; s < batch.size(); ++s) {
        const auto rec = dynamics::rollout(teacher, teacher_deployed,
                                           batch.sequences[static_cast<size_t>(s)]);
        std::vector<Vector> logits;
        logits.reserve(batch.target_positions[static_cast<size_t>(s)].size());
        for (int pos : batch.target_positions[static_cast<size_t>(s)]) {
            logits.push_back(rec.logits[static_cast<size_t>(pos)]);
        }
        corpus.teacher_logits.push_back(std::move(logits));
    }
    return corpus;
}

namespace {

// One pass of minibatch SGD over the corpus in the given order.
void fit_epoch(CellParams& student, const LabeledCorpus& corpus,
               const std::vector<int>& order, const DistillConfig& dcfg) {
    const auto& optim = dcfg.student_optim;
    // students run unconstrained; config only carries defaults for rollout
    const ConstraintConfig plain{};
    const int total = corpus.size();
    for (int start = 0; start < total; start += optim.batch_size) {
        const int end = std::min(total, start + optim.batch_size);
        ad::Graph graph;
        const auto leaves = dynamics::make_cell_leaves(graph, student);
        std::vector<ad::Val> seq_losses;
        seq_losses.reserve(static_cast<size_t>(end - start));
        for (int k = start; k < end; ++k) {
            const size_t idx = static_cast<size_t>(order[static_cast<size_t>(k)]);
            const auto traj = dynamics::unroll(graph, leaves, student.dims, plain,
                                               corpus.sequences[idx], false);
            std::vector<ad::Val> kls;
            const auto& positions = corpus.target_positions[idx];
            for (size_t p = 0; p < positions.size(); ++p) {
                const ad::Val teacher_leaf =
                    graph.leaf(Matrix(corpus.teacher_logits[idx][p]));
                kls.push_back(graph.kl_tempered_softmax(
                    teacher_leaf, traj.logits[static_cast<size_t>(positions[p])],
                    dcfg.kd_temperature));
            }
            ad::Val acc = kls.front();
            for (size_t p = 1; p < kls.size(); ++p) acc = graph.add(acc, kls[p]);
            seq_losses.push_back(graph.scale(acc, dcfg.kd_temperature * dcfg.kd_temperature));
        }
        ad::Val loss = seq_losses.front();
        for (size_t k = 1; k < seq_losses.size(); ++k) loss = graph.add(loss, seq_losses[k]);
        loss = graph.scale(loss, 1.0 / static_cast<double>(end - start));

        graph.forward(loss);
        graph.backward(loss);

        const auto named = leaves.named();
        double squared = 0.0;
        for (const auto& [name, leaf] : named) squared += graph.adjoint(leaf).squaredNorm();
        const double norm = std::sqrt(squared);
        const double scale = norm > optim.clip_norm ? optim.clip_norm / norm : 1.0;
        auto entries = student.entries();
        for (size_t k = 0; k < named.size(); ++k) {
            *entries[k].second -= optim.learning_rate * scale * graph.adjoint(named[k].second);
        }
    }
}

double corpus_loss(const CellParams& student, const LabeledCorpus& corpus,
                   const DistillConfig& dcfg) {
    const ConstraintConfig plain{};
    double total = 0.0;
    for (int s = 0; s < corpus.size(); ++s) {
        const size_t idx = static_cast<size_t>(s);
        const auto rec = dynamics::rollout(student, plain, corpus.sequences[idx]);
        std::vector<Vector> student_logits;
        for (int pos : corpus.target_positions[idx]) {
            student_logits.push_back(rec.logits[static_cast<size_t>(pos)]);
        }
        total += distill_loss(student_logits, corpus.teacher_logits[idx], dcfg.kd_temperature);
    }
    return total / static_cast<double>(corpus.size());
}

}  // namespace

StudentArm distill(const CellParams& teacher, const ConstraintConfig& teacher_deployed,
                   const tasks::SequenceTask& task, const DistillConfig& dcfg,
                   std::uint64_t seed, const std::string& teacher_id) {
    teacher.check_consistent();
    dcfg.validate();
    task.validate();

    StudentArm arm;
    arm.teacher_id = teacher_id;
    arm.student = make_student(teacher.dims, dcfg.shrink, seed);
    arm.budget_used = dcfg.budget;

    if (dcfg.budget > 0) {
        RngStream corpus_stream(seed, "distill-corpus");
        const LabeledCorpus corpus =
            label_corpus(teacher, teacher_deployed, task, dcfg.budget, corpus_stream);

        RngStream order_stream(seed, "distill-order");
        std::vector<int> order(static_cast<size_t>(corpus.size()));
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < dcfg.student_optim.epochs; ++epoch) {
            for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
                const int j = order_stream.uniform_int(i + 1);
                std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
            }
            fit_epoch(arm.student, corpus, order, dcfg);
        }
        arm.final_distill_loss = corpus_loss(arm.student, corpus, dcfg);
    }

    const ConstraintConfig student_deployed{};
    const Discrepancy d =
        behavior_discrepancy(arm.student, student_deployed, teacher, teacher_deployed, task,
                             dcfg.discrepancy_samples, seed);
    arm.discrepancy_mean = d.mean;
    arm.discrepancy_stderr = d.stderr;
    return arm;
}

Discrepancy behavior_discrepancy(const CellParams& student,
                                 const ConstraintConfig& student_deployed,
                                 const CellParams& teacher,
                                 const ConstraintConfig& teacher_deployed,
                                 const tasks::SequenceTask& task, int sample_size,
                                 std::uint64_t seed) {
    if (sample_size < 1) throw Error("behavior_discrepancy: sample_size must be >= 1");
    RngStream stream(seed, "discrepancy-data");
    const tasks::Batch batch = tasks::generate(task, sample_size, stream);
    std::vector<double> values;
    values.reserve(static_cast<size_t>(sample_size));
    for (int s = 0; s < batch.size(); ++s) {
        const size_t idx = static_cast<size_t>(s);
        const auto srec = dynamics::rollout(student, student_deployed, batch.sequences[idx]);
        const auto trec = dynamics::rollout(teacher, teacher_deployed, batch.sequences[idx]);
        std::vector<Vector> s_logits;
        std::vector<Vector> t_logits;
        for (int pos : batch.target_positions[idx]) {
            s_logits.push_back(srec.logits[static_cast<size_t>(pos)]);
            t_logits.push_back(trec.logits[static_cast<size_t>(pos)]);
        }
        values.push_back(distill_loss(s_logits, t_logits, 1.0));
    }
    Discrepancy out;
    out.samples = sample_size;
    const double n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stderr = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return out;
}

std::string student_arm_to_json(const StudentArm& arm) {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["kind"] = "student_arm";
    doc["teacher_id"] = arm.teacher_id;
    doc["budget_used"] = arm.budget_used;
    doc["final_distill_loss"] = arm.final_distill_loss;
    doc["discrepancy_mean"] = arm.discrepancy_mean;
    doc["discrepancy_stderr"] = arm.discrepancy_stderr;
    doc["student"] = nlohmann::json::parse(cell_to_json(arm.student));
    return doc.dump(2);
}

StudentArm student_arm_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("student arm document is not valid JSON: ") + e.what());
    }
    if (doc.value("kind", "") != "student_arm") {
        throw ConfigError("student arm document has wrong kind");
    }
    StudentArm arm;
    arm.teacher_id = doc.at("teacher_id").get<std::string>();
    arm.budget_used = doc.at("budget_used").get<int>();
    arm.final_distill_loss = doc.at("final_distill_loss").get<double>();
    arm.discrepancy_mean = doc.at("discrepancy_mean").get<double>();
    arm.discrepancy_stderr = doc.at("discrepancy_stderr").get<double>();
    arm.student = cell_from_json(doc.at("student").dump());
    return arm;
}

}  // namespace burdenlab::distill
