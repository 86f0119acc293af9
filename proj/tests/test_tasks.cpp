#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "burdenlab/rng.hpp"
#include "burdenlab/tasks.hpp"

using namespace burdenlab;
using tasks::SequenceTask;
using tasks::TaskKind;

TEST_CASE("parity label is the bit sum mod 2") {
    SequenceTask task;
    task.kind = TaskKind::Parity;
    task.length = 3;
    const auto [positions, labels] = tasks::reference_labels(task, {1, 0, 1});
    CHECK(positions == std::vector<int>{2});
    CHECK(labels == std::vector<int>{0});
}

TEST_CASE("modsum label is the running sum mod k") {
    SequenceTask task;
    task.kind = TaskKind::ModSum;
    task.length = 2;
    task.modulus = 5;
    const auto [positions, labels] = tasks::reference_labels(task, {3, 4});
    CHECK(positions == std::vector<int>{1});
    CHECK(labels == std::vector<int>{2});
}

TEST_CASE("copy with zero delay recalls right after the marker") {
    SequenceTask task;
    task.kind = TaskKind::Copy;
    task.vocab = 8;
    task.length = 3;
    task.delay = 0;
    // payload 2,5,1 then marker (7) then three recall slots of filler (6)
    const std::vector<int> tokens{2, 5, 1, 7, 6, 6, 6};
    const auto [positions, labels] = tasks::reference_labels(task, tokens);
    CHECK(positions == std::vector<int>{4, 5, 6});
    CHECK(labels == std::vector<int>{2, 5, 1});
}

TEST_CASE("generated sequences have the declared layout") {
    RngStream stream(3, "layout");
    SequenceTask task;
    task.kind = TaskKind::Copy;
    task.vocab = 8;
    task.length = 5;
    task.delay = 2;
    const auto batch = tasks::generate(task, 10, stream);
    for (const auto& tokens : batch.sequences) {
        REQUIRE(static_cast<int>(tokens.size()) == task.sequence_tokens());
        CHECK(tokens[5] == 7);  // marker right after the payload
        for (int j = 0; j < 5; ++j) {
            CHECK(tokens[static_cast<size_t>(j)] < 6);  // payload symbols only
        }
        for (size_t j = 6; j < tokens.size(); ++j) {
            CHECK(tokens[j] == 6);  // filler for delay and recall slots
        }
    }
}

TEST_CASE("generator labels equal the independent reference") {
    RngStream stream(11, "oracle");
    for (const TaskKind kind : {TaskKind::Copy, TaskKind::Parity, TaskKind::ModSum}) {
        SequenceTask task;
        task.kind = kind;
        task.vocab = 8;
        task.length = 8;
        task.delay = 2;
        task.modulus = 5;
        for (const int factor : {1, 2, 4}) {
            const auto extended = tasks::extend_horizon(task, factor);
            const auto batch = tasks::generate(extended, 200, stream);
            for (int s = 0; s < batch.size(); ++s) {
                const auto [positions, labels] =
                    tasks::reference_labels(extended, batch.sequences[static_cast<size_t>(s)]);
                CHECK(batch.target_positions[static_cast<size_t>(s)] == positions);
                CHECK(batch.target_labels[static_cast<size_t>(s)] == labels);
            }
        }
    }
}

TEST_CASE("horizon extension scales the content length") {
    SequenceTask task;
    task.kind = TaskKind::Parity;
    task.length = 8;
    const auto doubled = tasks::extend_horizon(task, 2);
    CHECK(doubled.content_length() == 16);
    CHECK(doubled.name() == "parity_x2");
    const auto same = tasks::extend_horizon(task, 1);
    CHECK(same.content_length() == 8);
    const auto chained = tasks::extend_horizon(doubled, 2);
    CHECK(chained.content_length() == 32);
    CHECK_THROWS_AS(tasks::extend_horizon(task, 0), ConfigError);
}

TEST_CASE("generation is a pure function of the stream state") {
    SequenceTask task;
    task.kind = TaskKind::ModSum;
    task.length = 6;
    task.modulus = 5;
    RngStream a(99, "gen");
    RngStream b(99, "gen");
    const auto batch_a = tasks::generate(task, 50, a);
    const auto batch_b = tasks::generate(task, 50, b);
    CHECK(batch_a.sequences == batch_b.sequences);
    CHECK(batch_a.target_labels == batch_b.target_labels);
}

TEST_CASE("embedding perturbation") {
    SUBCASE("zero sigma is the identity") {
        RngStream stream(1, "noise");
        const Matrix emb = Matrix::Random(4, 6);
        CHECK(tasks::perturb_embeddings(emb, 0.0, stream) == emb);
    }
    SUBCASE("fixed seed reproduces the noise") {
        RngStream a(5, "noise");
        RngStream b(5, "noise");
        const Matrix emb = Matrix::Zero(3, 4);
        CHECK(tasks::perturb_embeddings(emb, 0.1, a) == tasks::perturb_embeddings(emb, 0.1, b));
    }
    SUBCASE("noise is zero mean at Monte Carlo scale") {
        RngStream stream(7, "noise");
        const double sigma = 0.3;
        const int draws = 100000;
        const Matrix noise = tasks::embedding_noise(1, draws, sigma, stream);
        const double mean = noise.sum() / static_cast<double>(draws);
        CHECK(std::abs(mean) < 3.0 * sigma / std::sqrt(static_cast<double>(draws)));
    }
    SUBCASE("negative sigma is rejected") {
        RngStream stream(9, "noise");
        CHECK_THROWS_AS(tasks::perturb_embeddings(Matrix::Zero(2, 2), -0.1, stream), Error);
    }
}

TEST_CASE("batches serialize to JSON lines") {
    RngStream stream(13, "jsonl");
    SequenceTask task;
    task.kind = TaskKind::Parity;
    task.length = 4;
    const auto batch = tasks::generate(task, 5, stream);
    std::ostringstream out;
    tasks::write_jsonl(batch, out);

    std::istringstream in(out.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto doc = nlohmann::json::parse(line);
        CHECK(doc.at("tokens").size() == 4);
        CHECK(doc.at("target_positions").size() == 1);
        CHECK(doc.at("target_labels").size() == 1);
        ++lines;
    }
    CHECK(lines == 5);
}

TEST_CASE("task validation") {
    SequenceTask task;
    task.kind = TaskKind::Copy;
    task.vocab = 3;
    CHECK_THROWS_AS(task.validate(), ConfigError);
    task = SequenceTask{};
    task.kind = TaskKind::ModSum;
    task.modulus = 9;
    task.vocab = 8;
    CHECK_THROWS_AS(task.validate(), ConfigError);
    task = SequenceTask{};
    task.length = 0;
    CHECK_THROWS_AS(task.validate(), ConfigError);
}
