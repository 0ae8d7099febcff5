#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "support/synthetic.hpp"
#include "tkr/train_eval.hpp"

using tkr::GroundedQuery;
using tkr::Id;
using tkr::Model;
using tkr::Split;
using tkr::TkgStore;
using tkr::TrainConfig;

namespace {

std::vector<GroundedQuery> sample_split(const TkgStore& st, const tkr::SamplePlan& plan,
                                        uint64_t seed, Split split, const char* tag) {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / tag;
    fs::remove_all(dir);
    tkr::sample_dataset(st, plan, seed, dir.string());
    return tkr::load_dataset(dir.string(), split);
}

}  // namespace

TEST_CASE("presets match the published hyperparameters") {
    TrainConfig big = tkr::train_preset("icews14");
    CHECK(big.d == 800);
    CHECK(big.batch == 512);
    CHECK(big.negatives == 128);
    CHECK(big.gamma == 15.0);
    CHECK(big.steps == 300000);
    CHECK(big.lr == 1e-4);
    TrainConfig desk = tkr::train_preset("desk");
    CHECK(desk.d == 32);
    CHECK(desk.batch == 64);
    CHECK(desk.negatives == 16);
    CHECK(desk.steps == 5000);
    CHECK(desk.lr == 1e-3);
    CHECK_THROWS_AS(tkr::train_preset("nope"), std::invalid_argument);
}

TEST_CASE("negative samples avoid the answer set") {
    std::mt19937_64 rng(1);
    std::vector<Id> answers{3};
    for (int i = 0; i < 1000; ++i) {
        Id n = tkr::sample_negative(answers, 10, rng);
        CHECK(n >= 0);
        CHECK(n < 10);
        CHECK(n != 3);
    }
    // complement empty
    CHECK(tkr::sample_negative({0, 1, 2}, 3, rng) == -1);
}

TEST_CASE("negative sampling is deterministic and roughly uniform") {
    std::mt19937_64 a(7), b(7);
    std::vector<Id> answers{2, 5};
    for (int i = 0; i < 100; ++i)
        CHECK(tkr::sample_negative(answers, 10, a) == tkr::sample_negative(answers, 10, b));

    std::mt19937_64 rng(8);
    std::vector<long> counts(10, 0);
    const long draws = 100000;
    for (long i = 0; i < draws; ++i) counts[tkr::sample_negative(answers, 10, rng)]++;
    CHECK(counts[2] == 0);
    CHECK(counts[5] == 0);
    double expected = draws / 8.0;
    double chi2 = 0.0;
    for (int v = 0; v < 10; ++v) {
        if (v == 2 || v == 5) continue;
        double diff = counts[v] - expected;
        chi2 += diff * diff / expected;
    }
    CHECK(chi2 < 18.48);  // chi-square df=7, p=0.01
}

TEST_CASE("rank_of tie handling") {
    // positive id 0; distances for a 4-element universe
    CHECK(tkr::rank_of({1.0, 2.0, 3.0, 4.0}, 0, {}) == 1.0);
    CHECK(tkr::rank_of({2.0, 2.0, 3.0, 4.0}, 0, {}) == 1.5);
    CHECK(tkr::rank_of({5.0, 2.0, 3.0, 4.0}, 0, {}) == 4.0);
    // filtered candidates are excluded from the competition
    CHECK(tkr::rank_of({5.0, 2.0, 3.0, 4.0}, 0, {0, 1, 2, 3}) == 1.0);
    // removing an answer from the filter can only worsen the rank
    CHECK(tkr::rank_of({5.0, 2.0, 3.0, 4.0}, 0, {0, 1}) >=
          tkr::rank_of({5.0, 2.0, 3.0, 4.0}, 0, {0, 1, 2}));
}

TEST_CASE("record metrics from ranks") {
    tkr::Metrics m;
    m.add_record({4.0});
    CHECK(m.mrr == Catch::Approx(0.25));
    CHECK(m.h1 == 0.0);
    CHECK(m.h3 == 0.0);
    CHECK(m.h10 == 1.0);
    tkr::Metrics two;
    two.add_record({1.0, 2.0});
    CHECK(two.mrr == Catch::Approx(0.75));
}

TEST_CASE("training reduces the loss and is seed-deterministic") {
    TkgStore st = fixtures::desk_store();
    tkr::SamplePlan plan;
    plan["Pe"] = {60, 0, 0};
    plan["Pt"] = {60, 0, 0};
    auto records = sample_split(st, plan, 5, Split::train, "tkr_te_loss");

    TrainConfig cfg = tkr::train_preset("desk");
    cfg.steps = 120;
    cfg.log_every = 20;
    cfg.seed = 9;
    auto run = [&]() {
        Model m(tkr::model_config(cfg), st.entities.size(), st.timestamps.size(),
                st.augmented_relation_count(), cfg.seed);
        return tkr::train(m, records, cfg);
    };
    auto log1 = run();
    auto log2 = run();
    REQUIRE(log1.size() >= 2);
    CHECK(log1.back().loss < log1.front().loss);
    REQUIRE(log1.size() == log2.size());
    for (size_t i = 0; i < log1.size(); ++i) {
        CHECK(log1[i].step == log2[i].step);
        CHECK(log1[i].loss == log2[i].loss);
    }
}

TEST_CASE("a model overfit on a tiny store reaches MRR 1 on Pe") {
    // 20 facts, distinct subject-relation-time keys so each Pe has one answer
    std::vector<std::string> lines;
    std::mt19937_64 g(3);
    for (int i = 0; i < 20; ++i)
        lines.push_back(fixtures::quad_line("s" + std::to_string(i), "r" + std::to_string(i % 2),
                                            "o" + std::to_string(g() % 10),
                                            "t" + std::to_string(i % 4)));
    TkgStore st = tkr::TkgStore::load_from_lines(lines, {}, {});
    tkr::SamplePlan plan;
    plan["Pe"] = {40, 0, 0};
    auto records = sample_split(st, plan, 11, Split::train, "tkr_te_overfit");

    TrainConfig cfg = tkr::train_preset("desk");
    cfg.d = 16;
    cfg.steps = 400;
    cfg.negatives = 8;
    cfg.log_every = 0;
    Model m(tkr::model_config(cfg), st.entities.size(), st.timestamps.size(),
            st.augmented_relation_count(), 21);
    tkr::train(m, records, cfg);
    tkr::EvalResult res = tkr::evaluate(m, records);
    REQUIRE(res.per_structure.count("Pe"));
    CHECK(res.per_structure["Pe"].mrr > 0.95);
}

TEST_CASE("evaluation is read-only and thread-count independent") {
    TkgStore st = fixtures::desk_store();
    tkr::SamplePlan plan;
    plan["Pe"] = {30, 0, 0};
    plan["Pt"] = {30, 0, 0};
    auto records = sample_split(st, plan, 13, Split::train, "tkr_te_eval");
    Model m(tkr::ModelConfig{}, st.entities.size(), st.timestamps.size(),
            st.augmented_relation_count(), 31);
    auto before = m.params.value("entity_feat").a;
    tkr::EvalResult one = tkr::evaluate(m, records, 1);
    tkr::EvalResult four = tkr::evaluate(m, records, 4);
    CHECK(m.params.value("entity_feat").a == before);
    CHECK(one.micro.mrr == four.micro.mrr);
    CHECK(one.macro.mrr == four.macro.mrr);
    // metric ordering invariant
    for (const auto& [name, met] : one.per_structure) {
        CHECK(met.h1 <= met.h3);
        CHECK(met.h3 <= met.h10);
        CHECK(met.h10 <= 1.0);
        CHECK(met.mrr <= 1.0);
    }
    // long-form csv: (structures + macro + micro) x 4 metric rows plus header
    std::string csv = one.csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + (2 + 2) * 4);
    CHECK(csv.find("macro,MRR,") != std::string::npos);
    CHECK(one.human_table().find("Hits@10") != std::string::npos);
}

TEST_CASE("training rejects an empty dataset") {
    Model m(tkr::ModelConfig{}, 4, 4, 4, 1);
    CHECK_THROWS_AS(tkr::train(m, {}, tkr::train_preset("desk")), std::invalid_argument);
}
