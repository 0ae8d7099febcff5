// tkr: command-line workbench for temporal knowledge-graph reasoning.
//
// Subcommands: stats-graph, sample, stats-data, train, eval, oracle, answer,
// probe-time. Exit codes: 0 success, 1 usage/data error, 2 partial success.
// stdout carries data, stderr carries diagnostics.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tkr/train_eval.hpp"

namespace {

namespace fs = std::filesystem;

tkr::TkgStore load_graph(const std::string& dir) {
    for (const char* f : {"train.txt", "valid.txt", "test.txt"})
        if (!fs::exists(fs::path(dir) / f))
            throw std::runtime_error("graph directory " + dir + " is missing " + f);
    return tkr::TkgStore::load((fs::path(dir) / "train.txt").string(),
                               (fs::path(dir) / "valid.txt").string(),
                               (fs::path(dir) / "test.txt").string(), dir);
}

void check_compatible(const tkr::Model& m, const tkr::TkgStore& st) {
    if (m.n_entities != st.entities.size() || m.n_timestamps != st.timestamps.size() ||
        m.n_relations != st.augmented_relation_count())
        throw std::runtime_error("checkpoint dictionaries do not match the graph (entities " +
                                 std::to_string(m.n_entities) + " vs " +
                                 std::to_string(st.entities.size()) + ", timestamps " +
                                 std::to_string(m.n_timestamps) + " vs " +
                                 std::to_string(st.timestamps.size()) + ", relations " +
                                 std::to_string(m.n_relations) + " vs " +
                                 std::to_string(st.augmented_relation_count()) + ")");
}

// Augmented relation id from a surface name; "X_inv" maps to the inverse id.
tkr::Id resolve_relation(const tkr::TkgStore& st, const std::string& name) {
    tkr::Id id = st.relations.lookup(name);
    if (id >= 0) return id;
    if (name.size() > 4 && name.ends_with("_inv")) {
        id = st.relations.lookup(name.substr(0, name.size() - 4));
        if (id >= 0) return id + st.base_relation_count;
    }
    throw std::runtime_error("unknown relation \"" + name + "\"");
}

// Parse a query with e:/r:/t: surface anchors and resolve them to ids.
struct ParsedQuery {
    tkr::ExprPtr expr;
    tkr::Binding binding;
};

ParsedQuery parse_query(const tkr::TkgStore& st, const std::string& text) {
    tkr::detail::SurfaceAnchors anchors;
    ParsedQuery q;
    q.expr = tkr::parse_with_surfaces(text, anchors);
    for (size_t i = 0; i < anchors.entity.size(); ++i) {
        tkr::Id id = st.entities.lookup(anchors.entity[i]);
        if (id < 0) throw std::runtime_error("unknown entity \"" + anchors.entity[i] + "\"");
        q.binding.entity[static_cast<int>(i) + 1] = id;
    }
    for (size_t i = 0; i < anchors.relation.size(); ++i)
        q.binding.relation[static_cast<int>(i) + 1] = resolve_relation(st, anchors.relation[i]);
    for (size_t i = 0; i < anchors.time.size(); ++i) {
        tkr::Id id = st.timestamps.lookup(anchors.time[i]);
        if (id < 0) throw std::runtime_error("unknown timestamp \"" + anchors.time[i] + "\"");
        q.binding.time[static_cast<int>(i) + 1] = id;
    }
    tkr::SlotLists slots = tkr::free_slots(q.expr);
    for (int s : slots.entity)
        if (!q.binding.entity.count(s))
            throw std::runtime_error("entity slot " + std::to_string(s) +
                                     " has no surface anchor (use e:NAME)");
    for (int s : slots.relation)
        if (!q.binding.relation.count(s))
            throw std::runtime_error("relation slot " + std::to_string(s) +
                                     " has no surface anchor (use r:NAME)");
    for (int s : slots.time)
        if (!q.binding.time.count(s))
            throw std::runtime_error("time slot " + std::to_string(s) +
                                     " has no surface anchor (use t:NAME)");
    return q;
}

tkr::SamplePlan read_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open plan file " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    tkr::SamplePlan plan;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const nlohmann::json& v = it.value();
        if (!v.is_array() || v.size() != 3)
            throw std::runtime_error("plan entry for " + it.key() +
                                     " must be [train, valid, test] counts");
        plan[it.key()] = {v[0].get<long>(), v[1].get<long>(), v[2].get<long>()};
    }
    return plan;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal knowledge-graph reasoning workbench"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read flags from a TOML config file");
    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap")->capture_default_str();

    // common option values
    std::string graph_dir, data_dir, out_path, ckpt, query, split_name = "test",
                layer_name = "train";

    auto add_graph = [&](CLI::App* cmd) {
        cmd->add_option("--graph", graph_dir, "graph directory (train/valid/test.txt)")
            ->envname("TKR_DATA_DIR")
            ->required();
    };
    auto add_data = [&](CLI::App* cmd) {
        cmd->add_option("--data", data_dir, "sampled dataset directory")
            ->envname("TKR_DATA_DIR")
            ->required();
    };

    // stats-graph
    CLI::App* c_stats = app.add_subcommand("stats-graph", "print graph statistics as JSON");
    add_graph(c_stats);

    // sample
    CLI::App* c_sample = app.add_subcommand("sample", "sample a grounded-query dataset");
    add_graph(c_sample);
    std::string plan_path;
    uint64_t seed = 1;
    long max_answers = 0;
    int max_attempts = 128;
    c_sample->add_option("--plan", plan_path, "JSON plan: structure -> [train,valid,test]")
        ->required();
    c_sample->add_option("--out", out_path, "output dataset directory")->required();
    c_sample->add_option("--seed", seed, "sampling seed")->capture_default_str();
    c_sample->add_option("--max-answers", max_answers, "reject groundings with more answers");
    c_sample->add_option("--max-attempts", max_attempts, "grounding attempts per record")
        ->capture_default_str();

    // stats-data
    CLI::App* c_sdata = app.add_subcommand("stats-data", "print dataset statistics as JSON");
    add_data(c_sdata);

    // train
    CLI::App* c_train = app.add_subcommand("train", "train a model on a sampled dataset");
    add_data(c_train);
    c_train->add_option("--graph", graph_dir, "graph directory")->required();
    std::string preset, ckpt_out, log_path;
    tkr::TrainConfig tc;
    auto o_dim = c_train->add_option("--dim", tc.d, "embedding dimension");
    auto o_gamma = c_train->add_option("--gamma", tc.gamma, "loss margin");
    auto o_neg = c_train->add_option("--neg", tc.negatives, "negatives per positive");
    auto o_batch = c_train->add_option("--batch", tc.batch, "batch size");
    auto o_steps = c_train->add_option("--steps", tc.steps, "training steps");
    auto o_lr = c_train->add_option("--lr", tc.lr, "learning rate");
    c_train->add_option("--seed", tc.seed, "training seed")->capture_default_str();
    c_train->add_option("--preset", preset, "hyperparameter preset: icews14 or desk");
    c_train->add_option("--ckpt-out", ckpt_out, "checkpoint output file")->required();
    c_train->add_option("--log", log_path, "training log output (step,loss,wall_seconds)");
    long log_every = 100;
    c_train->add_option("--log-every", log_every, "steps between log entries")
        ->capture_default_str();

    // eval
    CLI::App* c_eval = app.add_subcommand("eval", "filtered rank evaluation");
    add_data(c_eval);
    c_eval->add_option("--graph", graph_dir, "graph directory (dictionary check)");
    c_eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    c_eval->add_option("--split", split_name, "valid or test")->capture_default_str();
    c_eval->add_option("--out", out_path, "CSV output file");

    // oracle
    CLI::App* c_oracle = app.add_subcommand("oracle", "exact query answers on a graph layer");
    add_graph(c_oracle);
    c_oracle->add_option("--layer", layer_name, "train, valid or test")->capture_default_str();
    c_oracle->add_option("--query", query, "query with e:/r:/t: surface anchors")->required();

    // answer
    CLI::App* c_answer = app.add_subcommand("answer", "model's top candidates for a query");
    add_graph(c_answer);
    c_answer->add_option("--ckpt", ckpt, "checkpoint file")->required();
    c_answer->add_option("--query", query, "query with e:/r:/t: surface anchors")->required();
    long topk = 10;
    c_answer->add_option("--topk", topk, "number of candidates")->capture_default_str();

    // probe-time
    CLI::App* c_probe = app.add_subcommand("probe-time",
                                           "distance along time for a query and its "
                                           "after/before shifts");
    add_graph(c_probe);
    c_probe->add_option("--ckpt", ckpt, "checkpoint file")->required();
    c_probe->add_option("--pt-query", query, "time-sorted query with surface anchors")
        ->required();
    c_probe->add_option("--out", out_path, "CSV output file");

    // accept global flags like --threads after the subcommand name too
    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // normalize CLI11's exit codes: help/success stays 0, usage errors are 1
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*c_stats) {
            std::cout << load_graph(graph_dir).stats().dump(2) << "\n";
        } else if (*c_sample) {
            tkr::TkgStore st = load_graph(graph_dir);
            tkr::SamplePlan plan = read_plan(plan_path);
            tkr::GroundOptions opt;
            opt.max_attempts = max_attempts;
            opt.max_answers = max_answers;
            tkr::SampleResult res =
                tkr::sample_dataset(st, plan, seed, out_path, opt, threads);
            std::cout << res.manifest.to_json().dump(2) << "\n";
            if (res.partial) {
                std::cerr << "partial dataset: exhausted";
                for (const std::string& e : res.manifest.exhausted) std::cerr << " " << e;
                std::cerr << "\n";
                return 2;
            }
        } else if (*c_sdata) {
            nlohmann::json j;
            for (tkr::Split sp : {tkr::Split::train, tkr::Split::valid, tkr::Split::test})
                j[tkr::split_name(sp)] =
                    tkr::dataset_stats(tkr::load_dataset(data_dir, sp));
            std::cout << j.dump(2) << "\n";
        } else if (*c_train) {
            tkr::TkgStore st = load_graph(graph_dir);
            if (!preset.empty()) {
                tkr::TrainConfig base = tkr::train_preset(preset);
                // explicit flags override the preset
                if (!*o_dim) tc.d = base.d;
                if (!*o_gamma) tc.gamma = base.gamma;
                if (!*o_neg) tc.negatives = base.negatives;
                if (!*o_batch) tc.batch = base.batch;
                if (!*o_steps) tc.steps = base.steps;
                if (!*o_lr) tc.lr = base.lr;
            }
            tc.log_every = log_every;
            tc.checkpoint_path = ckpt_out;
            auto records = tkr::load_dataset(data_dir, tkr::Split::train);
            tkr::Model model(tkr::model_config(tc), st.entities.size(), st.timestamps.size(),
                             st.augmented_relation_count(), tc.seed);
            auto t0 = std::chrono::steady_clock::now();
            std::ofstream log_out;
            if (!log_path.empty()) {
                log_out.open(log_path);
                if (!log_out) throw std::runtime_error("cannot write " + log_path);
            }
            tkr::train(model, records, tc, [&](long step, double loss) {
                double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                                  .count();
                std::fprintf(stderr, "step %ld loss %.6f\n", step, loss);
                if (log_out) log_out << step << ',' << loss << ',' << wall << '\n';
            });
            std::cerr << "checkpoint written to " << ckpt_out << "\n";
        } else if (*c_eval) {
            tkr::Model model = tkr::Model::load(ckpt);
            if (!graph_dir.empty()) check_compatible(model, load_graph(graph_dir));
            auto records = tkr::load_dataset(data_dir, tkr::split_from_name(split_name));
            tkr::EvalResult res = tkr::evaluate(model, records, threads);
            if (!out_path.empty()) write_file(out_path, res.csv());
            std::cout << res.human_table();
        } else if (*c_oracle) {
            tkr::TkgStore st = load_graph(graph_dir);
            ParsedQuery q = parse_query(st, query);
            tkr::AnswerSet ans =
                tkr::execute(q.expr, q.binding, st, tkr::split_from_name(layer_name));
            std::vector<std::string> surfaces;
            for (tkr::Id id : ans.ids)
                surfaces.push_back(ans.sort == tkr::Sort::EntitySet ? st.entities.surface(id)
                                                                    : st.timestamps.surface(id));
            std::sort(surfaces.begin(), surfaces.end());
            for (const std::string& s : surfaces) std::cout << s << "\n";
        } else if (*c_answer) {
            tkr::TkgStore st = load_graph(graph_dir);
            tkr::Model model = tkr::Model::load(ckpt);
            check_compatible(model, st);
            ParsedQuery q = parse_query(st, query);
            tkr::EmbValues emb = model.encode_values(q.expr, q.binding);
            std::vector<double> dist = model.distances_all(emb, q.expr->sort);
            std::vector<tkr::Id> order(dist.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<tkr::Id>(i);
            std::stable_sort(order.begin(), order.end(),
                             [&](tkr::Id a, tkr::Id b) { return dist[a] < dist[b]; });
            long n = std::min<long>(topk, static_cast<long>(order.size()));
            for (long i = 0; i < n; ++i) {
                tkr::Id id = order[i];
                std::cout << (q.expr->sort == tkr::Sort::EntitySet ? st.entities.surface(id)
                                                                   : st.timestamps.surface(id))
                          << '\t' << dist[id] << "\n";
            }
        } else if (*c_probe) {
            tkr::TkgStore st = load_graph(graph_dir);
            tkr::Model model = tkr::Model::load(ckpt);
            check_compatible(model, st);
            ParsedQuery q = parse_query(st, query);
            if (q.expr->sort != tkr::Sort::TimeSet)
                throw std::runtime_error("probe-time needs a time-sorted query");
            auto column = [&](const tkr::ExprPtr& e) {
                return model.distances_all(model.encode_values(e, q.binding),
                                           tkr::Sort::TimeSet);
            };
            std::vector<double> base = column(q.expr);
            std::vector<double> aft = column(tkr::ast::after(q.expr));
            std::vector<double> bef = column(tkr::ast::before(q.expr));
            std::ostringstream csv;
            csv << "t,d_base,d_after,d_before\n";
            for (tkr::Id t = 0; t < st.timestamps.size(); ++t)
                csv << st.timestamps.surface(t) << ',' << base[t] << ',' << aft[t] << ','
                    << bef[t] << "\n";
            if (!out_path.empty())
                write_file(out_path, csv.str());
            else
                std::cout << csv.str();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
