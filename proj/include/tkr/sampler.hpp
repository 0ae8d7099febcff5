#pragma once

// Grounded-query dataset generation: backward instantiation of query
// structures on a graph layer, exact answer sets via the oracle, non-trivial
// filtering for valid/test, and line-delimited serialization with a manifest.

#include <atomic>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tkr/oracle.hpp"
#include "tkr/query_ast.hpp"
#include "tkr/store.hpp"

namespace tkr {

struct GroundedQuery {
    std::string structure;
    Binding binding;
    AnswerSet answers;       // on the record's own layer
    std::vector<Id> easy;    // answers on the next-smaller layer (valid/test records)
};

struct SamplePlanEntry {
    long train = 0, valid = 0, test = 0;
    long count(Split s) const { return s == Split::train ? train : s == Split::valid ? valid : test; }
};

using SamplePlan = std::map<std::string, SamplePlanEntry>;  // structure name -> counts

struct GroundingExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

struct RetryAttempt {};  // one failed grounding attempt; caught by the retry loop

inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t record_seed(uint64_t seed, Split split, const std::string& structure, long index) {
    uint64_t h = mix64(seed ^ (static_cast<uint64_t>(split) << 56));
    h = mix64(h ^ fnv1a(structure));
    return mix64(h ^ static_cast<uint64_t>(index));
}

class Grounder {
public:
    Grounder(const TkgStore& store, Split split, std::mt19937_64& rng)
        : store_(store), layer_(store.layer(split)), rng_(rng) {}

    void ground_any(const ExprPtr& e, Binding& b) {
        switch (e->kind) {
            case NodeKind::EntityAnchor: b.entity[e->slot] = random_fact().s; return;
            case NodeKind::TimeAnchor: b.time[e->slot] = random_fact().t; return;
            case NodeKind::Pe: {
                const Quad& q = random_fact();
                b.relation[e->rel_slot] = q.r;
                containing(e->children[0], q.s, b);
                containing_time(e->children[1], q.t, b);
                return;
            }
            case NodeKind::Pt: {
                const Quad& q = random_fact();
                b.relation[e->rel_slot] = q.r;
                containing(e->children[0], q.s, b);
                containing(e->children[1], q.o, b);
                return;
            }
            case NodeKind::And:
            case NodeKind::Or: {
                Id target = random_fact().s;
                nary_containing(e, target, b, /*time_sort=*/false);
                return;
            }
            case NodeKind::TimeAnd:
            case NodeKind::TimeOr: {
                Id target = random_fact().t;
                nary_containing(e, target, b, /*time_sort=*/true);
                return;
            }
            case NodeKind::Not:
            case NodeKind::TimeNot:
            case NodeKind::After:
            case NodeKind::Before:
                ground_any(e->children[0], b);
                return;
        }
    }

    // Bind slots so that `id` lands in the expression's answer set (best
    // effort for negated and before/after branches; the caller verifies).
    void containing(const ExprPtr& e, Id id, Binding& b) {
        switch (e->kind) {
            case NodeKind::EntityAnchor: b.entity[e->slot] = id; return;
            case NodeKind::Pe: {
                const auto& quads = layer_.quads_with_head(id);  // inverse of "tail == id"
                if (quads.empty()) throw RetryAttempt{};
                const Quad& q = quads[rng_() % quads.size()];
                b.relation[e->rel_slot] = store_.inverse_of(q.r);
                containing(e->children[0], q.o, b);
                containing_time(e->children[1], q.t, b);
                return;
            }
            case NodeKind::And:
            case NodeKind::Or:
                nary_containing(e, id, b, false);
                return;
            case NodeKind::Not:
                ground_any(e->children[0], b);
                return;
            default:
                containing_time(e, id, b);
        }
    }

    void containing_time(const ExprPtr& e, Id t, Binding& b) {
        switch (e->kind) {
            case NodeKind::TimeAnchor: b.time[e->slot] = t; return;
            case NodeKind::Pt: {
                const auto& quads = layer_.quads_with_time(t);
                if (quads.empty()) throw RetryAttempt{};
                const Quad& q = quads[rng_() % quads.size()];
                b.relation[e->rel_slot] = q.r;
                containing(e->children[0], q.s, b);
                containing(e->children[1], q.o, b);
                return;
            }
            case NodeKind::TimeAnd:
            case NodeKind::TimeOr:
                nary_containing(e, t, b, true);
                return;
            case NodeKind::TimeNot:
                ground_any(e->children[0], b);
                return;
            case NodeKind::After: {
                if (t == 0) throw RetryAttempt{};
                Id earlier = static_cast<Id>(rng_() % t);
                containing_time(e->children[0], earlier, b);
                return;
            }
            case NodeKind::Before: {
                Id n = store_.timestamps.size();
                if (t + 1 >= n) throw RetryAttempt{};
                Id later = static_cast<Id>(t + 1 + rng_() % (n - t - 1));
                containing_time(e->children[0], later, b);
                return;
            }
            default:
                throw std::logic_error("containing_time: entity-sorted node");
        }
    }

private:
    const TkgStore& store_;
    const GraphLayer& layer_;
    std::mt19937_64& rng_;

    const Quad& random_fact() {
        if (layer_.facts.empty()) throw GroundingExhausted("empty graph layer");
        return layer_.facts[rng_() % layer_.facts.size()];
    }

    static bool is_negation(const ExprPtr& e) {
        return e->kind == NodeKind::Not || e->kind == NodeKind::TimeNot;
    }

    void child_containing(const ExprPtr& c, Id id, bool time_sort, Binding& b) {
        if (time_sort)
            containing_time(c, id, b);
        else
            containing(c, id, b);
    }

    void nary_containing(const ExprPtr& e, Id id, Binding& b, bool time_sort) {
        bool is_or = e->kind == NodeKind::Or || e->kind == NodeKind::TimeOr;
        if (is_or) {
            // one branch carries the target, the rest are free
            std::vector<size_t> candidates;
            for (size_t i = 0; i < e->children.size(); ++i)
                if (!is_negation(e->children[i])) candidates.push_back(i);
            size_t chosen =
                candidates.empty() ? 0 : candidates[rng_() % candidates.size()];
            for (size_t i = 0; i < e->children.size(); ++i) {
                if (i == chosen)
                    child_containing(e->children[i], id, time_sort, b);
                else
                    ground_any(e->children[i], b);
            }
            return;
        }
        for (const ExprPtr& c : e->children) {
            if (is_negation(c))
                ground_any(c->children[0], b);  // negated branches ground independently
            else
                child_containing(c, id, time_sort, b);
        }
    }
};

}  // namespace detail

struct GroundOptions {
    int max_attempts = 128;
    long max_answers = 0;  // 0 = unlimited
};

inline Binding ground_structure(const StructureDef& def, const TkgStore& store, Split split,
                                std::mt19937_64& rng, const GroundOptions& opt = {}) {
    detail::Grounder g(store, split, rng);
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        Binding b;
        try {
            g.ground_any(def.expr, b);
        } catch (const detail::RetryAttempt&) {
            continue;
        }
        AnswerSet ans = execute(def.expr, b, store, split);
        if (ans.ids.empty()) continue;
        if (opt.max_answers > 0 && static_cast<long>(ans.ids.size()) > opt.max_answers) continue;
        return b;
    }
    throw GroundingExhausted("structure " + def.name + " unsatisfiable on layer " +
                             split_name(split) + " after " + std::to_string(opt.max_attempts) +
                             " attempts");
}

namespace detail {

// One record; valid/test records must have a non-empty non-trivial set.
inline GroundedQuery sample_record(const StructureDef& def, const TkgStore& store, Split split,
                                   std::mt19937_64& rng, const GroundOptions& opt) {
    Grounder g(store, split, rng);
    Split easy_split = split == Split::test ? Split::valid : Split::train;
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        Binding b;
        try {
            g.ground_any(def.expr, b);
        } catch (const RetryAttempt&) {
            continue;
        }
        AnswerSet ans = execute(def.expr, b, store, split);
        if (ans.ids.empty()) continue;
        if (opt.max_answers > 0 && static_cast<long>(ans.ids.size()) > opt.max_answers) continue;
        GroundedQuery rec{def.name, std::move(b), std::move(ans), {}};
        if (split != Split::train) {
            AnswerSet easy = execute(def.expr, rec.binding, store, easy_split);
            if (minus_sorted(rec.answers.ids, easy.ids).empty()) continue;  // trivial
            rec.easy = std::move(easy.ids);
        }
        return rec;
    }
    throw GroundingExhausted("structure " + def.name + " exhausted on layer " +
                             split_name(split));
}

inline nlohmann::json binding_to_json(const Binding& b) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [slot, id] : b.entity) j["e" + std::to_string(slot)] = id;
    for (const auto& [slot, id] : b.relation) j["r" + std::to_string(slot)] = id;
    for (const auto& [slot, id] : b.time) j["t" + std::to_string(slot)] = id;
    return j;
}

inline Binding binding_from_json(const nlohmann::json& j) {
    Binding b;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        int slot = std::stoi(key.substr(1));
        Id id = it.value().get<Id>();
        if (key[0] == 'e')
            b.entity[slot] = id;
        else if (key[0] == 'r')
            b.relation[slot] = id;
        else
            b.time[slot] = id;
    }
    return b;
}

}  // namespace detail

inline nlohmann::json record_to_json(const GroundedQuery& rec, Sort sort) {
    nlohmann::json j;
    j["structure"] = rec.structure;
    j["binding"] = detail::binding_to_json(rec.binding);
    j["answers"] = rec.answers.ids;
    j["easy"] = rec.easy;
    (void)sort;
    return j;
}

inline GroundedQuery record_from_json(const nlohmann::json& j) {
    GroundedQuery rec;
    rec.structure = j.at("structure").get<std::string>();
    rec.binding = detail::binding_from_json(j.at("binding"));
    const StructureDef* def = find_structure(rec.structure);
    if (!def) throw std::runtime_error("unknown structure in record: " + rec.structure);
    rec.answers.sort = def->answer_sort;
    rec.answers.ids = j.at("answers").get<std::vector<Id>>();
    rec.easy = j.at("easy").get<std::vector<Id>>();
    return rec;
}

struct DatasetManifest {
    uint64_t seed = 0;
    uint64_t graph_fingerprint = 0;
    // structure -> split -> (count, total answers)
    std::map<std::string, std::map<std::string, std::pair<long, long>>> stats;
    std::vector<std::string> exhausted;  // "structure/split" markers

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed;
        j["graph_fingerprint"] = graph_fingerprint;
        nlohmann::json s = nlohmann::json::object();
        for (const auto& [name, per_split] : stats) {
            nlohmann::json row = nlohmann::json::object();
            for (const auto& [split, ct] : per_split) {
                row[split]["count"] = ct.first;
                row[split]["avg_answers"] =
                    ct.first == 0 ? 0.0 : static_cast<double>(ct.second) / ct.first;
            }
            s[name] = row;
        }
        j["structures"] = s;
        j["exhausted"] = exhausted;
        return j;
    }
};

struct SampleResult {
    DatasetManifest manifest;
    bool partial = false;  // some structure exhausted; output still written
};

inline SampleResult sample_dataset(const TkgStore& store, const SamplePlan& plan, uint64_t seed,
                                   const std::string& out_dir, const GroundOptions& opt = {},
                                   int threads = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (const auto& [name, entry] : plan)
        if (!find_structure(name)) throw std::invalid_argument("unknown structure in plan: " + name);

    SampleResult result;
    result.manifest.seed = seed;
    result.manifest.graph_fingerprint = store.fingerprint();

    for (Split split : {Split::train, Split::valid, Split::test}) {
        std::ofstream out(fs::path(out_dir) / (std::string(split_name(split)) + ".jsonl"));
        for (const auto& [name, entry] : plan) {
            long want = entry.count(split);
            if (want == 0) continue;
            const StructureDef& def = *find_structure(name);
            std::vector<std::optional<GroundedQuery>> recs(want);
            std::atomic<bool> exhausted{false};
            auto work = [&](long lo, long hi) {
                for (long i = lo; i < hi && !exhausted.load(); ++i) {
                    std::mt19937_64 rng(detail::record_seed(seed, split, name, i));
                    try {
                        recs[i] = detail::sample_record(def, store, split, rng, opt);
                    } catch (const GroundingExhausted&) {
                        exhausted.store(true);
                    }
                }
            };
            if (threads <= 1 || want < 4 * threads) {
                work(0, want);
            } else {
                std::vector<std::thread> pool;
                long chunk = (want + threads - 1) / threads;
                for (int k = 0; k < threads; ++k)
                    pool.emplace_back(work, k * chunk, std::min<long>(want, (k + 1) * chunk));
                for (auto& th : pool) th.join();
            }
            long written = 0, total_answers = 0;
            for (long i = 0; i < want; ++i) {
                if (!recs[i]) break;  // keep the deterministic prefix on exhaustion
                out << record_to_json(*recs[i], def.answer_sort).dump() << '\n';
                ++written;
                total_answers += static_cast<long>(recs[i]->answers.ids.size());
            }
            result.manifest.stats[name][split_name(split)] = {written, total_answers};
            if (written < want) {
                result.manifest.exhausted.push_back(name + "/" + split_name(split));
                result.partial = true;
            }
        }
    }

    // dictionaries travel with the dataset
    {
        auto emit = [&](const char* file, const Dict& d, auto surface) {
            std::ofstream dout(fs::path(out_dir) / file);
            for (Id i = 0; i < d.size(); ++i) dout << i << '\t' << surface(i) << '\n';
        };
        emit("entities.dict", store.entities,
             [&](Id i) { return store.entities.surface(i); });
        emit("relations.dict", store.relations,
             [&](Id i) { return store.relations.surface(i); });
        emit("timestamps.dict", store.timestamps,
             [&](Id i) { return store.timestamps.surface(i); });
    }
    std::ofstream mout(fs::path(out_dir) / "manifest.json");
    mout << result.manifest.to_json().dump(2) << '\n';
    return result;
}

inline std::vector<GroundedQuery> load_dataset(const std::string& dir, Split split) {
    std::filesystem::path p =
        std::filesystem::path(dir) / (std::string(split_name(split)) + ".jsonl");
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::vector<GroundedQuery> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error("malformed record " + std::to_string(lineno) + " in " +
                                     p.string() + ": " + e.what());
        }
    }
    return out;
}

// Per-structure record counts and average answer counts for one split.
inline nlohmann::json dataset_stats(const std::vector<GroundedQuery>& records) {
    std::map<std::string, std::pair<long, long>> agg;  // count, total answers
    for (const GroundedQuery& r : records) {
        auto& [n, total] = agg[r.structure];
        ++n;
        total += static_cast<long>(r.answers.ids.size());
    }
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, ct] : agg) {
        j[name]["count"] = ct.first;
        j[name]["avg_answers"] = static_cast<double>(ct.second) / ct.first;
    }
    return j;
}

}  // namespace tkr
