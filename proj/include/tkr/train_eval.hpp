#pragma once

// Training loop (negative-sampling margin loss over grounded query batches,
// Adam) and filtered rank-based evaluation (MRR, Hits@K, per structure plus
// macro and micro averages).

#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tkr/model.hpp"
#include "tkr/sampler.hpp"

namespace tkr {

struct TrainConfig {
    int d = 32;
    int batch = 64;
    int negatives = 16;
    double gamma = 15.0;
    long steps = 5000;
    double lr = 1e-3;
    double lambda_logic = 1.0;
    uint64_t seed = 1;
    long log_every = 100;
    long checkpoint_every = 0;        // 0 = only save at the end (if path set)
    std::string checkpoint_path;
};

inline TrainConfig train_preset(const std::string& name) {
    TrainConfig c;
    if (name == "icews14") {
        c.d = 800;
        c.batch = 512;
        c.negatives = 128;
        c.gamma = 15.0;
        c.steps = 300000;
        c.lr = 1e-4;
    } else if (name == "desk") {
        c.d = 32;
        c.batch = 64;
        c.negatives = 16;
        c.gamma = 15.0;
        c.steps = 5000;
        c.lr = 1e-3;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return c;
}

inline ModelConfig model_config(const TrainConfig& c) {
    ModelConfig m;
    m.d = c.d;
    m.gamma = c.gamma;
    m.lambda_logic = c.lambda_logic;
    return m;
}

// The idx-th element of (universe \ answers); answers sorted. -1 when the
// complement is empty.
inline Id sample_negative(const std::vector<Id>& answers, Id universe, std::mt19937_64& rng) {
    Id complement = universe - static_cast<Id>(answers.size());
    if (complement <= 0) return -1;
    Id idx = static_cast<Id>(rng() % static_cast<uint64_t>(complement));
    for (Id a : answers) {
        if (a <= idx)
            ++idx;
        else
            break;
    }
    return idx;
}

struct TrainLogEntry {
    long step;
    double loss;  // running mean since the previous log entry
};

// Steps sample one structure uniformly from those present, then a uniform
// batch of that structure's records. Skips records whose answer set covers
// the whole universe (no negatives exist).
inline std::vector<TrainLogEntry> train(
    Model& model, const std::vector<GroundedQuery>& records, const TrainConfig& cfg,
    std::function<void(long, double)> progress = {}) {
    if (records.empty()) throw std::invalid_argument("train: empty dataset");

    std::map<std::string, std::vector<const GroundedQuery*>> by_structure;
    for (const GroundedQuery& r : records) by_structure[r.structure].push_back(&r);
    std::vector<std::string> structure_names;
    for (const auto& [name, recs] : by_structure) {
        if (!find_structure(name)) throw std::invalid_argument("unknown structure: " + name);
        structure_names.push_back(name);
    }

    std::mt19937_64 rng(cfg.seed);
    Adam opt(cfg.lr);
    std::vector<TrainLogEntry> log;
    double window_sum = 0.0;
    long window_n = 0;
    bool warned_no_negatives = false;

    for (long step = 1; step <= cfg.steps; ++step) {
        const std::string& sname = structure_names[rng() % structure_names.size()];
        const StructureDef& def = *find_structure(sname);
        const auto& recs = by_structure[sname];
        Id universe = def.answer_sort == Sort::EntitySet ? model.n_entities : model.n_timestamps;

        Tape tape;
        Var total = -1;
        int used = 0;
        for (int i = 0; i < cfg.batch; ++i) {
            const GroundedQuery& rec = *recs[rng() % recs.size()];
            if (static_cast<Id>(rec.answers.ids.size()) >= universe) {
                if (!warned_no_negatives) {
                    warned_no_negatives = true;
                    std::fprintf(stderr,
                                 "warning: skipping record(s) whose answers cover the universe\n");
                }
                continue;
            }
            Emb q = model.encode(tape, def.expr, rec.binding);
            Id pos = rec.answers.ids[rng() % rec.answers.ids.size()];
            std::vector<Id> negs(cfg.negatives);
            for (Id& n : negs) n = sample_negative(rec.answers.ids, universe, rng);
            Var l = model.loss(tape, q, pos, negs, def.answer_sort);
            total = used == 0 ? l : tape.add(total, l);
            ++used;
        }
        if (used == 0) continue;
        Var mean_loss = tape.scalar_mul(total, 1.0 / used);
        double loss_val = tape.val(mean_loss).a[0];
        if (!std::isfinite(loss_val))
            throw std::runtime_error("non-finite loss at step " + std::to_string(step));
        model.params.zero_grads();
        tape.backward(mean_loss);
        opt.step(model.params);

        window_sum += loss_val;
        ++window_n;
        if (cfg.log_every > 0 && step % cfg.log_every == 0) {
            double mean = window_sum / window_n;
            log.push_back({step, mean});
            if (progress) progress(step, mean);
            window_sum = 0.0;
            window_n = 0;
        }
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
            step % cfg.checkpoint_every == 0)
            model.save(cfg.checkpoint_path);
    }
    if (window_n > 0) log.push_back({cfg.steps, window_sum / window_n});
    if (!cfg.checkpoint_path.empty()) model.save(cfg.checkpoint_path);
    return log;
}

// Rank of `pos` among {pos} union (universe \ filter_out), mean rank over
// exact distance ties: 1 + |strictly smaller| + |ties| / 2.
inline double rank_of(const std::vector<double>& dist, Id pos, const std::vector<Id>& filter_out) {
    double dpos = dist[pos];
    long smaller = 0, ties = 0;
    size_t k = 0;
    for (Id v = 0; v < static_cast<Id>(dist.size()); ++v) {
        while (k < filter_out.size() && filter_out[k] < v) ++k;
        if (v == pos) continue;
        if (k < filter_out.size() && filter_out[k] == v) continue;
        if (dist[v] < dpos)
            ++smaller;
        else if (dist[v] == dpos)
            ++ties;
    }
    return 1.0 + smaller + ties / 2.0;
}

struct Metrics {
    double mrr = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
    long count = 0;  // records

    // one record's metrics: mean over its (hard) answers
    void add_record(const std::vector<double>& ranks) {
        double mrr_r = 0.0, h1_r = 0.0, h3_r = 0.0, h10_r = 0.0;
        for (double rank : ranks) {
            mrr_r += 1.0 / rank;
            h1_r += rank <= 1.0 ? 1.0 : 0.0;
            h3_r += rank <= 3.0 ? 1.0 : 0.0;
            h10_r += rank <= 10.0 ? 1.0 : 0.0;
        }
        double n = static_cast<double>(ranks.size());
        mrr += mrr_r / n;
        h1 += h1_r / n;
        h3 += h3_r / n;
        h10 += h10_r / n;
        ++count;
    }

    void merge(const Metrics& o) {
        mrr += o.mrr;
        h1 += o.h1;
        h3 += o.h3;
        h10 += o.h10;
        count += o.count;
    }

    Metrics averaged() const {
        if (count == 0) return {};
        Metrics m;
        m.mrr = mrr / count;
        m.h1 = h1 / count;
        m.h3 = h3 / count;
        m.h10 = h10 / count;
        m.count = count;
        return m;
    }
};

struct EvalResult {
    std::map<std::string, Metrics> per_structure;  // averaged
    Metrics macro;  // unweighted mean over structures
    Metrics micro;  // record-weighted over all records

    // Long form: one row per (structure, metric), macro and micro appended.
    std::string csv() const {
        std::ostringstream out;
        out << "structure,metric,value,count\n";
        auto rows = [&](const std::string& name, const Metrics& m) {
            out << name << ",MRR," << m.mrr << ',' << m.count << '\n';
            out << name << ",Hits@1," << m.h1 << ',' << m.count << '\n';
            out << name << ",Hits@3," << m.h3 << ',' << m.count << '\n';
            out << name << ",Hits@10," << m.h10 << ',' << m.count << '\n';
        };
        for (const auto& [name, m] : per_structure) rows(name, m);
        rows("macro", macro);
        rows("micro", micro);
        return out.str();
    }

    std::string human_table() const {
        std::ostringstream out;
        auto row = [&](const std::string& name, const Metrics& m) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%-16s %8ld %8.4f %8.4f %8.4f %8.4f\n", name.c_str(),
                          m.count, m.mrr, m.h1, m.h3, m.h10);
            out << buf;
        };
        char hdr[160];
        std::snprintf(hdr, sizeof(hdr), "%-16s %8s %8s %8s %8s %8s\n", "structure", "records",
                      "MRR", "Hits@1", "Hits@3", "Hits@10");
        out << hdr;
        for (const auto& [name, m] : per_structure) row(name, m);
        row("macro", macro);
        row("micro", micro);
        return out.str();
    }
};

// Filtered evaluation: per record, ranks of the hard answers (answers minus
// easy) against all non-answer candidates; record metrics are the mean over
// its hard answers. Records with no hard answers are skipped.
inline EvalResult evaluate(Model& model, const std::vector<GroundedQuery>& records,
                           int threads = 1) {
    // Per-record ranks are computed in parallel but accumulated sequentially
    // in record order, so results are bit-identical across thread counts.
    std::vector<std::vector<double>> record_ranks(records.size());
    int n_threads = std::max(1, threads);

    auto work = [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) {
            const GroundedQuery& rec = records[i];
            const StructureDef* def = find_structure(rec.structure);
            if (!def) throw std::runtime_error("unknown structure: " + rec.structure);
            std::vector<Id> hard = detail::minus_sorted(rec.answers.ids, rec.easy);
            if (hard.empty()) continue;
            EmbValues q = model.encode_values(def->expr, rec.binding);
            std::vector<double> dist = model.distances_all(q, def->answer_sort);
            std::vector<double> ranks;
            ranks.reserve(hard.size());
            for (Id a : hard) ranks.push_back(rank_of(dist, a, rec.answers.ids));
            record_ranks[i] = std::move(ranks);
        }
    };
    if (n_threads == 1 || records.size() < 4 * static_cast<size_t>(n_threads)) {
        work(0, records.size());
    } else {
        std::vector<std::thread> pool;
        size_t chunk = (records.size() + n_threads - 1) / n_threads;
        for (int k = 0; k < n_threads; ++k)
            pool.emplace_back(work, k * chunk, std::min(records.size(), (k + 1) * chunk));
        for (auto& th : pool) th.join();
    }

    EvalResult result;
    std::map<std::string, Metrics> raw;
    for (size_t i = 0; i < records.size(); ++i)
        if (!record_ranks[i].empty()) raw[records[i].structure].add_record(record_ranks[i]);
    Metrics micro;
    for (const auto& [name, m] : raw) {
        result.per_structure[name] = m.averaged();
        micro.merge(m);
    }
    result.micro = micro.averaged();
    Metrics macro;
    for (const auto& [name, m] : result.per_structure) {
        macro.mrr += m.mrr;
        macro.h1 += m.h1;
        macro.h3 += m.h3;
        macro.h10 += m.h10;
        ++macro.count;
    }
    if (macro.count > 0) {
        macro.mrr /= macro.count;
        macro.h1 /= macro.count;
        macro.h3 /= macro.count;
        macro.h10 /= macro.count;
    }
    result.macro = macro;
    return result;
}

}  // namespace tkr
