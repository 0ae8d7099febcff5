#pragma once

// The temporal feature-logic embedding model: parameter tables, the neural
// operators (projection, intersection/union with attention, complement,
// after/before/between), recursive query encoding over an AST, and the
// L1-plus-logic distance with its negative-sampling loss.
//
// A query embedding has four d-dimensional parts: entity feature, entity
// logic (in [0,1]), time feature, time logic (in [0,1]). Logic parts are
// combined with product-logic AND/OR; feature parts are mixed by
// per-dimension attention over the inputs.

#include <array>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tkr/autodiff.hpp"
#include "tkr/oracle.hpp"
#include "tkr/query_ast.hpp"

namespace tkr {

struct ModelConfig {
    int d = 32;
    double gamma = 15.0;
    double lambda_logic = 1.0;
    double feature_init = 0.5;      // tables: uniform in +-feature_init
    double time_ramp = 1.0;         // time features start on a chronological
    double time_noise = 0.05;       // ramp over [-ramp, ramp] plus noise
};

// Query embedding on a tape.
struct Emb {
    Var ef, el, tf, tl;
};

// Plain values of an embedding (evaluation fast path).
struct EmbValues {
    std::vector<double> ef, el, tf, tl;
};

class Model {
public:
    ModelConfig cfg;
    int n_entities = 0, n_timestamps = 0, n_relations = 0;  // relations: augmented count
    ParamStore params;

    Model(const ModelConfig& config, int entities, int timestamps, int relations_aug,
          uint64_t seed = 1)
        : cfg(config), n_entities(entities), n_timestamps(timestamps), n_relations(relations_aug) {
        int d = cfg.d;
        params.add("entity_feat", n_entities, d);
        params.add("time_feat", n_timestamps, d);
        params.add("relation", n_relations, 4 * d);
        add_mlp("op_pe.mlp", 4 * d, 4 * d);
        add_mlp("op_pt.mlp", 4 * d, 4 * d);
        for (const char* op : {"op_ie", "op_it", "op_ue", "op_ut"}) {
            add_mlp(std::string(op) + ".att_e", 2 * d, d);
            add_mlp(std::string(op) + ".att_t", 2 * d, d);
        }
        add_mlp("op_ce.mlp", 2 * d, d);
        add_mlp("op_ct.mlp", 2 * d, d);
        init_params(seed);
    }

    // ---- anchors ----

    Emb embed_entity(Tape& t, Id v) {
        check_id(v, n_entities, "entity");
        Var ef = t.row(&params.value("entity_feat"), &params.grad("entity_feat"), v);
        Var z = zeros(t);
        return {ef, z, z, z};
    }

    Emb embed_timestamp(Tape& t, Id ts) {
        check_id(ts, n_timestamps, "timestamp");
        Var tf = t.row(&params.value("time_feat"), &params.grad("time_feat"), ts);
        Var z = zeros(t);
        return {z, z, tf, z};
    }

    // ---- operators ----

    Emb project_entity(Tape& t, const Emb& q, Id r, const Emb& time) {
        return projection(t, "op_pe.mlp", q, r, time);
    }

    Emb project_time(Tape& t, const Emb& q1, Id r, const Emb& q2) {
        return projection(t, "op_pt.mlp", q1, r, q2);
    }

    Emb intersect_entity(Tape& t, const std::vector<Emb>& qs) {
        return dyadic(t, "op_ie", qs, /*entity_or=*/false, /*time_or=*/false);
    }

    Emb intersect_time(Tape& t, const std::vector<Emb>& qs) {
        return dyadic(t, "op_it", qs, false, false);
    }

    Emb union_entity(Tape& t, const std::vector<Emb>& qs) {
        return dyadic(t, "op_ue", qs, /*entity_or=*/true, /*time_or=*/false);
    }

    Emb union_time(Tape& t, const std::vector<Emb>& qs) {
        return dyadic(t, "op_ut", qs, /*entity_or=*/false, /*time_or=*/true);
    }

    Emb complement_entity(Tape& t, const Emb& q) {
        Var ef = t.tanh_(mlp(t, "op_ce.mlp", t.concat({q.ef, q.el})));
        Var el = t.axpb(q.el, -1.0, 1.0);
        return {ef, el, q.tf, q.tl};
    }

    Emb complement_time(Tape& t, const Emb& q) {
        Var tf = t.tanh_(mlp(t, "op_ct.mlp", t.concat({q.tf, q.tl})));
        Var tl = t.axpb(q.tl, -1.0, 1.0);
        return {q.ef, q.el, tf, tl};
    }

    // shift the time interval past its upper (after) / lower (before) end
    Emb after_op(Tape& t, const Emb& q) {
        Var tf = t.add(q.tf, t.axpb(q.tl, 0.5, 0.5));
        Var tl = t.axpb(q.tl, -0.5, 0.5);
        return {q.ef, q.el, tf, tl};
    }

    Emb before_op(Tape& t, const Emb& q) {
        // (tf - 0.5*tl) - 0.5: this grouping lands exactly on representable
        // endpoints (e.g. f=0.2, l=0.6 gives -0.6)
        Var tf = t.axpb(t.sub(q.tf, t.axpb(q.tl, 0.5, 0.0)), 1.0, -0.5);
        Var tl = t.axpb(q.tl, -0.5, 0.5);
        return {q.ef, q.el, tf, tl};
    }

    Emb between_op(Tape& t, const Emb& q1, const Emb& q2) {
        return intersect_time(t, {after_op(t, q1), before_op(t, q2)});
    }

    // ---- query encoding ----

    Emb encode(Tape& t, const ExprPtr& e, const Binding& b) {
        switch (e->kind) {
            case NodeKind::EntityAnchor: return embed_entity(t, b.entity_at(e->slot));
            case NodeKind::TimeAnchor: return embed_timestamp(t, b.time_at(e->slot));
            case NodeKind::Pe:
                return project_entity(t, encode(t, e->children[0], b),
                                      check_rel(b.relation_at(e->rel_slot)),
                                      encode(t, e->children[1], b));
            case NodeKind::Pt:
                return project_time(t, encode(t, e->children[0], b),
                                    check_rel(b.relation_at(e->rel_slot)),
                                    encode(t, e->children[1], b));
            case NodeKind::And: return intersect_entity(t, encode_children(t, e, b));
            case NodeKind::Or: return union_entity(t, encode_children(t, e, b));
            case NodeKind::TimeAnd: return intersect_time(t, encode_children(t, e, b));
            case NodeKind::TimeOr: return union_time(t, encode_children(t, e, b));
            case NodeKind::Not: return complement_entity(t, encode(t, e->children[0], b));
            case NodeKind::TimeNot: return complement_time(t, encode(t, e->children[0], b));
            case NodeKind::After: return after_op(t, encode(t, e->children[0], b));
            case NodeKind::Before: return before_op(t, encode(t, e->children[0], b));
        }
        throw std::logic_error("unreachable expression kind");
    }

    // ---- distance and loss ----

    Var distance(Tape& t, Id answer, Sort sort, const Emb& q) {
        Var feat, logic;
        if (sort == Sort::EntitySet) {
            check_id(answer, n_entities, "entity");
            Var af = t.row(&params.value("entity_feat"), &params.grad("entity_feat"), answer);
            feat = t.abs_sum(t.sub(af, q.ef));
            logic = t.sum(q.el);
        } else {
            check_id(answer, n_timestamps, "timestamp");
            Var af = t.row(&params.value("time_feat"), &params.grad("time_feat"), answer);
            feat = t.abs_sum(t.sub(af, q.tf));
            logic = t.sum(q.tl);
        }
        return t.add(feat, t.scalar_mul(logic, cfg.lambda_logic));
    }

    // L = -log s(gamma - d(pos)) - (1/k) sum log s(d(neg_i) - gamma)
    Var loss(Tape& t, const Emb& q, Id positive, const std::vector<Id>& negatives, Sort sort) {
        if (negatives.empty()) throw std::invalid_argument("loss: need at least one negative");
        Var gamma = t.scalar(cfg.gamma);
        Var pos_term = t.scalar_mul(t.logsigmoid(t.sub(gamma, distance(t, positive, sort, q))), -1.0);
        Var neg_sum = t.logsigmoid(t.sub(distance(t, negatives[0], sort, q), gamma));
        for (size_t i = 1; i < negatives.size(); ++i)
            neg_sum = t.add(neg_sum, t.logsigmoid(t.sub(distance(t, negatives[i], sort, q), gamma)));
        return t.add(pos_term,
                     t.scalar_mul(neg_sum, -1.0 / static_cast<double>(negatives.size())));
    }

    // ---- evaluation fast path (read-only, no backward) ----

    EmbValues encode_values(const ExprPtr& e, const Binding& b) {
        Tape t;
        Emb q = encode(t, e, b);
        EmbValues out{t.val(q.ef).a, t.val(q.el).a, t.val(q.tf).a, t.val(q.tl).a};
        t.clear();
        return out;
    }

    double distance_value(const EmbValues& q, Id answer, Sort sort) const {
        const Tensor& table =
            sort == Sort::EntitySet ? params.values.at("entity_feat") : params.values.at("time_feat");
        const std::vector<double>& qf = sort == Sort::EntitySet ? q.ef : q.tf;
        const std::vector<double>& ql = sort == Sort::EntitySet ? q.el : q.tl;
        double dist = 0.0;
        for (int j = 0; j < cfg.d; ++j) dist += std::fabs(table(answer, j) - qf[j]);
        double logic = 0.0;
        for (double v : ql) logic += v;
        return dist + cfg.lambda_logic * logic;
    }

    // distances to every candidate of the sort's universe
    std::vector<double> distances_all(const EmbValues& q, Sort sort) const {
        int n = sort == Sort::EntitySet ? n_entities : n_timestamps;
        std::vector<double> out(n);
        for (Id v = 0; v < n; ++v) out[v] = distance_value(q, v, sort);
        return out;
    }

    // ---- checkpoint io: json header line + raw little-endian doubles ----

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path);
        nlohmann::json header;
        header["format"] = 1;
        header["d"] = cfg.d;
        header["gamma"] = cfg.gamma;
        header["lambda_logic"] = cfg.lambda_logic;
        header["n_entities"] = n_entities;
        header["n_timestamps"] = n_timestamps;
        header["n_relations"] = n_relations;
        nlohmann::json plist = nlohmann::json::array();
        for (const std::string& name : params.names) {
            const Tensor& v = params.values.at(name);
            plist.push_back({{"name", name}, {"rows", v.rows}, {"cols", v.cols}});
        }
        header["params"] = plist;
        out << header.dump() << '\n';
        for (const std::string& name : params.names) {
            const Tensor& v = params.values.at(name);
            out.write(reinterpret_cast<const char*>(v.a.data()),
                      static_cast<std::streamsize>(v.a.size() * sizeof(double)));
        }
    }

    static Model load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        std::string header_line;
        if (!std::getline(in, header_line)) throw std::runtime_error("truncated checkpoint");
        nlohmann::json header = nlohmann::json::parse(header_line);
        if (header.at("format").get<int>() != 1)
            throw std::runtime_error("unsupported checkpoint format");
        ModelConfig cfg;
        cfg.d = header.at("d").get<int>();
        cfg.gamma = header.at("gamma").get<double>();
        cfg.lambda_logic = header.at("lambda_logic").get<double>();
        Model m(cfg, header.at("n_entities").get<int>(), header.at("n_timestamps").get<int>(),
                header.at("n_relations").get<int>());
        for (const auto& p : header.at("params")) {
            const std::string name = p.at("name").get<std::string>();
            Tensor& v = m.params.value(name);
            if (v.rows != p.at("rows").get<int>() || v.cols != p.at("cols").get<int>())
                throw std::runtime_error("checkpoint shape mismatch for " + name);
            in.read(reinterpret_cast<char*>(v.a.data()),
                    static_cast<std::streamsize>(v.a.size() * sizeof(double)));
            if (!in) throw std::runtime_error("truncated checkpoint data for " + name);
        }
        return m;
    }

private:
    void add_mlp(const std::string& prefix, int in, int out) {
        // two affine layers, rectifier between, hidden width = output width
        params.add(prefix + ".w1", out, in);
        params.add(prefix + ".b1", out, 1);
        params.add(prefix + ".w2", out, out);
        params.add(prefix + ".b2", out, 1);
    }

    void init_params(uint64_t seed) {
        std::mt19937_64 rng(seed);
        auto uniform = [&](double lo, double hi) {
            return std::uniform_real_distribution<double>(lo, hi)(rng);
        };
        for (const std::string& name : params.names) {
            Tensor& v = params.value(name);
            if (name.ends_with(".b1") || name.ends_with(".b2")) continue;  // biases zero
            if (name.ends_with(".w1") || name.ends_with(".w2")) {
                double bound = 1.0 / std::sqrt(static_cast<double>(v.cols));
                for (double& x : v.a) x = uniform(-bound, bound);
            } else {
                for (double& x : v.a) x = uniform(-cfg.feature_init, cfg.feature_init);
            }
        }
        // chronological layout for time features: shared ramp plus noise
        if (cfg.time_ramp > 0.0 && n_timestamps > 1) {
            Tensor& tf = params.value("time_feat");
            for (int t = 0; t < n_timestamps; ++t) {
                double ramp = cfg.time_ramp * (2.0 * t / (n_timestamps - 1) - 1.0);
                for (int j = 0; j < cfg.d; ++j)
                    tf(t, j) = ramp + uniform(-cfg.time_noise, cfg.time_noise);
            }
        }
    }

    Var zeros(Tape& t) { return t.constant(Tensor(cfg.d, 1)); }

    static void check_id(Id v, int n, const char* sort) {
        if (v < 0 || v >= n)
            throw std::out_of_range(std::string(sort) + " id out of range: " + std::to_string(v));
    }

    Id check_rel(Id r) {
        check_id(r, n_relations, "relation");
        return r;
    }

    Var mlp(Tape& t, const std::string& prefix, Var x) {
        Var h = t.relu(t.add(t.matmul(leaf(t, prefix + ".w1"), x), leaf(t, prefix + ".b1")));
        return t.add(t.matmul(leaf(t, prefix + ".w2"), h), leaf(t, prefix + ".b2"));
    }

    Var leaf(Tape& t, const std::string& name) {
        return t.leaf(&params.value(name), &params.grad(name));
    }

    std::vector<Emb> encode_children(Tape& t, const ExprPtr& e, const Binding& b) {
        std::vector<Emb> out;
        out.reserve(e->children.size());
        for (const ExprPtr& c : e->children) out.push_back(encode(t, c, b));
        return out;
    }

    std::array<Var, 4> relation_parts(Tape& t, Id r) {
        Var full = t.row(&params.value("relation"), &params.grad("relation"), r);
        int d = cfg.d;
        return {t.slice(full, 0, d), t.slice(full, d, d), t.slice(full, 2 * d, d),
                t.slice(full, 3 * d, d)};
    }

    Emb projection(Tape& t, const std::string& mlp_name, const Emb& a, Id r, const Emb& b) {
        int d = cfg.d;
        Var rel = t.row(&params.value("relation"), &params.grad("relation"), r);
        Var x = t.add(t.add(t.concat({a.ef, a.el, a.tf, a.tl}), rel),
                      t.concat({b.ef, b.el, b.tf, b.tl}));
        Var y = mlp(t, mlp_name, x);
        return {t.slice(y, 0, d), t.sigmoid(t.slice(y, d, d)), t.slice(y, 2 * d, d),
                t.sigmoid(t.slice(y, 3 * d, d))};
    }

    // per-dimension attention over the inputs' (feature, logic) pairs
    Var attention(Tape& t, const std::string& mlp_name, const std::vector<Var>& feats,
                  const std::vector<Var>& logics) {
        std::vector<Var> scores(feats.size());
        for (size_t i = 0; i < feats.size(); ++i)
            scores[i] = mlp(t, mlp_name, t.concat({feats[i], logics[i]}));
        std::vector<Var> weights = t.softmax_over_inputs(scores);
        Var out = t.mul(weights[0], feats[0]);
        for (size_t i = 1; i < feats.size(); ++i) out = t.add(out, t.mul(weights[i], feats[i]));
        return out;
    }

    Var fold_and(Tape& t, const std::vector<Var>& xs) {
        Var out = xs[0];
        for (size_t i = 1; i < xs.size(); ++i) out = t.mul(out, xs[i]);
        return out;
    }

    Var fold_or(Tape& t, const std::vector<Var>& xs) {
        Var out = xs[0];
        for (size_t i = 1; i < xs.size(); ++i)
            out = t.sub(t.add(out, xs[i]), t.mul(out, xs[i]));
        return out;
    }

    Emb dyadic(Tape& t, const std::string& op, const std::vector<Emb>& qs, bool entity_or,
               bool time_or) {
        if (qs.size() < 2) throw std::invalid_argument(op + ": arity must be >= 2");
        std::vector<Var> ef, el, tf, tl;
        for (const Emb& q : qs) {
            ef.push_back(q.ef);
            el.push_back(q.el);
            tf.push_back(q.tf);
            tl.push_back(q.tl);
        }
        Var out_ef = attention(t, op + ".att_e", ef, el);
        Var out_tf = attention(t, op + ".att_t", tf, tl);
        Var out_el = entity_or ? fold_or(t, el) : fold_and(t, el);
        Var out_tl = time_or ? fold_or(t, tl) : fold_and(t, tl);
        return {out_ef, out_el, out_tf, out_tl};
    }
};

}  // namespace tkr
