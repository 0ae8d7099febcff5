#pragma once

// Immutable in-memory temporal quad store: string dictionaries, inverse
// relation augmentation, cumulative train/valid/test layers, and the two
// projection indexes (s,r,t)->o and (s,r,o)->t.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace tkr {

using Id = int32_t;

enum class Split { train = 0, valid = 1, test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        default: return "test";
    }
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "valid") return Split::valid;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + s);
}

struct Quad {
    Id s, r, o, t;
    friend bool operator==(const Quad&, const Quad&) = default;
    friend auto operator<=>(const Quad&, const Quad&) = default;
};

class Dict {
public:
    Id intern(const std::string& surface) {
        auto it = index_.find(surface);
        if (it != index_.end()) return it->second;
        Id id = static_cast<Id>(surfaces_.size());
        surfaces_.push_back(surface);
        index_.emplace(surface, id);
        return id;
    }

    Id lookup(const std::string& surface) const {
        auto it = index_.find(surface);
        if (it == index_.end()) return -1;
        return it->second;
    }

    const std::string& surface(Id id) const { return surfaces_.at(id); }
    Id size() const { return static_cast<Id>(surfaces_.size()); }
    bool frozen = false;  // built from dict files: unknown strings are errors

private:
    std::vector<std::string> surfaces_;
    std::unordered_map<std::string, Id> index_;
};

namespace detail {

// (a,b,c) -> 64-bit index key; each component must fit in 21 bits.
inline uint64_t pack3(Id a, Id b, Id c) {
    return (static_cast<uint64_t>(a) << 42) | (static_cast<uint64_t>(b) << 21) |
           static_cast<uint64_t>(c);
}

inline uint64_t fnv1a(const std::string& bytes, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace detail

class GraphLayer {
public:
    Split tag = Split::train;
    std::vector<Quad> facts;  // sorted, unique, inverse-augmented

    // Lookup indexes (built once, immutable afterwards).
    const std::vector<Id>& entities_for(Id s, Id r, Id t) const {
        auto it = ent_index_.find(detail::pack3(s, r, t));
        return it == ent_index_.end() ? empty_ : it->second;
    }

    const std::vector<Id>& times_for(Id s, Id r, Id o) const {
        auto it = time_index_.find(detail::pack3(s, r, o));
        return it == time_index_.end() ? empty_ : it->second;
    }

    const std::vector<Quad>& quads_with_relation(Id r) const { return by_rel_.at(r); }
    const std::vector<Quad>& quads_with_head(Id s) const { return by_head_.at(s); }
    const std::vector<Quad>& quads_with_time(Id t) const { return by_time_.at(t); }

    void build_indexes(Id n_entities, Id n_relations_aug, Id n_timestamps) {
        by_rel_.assign(n_relations_aug, {});
        by_head_.assign(n_entities, {});
        by_time_.assign(n_timestamps, {});
        for (const Quad& q : facts) {
            ent_index_[detail::pack3(q.s, q.r, q.t)].push_back(q.o);
            time_index_[detail::pack3(q.s, q.r, q.o)].push_back(q.t);
            by_rel_[q.r].push_back(q);
            by_head_[q.s].push_back(q);
            by_time_[q.t].push_back(q);
        }
        for (auto& [k, v] : ent_index_) std::sort(v.begin(), v.end());
        for (auto& [k, v] : time_index_) std::sort(v.begin(), v.end());
    }

private:
    std::unordered_map<uint64_t, std::vector<Id>> ent_index_;
    std::unordered_map<uint64_t, std::vector<Id>> time_index_;
    std::vector<std::vector<Quad>> by_rel_;
    std::vector<std::vector<Quad>> by_head_;
    std::vector<std::vector<Quad>> by_time_;
    static inline const std::vector<Id> empty_{};
};

class TkgStore {
public:
    Dict entities, relations, timestamps;  // relations: base names only
    Id base_relation_count = 0;

    Id inverse_of(Id r) const {
        return r < base_relation_count ? r + base_relation_count : r - base_relation_count;
    }
    Id augmented_relation_count() const { return base_relation_count * 2; }

    const GraphLayer& layer(Split s) const { return layers_[static_cast<int>(s)]; }

    // Input line counts per split, pre-inversion pre-dedup.
    long input_facts(Split s) const { return input_counts_[static_cast<int>(s)]; }
    long duplicates(Split s) const { return dup_counts_[static_cast<int>(s)]; }
    uint64_t fingerprint() const { return fingerprint_; }

    const std::vector<Id>& project_entities(Split layer, Id s, Id r, Id t) const {
        return this->layer(layer).entities_for(s, r, t);
    }
    const std::vector<Id>& project_times(Split layer, Id s, Id r, Id o) const {
        return this->layer(layer).times_for(s, r, o);
    }

    // Relation surface for an augmented id (inverse ids get a suffix).
    std::string relation_surface(Id r) const {
        return r < base_relation_count ? relations.surface(r)
                                       : relations.surface(r - base_relation_count) + "_inv";
    }

    static TkgStore load(const std::string& train_path, const std::string& valid_path,
                         const std::string& test_path, const std::string& dict_dir = "") {
        TkgStore st;
        if (!dict_dir.empty()) st.try_load_dicts(dict_dir);
        std::array<std::vector<Quad>, 3> raw;
        st.read_split(train_path, raw[0], Split::train);
        st.read_split(valid_path, raw[1], Split::valid);
        st.read_split(test_path, raw[2], Split::test);
        st.finish(raw);
        if (!dict_dir.empty()) st.try_emit_dicts(dict_dir);
        return st;
    }

    // Same pipeline fed from in-memory lines (tests, synthetic graphs).
    static TkgStore load_from_lines(const std::vector<std::string>& train,
                                    const std::vector<std::string>& valid,
                                    const std::vector<std::string>& test) {
        TkgStore st;
        std::array<std::vector<Quad>, 3> raw;
        st.parse_lines(train, raw[0], Split::train, "<train>");
        st.parse_lines(valid, raw[1], Split::valid, "<valid>");
        st.parse_lines(test, raw[2], Split::test, "<test>");
        st.finish(raw);
        return st;
    }

    nlohmann::json stats() const {
        nlohmann::json j;
        j["entities"] = entities.size();
        j["relations"] = base_relation_count;
        j["relations_augmented"] = augmented_relation_count();
        j["timestamps"] = timestamps.size();
        j["fingerprint"] = fingerprint_;
        for (Split s : {Split::train, Split::valid, Split::test}) {
            nlohmann::json js;
            js["input_facts"] = input_facts(s);
            js["duplicates"] = duplicates(s);
            js["layer_facts"] = static_cast<long>(layer(s).facts.size());
            j["splits"][split_name(s)] = js;
        }
        return j;
    }

private:
    std::array<GraphLayer, 3> layers_;
    std::array<long, 3> input_counts_{0, 0, 0};
    std::array<long, 3> dup_counts_{0, 0, 0};
    uint64_t fingerprint_ = 1469598103934665603ull;

    void try_load_dicts(const std::string& dir) {
        auto load_one = [&](const char* file, Dict& d) {
            std::filesystem::path p = std::filesystem::path(dir) / file;
            std::ifstream in(p);
            if (!in) return;
            std::string line;
            std::vector<std::pair<long, std::string>> rows;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                auto tab = line.find('\t');
                if (tab == std::string::npos)
                    throw std::runtime_error("malformed dictionary line in " + p.string());
                rows.emplace_back(std::stol(line.substr(0, tab)), line.substr(tab + 1));
            }
            std::sort(rows.begin(), rows.end());
            for (auto& [id, surface] : rows) {
                Id got = d.intern(surface);
                if (got != id)
                    throw std::runtime_error("non-contiguous id in dictionary " + p.string());
            }
            d.frozen = true;
        };
        load_one("entities.dict", entities);
        load_one("relations.dict", relations);
        load_one("timestamps.dict", timestamps);
    }

    void try_emit_dicts(const std::string& dir) const {
        auto emit_one = [&](const char* file, const Dict& d) {
            std::filesystem::path p = std::filesystem::path(dir) / file;
            if (std::filesystem::exists(p)) return;
            std::ofstream out(p);
            if (!out) return;  // read-only dirs are tolerated
            for (Id i = 0; i < d.size(); ++i) out << i << '\t' << d.surface(i) << '\n';
        };
        emit_one("entities.dict", entities);
        emit_one("relations.dict", relations);
        emit_one("timestamps.dict", timestamps);
    }

    Id resolve(Dict& d, const std::string& tok, const char* sort, const std::string& where,
               long lineno) {
        if (d.frozen) {
            Id id = d.lookup(tok);
            if (id < 0)
                throw std::runtime_error("unknown " + std::string(sort) + " \"" + tok + "\" at " +
                                         where + ":" + std::to_string(lineno));
            return id;
        }
        return d.intern(tok);
    }

    void parse_lines(const std::vector<std::string>& lines, std::vector<Quad>& out, Split split,
                     const std::string& where) {
        long lineno = 0;
        for (const std::string& line : lines) {
            ++lineno;
            fingerprint_ = detail::fnv1a(line, fingerprint_);
            if (line.empty()) continue;
            std::array<std::string, 4> tok;
            size_t start = 0;
            for (int i = 0; i < 4; ++i) {
                size_t tab = i < 3 ? line.find('\t', start) : line.size();
                if (tab == std::string::npos)
                    throw std::runtime_error("expected 4 tab-separated fields at " + where + ":" +
                                             std::to_string(lineno));
                tok[i] = line.substr(start, tab - start);
                start = tab + 1;
            }
            if (!tok[3].empty() && tok[3].back() == '\r') tok[3].pop_back();
            Quad q;
            q.s = resolve(entities, tok[0], "entity", where, lineno);
            q.r = resolve(relations, tok[1], "relation", where, lineno);
            q.o = resolve(entities, tok[2], "entity", where, lineno);
            q.t = resolve(timestamps, tok[3], "timestamp", where, lineno);
            out.push_back(q);
            ++input_counts_[static_cast<int>(split)];
        }
    }

    void read_split(const std::string& path, std::vector<Quad>& out, Split split) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open " + path);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
        parse_lines(lines, out, split, path);
    }

    void finish(std::array<std::vector<Quad>, 3>& raw) {
        base_relation_count = relations.size();
        std::vector<Quad> cumulative;
        for (int i = 0; i < 3; ++i) {
            for (const Quad& q : raw[i]) {
                cumulative.push_back(q);
                cumulative.push_back(Quad{q.o, static_cast<Id>(q.r + base_relation_count), q.s, q.t});
            }
            GraphLayer& layer = layers_[i];
            layer.tag = static_cast<Split>(i);
            layer.facts = cumulative;
            std::sort(layer.facts.begin(), layer.facts.end());
            size_t before = layer.facts.size();
            layer.facts.erase(std::unique(layer.facts.begin(), layer.facts.end()),
                              layer.facts.end());
            // dedup counter in pre-inversion units relative to the previous layer
            long prev = i == 0 ? 0 : static_cast<long>(layers_[i - 1].facts.size());
            dup_counts_[i] = (static_cast<long>(before) - prev -
                              (static_cast<long>(layer.facts.size()) - prev)) /
                             2;
            layer.build_indexes(entities.size(), augmented_relation_count(), timestamps.size());
            cumulative = layer.facts;
        }
    }
};

}  // namespace tkr
