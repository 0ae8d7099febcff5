#pragma once

// Exact set-semantics execution of query expressions against a graph layer.
// execute() works over the store's indexes with lazily-represented
// complements; brute_force_execute() is an independent cross-check that only
// scans the raw quad list.

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "tkr/query_ast.hpp"
#include "tkr/store.hpp"

namespace tkr {

struct Binding {
    std::map<int, Id> entity, relation, time;  // slot -> id

    Id entity_at(int slot) const { return at(entity, slot, "entity"); }
    Id relation_at(int slot) const { return at(relation, slot, "relation"); }
    Id time_at(int slot) const { return at(time, slot, "time"); }

private:
    static Id at(const std::map<int, Id>& m, int slot, const char* sort) {
        auto it = m.find(slot);
        if (it == m.end())
            throw std::invalid_argument("binding misses " + std::string(sort) + " slot " +
                                        std::to_string(slot));
        return it->second;
    }
};

struct AnswerSet {
    Sort sort;
    std::vector<Id> ids;  // sorted, unique
    friend bool operator==(const AnswerSet&, const AnswerSet&) = default;
};

namespace detail {

// A set of ids, possibly stored as its complement against a universe.
struct IdSet {
    std::vector<Id> ids;  // sorted, unique
    bool complemented = false;
    Id universe = 0;

    size_t count() const { return complemented ? universe - ids.size() : ids.size(); }

    bool contains(Id x) const {
        bool in = std::binary_search(ids.begin(), ids.end(), x);
        return complemented ? !in : in;
    }

    std::vector<Id> materialize() const {
        if (!complemented) return ids;
        std::vector<Id> out;
        out.reserve(count());
        size_t k = 0;
        for (Id x = 0; x < universe; ++x) {
            if (k < ids.size() && ids[k] == x) {
                ++k;
                continue;
            }
            out.push_back(x);
        }
        return out;
    }
};

inline std::vector<Id> union_sorted(const std::vector<Id>& a, const std::vector<Id>& b) {
    std::vector<Id> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline std::vector<Id> intersect_sorted(const std::vector<Id>& a, const std::vector<Id>& b) {
    std::vector<Id> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline std::vector<Id> minus_sorted(const std::vector<Id>& a, const std::vector<Id>& b) {
    std::vector<Id> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline IdSet set_and(const IdSet& a, const IdSet& b) {
    if (!a.complemented && !b.complemented)
        return {intersect_sorted(a.ids, b.ids), false, a.universe};
    if (!a.complemented && b.complemented) return {minus_sorted(a.ids, b.ids), false, a.universe};
    if (a.complemented && !b.complemented) return {minus_sorted(b.ids, a.ids), false, a.universe};
    return {union_sorted(a.ids, b.ids), true, a.universe};  // ~x & ~y = ~(x|y)
}

inline IdSet set_or(const IdSet& a, const IdSet& b) {
    if (!a.complemented && !b.complemented) return {union_sorted(a.ids, b.ids), false, a.universe};
    if (!a.complemented && b.complemented) return {minus_sorted(b.ids, a.ids), true, a.universe};
    if (a.complemented && !b.complemented) return {minus_sorted(a.ids, b.ids), true, a.universe};
    return {intersect_sorted(a.ids, b.ids), true, a.universe};  // ~x | ~y = ~(x&y)
}

inline IdSet set_not(IdSet a) {
    a.complemented = !a.complemented;
    return a;
}

inline IdSet exec(const ExprPtr& e, const Binding& b, const TkgStore& store, Split split) {
    const GraphLayer& layer = store.layer(split);
    Id n_entities = store.entities.size();
    Id n_times = store.timestamps.size();
    switch (e->kind) {
        case NodeKind::EntityAnchor:
            return {{b.entity_at(e->slot)}, false, n_entities};
        case NodeKind::TimeAnchor:
            return {{b.time_at(e->slot)}, false, n_times};
        case NodeKind::Pe: {
            IdSet qe = exec(e->children[0], b, store, split);
            IdSet qt = exec(e->children[1], b, store, split);
            Id r = b.relation_at(e->rel_slot);
            std::vector<Id> out;
            const auto& rel_quads = layer.quads_with_relation(r);
            // index lookups when the key product is small, otherwise one scan
            // over the relation's quads (covers near-universe complements)
            if (!qe.complemented && !qt.complemented &&
                qe.ids.size() * qt.ids.size() <= rel_quads.size()) {
                for (Id s : qe.ids)
                    for (Id t : qt.ids)
                        for (Id o : layer.entities_for(s, r, t)) out.push_back(o);
            } else {
                for (const Quad& q : rel_quads)
                    if (qe.contains(q.s) && qt.contains(q.t)) out.push_back(q.o);
            }
            std::sort(out.begin(), out.end());
            out.erase(std::unique(out.begin(), out.end()), out.end());
            return {std::move(out), false, n_entities};
        }
        case NodeKind::Pt: {
            IdSet q1 = exec(e->children[0], b, store, split);
            IdSet q2 = exec(e->children[1], b, store, split);
            Id r = b.relation_at(e->rel_slot);
            std::vector<Id> out;
            const auto& rel_quads = layer.quads_with_relation(r);
            if (!q1.complemented && !q2.complemented &&
                q1.ids.size() * q2.ids.size() <= rel_quads.size()) {
                for (Id s : q1.ids)
                    for (Id o : q2.ids)
                        for (Id t : layer.times_for(s, r, o)) out.push_back(t);
            } else {
                for (const Quad& q : rel_quads)
                    if (q1.contains(q.s) && q2.contains(q.o)) out.push_back(q.t);
            }
            std::sort(out.begin(), out.end());
            out.erase(std::unique(out.begin(), out.end()), out.end());
            return {std::move(out), false, n_times};
        }
        case NodeKind::And:
        case NodeKind::TimeAnd: {
            IdSet acc = exec(e->children[0], b, store, split);
            for (size_t i = 1; i < e->children.size(); ++i)
                acc = set_and(acc, exec(e->children[i], b, store, split));
            return acc;
        }
        case NodeKind::Or:
        case NodeKind::TimeOr: {
            IdSet acc = exec(e->children[0], b, store, split);
            for (size_t i = 1; i < e->children.size(); ++i)
                acc = set_or(acc, exec(e->children[i], b, store, split));
            return acc;
        }
        case NodeKind::Not:
        case NodeKind::TimeNot:
            return set_not(exec(e->children[0], b, store, split));
        case NodeKind::After: {
            IdSet qt = exec(e->children[0], b, store, split);
            std::vector<Id> members = qt.materialize();
            std::vector<Id> out;
            if (!members.empty())
                for (Id t = members.back() + 1; t < n_times; ++t) out.push_back(t);
            return {std::move(out), false, n_times};
        }
        case NodeKind::Before: {
            IdSet qt = exec(e->children[0], b, store, split);
            std::vector<Id> members = qt.materialize();
            std::vector<Id> out;
            if (!members.empty())
                for (Id t = 0; t < members.front(); ++t) out.push_back(t);
            return {std::move(out), false, n_times};
        }
    }
    throw std::logic_error("unreachable expression kind");
}

// Naive scans over the raw quad list, no indexes; cross-check only.
inline std::set<Id> brute(const ExprPtr& e, const Binding& b, const TkgStore& store, Split split) {
    const std::vector<Quad>& facts = store.layer(split).facts;
    Id n_entities = store.entities.size();
    Id n_times = store.timestamps.size();
    switch (e->kind) {
        case NodeKind::EntityAnchor: return {b.entity_at(e->slot)};
        case NodeKind::TimeAnchor: return {b.time_at(e->slot)};
        case NodeKind::Pe: {
            std::set<Id> qe = brute(e->children[0], b, store, split);
            std::set<Id> qt = brute(e->children[1], b, store, split);
            Id r = b.relation_at(e->rel_slot);
            std::set<Id> out;
            for (const Quad& q : facts)
                if (q.r == r && qe.count(q.s) && qt.count(q.t)) out.insert(q.o);
            return out;
        }
        case NodeKind::Pt: {
            std::set<Id> q1 = brute(e->children[0], b, store, split);
            std::set<Id> q2 = brute(e->children[1], b, store, split);
            Id r = b.relation_at(e->rel_slot);
            std::set<Id> out;
            for (const Quad& q : facts)
                if (q.r == r && q1.count(q.s) && q2.count(q.o)) out.insert(q.t);
            return out;
        }
        case NodeKind::And:
        case NodeKind::TimeAnd: {
            std::set<Id> acc = brute(e->children[0], b, store, split);
            for (size_t i = 1; i < e->children.size(); ++i) {
                std::set<Id> next = brute(e->children[i], b, store, split);
                std::set<Id> keep;
                for (Id x : acc)
                    if (next.count(x)) keep.insert(x);
                acc = std::move(keep);
            }
            return acc;
        }
        case NodeKind::Or:
        case NodeKind::TimeOr: {
            std::set<Id> acc;
            for (const ExprPtr& c : e->children) {
                std::set<Id> next = brute(c, b, store, split);
                acc.insert(next.begin(), next.end());
            }
            return acc;
        }
        case NodeKind::Not: {
            std::set<Id> inner = brute(e->children[0], b, store, split);
            std::set<Id> out;
            for (Id x = 0; x < n_entities; ++x)
                if (!inner.count(x)) out.insert(x);
            return out;
        }
        case NodeKind::TimeNot: {
            std::set<Id> inner = brute(e->children[0], b, store, split);
            std::set<Id> out;
            for (Id t = 0; t < n_times; ++t)
                if (!inner.count(t)) out.insert(t);
            return out;
        }
        case NodeKind::After: {
            std::set<Id> inner = brute(e->children[0], b, store, split);
            std::set<Id> out;
            if (!inner.empty())
                for (Id t = 0; t < n_times; ++t)
                    if (t > *inner.rbegin()) out.insert(t);
            return out;
        }
        case NodeKind::Before: {
            std::set<Id> inner = brute(e->children[0], b, store, split);
            std::set<Id> out;
            if (!inner.empty())
                for (Id t = 0; t < n_times; ++t)
                    if (t < *inner.begin()) out.insert(t);
            return out;
        }
    }
    throw std::logic_error("unreachable expression kind");
}

}  // namespace detail

inline AnswerSet execute(const ExprPtr& e, const Binding& b, const TkgStore& store, Split split) {
    detail::IdSet s = detail::exec(e, b, store, split);
    return {e->sort, s.materialize()};
}

inline AnswerSet brute_force_execute(const ExprPtr& e, const Binding& b, const TkgStore& store,
                                     Split split) {
    std::set<Id> s = detail::brute(e, b, store, split);
    return {e->sort, std::vector<Id>(s.begin(), s.end())};
}

}  // namespace tkr
