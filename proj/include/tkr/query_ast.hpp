#pragma once

// Typed AST for complex query functions over a temporal knowledge graph,
// a recursive-descent parser for their textual form, a canonical printer,
// and the registry of the 34 named query structures plus the base Pe/Pt.
//
// Grammar:
//   Expr   := Name '(' Expr (',' Expr)* ')' | Anchor
//   Anchor := ('e'|'r'|'t') digits
//   Name   := Pe | Pt | And | Or | Not | TimeAnd | TimeOr | TimeNot
//           | after | before | e2i | t2i        (case-insensitive)
// e2i/t2i are macros, expanded inline to And/TimeAnd of projections.

#include <cctype>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tkr {

enum class Sort { EntitySet, TimeSet };

enum class NodeKind {
    EntityAnchor,
    TimeAnchor,
    Pe,
    Pt,
    And,
    Or,
    Not,
    TimeAnd,
    TimeOr,
    TimeNot,
    After,
    Before,
};

struct QueryExpr;
using ExprPtr = std::shared_ptr<const QueryExpr>;

struct QueryExpr {
    NodeKind kind;
    int slot = -1;      // anchor slot number (EntityAnchor/TimeAnchor)
    int rel_slot = -1;  // relation slot number (Pe/Pt)
    std::vector<ExprPtr> children;
    Sort sort = Sort::EntitySet;
};

struct ParseError : std::runtime_error {
    size_t offset;
    ParseError(const std::string& msg, size_t off)
        : std::runtime_error(msg + " (at byte " + std::to_string(off) + ")"), offset(off) {}
};

struct SortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace ast {

inline ExprPtr entity_anchor(int slot) {
    return std::make_shared<QueryExpr>(
        QueryExpr{NodeKind::EntityAnchor, slot, -1, {}, Sort::EntitySet});
}

inline ExprPtr time_anchor(int slot) {
    return std::make_shared<QueryExpr>(QueryExpr{NodeKind::TimeAnchor, slot, -1, {}, Sort::TimeSet});
}

inline void require_sort(const ExprPtr& e, Sort want, const char* where) {
    if (e->sort != want)
        throw SortError(std::string(where) + ": expected " +
                        (want == Sort::EntitySet ? "entity" : "time") + " expression");
}

inline ExprPtr pe(ExprPtr entity, int rel_slot, ExprPtr time) {
    require_sort(entity, Sort::EntitySet, "Pe argument 1");
    require_sort(time, Sort::TimeSet, "Pe argument 3");
    return std::make_shared<QueryExpr>(QueryExpr{
        NodeKind::Pe, -1, rel_slot, {std::move(entity), std::move(time)}, Sort::EntitySet});
}

inline ExprPtr pt(ExprPtr e1, int rel_slot, ExprPtr e2) {
    require_sort(e1, Sort::EntitySet, "Pt argument 1");
    require_sort(e2, Sort::EntitySet, "Pt argument 3");
    return std::make_shared<QueryExpr>(
        QueryExpr{NodeKind::Pt, -1, rel_slot, {std::move(e1), std::move(e2)}, Sort::TimeSet});
}

inline ExprPtr nary(NodeKind kind, std::vector<ExprPtr> children) {
    Sort child_sort =
        (kind == NodeKind::And || kind == NodeKind::Or) ? Sort::EntitySet : Sort::TimeSet;
    const char* name = kind == NodeKind::And    ? "And"
                       : kind == NodeKind::Or   ? "Or"
                       : kind == NodeKind::TimeAnd ? "TimeAnd"
                                                   : "TimeOr";
    if (children.size() < 2)
        throw SortError(std::string(name) + ": arity must be >= 2");
    for (const ExprPtr& c : children) require_sort(c, child_sort, name);
    return std::make_shared<QueryExpr>(QueryExpr{kind, -1, -1, std::move(children), child_sort});
}

inline ExprPtr and_(std::vector<ExprPtr> cs) { return nary(NodeKind::And, std::move(cs)); }
inline ExprPtr or_(std::vector<ExprPtr> cs) { return nary(NodeKind::Or, std::move(cs)); }
inline ExprPtr time_and(std::vector<ExprPtr> cs) { return nary(NodeKind::TimeAnd, std::move(cs)); }
inline ExprPtr time_or(std::vector<ExprPtr> cs) { return nary(NodeKind::TimeOr, std::move(cs)); }

inline ExprPtr not_(ExprPtr c) {
    require_sort(c, Sort::EntitySet, "Not");
    return std::make_shared<QueryExpr>(
        QueryExpr{NodeKind::Not, -1, -1, {std::move(c)}, Sort::EntitySet});
}

inline ExprPtr time_not(ExprPtr c) {
    require_sort(c, Sort::TimeSet, "TimeNot");
    return std::make_shared<QueryExpr>(
        QueryExpr{NodeKind::TimeNot, -1, -1, {std::move(c)}, Sort::TimeSet});
}

inline ExprPtr after(ExprPtr c) {
    require_sort(c, Sort::TimeSet, "after");
    return std::make_shared<QueryExpr>(
        QueryExpr{NodeKind::After, -1, -1, {std::move(c)}, Sort::TimeSet});
}

inline ExprPtr before(ExprPtr c) {
    require_sort(c, Sort::TimeSet, "before");
    return std::make_shared<QueryExpr>(
        QueryExpr{NodeKind::Before, -1, -1, {std::move(c)}, Sort::TimeSet});
}

}  // namespace ast

namespace detail {

// Anchors may also be written e:NAME / r:NAME / t:NAME; the parser assigns
// fresh slot numbers in occurrence order and reports the surface strings.
struct SurfaceAnchors {
    std::vector<std::string> entity, relation, time;  // index = slot number - 1
};

class Parser {
public:
    Parser(const std::string& text, SurfaceAnchors* surfaces)
        : text_(text), surfaces_(surfaces) {}

    ExprPtr parse() {
        ExprPtr e = expr();
        skip_ws();
        if (pos_ != text_.size()) throw ParseError("trailing input", pos_);
        return e;
    }

private:
    const std::string& text_;
    size_t pos_ = 0;
    SurfaceAnchors* surfaces_;

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    void expect(char c) {
        if (peek() != c) throw ParseError(std::string("expected '") + c + "'", pos_);
        ++pos_;
    }

    std::string ident() {
        skip_ws();
        size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        if (pos_ == start) throw ParseError("expected a name or anchor", start);
        return text_.substr(start, pos_ - start);
    }

    static std::string lower(std::string s) {
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    }

    // "e12" -> slot 12; "e:Alice" -> fresh surface slot
    int anchor_slot(const std::string& head, char sort_char, size_t at) {
        if (head.size() == 1 && pos_ < text_.size() && text_[pos_] == ':') {
            if (!surfaces_) throw ParseError("surface anchors not allowed here", at);
            ++pos_;
            size_t start = pos_;
            while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ')' &&
                   !std::isspace(static_cast<unsigned char>(text_[pos_])))
                ++pos_;
            if (pos_ == start) throw ParseError("empty surface anchor", start);
            std::string surface = text_.substr(start, pos_ - start);
            auto& list = sort_char == 'e'   ? surfaces_->entity
                         : sort_char == 'r' ? surfaces_->relation
                                            : surfaces_->time;
            list.push_back(surface);
            return static_cast<int>(list.size());
        }
        for (size_t i = 1; i < head.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(head[i])))
                throw ParseError("malformed anchor \"" + head + "\"", at);
        if (head.size() < 2) throw ParseError("malformed anchor \"" + head + "\"", at);
        return std::stoi(head.substr(1));
    }

    int rel_anchor() {
        skip_ws();
        size_t at = pos_;
        std::string head = ident();
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(head[0])));
        if (c != 'r') throw ParseError("expected a relation slot", at);
        return anchor_slot(head, 'r', at);
    }

    std::vector<ExprPtr> args_until_close(ExprPtr first) {
        std::vector<ExprPtr> out;
        out.push_back(std::move(first));
        while (peek() == ',') {
            ++pos_;
            out.push_back(expr());
        }
        expect(')');
        return out;
    }

    ExprPtr expr() {
        skip_ws();
        size_t at = pos_;
        std::string head = ident();
        std::string name = lower(head);
        if (peek() != '(') {
            char c = name[0];
            if (c == 'e') return ast::entity_anchor(anchor_slot(head, 'e', at));
            if (c == 't') return ast::time_anchor(anchor_slot(head, 't', at));
            throw ParseError("unknown anchor sort in \"" + head + "\"", at);
        }
        ++pos_;  // '('
        try {
            if (name == "pe") {
                ExprPtr a = expr();
                expect(',');
                int r = rel_anchor();
                expect(',');
                ExprPtr b = expr();
                expect(')');
                return ast::pe(std::move(a), r, std::move(b));
            }
            if (name == "pt") {
                ExprPtr a = expr();
                expect(',');
                int r = rel_anchor();
                expect(',');
                ExprPtr b = expr();
                expect(')');
                return ast::pt(std::move(a), r, std::move(b));
            }
            if (name == "and") return ast::and_(args_until_close(expr()));
            if (name == "or") return ast::or_(args_until_close(expr()));
            if (name == "timeand") return ast::time_and(args_until_close(expr()));
            if (name == "timeor") return ast::time_or(args_until_close(expr()));
            if (name == "not") {
                ExprPtr c = expr();
                expect(')');
                return ast::not_(std::move(c));
            }
            if (name == "timenot") {
                ExprPtr c = expr();
                expect(')');
                return ast::time_not(std::move(c));
            }
            if (name == "after") {
                ExprPtr c = expr();
                expect(')');
                return ast::after(std::move(c));
            }
            if (name == "before") {
                ExprPtr c = expr();
                expect(')');
                return ast::before(std::move(c));
            }
            if (name == "e2i" || name == "t2i") {
                // macro: six positional args (expr, rel, expr) x2 -> pair of projections
                ExprPtr a1 = expr();
                expect(',');
                int r1 = rel_anchor();
                expect(',');
                ExprPtr b1 = expr();
                expect(',');
                ExprPtr a2 = expr();
                expect(',');
                int r2 = rel_anchor();
                expect(',');
                ExprPtr b2 = expr();
                expect(')');
                if (name == "e2i")
                    return ast::and_({ast::pe(std::move(a1), r1, std::move(b1)),
                                      ast::pe(std::move(a2), r2, std::move(b2))});
                return ast::time_and({ast::pt(std::move(a1), r1, std::move(b1)),
                                      ast::pt(std::move(a2), r2, std::move(b2))});
            }
        } catch (const SortError& e) {
            throw SortError(std::string(e.what()) + " in " + head + "(...) at byte " +
                            std::to_string(at));
        }
        throw ParseError("unknown name \"" + head + "\"", at);
    }
};

}  // namespace detail

inline ExprPtr parse(const std::string& text) {
    return detail::Parser(text, nullptr).parse();
}

inline ExprPtr parse_with_surfaces(const std::string& text, detail::SurfaceAnchors& out) {
    return detail::Parser(text, &out).parse();
}

inline std::string render(const ExprPtr& e) {
    switch (e->kind) {
        case NodeKind::EntityAnchor: return "e" + std::to_string(e->slot);
        case NodeKind::TimeAnchor: return "t" + std::to_string(e->slot);
        case NodeKind::Pe:
            return "Pe(" + render(e->children[0]) + ", r" + std::to_string(e->rel_slot) + ", " +
                   render(e->children[1]) + ")";
        case NodeKind::Pt:
            return "Pt(" + render(e->children[0]) + ", r" + std::to_string(e->rel_slot) + ", " +
                   render(e->children[1]) + ")";
        default: break;
    }
    const char* name = e->kind == NodeKind::And       ? "And"
                       : e->kind == NodeKind::Or      ? "Or"
                       : e->kind == NodeKind::Not     ? "Not"
                       : e->kind == NodeKind::TimeAnd ? "TimeAnd"
                       : e->kind == NodeKind::TimeOr  ? "TimeOr"
                       : e->kind == NodeKind::TimeNot ? "TimeNot"
                       : e->kind == NodeKind::After   ? "after"
                                                      : "before";
    std::string out = std::string(name) + "(";
    for (size_t i = 0; i < e->children.size(); ++i) {
        if (i) out += ", ";
        out += render(e->children[i]);
    }
    return out + ")";
}

inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a->kind != b->kind || a->slot != b->slot || a->rel_slot != b->rel_slot ||
        a->children.size() != b->children.size())
        return false;
    for (size_t i = 0; i < a->children.size(); ++i)
        if (!expr_equal(a->children[i], b->children[i])) return false;
    return true;
}

struct SlotLists {
    std::vector<int> entity, relation, time;  // first-occurrence order, de-duplicated
};

namespace detail {
inline void collect_slots(const ExprPtr& e, SlotLists& out) {
    auto push_unique = [](std::vector<int>& v, int slot) {
        for (int s : v)
            if (s == slot) return;
        v.push_back(slot);
    };
    switch (e->kind) {
        case NodeKind::EntityAnchor: push_unique(out.entity, e->slot); return;
        case NodeKind::TimeAnchor: push_unique(out.time, e->slot); return;
        case NodeKind::Pe:
        case NodeKind::Pt:
            collect_slots(e->children[0], out);
            push_unique(out.relation, e->rel_slot);
            collect_slots(e->children[1], out);
            return;
        default:
            for (const ExprPtr& c : e->children) collect_slots(c, out);
    }
}
}  // namespace detail

inline SlotLists free_slots(const ExprPtr& e) {
    SlotLists out;
    detail::collect_slots(e, out);
    return out;
}

// Lint: negation appears only directly under And/TimeAnd (holds for every
// registry structure; not a grammar rule).
inline bool negation_only_under_and(const ExprPtr& e, bool parent_is_and = false) {
    if ((e->kind == NodeKind::Not || e->kind == NodeKind::TimeNot) && !parent_is_and) return false;
    bool is_and = e->kind == NodeKind::And || e->kind == NodeKind::TimeAnd;
    for (const ExprPtr& c : e->children)
        if (!negation_only_under_and(c, is_and)) return false;
    return true;
}

struct StructureDef {
    std::string name;
    std::string text;
    ExprPtr expr;
    SlotLists slots;
    Sort answer_sort;
};

inline const std::vector<StructureDef>& registry() {
    static const std::vector<StructureDef> defs = [] {
        // name, textual form (the two base structures first)
        const std::pair<const char*, const char*> rows[] = {
            {"Pe", "Pe(e1, r1, t1)"},
            {"Pt", "Pt(e1, r1, e2)"},
            {"Pe2", "Pe(Pe(e1, r1, t1), r2, t2)"},
            {"Pe3", "Pe(Pe(Pe(e1, r1, t1), r2, t2), r3, t3)"},
            {"Pe_Pt", "Pe(e1, r1, Pt(e2, r2, e3))"},
            {"e2i", "And(Pe(e1, r1, t1), Pe(e2, r2, t2))"},
            {"e3i", "And(Pe(e1, r1, t1), Pe(e2, r2, t2), Pe(e3, r3, t3))"},
            {"e2i_Pe", "And(Pe(Pe(e1, r1, t1), r2, t2), Pe(e2, r3, t3))"},
            {"Pe_e2i", "Pe(e2i(e1, r1, t1, e2, r2, t2), r3, t3)"},
            {"Pe_t2i", "Pe(e1, r1, t2i(e2, r2, e3, e4, r3, e5))"},
            {"e2i_NPe", "And(Not(Pe(Pe(e1, r1, t1), r2, t2)), Pe(e2, r3, t3))"},
            {"e2i_PeN", "And(Pe(Pe(e1, r1, t1), r2, t2), Not(Pe(e2, r3, t3)))"},
            {"Pe_e2i_Pe_NPe", "Pe(And(Pe(e1, r1, t1), Not(Pe(e2, r2, t2))), r3, t3)"},
            {"e2i_N", "And(Pe(e1, r1, t1), Not(Pe(e2, r2, t2)))"},
            {"e3i_N", "And(Pe(e1, r1, t1), Pe(e2, r2, t2), Not(Pe(e3, r3, t3)))"},
            {"e2u", "Or(Pe(e1, r1, t1), Pe(e2, r2, t2))"},
            {"Pe_e2u", "Pe(Or(Pe(e1, r1, t1), Pe(e2, r2, t2)), r3, t3)"},
            {"Pt_lPe", "Pt(Pe(e1, r1, t1), r2, e2)"},
            {"Pt_rPe", "Pt(e1, r1, Pe(e2, r2, t1))"},
            {"t2i", "TimeAnd(Pt(e1, r1, e2), Pt(e3, r2, e4))"},
            {"t3i", "TimeAnd(Pt(e1, r1, e2), Pt(e3, r2, e4), Pt(e5, r3, e6))"},
            {"t2i_Pe", "TimeAnd(Pt(Pe(e1, r1, t1), r2, e2), Pt(e3, r3, e4))"},
            {"Pt_le2i", "Pt(e2i(e1, r1, t1, e2, r2, t2), r3, e3)"},
            {"Pt_re2i", "Pt(e1, r1, e2i(e2, r2, t1, e3, r3, t2))"},
            {"t2i_NPt", "TimeAnd(TimeNot(Pt(Pe(e1, r1, t1), r2, e2)), Pt(e3, r3, e4))"},
            {"t2i_PtN", "TimeAnd(Pt(Pe(e1, r1, t1), r2, e2), TimeNot(Pt(e3, r3, e4)))"},
            {"Pe_t2i_PtPe_NPt",
             "Pe(e1, r1, TimeAnd(Pt(Pe(e2, r2, t1), r3, e3), TimeNot(Pt(e4, r4, e5))))"},
            {"t2i_N", "TimeAnd(Pt(e1, r1, e2), TimeNot(Pt(e3, r2, e4)))"},
            {"t3i_N", "TimeAnd(Pt(e1, r1, e2), Pt(e3, r2, e4), TimeNot(Pt(e5, r3, e6)))"},
            {"t2u", "TimeOr(Pt(e1, r1, e2), Pt(e3, r2, e4))"},
            {"Pe_t2u", "Pe(e1, r1, TimeOr(Pt(e2, r2, e3), Pt(e4, r3, e5)))"},
            {"Pe_aPt", "Pe(e1, r1, after(Pt(e2, r2, e3)))"},
            {"Pe_bPt", "Pe(e1, r1, before(Pt(e2, r2, e3)))"},
            {"Pe_at2i", "Pe(e1, r1, after(t2i(e2, r2, e3, e4, r3, e5)))"},
            {"Pe_bt2i", "Pe(e1, r1, before(t2i(e2, r2, e3, e4, r3, e5)))"},
            {"between", "TimeAnd(after(Pt(e1, r1, e2)), before(Pt(e3, r2, e4)))"},
        };
        std::vector<StructureDef> out;
        for (const auto& [name, text] : rows) {
            StructureDef d;
            d.name = name;
            d.text = text;
            d.expr = parse(text);
            d.slots = free_slots(d.expr);
            d.answer_sort = d.expr->sort;
            out.push_back(std::move(d));
        }
        return out;
    }();
    return defs;
}

inline const StructureDef* find_structure(const std::string& name) {
    for (const StructureDef& d : registry())
        if (d.name == name) return &d;
    return nullptr;
}

// The 28 structures used for training (those sampled on the train split).
inline std::vector<std::string> default_training_structures() {
    return {"Pe",      "Pt",      "Pe2",     "Pe3",     "Pe_Pt",   "e2i",     "e3i",
            "e2i_NPe", "e2i_PeN", "Pe_e2i_Pe_NPe", "e2i_N", "e3i_N", "Pt_lPe", "Pt_rPe",
            "t2i",     "t3i",     "Pt_le2i", "Pt_re2i", "t2i_NPt", "t2i_PtN",
            "Pe_t2i_PtPe_NPt", "t2i_N", "t3i_N", "Pe_aPt", "Pe_bPt", "Pe_at2i",
            "Pe_bt2i", "between"};
}

}  // namespace tkr
