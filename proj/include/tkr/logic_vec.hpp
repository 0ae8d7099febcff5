#pragma once

// Element-wise many-valued logic on vectors in [0,1]^d.
// Scalar forms: NOT(a)=1-a, AND(a,b)=ab, OR(a,b)=a+b-ab,
// IMPL(a,b)=1-a(1-b), XOR(a,b)=a+b-2ab.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tkr {

using LogicVec = std::vector<double>;

namespace detail {

constexpr double kLogicSlack = 1e-9;

inline double check_component(double x) {
    if (x < -kLogicSlack || x > 1.0 + kLogicSlack)
        throw std::invalid_argument("logic value outside [0,1]: " + std::to_string(x));
    if (x < 0.0) return 0.0;
    if (x > 1.0) return 1.0;
    return x;
}

inline void check_same_dim(const LogicVec& a, const LogicVec& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("logic vector dimension mismatch: " +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

template <class F>
LogicVec zip(const LogicVec& a, const LogicVec& b, F f) {
    check_same_dim(a, b);
    LogicVec out(a.size());
    for (size_t i = 0; i < a.size(); ++i)
        out[i] = f(check_component(a[i]), check_component(b[i]));
    return out;
}

}  // namespace detail

inline LogicVec not_(const LogicVec& a) {
    LogicVec out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = 1.0 - detail::check_component(a[i]);
    return out;
}

inline LogicVec and_(const LogicVec& a, const LogicVec& b) {
    return detail::zip(a, b, [](double x, double y) { return x * y; });
}

inline LogicVec or_(const LogicVec& a, const LogicVec& b) {
    return detail::zip(a, b, [](double x, double y) { return x + y - x * y; });
}

inline LogicVec impl_(const LogicVec& a, const LogicVec& b) {
    return detail::zip(a, b, [](double x, double y) { return 1.0 - x * (1.0 - y); });
}

inline LogicVec xor_(const LogicVec& a, const LogicVec& b) {
    return detail::zip(a, b, [](double x, double y) { return x + y - 2.0 * x * y; });
}

inline LogicVec nary_and(const std::vector<LogicVec>& xs) {
    if (xs.empty()) throw std::invalid_argument("nary_and: empty input list");
    LogicVec out(xs[0].size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = detail::check_component(xs[0][i]);
    for (size_t k = 1; k < xs.size(); ++k) {
        detail::check_same_dim(out, xs[k]);
        for (size_t i = 0; i < out.size(); ++i) out[i] *= detail::check_component(xs[k][i]);
    }
    return out;
}

// Left fold r <- r + x - r*x starting from 0; O(n*d).
inline LogicVec nary_or(const std::vector<LogicVec>& xs) {
    if (xs.empty()) throw std::invalid_argument("nary_or: empty input list");
    LogicVec out(xs[0].size(), 0.0);
    for (const auto& x : xs) {
        detail::check_same_dim(out, x);
        for (size_t i = 0; i < out.size(); ++i) {
            double v = detail::check_component(x[i]);
            out[i] = out[i] + v - out[i] * v;
        }
    }
    return out;
}

}  // namespace tkr
