#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "tkr/autodiff.hpp"

using tkr::Adam;
using tkr::ParamStore;
using tkr::Tape;
using tkr::Tensor;
using tkr::Var;

namespace {

Tensor random_tensor(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
    Tensor t(rows, cols);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& x : t.a) x = u(rng);
    return t;
}

// central differences on a single-parameter scalar function
double fd_check(ParamStore& ps, const std::string& name,
                const std::function<Var(Tape&)>& build, double h = 1e-5) {
    ps.zero_grads();
    {
        Tape t;
        t.backward(build(t));
    }
    Tensor& p = ps.value(name);
    const Tensor& g = ps.grad(name);
    double worst = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        double saved = p.a[i];
        auto eval = [&](double v) {
            p.a[i] = v;
            Tape t;
            Var l = build(t);
            double out = t.val(l).a[0];
            t.clear();
            return out;
        };
        double fd = (eval(saved + h) - eval(saved - h)) / (2 * h);
        p.a[i] = saved;
        double err = std::fabs(fd - g.a[i]) / std::max({std::fabs(fd), std::fabs(g.a[i]), 1e-4});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace

TEST_CASE("sigmoid value and gradient at 0") {
    ParamStore ps;
    ps.add("x", 1, 1);
    Tape t;
    Var s = t.sigmoid(t.leaf(&ps.value("x"), &ps.grad("x")));
    CHECK(t.val(s).a[0] == 0.5);
    t.backward(s);
    CHECK(ps.grad("x").a[0] == Catch::Approx(0.25));
}

TEST_CASE("abs_sum gradient is the sign vector, 0 at zeros") {
    ParamStore ps;
    Tensor& x = ps.add("x", 4, 1);
    x.a = {1.5, -2.0, 0.0, 3.0};
    Tape t;
    t.backward(t.abs_sum(t.leaf(&x, &ps.grad("x"))));
    CHECK(ps.grad("x").a == std::vector<double>{1.0, -1.0, 0.0, 1.0});
}

TEST_CASE("sum gradient is all ones, disconnected parameter stays zero") {
    ParamStore ps;
    ps.add("p", 3, 1);
    ps.add("unused", 2, 1);
    std::mt19937_64 rng(1);
    ps.value("p") = random_tensor(rng, 3, 1);
    Tape t;
    t.backward(t.sum(t.leaf(&ps.value("p"), &ps.grad("p"))));
    CHECK(ps.grad("p").a == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(ps.grad("unused").a == std::vector<double>{0.0, 0.0});
}

TEST_CASE("matmul gradients match finite differences on random 8x8") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        ParamStore ps;
        ps.add("A", 8, 8);
        ps.add("B", 8, 8);
        ps.value("A") = random_tensor(rng, 8, 8);
        ps.value("B") = random_tensor(rng, 8, 8);
        auto build = [&](Tape& t) {
            return t.sum(t.matmul(t.leaf(&ps.value("A"), &ps.grad("A")),
                                  t.leaf(&ps.value("B"), &ps.grad("B"))));
        };
        CHECK(fd_check(ps, "A", build) < 1e-6);
        CHECK(fd_check(ps, "B", build) < 1e-6);
    }
}

TEST_CASE("primitives pass randomized gradient checks") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 100; ++rep) {
        ParamStore ps;
        ps.add("x", 6, 1);
        ps.add("y", 6, 1);
        ps.value("x") = random_tensor(rng, 6, 1, 2.0);
        ps.value("y") = random_tensor(rng, 6, 1, 2.0);
        auto lx = [&](Tape& t) { return t.leaf(&ps.value("x"), &ps.grad("x")); };
        auto ly = [&](Tape& t) { return t.leaf(&ps.value("y"), &ps.grad("y")); };
        std::vector<std::function<Var(Tape&)>> builds = {
            [&](Tape& t) { return t.sum(t.add(lx(t), ly(t))); },
            [&](Tape& t) { return t.sum(t.sub(lx(t), ly(t))); },
            [&](Tape& t) { return t.sum(t.mul(lx(t), ly(t))); },
            [&](Tape& t) { return t.sum(t.scalar_mul(lx(t), -1.7)); },
            [&](Tape& t) { return t.sum(t.axpb(lx(t), 0.5, 0.25)); },
            [&](Tape& t) { return t.sum(t.sigmoid(lx(t))); },
            [&](Tape& t) { return t.sum(t.tanh_(lx(t))); },
            [&](Tape& t) { return t.sum(t.relu(lx(t))); },
            [&](Tape& t) { return t.sum(t.logsigmoid(lx(t))); },
            [&](Tape& t) { return t.abs_sum(lx(t)); },
            [&](Tape& t) { return t.mean(t.concat({lx(t), ly(t)})); },
            [&](Tape& t) { return t.sum(t.slice(t.concat({lx(t), ly(t)}), 3, 6)); },
            [&](Tape& t) {
                auto ws = t.softmax_over_inputs({lx(t), ly(t)});
                return t.sum(t.mul(ws[0], lx(t)));
            },
        };
        for (auto& build : builds) {
            CHECK(fd_check(ps, "x", build) < 1e-4);
            CHECK(fd_check(ps, "y", build) < 1e-4);
        }
    }
}

TEST_CASE("three-layer MLP chain gradient matches finite differences") {
    std::mt19937_64 rng(4);
    ParamStore ps;
    for (const char* n : {"w1", "w2", "w3"}) {
        ps.add(n, 5, 5);
        ps.value(n) = random_tensor(rng, 5, 5, 0.7);
    }
    ps.add("x", 5, 1);
    ps.value("x") = random_tensor(rng, 5, 1);
    auto build = [&](Tape& t) {
        Var h = t.leaf(&ps.value("x"), &ps.grad("x"));
        h = t.relu(t.matmul(t.leaf(&ps.value("w1"), &ps.grad("w1")), h));
        h = t.tanh_(t.matmul(t.leaf(&ps.value("w2"), &ps.grad("w2")), h));
        h = t.matmul(t.leaf(&ps.value("w3"), &ps.grad("w3")), h);
        return t.sum(t.sigmoid(h));
    };
    for (const char* n : {"w1", "w2", "w3", "x"}) CHECK(fd_check(ps, n, build) < 1e-4);
}

TEST_CASE("softmax_over_inputs weights sum to one per component") {
    std::mt19937_64 rng(5);
    ParamStore ps;
    ps.add("a", 4, 1);
    ps.add("b", 4, 1);
    ps.add("c", 4, 1);
    for (const char* n : {"a", "b", "c"}) ps.value(n) = random_tensor(rng, 4, 1, 3.0);
    Tape t;
    auto ws = t.softmax_over_inputs({t.leaf(&ps.value("a"), nullptr),
                                     t.leaf(&ps.value("b"), nullptr),
                                     t.leaf(&ps.value("c"), nullptr)});
    for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        for (Var w : ws) s += t.val(w).a[j];
        CHECK(s == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("backward requires a scalar loss and clears the tape") {
    ParamStore ps;
    ps.add("x", 3, 1);
    Tape t;
    Var x = t.leaf(&ps.value("x"), &ps.grad("x"));
    CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
    t.clear();
    Tape t2;
    t2.backward(t2.sum(t2.leaf(&ps.value("x"), &ps.grad("x"))));
    CHECK(t2.size() == 0);
}

TEST_CASE("forward values are bit-deterministic") {
    std::mt19937_64 rng(6);
    ParamStore ps;
    ps.add("x", 8, 1);
    ps.value("x") = random_tensor(rng, 8, 1);
    auto run = [&]() {
        Tape t;
        Var l = t.sum(t.sigmoid(t.mul(t.leaf(&ps.value("x"), nullptr),
                                      t.leaf(&ps.value("x"), nullptr))));
        double v = t.val(l).a[0];
        t.clear();
        return v;
    };
    CHECK(run() == run());
}

TEST_CASE("Adam: zero gradient leaves parameters unchanged") {
    ParamStore ps;
    ps.add("p", 2, 2);
    ps.value("p").a = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> before = ps.value("p").a;
    ps.zero_grads();
    Adam opt(1e-2);
    opt.step(ps);
    CHECK(ps.value("p").a == before);
}

TEST_CASE("Adam: one step with constant gradient moves by about lr") {
    ParamStore ps;
    ps.add("p", 1, 1);
    ps.value("p").a[0] = 0.5;
    ps.grad("p").a[0] = 0.3;
    Adam opt(1e-2);
    opt.step(ps);
    // bias-corrected first step: mhat = g, vhat = g^2, so delta ~ -lr
    CHECK(ps.value("p").a[0] == Catch::Approx(0.5 - 1e-2).margin(1e-6));
}

TEST_CASE("Adam: non-finite gradient names the parameter") {
    ParamStore ps;
    ps.add("weights.bad", 1, 1);
    ps.grad("weights.bad").a[0] = std::numeric_limits<double>::quiet_NaN();
    Adam opt;
    CHECK_THROWS_WITH(opt.step(ps), Catch::Matchers::ContainsSubstring("weights.bad"));
}

TEST_CASE("Adam: identical runs produce identical trajectories") {
    auto run = [&]() {
        std::mt19937_64 rng(7);
        ParamStore ps;
        ps.add("p", 4, 1);
        ps.value("p") = random_tensor(rng, 4, 1);
        Adam opt(1e-3);
        for (int step = 0; step < 50; ++step) {
            ps.zero_grads();
            Tape t;
            t.backward(t.sum(t.mul(t.leaf(&ps.value("p"), &ps.grad("p")),
                                   t.leaf(&ps.value("p"), &ps.grad("p")))));
            opt.step(ps);
        }
        return ps.value("p").a;
    };
    CHECK(run() == run());
}
