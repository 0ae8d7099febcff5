#pragma once

// Minimal dense reverse-mode differentiation engine: a flat tape of
// vector/matrix operations with analytic local gradients, plus Adam.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tkr {

struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
    int size() const { return rows * cols; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.rows, o.cols); }
};

// Node handle on a Tape.
using Var = int;

class Tape {
public:
    // Leaf referencing external storage; gradients accumulate into *grad_sink
    // (may be nullptr for constants).
    Var leaf(const Tensor* value, Tensor* grad_sink) {
        Node n;
        n.external = value;
        n.sink = grad_sink;
        n.grad = Tensor(value->rows, value->cols);
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size()) - 1;
    }

    Var constant(Tensor value) {
        Node n;
        n.owned = std::move(value);
        n.grad = Tensor(n.owned.rows, n.owned.cols);
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size()) - 1;
    }

    Var scalar(double x) {
        Tensor t(1, 1);
        t.a[0] = x;
        return constant(std::move(t));
    }

    // View of one row of an external matrix, as a column vector (cols x 1).
    // Gradient accumulates into the matching row of *grad_sink.
    Var row(const Tensor* table, Tensor* grad_sink, int r) {
        if (r < 0 || r >= table->rows) throw std::out_of_range("row: index out of range");
        Tensor v(table->cols, 1);
        for (int j = 0; j < table->cols; ++j) v.a[j] = (*table)(r, j);
        Var out = constant(std::move(v));
        if (grad_sink) {
            node(out).back = [grad_sink, r](Tape& t, Node& self) {
                for (int j = 0; j < self.grad.size(); ++j) (*grad_sink)(r, j) += self.grad.a[j];
                (void)t;
            };
        }
        return out;
    }

    const Tensor& val(Var v) const {
        const Node& n = nodes_[v];
        return n.external ? *n.external : n.owned;
    }

    Var add(Var x, Var y) {
        check_same(x, y, "add");
        Tensor out = val(x);
        const Tensor& b = val(y);
        for (int i = 0; i < out.size(); ++i) out.a[i] += b.a[i];
        return unary_binary(std::move(out), x, y, [](Tape& t, Node& self, Var px, Var py) {
            t.accumulate(px, self.grad);
            t.accumulate(py, self.grad);
        });
    }

    Var sub(Var x, Var y) {
        check_same(x, y, "sub");
        Tensor out = val(x);
        const Tensor& b = val(y);
        for (int i = 0; i < out.size(); ++i) out.a[i] -= b.a[i];
        return unary_binary(std::move(out), x, y, [](Tape& t, Node& self, Var px, Var py) {
            t.accumulate(px, self.grad);
            Tensor neg = self.grad;
            for (double& g : neg.a) g = -g;
            t.accumulate(py, neg);
        });
    }

    Var mul(Var x, Var y) {  // elementwise
        check_same(x, y, "mul");
        Tensor out = val(x);
        const Tensor& b = val(y);
        for (int i = 0; i < out.size(); ++i) out.a[i] *= b.a[i];
        return unary_binary(std::move(out), x, y, [](Tape& t, Node& self, Var px, Var py) {
            Tensor gx = self.grad, gy = self.grad;
            const Tensor& vx = t.val(px);
            const Tensor& vy = t.val(py);
            for (int i = 0; i < gx.size(); ++i) {
                gx.a[i] *= vy.a[i];
                gy.a[i] *= vx.a[i];
            }
            t.accumulate(px, gx);
            t.accumulate(py, gy);
        });
    }

    Var scalar_mul(Var x, double c) {
        Tensor out = val(x);
        for (double& v : out.a) v *= c;
        return unary(std::move(out), x, [c](Tape& t, Node& self, Var px) {
            Tensor g = self.grad;
            for (double& v : g.a) v *= c;
            t.accumulate(px, g);
        });
    }

    // a*x + b, elementwise with scalar coefficients
    Var axpb(Var x, double a, double b) {
        Tensor out = val(x);
        for (double& v : out.a) v = a * v + b;
        return unary(std::move(out), x, [a](Tape& t, Node& self, Var px) {
            Tensor g = self.grad;
            for (double& v : g.a) v *= a;
            t.accumulate(px, g);
        });
    }

    Var matmul(Var x, Var y) {
        const Tensor& A = val(x);
        const Tensor& B = val(y);
        if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
        Tensor out(A.rows, B.cols);
        for (int i = 0; i < A.rows; ++i)
            for (int k = 0; k < A.cols; ++k) {
                double aik = A(i, k);
                if (aik == 0.0) continue;
                for (int j = 0; j < B.cols; ++j) out(i, j) += aik * B(k, j);
            }
        return unary_binary(std::move(out), x, y, [](Tape& t, Node& self, Var px, Var py) {
            const Tensor& A = t.val(px);
            const Tensor& B = t.val(py);
            const Tensor& G = self.grad;
            Tensor gA(A.rows, A.cols), gB(B.rows, B.cols);
            for (int i = 0; i < A.rows; ++i)
                for (int j = 0; j < B.cols; ++j) {
                    double g = G(i, j);
                    if (g == 0.0) continue;
                    for (int k = 0; k < A.cols; ++k) {
                        gA(i, k) += g * B(k, j);
                        gB(k, j) += g * A(i, k);
                    }
                }
            t.accumulate(px, gA);
            t.accumulate(py, gB);
        });
    }

    // Vertical concatenation of column vectors.
    Var concat(const std::vector<Var>& xs) {
        int n = 0;
        for (Var x : xs) {
            if (val(x).cols != 1) throw std::invalid_argument("concat: column vectors only");
            n += val(x).rows;
        }
        Tensor out(n, 1);
        int off = 0;
        for (Var x : xs) {
            const Tensor& v = val(x);
            for (int i = 0; i < v.rows; ++i) out.a[off + i] = v.a[i];
            off += v.rows;
        }
        Var id = constant(std::move(out));
        std::vector<Var> parents = xs;
        node(id).back = [parents](Tape& t, Node& self) {
            int off = 0;
            for (Var p : parents) {
                int n = t.val(p).rows;
                Tensor g(n, 1);
                for (int i = 0; i < n; ++i) g.a[i] = self.grad.a[off + i];
                t.accumulate(p, g);
                off += n;
            }
        };
        return id;
    }

    Var slice(Var x, int offset, int len) {
        const Tensor& v = val(x);
        if (v.cols != 1) throw std::invalid_argument("slice: column vectors only");
        if (offset < 0 || offset + len > v.rows) throw std::out_of_range("slice: range");
        Tensor out(len, 1);
        for (int i = 0; i < len; ++i) out.a[i] = v.a[offset + i];
        return unary(std::move(out), x, [offset, len](Tape& t, Node& self, Var px) {
            Tensor g(t.val(px).rows, 1);
            for (int i = 0; i < len; ++i) g.a[offset + i] = self.grad.a[i];
            t.accumulate(px, g);
        });
    }

    Var sigmoid(Var x) {
        Tensor out = val(x);
        for (double& v : out.a) v = sigmoid_scalar(v);
        return unary_cached(std::move(out), x, [](Tape& t, Node& self, Var px) {
            Tensor g = self.grad;
            const Tensor& y = self.owned;  // cached output
            for (int i = 0; i < g.size(); ++i) g.a[i] *= y.a[i] * (1.0 - y.a[i]);
            t.accumulate(px, g);
        });
    }

    Var tanh_(Var x) {
        Tensor out = val(x);
        for (double& v : out.a) v = std::tanh(v);
        return unary_cached(std::move(out), x, [](Tape& t, Node& self, Var px) {
            Tensor g = self.grad;
            const Tensor& y = self.owned;
            for (int i = 0; i < g.size(); ++i) g.a[i] *= 1.0 - y.a[i] * y.a[i];
            t.accumulate(px, g);
        });
    }

    Var relu(Var x) {
        Tensor out = val(x);
        for (double& v : out.a) v = v > 0.0 ? v : 0.0;
        return unary(std::move(out), x, [](Tape& t, Node& self, Var px) {
            Tensor g = self.grad;
            const Tensor& v = t.val(px);
            for (int i = 0; i < g.size(); ++i)
                if (v.a[i] <= 0.0) g.a[i] = 0.0;  // subgradient 0 at 0
            t.accumulate(px, g);
        });
    }

    // log(sigmoid(x)), numerically stable; d/dx = sigmoid(-x)
    Var logsigmoid(Var x) {
        Tensor out = val(x);
        for (double& v : out.a) v = v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
        return unary(std::move(out), x, [](Tape& t, Node& self, Var px) {
            Tensor g = self.grad;
            const Tensor& v = t.val(px);
            for (int i = 0; i < g.size(); ++i) g.a[i] *= sigmoid_scalar(-v.a[i]);
            t.accumulate(px, g);
        });
    }

    // L1 norm; subgradient 0 at exact zeros.
    Var abs_sum(Var x) {
        const Tensor& v = val(x);
        Tensor out(1, 1);
        for (double c : v.a) out.a[0] += std::fabs(c);
        return unary(std::move(out), x, [](Tape& t, Node& self, Var px) {
            const Tensor& v = t.val(px);
            Tensor g(v.rows, v.cols);
            double gs = self.grad.a[0];
            for (int i = 0; i < v.size(); ++i)
                g.a[i] = v.a[i] > 0.0 ? gs : (v.a[i] < 0.0 ? -gs : 0.0);
            t.accumulate(px, g);
        });
    }

    Var sum(Var x) {
        const Tensor& v = val(x);
        Tensor out(1, 1);
        for (double c : v.a) out.a[0] += c;
        return unary(std::move(out), x, [](Tape& t, Node& self, Var px) {
            const Tensor& v = t.val(px);
            Tensor g(v.rows, v.cols);
            for (double& c : g.a) c = self.grad.a[0];
            t.accumulate(px, g);
        });
    }

    Var mean(Var x) {
        int n = val(x).size();
        return scalar_mul(sum(x), 1.0 / n);
    }

    // Per-component softmax across a list of same-shaped vectors: the i-th
    // output at component j is exp(x_i[j]) / sum_k exp(x_k[j]).
    // Max-subtraction per component for stability.
    std::vector<Var> softmax_over_inputs(const std::vector<Var>& xs) {
        if (xs.empty()) throw std::invalid_argument("softmax_over_inputs: empty input");
        int d = val(xs[0]).rows;
        int n = static_cast<int>(xs.size());
        for (Var x : xs)
            if (val(x).rows != d || val(x).cols != 1)
                throw std::invalid_argument("softmax_over_inputs: shape mismatch");
        Tensor stacked(n * d, 1);
        for (int j = 0; j < d; ++j) {
            double m = val(xs[0]).a[j];
            for (int i = 1; i < n; ++i) m = std::max(m, val(xs[i]).a[j]);
            double z = 0.0;
            for (int i = 0; i < n; ++i) z += std::exp(val(xs[i]).a[j] - m);
            for (int i = 0; i < n; ++i)
                stacked.a[static_cast<size_t>(i) * d + j] = std::exp(val(xs[i]).a[j] - m) / z;
        }
        Var id = constant(std::move(stacked));
        std::vector<Var> parents = xs;
        node(id).back = [parents, n, d](Tape& t, Node& self) {
            const Tensor& w = self.owned;
            for (int j = 0; j < d; ++j) {
                double dot = 0.0;
                for (int k = 0; k < n; ++k)
                    dot += w.a[static_cast<size_t>(k) * d + j] * self.grad.a[static_cast<size_t>(k) * d + j];
                for (int i = 0; i < n; ++i) {
                    double wi = w.a[static_cast<size_t>(i) * d + j];
                    double gi = wi * (self.grad.a[static_cast<size_t>(i) * d + j] - dot);
                    t.node(parents[i]).grad.a[j] += gi;
                }
            }
        };
        std::vector<Var> out(n);
        for (int i = 0; i < n; ++i) out[i] = slice(id, i * d, d);
        return out;
    }

    // Reverse sweep from a scalar loss; fills external grad sinks.
    // The tape is cleared afterwards.
    void backward(Var loss) {
        if (loss < 0 || loss >= static_cast<Var>(nodes_.size()))
            throw std::invalid_argument("backward: unknown node");
        if (val(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
        nodes_[loss].grad.a[0] = 1.0;
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.back) n.back(*this, n);
            if (n.sink) {
                if (!n.sink->same_shape(n.grad)) throw std::logic_error("gradient sink shape mismatch");
                for (int k = 0; k < n.grad.size(); ++k) n.sink->a[k] += n.grad.a[k];
            }
        }
        nodes_.clear();
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

    static double sigmoid_scalar(double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor* sink = nullptr;
        Tensor grad;
        std::function<void(Tape&, Node&)> back;
    };

    Node& node(Var v) { return nodes_[v]; }

    void accumulate(Var v, const Tensor& g) {
        Node& n = nodes_[v];
        for (int i = 0; i < g.size(); ++i) n.grad.a[i] += g.a[i];
    }

    void check_same(Var x, Var y, const char* op) {
        if (!val(x).same_shape(val(y)))
            throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }

    template <class F>
    Var unary(Tensor out, Var x, F f) {
        Var id = constant(std::move(out));
        node(id).back = [f, x](Tape& t, Node& self) { f(t, self, x); };
        return id;
    }

    template <class F>
    Var unary_cached(Tensor out, Var x, F f) {  // same, names intent: backward reads self.owned
        return unary(std::move(out), x, f);
    }

    template <class F>
    Var unary_binary(Tensor out, Var x, Var y, F f) {
        Var id = constant(std::move(out));
        node(id).back = [f, x, y](Tape& t, Node& self) { f(t, self, x, y); };
        return id;
    }

    std::vector<Node> nodes_;
};

// Named parameter tensors with gradient accumulators, in registration order.
struct ParamStore {
    std::vector<std::string> names;
    std::unordered_map<std::string, Tensor> values;
    std::unordered_map<std::string, Tensor> grads;

    Tensor& add(const std::string& name, int rows, int cols) {
        if (values.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        names.push_back(name);
        values.emplace(name, Tensor(rows, cols));
        grads.emplace(name, Tensor(rows, cols));
        return values[name];
    }

    Tensor& value(const std::string& name) { return values.at(name); }
    Tensor& grad(const std::string& name) { return grads.at(name); }

    void zero_grads() {
        for (auto& [k, g] : grads)
            for (double& v : g.a) v = 0.0;
    }
};

struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::unordered_map<std::string, Tensor> m1, m2;

    explicit Adam(double learning_rate = 1e-4) : lr(learning_rate) {}

    void step(ParamStore& params) {
        ++step_count;
        double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (const std::string& name : params.names) {
            Tensor& p = params.value(name);
            Tensor& g = params.grad(name);
            Tensor& m = m1.try_emplace(name, Tensor(p.rows, p.cols)).first->second;
            Tensor& v = m2.try_emplace(name, Tensor(p.rows, p.cols)).first->second;
            for (int i = 0; i < p.size(); ++i) {
                double gi = g.a[i];
                if (!std::isfinite(gi))
                    throw std::runtime_error("non-finite gradient in parameter " + name);
                m.a[i] = beta1 * m.a[i] + (1.0 - beta1) * gi;
                v.a[i] = beta2 * v.a[i] + (1.0 - beta2) * gi * gi;
                double mhat = m.a[i] / c1;
                double vhat = v.a[i] / c2;
                p.a[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

}  // namespace tkr
