// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace lfuse::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const Tensor* t : inputs) any = any || t->requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

Tensor make_result_n(const char* op, Shape shape, std::vector<double> value,
                     std::span<const Tensor> inputs, const Tensor* extra,
                     std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = extra && extra->requires_grad();
        for (const Tensor& t : inputs) any = any || t.requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
            if (extra) node->inputs.push_back(extra->node_ptr());
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

// Grad buffer of input i, or nullptr when it does not take gradients.
double* input_grad(Node& self, std::size_t i) {
    Node& in = *self.inputs[i];
    if (!in.requires_grad) return nullptr;
    in.ensure_grad();
    return in.grad.data();
}

void require_defined(const char* op, const Tensor& t) {
    if (!t.defined()) throw ShapeError(op, "undefined operand");
}

void require_2d(const char* op, const Tensor& t) {
    require_defined(op, t);
    if (t.rank() != 1 && t.rank() != 2) throw ShapeError(op, "expected a 1-D or 2-D operand, got " + shape_str(t.shape()));
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}

ShapeError::ShapeError(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (shape.empty() || n != values.size())
        throw ShapeError("tensor", "value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

std::size_t Tensor::rows() const { return rank() == 1 ? 1 : shape()[0]; }

std::size_t Tensor::cols() const { return rank() == 1 ? shape()[0] : shape()[1]; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item", "tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
}

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), node_->value, requires_grad); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tape record_tape(const Tensor& root) {
    Tape tape;
    if (!root.defined() || !root.requires_grad()) return tape;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS: a node is emitted after all of its inputs.
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
    visited.insert(root.node());
    std::vector<Node*> post;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            post.push_back(node);
            stack.pop_back();
        }
    }
    tape.order.assign(post.rbegin(), post.rend());
    return tape;
}

void replay(const Tape& tape) {
    for (Node* node : tape.order) {
        if (node->backward_fn && node->grad.size() == node->value.size()) node->backward_fn(*node);
    }
}

void backward(const Tensor& root, double seed) {
    if (root.numel() != 1) throw ShapeError("backward", "root must be a scalar, got " + shape_str(root.shape()));
    if (!root.requires_grad()) return;
    root.node()->ensure_grad();
    root.node()->grad[0] += seed;
    replay(record_tape(root));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d("matmul", a);
    require_2d("matmul", b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw ShapeError("matmul", a.shape(), b.shape());
    std::vector<double> out(m * n);
    MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
    return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
        ConstMap dc(self.grad.data(), m, n);
        if (double* ga = input_grad(self, 0))
            MutMap(ga, m, k).noalias() += dc * ConstMap(self.inputs[1]->value.data(), k, n).transpose();
        if (double* gb = input_grad(self, 1))
            MutMap(gb, k, n).noalias() += ConstMap(self.inputs[0]->value.data(), m, k).transpose() * dc;
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined("add", a);
    require_defined("add", b);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(av.begin(), av.end());
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
        return make_result("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
            for (std::size_t j = 0; j < 2; ++j)
                if (double* g = input_grad(self, j))
                    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        });
    }
    if (b.numel() == 1) {
        for (double& v : out) v += bv[0];
        return make_result("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
            if (double* ga = input_grad(self, 0))
                for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
            if (double* gb = input_grad(self, 1))
                for (double g : self.grad) gb[0] += g;
        });
    }
    if (a.rank() == 2 && b.numel() == a.cols() && (b.rank() == 1 || b.rows() == 1)) {
        const std::size_t r = a.rows(), c = a.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
        return make_result("add", a.shape(), std::move(out), {&a, &b}, [r, c](Node& self) {
            if (double* ga = input_grad(self, 0))
                for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
            if (double* gb = input_grad(self, 1))
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gb[j] += self.grad[i * c + j];
        });
    }
    throw ShapeError("add", a.shape(), b.shape());
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
    require_defined("mul", a);
    require_defined("mul", b);
    if (a.shape() != b.shape()) throw ShapeError("mul", a.shape(), b.shape());
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_result("mul", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (double* ga = input_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bv[i];
        if (double* gb = input_grad(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * av[i];
    });
}

Tensor scale(const Tensor& a, double s) {
    require_defined("scale", a);
    std::vector<double> out(a.values().begin(), a.values().end());
    for (double& v : out) v *= s;
    return make_result("scale", a.shape(), std::move(out), {&a}, [s](Node& self) {
        if (double* g = input_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
    });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows", "no operands");
    const std::size_t c = parts[0].cols();
    std::size_t r = 0;
    std::vector<std::size_t> offsets;
    for (const Tensor& p : parts) {
        require_2d("concat_rows", p);
        if (p.cols() != c) throw ShapeError("concat_rows", parts[0].shape(), p.shape());
        offsets.push_back(r * c);
        r += p.rows();
    }
    std::vector<double> out;
    out.reserve(r * c);
    for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return make_result_n("concat_rows", {r, c}, std::move(out), parts, nullptr,
                         [offsets = std::move(offsets)](Node& self) {
                             for (std::size_t j = 0; j < self.inputs.size(); ++j)
                                 if (double* g = input_grad(self, j)) {
                                     const std::size_t n = self.inputs[j]->value.size();
                                     for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offsets[j] + i];
                                 }
                         });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols", "no operands");
    const std::size_t r = parts[0].rows();
    std::size_t c = 0;
    std::vector<std::size_t> col_offsets, widths;
    for (const Tensor& p : parts) {
        require_2d("concat_cols", p);
        if (p.rows() != r) throw ShapeError("concat_cols", parts[0].shape(), p.shape());
        col_offsets.push_back(c);
        widths.push_back(p.cols());
        c += p.cols();
    }
    std::vector<double> out(r * c);
    for (std::size_t j = 0; j < parts.size(); ++j) {
        const auto pv = parts[j].values();
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(pv.begin() + i * widths[j], widths[j], out.begin() + i * c + col_offsets[j]);
    }
    return make_result_n("concat_cols", {r, c}, std::move(out), parts, nullptr,
                         [r, c, col_offsets = std::move(col_offsets), widths = std::move(widths)](Node& self) {
                             for (std::size_t j = 0; j < self.inputs.size(); ++j)
                                 if (double* g = input_grad(self, j))
                                     for (std::size_t i = 0; i < r; ++i)
                                         for (std::size_t k = 0; k < widths[j]; ++k)
                                             g[i * widths[j] + k] += self.grad[i * c + col_offsets[j] + k];
                         });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    require_2d("slice_rows", a);
    if (begin >= end || end > a.rows())
        throw ShapeError("slice_rows", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " + shape_str(a.shape()));
    const std::size_t c = a.cols();
    std::vector<double> out(a.values().begin() + begin * c, a.values().begin() + end * c);
    return make_result("slice_rows", {end - begin, c}, std::move(out), {&a}, [begin, c](Node& self) {
        if (double* g = input_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    require_2d("slice_cols", a);
    if (begin >= end || end > a.cols())
        throw ShapeError("slice_cols", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " + shape_str(a.shape()));
    const std::size_t r = a.rows(), c = a.cols(), w = end - begin;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(a.values().begin() + i * c + begin, w, out.begin() + i * w);
    return make_result("slice_cols", {r, w}, std::move(out), {&a}, [r, c, w, begin](Node& self) {
        if (double* g = input_grad(self, 0))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t k = 0; k < w; ++k) g[i * c + begin + k] += self.grad[i * w + k];
    });
}

Tensor transpose(const Tensor& a) {
    require_2d("transpose", a);
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    MutMap(out.data(), c, r) = ConstMap(a.values().data(), r, c).transpose();
    return make_result("transpose", {c, r}, std::move(out), {&a}, [r, c](Node& self) {
        if (double* g = input_grad(self, 0)) MutMap(g, r, c) += ConstMap(self.grad.data(), c, r).transpose();
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined("reshape", a);
    std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (shape.empty() || n != a.numel()) throw ShapeError("reshape", a.shape(), shape);
    std::vector<double> out(a.values().begin(), a.values().end());
    return make_result("reshape", std::move(shape), std::move(out), {&a}, [](Node& self) {
        if (double* g = input_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

namespace {

Tensor softmax_impl(const char* op, const Tensor& a, bool causal) {
    require_2d(op, a);
    const std::size_t r = a.rows(), c = a.cols();
    if (causal && r > c) throw ShapeError(op, "causal mask needs rows <= cols, got " + shape_str(a.shape()));
    std::vector<double> out(r * c, 0.0);
    const auto av = a.values();
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t width = causal ? i + 1 : c;
        const double* row = av.data() + i * c;
        double* dst = out.data() + i * c;
        double mx = *std::max_element(row, row + width);
        double z = 0.0;
        for (std::size_t j = 0; j < width; ++j) z += (dst[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < width; ++j) dst[j] /= z;
    }
    return make_result(op, a.shape(), std::move(out), {&a}, [r, c](Node& self) {
        double* g = input_grad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = self.value.data() + i * c;
            const double* dy = self.grad.data() + i * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (dy[j] - dot);
        }
    });
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
    require_defined(op, a);
    std::vector<double> out(a.numel());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
    return make_result(op, a.shape(), std::move(out), {&a}, [deriv](Node& self) {
        if (double* g = input_grad(self, 0)) {
            const auto& x = self.inputs[0]->value;
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * deriv(x[i], self.value[i]);
        }
    });
}

}  // namespace

Tensor softmax(const Tensor& a) { return softmax_impl("softmax", a, false); }

Tensor causal_softmax(const Tensor& a) { return softmax_impl("causal_softmax", a, true); }

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a,
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return unary(
        "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x); });
}

Tensor activate(const Tensor& a, Activation act) { return act == Activation::Gelu ? gelu(a) : relu(a); }

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_2d("layer_norm", x);
    const std::size_t r = x.rows(), c = x.cols();
    if (gamma.numel() != c) throw ShapeError("layer_norm", x.shape(), gamma.shape());
    if (beta.numel() != c) throw ShapeError("layer_norm", x.shape(), beta.shape());
    std::vector<double> out(r * c), xhat(r * c), inv(r);
    const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = xv.data() + i * c;
        double mu = std::accumulate(row, row + c, 0.0) / static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(c);
        inv[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (row[j] - mu) * inv[i];
            out[i * c + j] = gv[j] * xhat[i * c + j] + bv[j];
        }
    }
    return make_result("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                       [r, c, xhat = std::move(xhat), inv = std::move(inv)](Node& self) {
                           const auto& gv = self.inputs[1]->value;
                           double* gx = input_grad(self, 0);
                           double* gg = input_grad(self, 1);
                           double* gb = input_grad(self, 2);
                           std::vector<double> dxhat(c);
                           for (std::size_t i = 0; i < r; ++i) {
                               const double* dy = self.grad.data() + i * c;
                               const double* xh = xhat.data() + i * c;
                               double s1 = 0.0, s2 = 0.0;
                               for (std::size_t j = 0; j < c; ++j) {
                                   if (gg) gg[j] += dy[j] * xh[j];
                                   if (gb) gb[j] += dy[j];
                                   dxhat[j] = dy[j] * gv[j];
                                   s1 += dxhat[j];
                                   s2 += dxhat[j] * xh[j];
                               }
                               if (!gx) continue;
                               const double n = static_cast<double>(c);
                               for (std::size_t j = 0; j < c; ++j)
                                   gx[i * c + j] += inv[i] / n * (n * dxhat[j] - s1 - xh[j] * s2);
                           }
                       });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_2d("embedding", table);
    const std::size_t v = table.rows(), d = table.cols();
    if (ids.empty()) throw ShapeError("embedding", "empty id list");
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
            throw ShapeError("embedding", "id " + std::to_string(ids[i]) + " outside table " + shape_str(table.shape()));
        std::copy_n(table.values().begin() + ids[i] * d, d, out.begin() + i * d);
    }
    std::vector<int> saved(ids.begin(), ids.end());
    return make_result("embedding", {ids.size(), d}, std::move(out), {&table}, [d, saved = std::move(saved)](Node& self) {
        if (double* g = input_grad(self, 0))
            for (std::size_t i = 0; i < saved.size(); ++i)
                for (std::size_t k = 0; k < d; ++k) g[saved[i] * d + k] += self.grad[i * d + k];
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    require_2d("cross_entropy", logits);
    const std::size_t n = logits.rows(), v = logits.cols();
    if (targets.size() != n)
        throw ShapeError("cross_entropy", logits.shape(), Shape{targets.size()});
    std::vector<double> probs(n * v);
    double loss = 0.0;
    const auto lv = logits.values();
    for (std::size_t i = 0; i < n; ++i) {
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v)
            throw ShapeError("cross_entropy", "target " + std::to_string(targets[i]) + " outside " + shape_str(logits.shape()));
        const double* row = lv.data() + i * v;
        double mx = *std::max_element(row, row + v);
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += (probs[i * v + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
        loss += (mx + std::log(z)) - row[targets[i]];
    }
    loss /= static_cast<double>(n);
    std::vector<int> saved(targets.begin(), targets.end());
    return make_result("cross_entropy", {1}, {loss}, {&logits},
                       [n, v, probs = std::move(probs), saved = std::move(saved)](Node& self) {
                           double* g = input_grad(self, 0);
                           if (!g) return;
                           const double s = self.grad[0] / static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < v; ++j) g[i * v + j] += s * probs[i * v + j];
                               g[i * v + saved[i]] -= s;
                           }
                       });
}

Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& w) {
    if (xs.empty()) throw ShapeError("weighted_sum", "no operands");
    require_defined("weighted_sum", w);
    const std::size_t l = xs.size();
    const Shape& shape = xs[0].shape();
    for (const Tensor& x : xs)
        if (x.shape() != shape) throw ShapeError("weighted_sum", shape, x.shape());
    const std::size_t n = xs[0].numel();
    std::vector<double> out(n, 0.0);
    const auto wv = w.values();
    if (w.rank() == 1 && w.numel() == l) {
        for (std::size_t i = 0; i < l; ++i) {
            const auto xv = xs[i].values();
            for (std::size_t k = 0; k < n; ++k) out[k] += wv[i] * xv[k];
        }
        return make_result_n("weighted_sum", shape, std::move(out), xs, &w, [l, n](Node& self) {
            const auto& wv = self.inputs[l]->value;
            double* gw = input_grad(self, l);
            for (std::size_t i = 0; i < l; ++i) {
                if (double* gx = input_grad(self, i))
                    for (std::size_t k = 0; k < n; ++k) gx[k] += wv[i] * self.grad[k];
                if (gw) {
                    const auto& xv = self.inputs[i]->value;
                    double acc = 0.0;
                    for (std::size_t k = 0; k < n; ++k) acc += self.grad[k] * xv[k];
                    gw[i] += acc;
                }
            }
        });
    }
    if (w.rank() == 2 && w.cols() == l && xs[0].rank() == 2 && w.rows() == xs[0].rows()) {
        const std::size_t r = xs[0].rows(), c = xs[0].cols();
        for (std::size_t i = 0; i < l; ++i) {
            const auto xv = xs[i].values();
            for (std::size_t t = 0; t < r; ++t)
                for (std::size_t k = 0; k < c; ++k) out[t * c + k] += wv[t * l + i] * xv[t * c + k];
        }
        return make_result_n("weighted_sum", shape, std::move(out), xs, &w, [l, r, c](Node& self) {
            const auto& wv = self.inputs[l]->value;
            double* gw = input_grad(self, l);
            for (std::size_t i = 0; i < l; ++i) {
                double* gx = input_grad(self, i);
                const auto& xv = self.inputs[i]->value;
                for (std::size_t t = 0; t < r; ++t) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < c; ++k) {
                        const double dy = self.grad[t * c + k];
                        if (gx) gx[t * c + k] += wv[t * l + i] * dy;
                        acc += dy * xv[t * c + k];
                    }
                    if (gw) gw[t * l + i] += acc;
                }
            }
        });
    }
    throw ShapeError("weighted_sum", shape, w.shape());
}

Tensor sum(const Tensor& a) {
    require_defined("sum", a);
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    return make_result("sum", {1}, {s}, {&a}, [](Node& self) {
        if (double* g = input_grad(self, 0)) {
            const std::size_t n = self.inputs[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
        }
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

std::vector<double> softmax_values(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) z += (out[j] = std::exp(logits[j] - mx));
    for (double& p : out) p /= z;
    return out;
}

GradCheckResult grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           std::span<const Tensor> inputs, const GradCheckOptions& options) {
    if (!(options.h >= 1e-6 && options.h <= 1e-4))
        throw std::invalid_argument("grad_check: step h must lie in [1e-6, 1e-4]");
    GradCheckResult result;
    std::vector<Tensor> probes(inputs.begin(), inputs.end());
    for (Tensor& t : probes)
        if (t.requires_grad()) t.zero_grad();

    Tensor out = f(probes);
    if (out.numel() != 1) throw ShapeError("grad_check", "function is not scalar-valued: " + shape_str(out.shape()));
    if (!std::isfinite(out.item())) {
        result.finite = false;
        result.message = "non-finite forward value";
        return result;
    }
    backward(out);
    std::vector<std::vector<double>> analytic;
    for (Tensor& t : probes) {
        if (t.requires_grad() && t.has_grad())
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        else
            analytic.emplace_back(t.numel(), 0.0);
    }
    out = Tensor();

    NoGradGuard no_grad;
    std::mt19937_64 rng(options.seed);
    for (std::size_t k = 0; k < probes.size(); ++k) {
        Tensor& t = probes[k];
        if (!t.requires_grad()) continue;
        std::vector<std::size_t> coords(t.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_input > 0 && coords.size() > options.max_coords_per_input) {
            std::vector<std::size_t> picked;
            std::sample(coords.begin(), coords.end(), std::back_inserter(picked), options.max_coords_per_input, rng);
            coords = std::move(picked);
        }
        auto values = t.mutable_values();
        for (std::size_t i : coords) {
            const double original = values[i];
            values[i] = original + options.h;
            const double fp = f(probes).item();
            values[i] = original - options.h;
            const double fm = f(probes).item();
            values[i] = original;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                result.finite = false;
                result.message = "non-finite perturbed value at input " + std::to_string(k) + " coordinate " + std::to_string(i);
                return result;
            }
            const double numeric = (fp - fm) / (2.0 * options.h);
            const double err = std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric));
            result.max_rel_error = std::max(result.max_rel_error, err);
            ++result.coords_checked;
        }
    }
    return result;
}

}  // namespace lfuse::ad
