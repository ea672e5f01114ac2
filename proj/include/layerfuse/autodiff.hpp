// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfuse::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// Raised by any primitive whose operands do not conform. The message names
/// the primitive and both operand shapes.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(const std::string& op, const Shape& a, const Shape& b);
    ShapeError(const std::string& op, const std::string& detail);
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Propagates this node's grad into the grads of `inputs`.
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

/// Handle to a node of the dynamically recorded computation graph. Copies
/// share the node; parameters are long-lived leaves, every other tensor is
/// rebuilt on each forward pass.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }
    // 2-D view: a 1-D tensor of length n reads as 1 x n.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() { return node_->value; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    double item() const;
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }

    const char* op() const { return node_->op; }
    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    /// Detached deep copy of the value (no graph, no grad).
    Tensor clone(bool requires_grad = false) const;

private:
    std::shared_ptr<Node> node_;
};

/// While alive on the current thread, primitives record no graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Reverse topological order of every grad-requiring node reachable from a
/// root; each node appears once.
struct Tape {
    std::vector<Node*> order;
};

Tape record_tape(const Tensor& root);
void replay(const Tape& tape);
/// Seeds d(root)/d(root) = 1 and accumulates into every reachable leaf.
void backward(const Tensor& root, double seed = 1.0);

// Primitives. 2-D operands are row-major [rows, cols].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise sum. `b` may also be a row vector broadcast over a's rows, or
/// a single element broadcast everywhere.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor softmax(const Tensor& a);
/// Row-wise softmax of a square score matrix where entry (i, j) with j > i
/// is excluded.
Tensor causal_softmax(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor embedding(const Tensor& table, std::span<const int> ids);
/// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
/// sum_i w_i * xs_i for w of shape [L]; or per row, out[t] = sum_i w[t, i] * xs_i[t]
/// for w of shape [T, L].
Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& w);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

enum class Activation { Gelu, Relu };
Tensor activate(const Tensor& a, Activation act);

/// Plain (non-recording) row-wise softmax of a vector.
std::vector<double> softmax_values(std::span<const double> logits);

struct GradCheckOptions {
    double h = 1e-5;
    // 0 checks every coordinate; otherwise at most this many per input,
    // picked deterministically from `seed`.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    bool finite = true;
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::string message;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Error per coordinate is |analytic - numeric| / max(1, |numeric|).
/// Inputs that do not require grad are skipped.
GradCheckResult grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           std::span<const Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace lfuse::ad
