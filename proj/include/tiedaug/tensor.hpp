// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tiedaug {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

// One vertex of the define-by-run tape. Every node gets a strictly increasing
// sequence number at creation, and an op's inputs always exist before the op
// runs, so descending sequence order is a reverse topological order.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    // Adds this node's grad (already populated) into the inputs' grads.
    std::function<void(const Node&)> backward;
};

}  // namespace detail

/// Dense row-major float64 tensor taking part in reverse-mode autodiff.
///
/// A Tensor is a cheap handle; copies share the underlying node. Leaves created
/// with requires_grad=true (model parameters, probed inputs) accumulate gradients
/// across backward() calls until zero_grad() is called. Intermediate results get
/// fresh gradients on every backward() call.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Writes bypass the tape; only use on leaves (parameters, inputs).
    std::span<double> mutable_data();
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Value copy that is not connected to the tape.
    Tensor detach() const;
    /// Same node handle equality.
    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables tape recording on this thread while alive (evaluation, Monte-Carlo).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_recording_enabled();

/// When enabled (the default) every primitive verifies its output is finite and
/// throws NumericError otherwise.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

// ---- primitives -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

/// (M×K)·(K×N) → M×N.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x: N×F, bias: F. Adds bias to every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

/// x: N×C×H×W, weight: O×C×K×K (K odd), bias: O. Stride 1, symmetric zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t padding);
/// 2×2 average pooling with stride 2; H and W must be even.
Tensor avg_pool2(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);

/// Sum of all elements, shape {}.
Tensor sum(const Tensor& x);
/// Mean of all elements, shape {}.
Tensor mean(const Tensor& x);
/// N×F → N.
Tensor row_sum(const Tensor& x);

/// Row-wise softmax / log-softmax on an N×C tensor.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
/// Per-example cross-entropy −log softmax(logits)[label], shape N.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

Tensor reshape(const Tensor& x, Shape shape);
/// Flattens everything after the leading axis.
Tensor flatten_rows(const Tensor& x);
/// Concatenates along axis 0; trailing extents must agree.
Tensor concat_rows(std::span<const Tensor> parts);
/// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

// ---- reverse pass -----------------------------------------------------------

/// Populates gradients of every requires_grad tensor reachable from `loss`.
void backward(const Tensor& loss);

}  // namespace tiedaug
