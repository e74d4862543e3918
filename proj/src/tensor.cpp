// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tiedaug/errors.hpp"

namespace tiedaug {

using detail::Node;

namespace {

thread_local std::uint64_t g_next_seq = 1;
thread_local bool g_grad_enabled = true;
std::atomic<bool> g_finite_checks{true};

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                        shape_string(b));
}

[[noreturn]] void contract_fail(const char* op, const std::string& what) {
    throw ContractError(std::string(op) + ": " + what);
}

void check_finite(const char* op, const std::vector<double>& values) {
    if (!g_finite_checks.load(std::memory_order_relaxed)) return;
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite output");
        }
    }
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->seq = g_next_seq++;
    return node;
}

// Wraps an op result; records inputs and the backward closure only when some
// input needs a gradient and recording is on.
Tensor record(const char* op, Shape shape, std::vector<double> value,
              std::initializer_list<const Tensor*> inputs,
              std::function<void(const Node&)> backward_fn) {
    check_finite(op, value);
    auto node = new_node(std::move(shape), std::move(value));
    if (g_grad_enabled) {
        bool any = false;
        for (const Tensor* t : inputs) any = any || t->requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Tensor* t : inputs) node->inputs.push_back(t->node());
            node->backward = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

Node& in(const Node& self, std::size_t i) { return *self.inputs[i]; }

void require_defined(const char* op, const Tensor& t) {
    if (!t.defined()) contract_fail(op, "undefined tensor");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    require_defined(op, a);
    require_defined(op, b);
    if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
    require_defined(op, t);
    if (t.rank() != rank) {
        contract_fail(op, "expected rank " + std::to_string(rank) + ", got shape " +
                              shape_string(t.shape()));
    }
}

template <class F>
Tensor unary(const char* op, const Tensor& x, F&& forward,
             std::function<void(const Node&)> backward_fn) {
    require_defined(op, x);
    std::vector<double> out(x.numel());
    auto src = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(src[i]);
    return record(op, x.shape(), std::move(out), {&x}, std::move(backward_fn));
}

}  // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor -------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ContractError("Tensor::from: shape " + shape_string(shape) + " needs " +
                            std::to_string(shape_numel(shape)) + " values, got " +
                            std::to_string(values.size()));
    }
    auto node = new_node(std::move(shape), std::move(values));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ContractError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                            shape_string(shape()));
    }
    return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("Tensor::item: tensor of shape " + shape_string(shape()) +
                            " is not a scalar");
    }
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_recording_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

// ---- elementwise ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return record("add", a.shape(), std::move(out), {&a, &b}, [](const Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node& src = in(self, k);
            if (!src.requires_grad) continue;
            for (std::size_t i = 0; i < self.grad.size(); ++i) src.grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return record("sub", a.shape(), std::move(out), {&a, &b}, [](const Node& self) {
        Node& lhs = in(self, 0);
        Node& rhs = in(self, 1);
        if (lhs.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) lhs.grad[i] += self.grad[i];
        if (rhs.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) rhs.grad[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return record("mul", a.shape(), std::move(out), {&a, &b}, [](const Node& self) {
        Node& lhs = in(self, 0);
        Node& rhs = in(self, 1);
        if (lhs.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                lhs.grad[i] += self.grad[i] * rhs.value[i];
        if (rhs.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                rhs.grad[i] += self.grad[i] * lhs.value[i];
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
    return record("div", a.shape(), std::move(out), {&a, &b}, [](const Node& self) {
        Node& num = in(self, 0);
        Node& den = in(self, 1);
        if (num.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                num.grad[i] += self.grad[i] / den.value[i];
        if (den.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                den.grad[i] -= self.grad[i] * self.value[i] / den.value[i];
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        "scale", a, [factor](double v) { return v * factor; },
        [factor](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) src.grad[i] += factor * self.grad[i];
        });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary(
        "add_scalar", a, [offset](double v) { return v + offset; },
        [](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) src.grad[i] += self.grad[i];
        });
}

Tensor relu(const Tensor& x) {
    return unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (src.value[i] > 0.0) src.grad[i] += self.grad[i];
        });
}

Tensor tanh(const Tensor& x) {
    return unary(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double y = self.value[i];
                src.grad[i] += self.grad[i] * (1.0 - y * y);
            }
        });
}

Tensor square(const Tensor& x) {
    return unary(
        "square", x, [](double v) { return v * v; },
        [](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                src.grad[i] += 2.0 * src.value[i] * self.grad[i];
        });
}

Tensor abs(const Tensor& x) {
    return unary(
        "abs", x, [](double v) { return std::fabs(v); },
        [](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double v = src.value[i];
                const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                src.grad[i] += sign * self.grad[i];
            }
        });
}

Tensor log(const Tensor& x) {
    return unary(
        "log", x, [](double v) { return std::log(v); },
        [](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                src.grad[i] += self.grad[i] / src.value[i];
        });
}

Tensor sqrt(const Tensor& x) {
    return unary(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                src.grad[i] += self.grad[i] * 0.5 / self.value[i];
        });
}

Tensor clamp_min(const Tensor& x, double floor) {
    return unary(
        "clamp_min", x, [floor](double v) { return v > floor ? v : floor; },
        [floor](const Node& self) {
            Node& src = in(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (src.value[i] > floor) src.grad[i] += self.grad[i];
        });
}

// ---- reductions -------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    require_defined("sum", x);
    double total = 0.0;
    for (double v : x.data()) total += v;
    return record("sum", {}, {total}, {&x}, [](const Node& self) {
        Node& src = in(self, 0);
        const double g = self.grad[0];
        for (double& d : src.grad) d += g;
    });
}

Tensor mean(const Tensor& x) {
    require_defined("mean", x);
    if (x.numel() == 0) contract_fail("mean", "empty tensor");
    double total = 0.0;
    for (double v : x.data()) total += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    return record("mean", {}, {total * inv}, {&x}, [inv](const Node& self) {
        Node& src = in(self, 0);
        const double g = self.grad[0] * inv;
        for (double& d : src.grad) d += g;
    });
}

Tensor row_sum(const Tensor& x) {
    require_rank("row_sum", x, 2);
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> out(rows, 0.0);
    auto src = x.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r] += src[r * cols + c];
    return record("row_sum", {rows}, std::move(out), {&x}, [rows, cols](const Node& self) {
        Node& s = in(self, 0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) s.grad[r * cols + c] += self.grad[r];
    });
}

// ---- linear algebra ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) shape_fail("matmul", a.shape(), b.shape());
    std::vector<double> out(m * n, 0.0);
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += xv * y[p * n + j];
        }
    return record("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](const Node& self) {
        Node& lhs = in(self, 0);
        Node& rhs = in(self, 1);
        const auto& g = self.grad;
        if (lhs.requires_grad)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * rhs.value[p * n + j];
                    lhs.grad[i * k + p] += acc;
                }
        if (rhs.requires_grad)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double xv = lhs.value[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) rhs.grad[p * n + j] += xv * g[i * n + j];
                }
    });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    require_rank("add_row_bias", x, 2);
    require_rank("add_row_bias", bias, 1);
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (bias.dim(0) != cols) shape_fail("add_row_bias", x.shape(), bias.shape());
    std::vector<double> out(x.data().begin(), x.data().end());
    auto b = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
    return record("add_row_bias", x.shape(), std::move(out), {&x, &bias},
                  [rows, cols](const Node& self) {
                      Node& xs = in(self, 0);
                      Node& bs = in(self, 1);
                      if (xs.requires_grad)
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                              xs.grad[i] += self.grad[i];
                      if (bs.requires_grad)
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c)
                                  bs.grad[c] += self.grad[r * cols + c];
                  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t padding) {
    require_rank("conv2d", x, 4);
    require_rank("conv2d", weight, 4);
    require_rank("conv2d", bias, 1);
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != c || weight.dim(3) != k) shape_fail("conv2d", x.shape(), weight.shape());
    if (bias.dim(0) != o) shape_fail("conv2d", weight.shape(), bias.shape());
    if (k % 2 == 0) contract_fail("conv2d", "kernel extent must be odd");
    if (h + 2 * padding < k || w + 2 * padding < k)
        contract_fail("conv2d", "kernel larger than padded input " + shape_string(x.shape()));
    const std::size_t oh = h + 2 * padding - k + 1, ow = w + 2 * padding - k + 1;
    const auto pad = static_cast<std::ptrdiff_t>(padding);

    std::vector<double> out(n * o * oh * ow);
    auto xv = x.data(), wv = weight.data(), bv = bias.data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oc = 0; oc < o; ++oc) {
            double* dst = &out[((b * o + oc) * oh) * ow];
            std::fill(dst, dst + oh * ow, bv[oc]);
            for (std::size_t ic = 0; ic < c; ++ic) {
                const double* src = &xv[((b * c + ic) * h) * w];
                const double* ker = &wv[((oc * c + ic) * k) * k];
                for (std::size_t ki = 0; ki < k; ++ki)
                    for (std::size_t kj = 0; kj < k; ++kj) {
                        const double kval = ker[ki * k + kj];
                        for (std::size_t i = 0; i < oh; ++i) {
                            const auto si = static_cast<std::ptrdiff_t>(i + ki) - pad;
                            if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t j = 0; j < ow; ++j) {
                                const auto sj = static_cast<std::ptrdiff_t>(j + kj) - pad;
                                if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
                                dst[i * ow + j] += kval * src[si * static_cast<std::ptrdiff_t>(w) + sj];
                            }
                        }
                    }
            }
        }

    return record(
        "conv2d", {n, o, oh, ow}, std::move(out), {&x, &weight, &bias},
        [=](const Node& self) {
            Node& xs = in(self, 0);
            Node& ws = in(self, 1);
            Node& bs = in(self, 2);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t oc = 0; oc < o; ++oc) {
                    const double* g = &self.grad[((b * o + oc) * oh) * ow];
                    if (bs.requires_grad)
                        for (std::size_t i = 0; i < oh * ow; ++i) bs.grad[oc] += g[i];
                    for (std::size_t ic = 0; ic < c; ++ic) {
                        const std::size_t xoff = ((b * c + ic) * h) * w;
                        const std::size_t woff = ((oc * c + ic) * k) * k;
                        for (std::size_t ki = 0; ki < k; ++ki)
                            for (std::size_t kj = 0; kj < k; ++kj) {
                                const double kval = ws.value[woff + ki * k + kj];
                                double wacc = 0.0;
                                for (std::size_t i = 0; i < oh; ++i) {
                                    const auto si = static_cast<std::ptrdiff_t>(i + ki) - pad;
                                    if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
                                    for (std::size_t j = 0; j < ow; ++j) {
                                        const auto sj = static_cast<std::ptrdiff_t>(j + kj) - pad;
                                        if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
                                        const std::size_t xi =
                                            xoff + static_cast<std::size_t>(si) * w +
                                            static_cast<std::size_t>(sj);
                                        const double gv = g[i * ow + j];
                                        wacc += gv * xs.value[xi];
                                        if (xs.requires_grad) xs.grad[xi] += gv * kval;
                                    }
                                }
                                if (ws.requires_grad) ws.grad[woff + ki * k + kj] += wacc;
                            }
                    }
                }
        });
}

Tensor avg_pool2(const Tensor& x) {
    require_rank("avg_pool2", x, 4);
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 || w % 2) contract_fail("avg_pool2", "odd spatial extent in " + shape_string(x.shape()));
    const std::size_t oh = h / 2, ow = w / 2;
    std::vector<double> out(n * c * oh * ow);
    auto src = x.data();
    for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                const double* s = &src[p * h * w + 2 * i * w + 2 * j];
                out[(p * oh + i) * ow + j] = 0.25 * (s[0] + s[1] + s[w] + s[w + 1]);
            }
    return record("avg_pool2", {n, c, oh, ow}, std::move(out), {&x}, [=](const Node& self) {
        Node& s = in(self, 0);
        for (std::size_t p = 0; p < n * c; ++p)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    const double g = 0.25 * self.grad[(p * oh + i) * ow + j];
                    double* d = &s.grad[p * h * w + 2 * i * w + 2 * j];
                    d[0] += g;
                    d[1] += g;
                    d[w] += g;
                    d[w + 1] += g;
                }
    });
}

// ---- softmax family ------------------------------------------------------------------

Tensor log_softmax(const Tensor& x) {
    require_rank("log_softmax", x, 2);
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> out(rows * cols);
    auto src = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = &src[r * cols];
        const double peak = *std::max_element(row, row + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - peak);
        const double lse = peak + std::log(z);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
    }
    return record("log_softmax", x.shape(), std::move(out), {&x}, [rows, cols](const Node& self) {
        Node& s = in(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            double gsum = 0.0;
            for (std::size_t c = 0; c < cols; ++c) gsum += self.grad[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = r * cols + c;
                s.grad[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
            }
        }
    });
}

Tensor softmax(const Tensor& x) {
    require_rank("softmax", x, 2);
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> out(rows * cols);
    auto src = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = &src[r * cols];
        const double peak = *std::max_element(row, row + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = std::exp(row[c] - peak);
            z += out[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
    }
    return record("softmax", x.shape(), std::move(out), {&x}, [rows, cols](const Node& self) {
        Node& s = in(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c)
                dot += self.grad[r * cols + c] * self.value[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = r * cols + c;
                s.grad[i] += self.value[i] * (self.grad[i] - dot);
            }
        }
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_rank("cross_entropy", logits, 2);
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (labels.size() != rows) {
        contract_fail("cross_entropy", std::to_string(labels.size()) + " labels for logits " +
                                           shape_string(logits.shape()));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
            contract_fail("cross_entropy", "label " + std::to_string(labels[r]) + " at row " +
                                               std::to_string(r) + " outside [0, " +
                                               std::to_string(cols) + ")");
        }
    }
    std::vector<double> out(rows);
    std::vector<double> probs(rows * cols);
    auto src = logits.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = &src[r * cols];
        const double peak = *std::max_element(row, row + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            probs[r * cols + c] = std::exp(row[c] - peak);
            z += probs[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= z;
        out[r] = peak + std::log(z) - row[labels[r]];
    }
    std::vector<int> targets(labels.begin(), labels.end());
    return record("cross_entropy", {rows}, std::move(out), {&logits},
                  [rows, cols, probs = std::move(probs), targets = std::move(targets)](const Node& self) {
                      Node& s = in(self, 0);
                      for (std::size_t r = 0; r < rows; ++r) {
                          const double g = self.grad[r];
                          for (std::size_t c = 0; c < cols; ++c) {
                              const double onehot = static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
                              s.grad[r * cols + c] += g * (probs[r * cols + c] - onehot);
                          }
                      }
                  });
}

// ---- shape plumbing ------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    require_defined("reshape", x);
    if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
    std::vector<double> out(x.data().begin(), x.data().end());
    return record("reshape", std::move(shape), std::move(out), {&x}, [](const Node& self) {
        Node& s = in(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) s.grad[i] += self.grad[i];
    });
}

Tensor flatten_rows(const Tensor& x) {
    require_defined("flatten_rows", x);
    if (x.rank() < 1) contract_fail("flatten_rows", "scalar input");
    const std::size_t rows = x.dim(0);
    return reshape(x, {rows, rows == 0 ? 0 : x.numel() / rows});
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) contract_fail("concat_rows", "no inputs");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::size_t rows = 0;
    std::vector<double> out;
    bool any_grad = false;
    for (const Tensor& p : parts) {
        require_defined("concat_rows", p);
        if (p.rank() < 1 || Shape(p.shape().begin() + 1, p.shape().end()) != tail)
            shape_fail("concat_rows", parts[0].shape(), p.shape());
        rows += p.dim(0);
        out.insert(out.end(), p.data().begin(), p.data().end());
        any_grad = any_grad || p.requires_grad();
    }
    Shape shape{rows};
    shape.insert(shape.end(), tail.begin(), tail.end());
    check_finite("concat_rows", out);
    auto node = new_node(std::move(shape), std::move(out));
    if (g_grad_enabled && any_grad) {
        node->requires_grad = true;
        for (const Tensor& p : parts) node->inputs.push_back(p.node());
        node->backward = [](const Node& self) {
            std::size_t offset = 0;
            for (const auto& src : self.inputs) {
                if (src->requires_grad)
                    for (std::size_t i = 0; i < src->value.size(); ++i)
                        src->grad[i] += self.grad[offset + i];
                offset += src->value.size();
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    require_defined("slice_rows", x);
    if (x.rank() < 1 || begin > end || end > x.dim(0)) {
        contract_fail("slice_rows", "rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                                        ") out of range for " + shape_string(x.shape()));
    }
    const std::size_t stride = x.dim(0) == 0 ? 0 : x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = end - begin;
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                            x.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
    const std::size_t offset = begin * stride;
    return record("slice_rows", std::move(shape), std::move(out), {&x}, [offset](const Node& self) {
        Node& s = in(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) s.grad[offset + i] += self.grad[i];
    });
}

// ---- reverse pass -------------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined loss");
    if (loss.numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) return;

    std::vector<Node*> order;
    std::vector<Node*> stack{loss.node().get()};
    std::unordered_set<const Node*> seen;
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!n->requires_grad || !seen.insert(n).second) continue;
        order.push_back(n);
        for (const auto& child : n->inputs) stack.push_back(child.get());
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

    for (Node* n : order) {
        if (n->backward || n->grad.size() != n->value.size()) {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    loss.node()->grad[0] += 1.0;
    for (Node* n : order) {
        if (n->backward) n->backward(*n);
    }
}

}  // namespace tiedaug
