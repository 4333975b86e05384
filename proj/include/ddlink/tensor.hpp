// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "ddlink/errors.hpp"
#include "ddlink/special.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace ddlink::ad {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += "x";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

class Tape;
class Gradients;
class GradBuffers;
class Tensor;

/// Backward-pass contribution of one node: pulls the node's output
/// cotangent into its parents' accumulators.
using PullFn = std::function<void(const std::vector<double>& gout, GradBuffers& gb)>;

namespace detail {
Tensor make_result(const char* op, Tape* tape, Shape shape, std::vector<double> data, PullFn pull);
}

/// Real-valued tensor, row-major. A tensor always owns (shares) its data;
/// when it additionally carries a tape handle, operations consuming it are
/// recorded for reverse-mode differentiation. Tensors without a tape handle
/// evaluate forward only, which is the concurrency-safe evaluation mode.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
        for (int d : shape_)
            if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape_));
        if (data.size() != numel(shape_))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape_));
        data_ = std::make_shared<const std::vector<double>>(std::move(data));
    }

    static Tensor zeros(Shape shape) {
        std::vector<double> d(numel(shape), 0.0);
        return Tensor(std::move(shape), std::move(d));
    }
    static Tensor full(Shape shape, double v) {
        std::vector<double> d(numel(shape), v);
        return Tensor(std::move(shape), std::move(d));
    }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_ ? data_->size() : 0; }
    bool empty() const { return !data_; }

    const std::vector<double>& values() const {
        if (!data_) throw ShapeError("empty tensor has no values");
        return *data_;
    }

    /// Scalar payload of a one-element tensor.
    double value() const {
        if (size() != 1) throw ShapeError("value() requires a one-element tensor, shape is " + shape_str(shape_));
        return (*data_)[0];
    }

    double at(std::initializer_list<int> idx) const {
        if (static_cast<int>(idx.size()) != rank()) throw ShapeError("index rank mismatch");
        std::size_t flat = 0;
        int axis = 0;
        for (int i : idx) {
            if (i < 0 || i >= shape_[static_cast<std::size_t>(axis)]) throw ShapeError("index out of range");
            flat = flat * static_cast<std::size_t>(shape_[static_cast<std::size_t>(axis)]) + static_cast<std::size_t>(i);
            ++axis;
        }
        return (*data_)[flat];
    }

    bool on_tape() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

    /// Same values, no tape handle.
    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

private:
    friend class Tape;
    friend Gradients;
    friend Tensor detail::make_result(const char*, Tape*, Shape, std::vector<double>, PullFn);

    Shape shape_{};
    std::shared_ptr<const std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

namespace detail {
inline void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericError(std::string("non-finite value produced by operation '") + op + "'");
}
} // namespace detail

/// Per-node gradient accumulators used during one backward pass.
class GradBuffers {
public:
    explicit GradBuffers(std::size_t nodes) : bufs_(nodes) {}

    std::vector<double>& accumulate(int node, std::size_t n) {
        auto& b = bufs_[static_cast<std::size_t>(node)];
        if (b.empty()) b.assign(n, 0.0);
        return b;
    }
    bool has(int node) const { return !bufs_[static_cast<std::size_t>(node)].empty(); }
    const std::vector<double>& at(int node) const { return bufs_[static_cast<std::size_t>(node)]; }
    std::vector<std::vector<double>> take() { return std::move(bufs_); }

private:
    std::vector<std::vector<double>> bufs_;
};

/// Recording context for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so parents always precede
/// children and one reverse sweep is a topological backward pass that
/// touches each reachable node exactly once. A tape and the tensors bound
/// to it form a single-threaded context; independent tapes may be used
/// concurrently.
class Tape {
public:
    using Pull = PullFn;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register a leaf whose gradient will be reported by backward().
    Tensor variable(const Tensor& value) {
        Tensor t = value.detached();
        t.tape_ = this;
        t.node_ = record("leaf", t.shape_, nullptr);
        return t;
    }
    Tensor variable(Shape shape, std::vector<double> data) {
        return variable(Tensor(std::move(shape), std::move(data)));
    }

    int record(const char* op, Shape shape, Pull pull) {
        nodes_.push_back(Node{op, std::move(shape), std::move(pull)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::size_t size() const { return nodes_.size(); }

    Gradients backward(const Tensor& root);

    const Shape& node_shape(int id) const { return nodes_[static_cast<std::size_t>(id)].shape; }

private:
    struct Node {
        const char* op;
        Shape shape;
        Pull pull; // null for leaves
    };
    std::vector<Node> nodes_;
};

/// Result of a backward pass: gradient of the root with respect to every
/// tape node. Leaves not reachable from the root report zero gradients.
class Gradients {
public:
    Gradients(std::vector<std::vector<double>> bufs, const Tape* tape)
        : bufs_(std::move(bufs)), tape_(tape) {}

    Tensor wrt(const Tensor& t) const {
        if (t.tape() != tape_)
            throw ShapeError("gradient requested for a tensor from a different tape");
        const auto& b = bufs_[static_cast<std::size_t>(t.node())];
        if (b.empty()) return Tensor::zeros(t.shape());
        return Tensor(t.shape(), b);
    }

private:
    std::vector<std::vector<double>> bufs_;
    const Tape* tape_;
};

inline Gradients Tape::backward(const Tensor& root) {
    if (root.tape() != this) throw ShapeError("backward root is not on this tape");
    if (root.size() != 1) throw ShapeError("backward root must be scalar, shape is " + shape_str(root.shape()));
    GradBuffers gb(nodes_.size());
    gb.accumulate(root.node(), 1)[0] = 1.0;
    for (int i = root.node(); i >= 0; --i) {
        if (!gb.has(i)) continue;
        const Node& nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.pull) nd.pull(gb.at(i), gb);
    }
    return Gradients(gb.take(), this);
}

// ---------------------------------------------------------------------------
// Operation library
// ---------------------------------------------------------------------------

namespace detail {

inline Tape* common_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t->on_tape()) continue;
        if (tape && tape != t->tape())
            throw ShapeError("operands belong to different tapes");
        tape = t->tape();
    }
    return tape;
}

inline Tensor make_result(const char* op, Tape* tape, Shape shape,
                          std::vector<double> data, PullFn pull) {
    check_finite(op, data);
    Tensor out(std::move(shape), std::move(data));
    if (tape) {
        out.tape_ = tape;
        out.node_ = tape->record(op, out.shape(), std::move(pull));
    }
    return out;
}

inline bool scalar_like(const Tensor& t) { return t.size() == 1; }

inline void require_nonempty(const char* op, const Tensor& t) {
    if (t.empty()) throw ShapeError(std::string("operation '") + op + "' received an empty tensor");
}

/// Elementwise binary op with scalar broadcast on either side.
/// fx/fy give d out_i / d x_i and d out_i / d y_i as functions of (x, y).
template <class F, class DX, class DY>
Tensor binary_pointwise(const char* op, const Tensor& a, const Tensor& b, F f, DX fx, DY fy) {
    require_nonempty(op, a);
    require_nonempty(op, b);
    const bool as = scalar_like(a), bs = scalar_like(b);
    if (!as && !bs && a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    const Shape& out_shape = as ? b.shape() : a.shape();
    const std::size_t n = numel(out_shape);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = f(av[as ? 0 : i], bv[bs ? 0 : i]);

    Tape* tape = common_tape({&a, &b});
    Tape::Pull pull;
    if (tape) {
        const int na = a.on_tape() ? a.node() : -1;
        const int nb = b.on_tape() ? b.node() : -1;
        auto adata = std::make_shared<std::vector<double>>(a.values());
        auto bdata = std::make_shared<std::vector<double>>(b.values());
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            if (na >= 0) {
                auto& ga = gb.accumulate(na, as ? 1 : gout.size());
                for (std::size_t i = 0; i < gout.size(); ++i)
                    ga[as ? 0 : i] += gout[i] * fx((*adata)[as ? 0 : i], (*bdata)[bs ? 0 : i]);
            }
            if (nb >= 0) {
                auto& gbuf = gb.accumulate(nb, bs ? 1 : gout.size());
                for (std::size_t i = 0; i < gout.size(); ++i)
                    gbuf[bs ? 0 : i] += gout[i] * fy((*adata)[as ? 0 : i], (*bdata)[bs ? 0 : i]);
            }
        };
    }
    return make_result(op, tape, out_shape, std::move(out), std::move(pull));
}

/// Elementwise unary op. d receives (x, out).
template <class F, class D>
Tensor unary_pointwise(const char* op, const Tensor& a, F f, D d) {
    require_nonempty(op, a);
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);

    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        auto adata = std::make_shared<std::vector<double>>(av);
        auto odata = std::make_shared<std::vector<double>>(out);
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            auto& ga = gb.accumulate(na, gout.size());
            for (std::size_t i = 0; i < gout.size(); ++i)
                ga[i] += gout[i] * d((*adata)[i], (*odata)[i]);
        };
    }
    return make_result(op, tape, a.shape(), std::move(out), std::move(pull));
}

} // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_pointwise("add", a, b,
        [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_pointwise("sub", a, b,
        [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_pointwise("mul", a, b,
        [](double x, double y) { return x * y; },
        [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double c) {
    return detail::unary_pointwise("scale", a,
        [c](double x) { return c * x; },
        [c](double, double) { return c; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor sqrt(const Tensor& a) {
    return detail::unary_pointwise("sqrt", a,
        [](double x) { return std::sqrt(x); },
        [](double, double out) { return 0.5 / out; });
}

inline Tensor reciprocal(const Tensor& a) {
    return detail::unary_pointwise("reciprocal", a,
        [](double x) { return 1.0 / x; },
        [](double, double out) { return -out * out; });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary_pointwise("exp", a,
        [](double x) { return std::exp(x); },
        [](double, double out) { return out; });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary_pointwise("tanh", a,
        [](double x) { return std::tanh(x); },
        [](double, double out) { return 1.0 - out * out; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_pointwise("sigmoid", a,
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                       : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double out) { return out * (1.0 - out); });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_pointwise("relu", a,
        [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor clamp_min(const Tensor& a, double lo) {
    return detail::unary_pointwise("clamp_min", a,
        [lo](double x) { return x > lo ? x : lo; },
        [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

inline Tensor clamp_max(const Tensor& a, double hi) {
    return detail::unary_pointwise("clamp_max", a,
        [hi](double x) { return x < hi ? x : hi; },
        [hi](double x, double) { return x < hi ? 1.0 : 0.0; });
}

inline Tensor erfc(const Tensor& a) {
    return detail::unary_pointwise("erfc", a,
        [](double x) { return erfc_scalar(x); },
        [](double x, double) { return erfc_derivative(x); });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_nonempty("matmul", a);
    detail::require_nonempty("matmul", b);
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul requires rank-2 tensors, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double aip = av[static_cast<std::size_t>(i) * k + p];
            if (aip == 0.0) continue;
            const std::size_t bo = static_cast<std::size_t>(p) * n;
            const std::size_t oo = static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) out[oo + j] += aip * bv[bo + j];
        }

    Tape* tape = detail::common_tape({&a, &b});
    Tape::Pull pull;
    if (tape) {
        const int na = a.on_tape() ? a.node() : -1;
        const int nb = b.on_tape() ? b.node() : -1;
        auto adata = std::make_shared<std::vector<double>>(av);
        auto bdata = std::make_shared<std::vector<double>>(bv);
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            if (na >= 0) { // dA = G B^T
                auto& ga = gb.accumulate(na, static_cast<std::size_t>(m) * k);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double g = gout[static_cast<std::size_t>(i) * n + j];
                        if (g == 0.0) continue;
                        for (int p = 0; p < k; ++p)
                            ga[static_cast<std::size_t>(i) * k + p] += g * (*bdata)[static_cast<std::size_t>(p) * n + j];
                    }
            }
            if (nb >= 0) { // dB = A^T G
                auto& gbb = gb.accumulate(nb, static_cast<std::size_t>(k) * n);
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const double aip = (*adata)[static_cast<std::size_t>(i) * k + p];
                        if (aip == 0.0) continue;
                        for (int j = 0; j < n; ++j)
                            gbb[static_cast<std::size_t>(p) * n + j] += aip * gout[static_cast<std::size_t>(i) * n + j];
                    }
            }
        };
    }
    return detail::make_result("matmul", tape, Shape{m, n}, std::move(out), std::move(pull));
}

inline Tensor transpose(const Tensor& a) {
    detail::require_nonempty("transpose", a);
    if (a.rank() != 2) throw ShapeError("transpose requires a rank-2 tensor");
    const int m = a.dim(0), n = a.dim(1);
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];

    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            auto& ga = gb.accumulate(na, static_cast<std::size_t>(m) * n);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    ga[static_cast<std::size_t>(i) * n + j] += gout[static_cast<std::size_t>(j) * m + i];
        };
    }
    return detail::make_result("transpose", tape, Shape{n, m}, std::move(out), std::move(pull));
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    detail::require_nonempty("reshape", a);
    if (numel(shape) != a.size())
        throw ShapeError("reshape from " + shape_str(a.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            auto& ga = gb.accumulate(na, gout.size());
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
        };
    }
    return detail::make_result("reshape", tape, std::move(shape), a.values(), std::move(pull));
}

/// Rows [r0, r1) of a rank-2 tensor.
inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
    detail::require_nonempty("slice_rows", a);
    if (a.rank() != 2) throw ShapeError("slice_rows requires a rank-2 tensor");
    const int m = a.dim(0), n = a.dim(1);
    if (r0 < 0 || r1 > m || r0 >= r1) throw ShapeError("slice_rows range invalid");
    const auto& av = a.values();
    std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(r0) * n,
                            av.begin() + static_cast<std::ptrdiff_t>(r1) * n);
    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            auto& ga = gb.accumulate(na, static_cast<std::size_t>(m) * n);
            for (std::size_t i = 0; i < gout.size(); ++i)
                ga[static_cast<std::size_t>(r0) * n + i] += gout[i];
        };
    }
    return detail::make_result("slice_rows", tape, Shape{r1 - r0, n}, std::move(out), std::move(pull));
}

/// Main diagonal of a square matrix as an n-by-1 column.
inline Tensor diag_part(const Tensor& a) {
    detail::require_nonempty("diag_part", a);
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        throw ShapeError("diag_part requires a square rank-2 tensor");
    const int n = a.dim(0);
    const auto& av = a.values();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = av[static_cast<std::size_t>(i) * n + i];
    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            auto& ga = gb.accumulate(na, static_cast<std::size_t>(n) * n);
            for (int i = 0; i < n; ++i) ga[static_cast<std::size_t>(i) * n + i] += gout[static_cast<std::size_t>(i)];
        };
    }
    return detail::make_result("diag_part", tape, Shape{n, 1}, std::move(out), std::move(pull));
}

inline Tensor reduce_sum(const Tensor& a) {
    detail::require_nonempty("reduce_sum", a);
    const auto& av = a.values();
    double s = 0.0;
    for (double x : av) s += x;
    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        const std::size_t n = av.size();
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            auto& ga = gb.accumulate(na, n);
            for (std::size_t i = 0; i < n; ++i) ga[i] += gout[0];
        };
    }
    return detail::make_result("reduce_sum", tape, Shape{1}, std::vector<double>{s}, std::move(pull));
}

inline Tensor reduce_prod(const Tensor& a) {
    detail::require_nonempty("reduce_prod", a);
    const auto& av = a.values();
    double p = 1.0;
    for (double x : av) p *= x;
    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        auto adata = std::make_shared<std::vector<double>>(av);
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            // Leave-one-out products via prefix/suffix scans; exact with zeros.
            const auto& x = *adata;
            const std::size_t n = x.size();
            std::vector<double> suffix(n + 1, 1.0);
            for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * x[i];
            auto& ga = gb.accumulate(na, n);
            double prefix = 1.0;
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += gout[0] * prefix * suffix[i + 1];
                prefix *= x[i];
            }
        };
    }
    return detail::make_result("reduce_prod", tape, Shape{1}, std::vector<double>{p}, std::move(pull));
}

/// Stack two equally shaped tensors along a new leading axis of size 2.
inline Tensor stack_pair(const Tensor& a, const Tensor& b) {
    detail::require_nonempty("stack_pair", a);
    detail::require_nonempty("stack_pair", b);
    if (a.shape() != b.shape()) throw ShapeError("stack_pair requires identical shapes");
    std::vector<double> out;
    out.reserve(2 * a.size());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    Shape s = a.shape();
    s.insert(s.begin(), 2);

    Tape* tape = detail::common_tape({&a, &b});
    Tape::Pull pull;
    if (tape) {
        const int na = a.on_tape() ? a.node() : -1;
        const int nb = b.on_tape() ? b.node() : -1;
        const std::size_t half = a.size();
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            if (na >= 0) {
                auto& ga = gb.accumulate(na, half);
                for (std::size_t i = 0; i < half; ++i) ga[i] += gout[i];
            }
            if (nb >= 0) {
                auto& gbb = gb.accumulate(nb, half);
                for (std::size_t i = 0; i < half; ++i) gbb[i] += gout[half + i];
            }
        };
    }
    return detail::make_result("stack_pair", tape, std::move(s), std::move(out), std::move(pull));
}

/// Index the leading axis, dropping it.
inline Tensor take_plane(const Tensor& a, int index) {
    detail::require_nonempty("take_plane", a);
    if (a.rank() < 2) throw ShapeError("take_plane requires rank >= 2");
    const int d0 = a.dim(0);
    if (index < 0 || index >= d0) throw ShapeError("take_plane index out of range");
    Shape rest(a.shape().begin() + 1, a.shape().end());
    const std::size_t stride = numel(rest);
    const auto& av = a.values();
    std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(index * stride),
                            av.begin() + static_cast<std::ptrdiff_t>((index + 1) * stride));
    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        const std::size_t total = av.size();
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            auto& ga = gb.accumulate(na, total);
            for (std::size_t i = 0; i < gout.size(); ++i)
                ga[static_cast<std::size_t>(index) * stride + i] += gout[i];
        };
    }
    return detail::make_result("take_plane", tape, std::move(rest), std::move(out), std::move(pull));
}

/// 2-D convolution over an H x W x Cin input with a Cout x Kh x Kw x Cin
/// filter bank and per-filter bias, zero padding. Default padding keeps the
/// spatial size ("same") for odd kernels.
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     int pad_h = -1, int pad_w = -1) {
    detail::require_nonempty("conv2d", input);
    detail::require_nonempty("conv2d", weight);
    detail::require_nonempty("conv2d", bias);
    if (input.rank() != 3) throw ShapeError("conv2d input must be H x W x C, got " + shape_str(input.shape()));
    if (weight.rank() != 4) throw ShapeError("conv2d weight must be Cout x Kh x Kw x Cin");
    const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
    const int cout = weight.dim(0), kh = weight.dim(1), kw = weight.dim(2);
    if (weight.dim(3) != cin)
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(cin) +
                         ", weight expects " + std::to_string(weight.dim(3)));
    if (bias.rank() != 1 || bias.dim(0) != cout) throw ShapeError("conv2d bias must have Cout entries");
    if (pad_h < 0) pad_h = (kh - 1) / 2;
    if (pad_w < 0) pad_w = (kw - 1) / 2;
    const int oh = h + 2 * pad_h - kh + 1;
    const int ow = w + 2 * pad_w - kw + 1;
    if (oh < 1 || ow < 1) throw ShapeError("conv2d output would be empty");

    const auto& in = input.values();
    const auto& wt = weight.values();
    const auto& bs = bias.values();
    std::vector<double> out(static_cast<std::size_t>(oh) * ow * cout);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int co = 0; co < cout; ++co) {
                double acc = bs[static_cast<std::size_t>(co)];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy + ky - pad_h;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox + kx - pad_w;
                        if (ix < 0 || ix >= w) continue;
                        const std::size_t ibase = (static_cast<std::size_t>(iy) * w + ix) * cin;
                        const std::size_t wbase = ((static_cast<std::size_t>(co) * kh + ky) * kw + kx) * cin;
                        for (int ci = 0; ci < cin; ++ci)
                            acc += in[ibase + ci] * wt[wbase + ci];
                    }
                }
                out[(static_cast<std::size_t>(oy) * ow + ox) * cout + co] = acc;
            }

    Tape* tape = detail::common_tape({&input, &weight, &bias});
    Tape::Pull pull;
    if (tape) {
        const int ni = input.on_tape() ? input.node() : -1;
        const int nw = weight.on_tape() ? weight.node() : -1;
        const int nb = bias.on_tape() ? bias.node() : -1;
        auto idata = std::make_shared<std::vector<double>>(in);
        auto wdata = std::make_shared<std::vector<double>>(wt);
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            std::vector<double>* gi = ni >= 0 ? &gb.accumulate(ni, idata->size()) : nullptr;
            std::vector<double>* gw = nw >= 0 ? &gb.accumulate(nw, wdata->size()) : nullptr;
            std::vector<double>* gbs = nb >= 0 ? &gb.accumulate(nb, static_cast<std::size_t>(cout)) : nullptr;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    for (int co = 0; co < cout; ++co) {
                        const double g = gout[(static_cast<std::size_t>(oy) * ow + ox) * cout + co];
                        if (g == 0.0) continue;
                        if (gbs) (*gbs)[static_cast<std::size_t>(co)] += g;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy + ky - pad_h;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox + kx - pad_w;
                                if (ix < 0 || ix >= w) continue;
                                const std::size_t ibase = (static_cast<std::size_t>(iy) * w + ix) * cin;
                                const std::size_t wbase = ((static_cast<std::size_t>(co) * kh + ky) * kw + kx) * cin;
                                for (int ci = 0; ci < cin; ++ci) {
                                    if (gi) (*gi)[ibase + ci] += g * (*wdata)[wbase + ci];
                                    if (gw) (*gw)[wbase + ci] += g * (*idata)[ibase + ci];
                                }
                            }
                        }
                    }
        };
    }
    return detail::make_result("conv2d", tape, Shape{oh, ow, cout}, std::move(out), std::move(pull));
}

/// Max pooling with window p x p and stride p; trailing rows/columns that do
/// not fill a window are dropped. Ties resolve to the first element in scan
/// order, which keeps the backward pass deterministic.
inline Tensor max_pool2d(const Tensor& input, int p) {
    detail::require_nonempty("max_pool2d", input);
    if (input.rank() != 3) throw ShapeError("max_pool2d input must be H x W x C");
    if (p < 1) throw ShapeError("max_pool2d window must be >= 1");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    const int oh = h / p, ow = w / p;
    if (oh < 1 || ow < 1) throw ShapeError("max_pool2d output would be empty");
    const auto& in = input.values();
    std::vector<double> out(static_cast<std::size_t>(oh) * ow * c);
    std::vector<int> argmax(out.size());
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ci = 0; ci < c; ++ci) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx) {
                        const int iy = oy * p + dy, ix = ox * p + dx;
                        const std::size_t idx = (static_cast<std::size_t>(iy) * w + ix) * c + ci;
                        if (in[idx] > best) {
                            best = in[idx];
                            best_idx = static_cast<int>(idx);
                        }
                    }
                const std::size_t o = (static_cast<std::size_t>(oy) * ow + ox) * c + ci;
                out[o] = best;
                argmax[o] = best_idx;
            }

    Tape* tape = input.tape();
    Tape::Pull pull;
    if (tape) {
        const int ni = input.node();
        auto amax = std::make_shared<std::vector<int>>(std::move(argmax));
        const std::size_t in_size = in.size();
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            auto& gi = gb.accumulate(ni, in_size);
            for (std::size_t i = 0; i < gout.size(); ++i)
                gi[static_cast<std::size_t>((*amax)[i])] += gout[i];
        };
    }
    return detail::make_result("max_pool2d", tape, Shape{oh, ow, c}, std::move(out), std::move(pull));
}

namespace detail {

/// Complex Gauss-Jordan inverse with partial pivoting over a packed
/// [2, n, n] (real plane, imaginary plane) buffer. Singularity tolerance is
/// 1e-12 times the max row 1-norm of the input.
inline std::vector<double> complex_inverse_forward(const std::vector<double>& packed, int n) {
    std::vector<std::complex<double>> a(static_cast<std::size_t>(n) * n);
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    for (std::size_t i = 0; i < plane; ++i) a[i] = {packed[i], packed[plane + i]};

    double max_row_norm = 0.0;
    for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::abs(a[static_cast<std::size_t>(r) * n + j]);
        max_row_norm = std::max(max_row_norm, s);
    }
    const double tol = 1e-12 * max_row_norm;

    std::vector<std::complex<double>> inv(plane, {0.0, 0.0});
    for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i) * n + i] = 1.0;

    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(a[static_cast<std::size_t>(col) * n + col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::abs(a[static_cast<std::size_t>(r) * n + col]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best <= tol) throw SingularMatrixError(static_cast<std::size_t>(col), best);
        if (piv != col) {
            for (int j = 0; j < n; ++j) {
                std::swap(a[static_cast<std::size_t>(piv) * n + j], a[static_cast<std::size_t>(col) * n + j]);
                std::swap(inv[static_cast<std::size_t>(piv) * n + j], inv[static_cast<std::size_t>(col) * n + j]);
            }
        }
        const std::complex<double> pinv = 1.0 / a[static_cast<std::size_t>(col) * n + col];
        for (int j = 0; j < n; ++j) {
            a[static_cast<std::size_t>(col) * n + j] *= pinv;
            inv[static_cast<std::size_t>(col) * n + j] *= pinv;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const std::complex<double> f = a[static_cast<std::size_t>(r) * n + col];
            if (f == std::complex<double>(0.0, 0.0)) continue;
            for (int j = 0; j < n; ++j) {
                a[static_cast<std::size_t>(r) * n + j] -= f * a[static_cast<std::size_t>(col) * n + j];
                inv[static_cast<std::size_t>(r) * n + j] -= f * inv[static_cast<std::size_t>(col) * n + j];
            }
        }
    }

    std::vector<double> out(2 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        out[i] = inv[i].real();
        out[plane + i] = inv[i].imag();
    }
    return out;
}

} // namespace detail

/// Inverse of a complex matrix packed as [2, n, n] (real plane, imaginary
/// plane). The backward pass applies the inverse-function adjoint
/// d(A^-1) = -A^-1 dA A^-1 in its cotangent form dL/dA = -Z^H W Z^H with
/// Z = A^-1 and W the packed output cotangent.
inline Tensor complex_inverse_packed(const Tensor& a) {
    detail::require_nonempty("complex_inverse", a);
    if (a.rank() != 3 || a.dim(0) != 2 || a.dim(1) != a.dim(2))
        throw ShapeError("complex_inverse expects a [2, n, n] packed tensor, got " + shape_str(a.shape()));
    const int n = a.dim(1);
    std::vector<double> out = detail::complex_inverse_forward(a.values(), n);

    Tape* tape = a.tape();
    Tape::Pull pull;
    if (tape) {
        const int na = a.node();
        auto z = std::make_shared<std::vector<double>>(out);
        pull = [=](const std::vector<double>& gout, GradBuffers& gb) {
            const std::size_t plane = static_cast<std::size_t>(n) * n;
            std::vector<std::complex<double>> zc(plane), wc(plane);
            for (std::size_t i = 0; i < plane; ++i) {
                zc[i] = {(*z)[i], (*z)[plane + i]};
                wc[i] = {gout[i], gout[plane + i]};
            }
            // T = Z^H W, G = T Z^H, grad = -G
            std::vector<std::complex<double>> t(plane, {0.0, 0.0}), g(plane, {0.0, 0.0});
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < n; ++p) {
                    const std::complex<double> zhi = std::conj(zc[static_cast<std::size_t>(p) * n + i]);
                    for (int j = 0; j < n; ++j)
                        t[static_cast<std::size_t>(i) * n + j] += zhi * wc[static_cast<std::size_t>(p) * n + j];
                }
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < n; ++p) {
                    const std::complex<double> tip = t[static_cast<std::size_t>(i) * n + p];
                    for (int j = 0; j < n; ++j)
                        g[static_cast<std::size_t>(i) * n + j] += tip * std::conj(zc[static_cast<std::size_t>(j) * n + p]);
                }
            auto& ga = gb.accumulate(na, 2 * plane);
            for (std::size_t i = 0; i < plane; ++i) {
                ga[i] -= g[i].real();
                ga[plane + i] -= g[i].imag();
            }
        };
    }
    return detail::make_result("complex_inverse", tape, Shape{2, n, n}, std::move(out), std::move(pull));
}

} // namespace ddlink::ad
