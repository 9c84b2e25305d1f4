#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// Operations record a backward closure on the thread's active Tape (see
// TapeScope) whenever one of their inputs requires a gradient. Without an
// active tape, operations only compute values, which is what inference uses.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmr/error.hpp"

namespace mmr {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

class Tensor {
public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) {}

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : impl_(std::make_shared<TensorImpl>()) {
        if (numel(shape) != data.size()) {
            throw ShapeError("tensor", "data length " + std::to_string(data.size()) +
                                           " does not match shape " + shape_str(shape));
        }
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return impl_->shape; }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->data.size(); }

    std::span<double> data() { return impl_->data; }
    std::span<const double> data() const { return impl_->data; }
    std::vector<double>& values() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }
    double item() const {
        if (size() != 1) throw ShapeError("tensor", "item() on non-scalar " + shape_str(shape()));
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    // Gradient buffer, allocated as zeros on first access. Tensor is a handle,
    // so a const handle still exposes the shared gradient.
    std::vector<double>& grad() const { return impl_->grad_buffer(); }
    void zero_grad() const { impl_->grad.clear(); }

    Tensor detach() const { return Tensor(shape(), values(), false); }

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of backward closures for one forward pass.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape*& active() {
        thread_local Tape* current = nullptr;
        return current;
    }

    void record(std::function<void()> fn) {
        if (consumed_) throw ContractError("tensor", "recording on a consumed tape");
        records_.push_back(std::move(fn));
    }

    std::size_t size() const { return records_.size(); }

    // Runs the records in reverse order; a tape supports a single backward.
    void backward(const Tensor& loss) {
        if (consumed_) {
            throw ContractError("tensor", "backward called twice without a new forward pass");
        }
        if (loss.size() != 1) {
            throw ContractError("tensor", "backward needs a scalar loss, got " +
                                              shape_str(loss.shape()));
        }
        if (!loss.requires_grad()) {
            throw ContractError("tensor", "loss does not depend on any trainable tensor");
        }
        consumed_ = true;
        loss.grad()[0] += 1.0;
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
        records_.clear();
    }

private:
    std::vector<std::function<void()>> records_;
    bool consumed_ = false;
};

// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : previous_(Tape::active()) { Tape::active() = &tape; }
    ~TapeScope() { Tape::active() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

namespace ops {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

inline Tensor make_output(Shape shape, std::vector<double> data, bool track) {
    return Tensor(std::move(shape), std::move(data), track);
}

inline void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError("tensor", std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
    }
}

// True when `small` equals a trailing suffix of `big`.
inline bool trailing_broadcastable(const Shape& big, const Shape& small) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    using namespace detail;
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("tensor", "matmul shape mismatch " + shape_str(a.shape()) + " x " +
                                       shape_str(b.shape()));
    }
    const bool track = tracking({&a, &b});
    std::vector<double> out(m * n);
    const auto em = static_cast<Eigen::Index>(m), ek = static_cast<Eigen::Index>(k),
               en = static_cast<Eigen::Index>(n);
    Map(out.data(), em, en).noalias() = MapC(a.values().data(), em, ek) * MapC(b.values().data(), ek, en);
    Tensor c = make_output({m, n}, std::move(out), track);
    if (track) {
        Tape::active()->record([a, b, c, em, ek, en]() mutable {
            if (!c.has_grad()) return;
            MapC dc(c.grad().data(), em, en);
            if (a.requires_grad()) {
                Map(a.grad().data(), em, ek).noalias() += dc * MapC(b.values().data(), ek, en).transpose();
            }
            if (b.requires_grad()) {
                Map(b.grad().data(), ek, en).noalias() += MapC(a.values().data(), em, ek).transpose() * dc;
            }
        });
    }
    return c;
}

// a * b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    using namespace detail;
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) {
        throw ShapeError("tensor", "matmul_nt shape mismatch " + shape_str(a.shape()) + " x " +
                                       shape_str(b.shape()) + "^T");
    }
    const bool track = tracking({&a, &b});
    std::vector<double> out(m * n);
    const auto em = static_cast<Eigen::Index>(m), ek = static_cast<Eigen::Index>(k),
               en = static_cast<Eigen::Index>(n);
    Map(out.data(), em, en).noalias() =
        MapC(a.values().data(), em, ek) * MapC(b.values().data(), en, ek).transpose();
    Tensor c = make_output({m, n}, std::move(out), track);
    if (track) {
        Tape::active()->record([a, b, c, em, ek, en]() mutable {
            if (!c.has_grad()) return;
            MapC dc(c.grad().data(), em, en);
            if (a.requires_grad()) {
                Map(a.grad().data(), em, ek).noalias() += dc * MapC(b.values().data(), en, ek);
            }
            if (b.requires_grad()) {
                Map(b.grad().data(), en, ek).noalias() += dc.transpose() * MapC(a.values().data(), em, ek);
            }
        });
    }
    return c;
}

namespace detail {

// Elementwise binary op with right operand broadcast over leading axes.
template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, DA da, DB db) {
    if (!trailing_broadcastable(a.shape(), b.shape())) {
        throw ShapeError("tensor", std::string(name) + " cannot broadcast " + shape_str(b.shape()) +
                                       " onto " + shape_str(a.shape()));
    }
    const bool track = tracking({&a, &b});
    const std::size_t n = a.size(), m = b.size();
    std::vector<double> out(n);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % m]);
    Tensor c = make_output(a.shape(), std::move(out), track);
    if (track) {
        Tape::active()->record([a, b, c, n, m, da, db]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            const auto& av = a.values();
            const auto& bv = b.values();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * da(av[i], bv[i % m]);
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < n; ++i) gb[i % m] += g[i] * db(av[i], bv[i % m]);
            }
        });
    }
    return c;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
    const bool track = tracking({&a});
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
    Tensor c = make_output(a.shape(), std::move(out), track);
    if (track) {
        Tape::active()->record([a, c, deriv]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            const auto& av = a.values();
            const auto& cv = c.values();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(av[i], cv[i]);
        });
    }
    return c;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double s) {
    return detail::unary(
        a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor square(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

// log(1 + e^x), evaluated without overflow. Its derivative is the sigmoid.
inline Tensor softplus(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

// tanh approximation of GELU and its exact derivative.
inline Tensor gelu(const Tensor& a) {
    constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
    constexpr double k = 0.044715;
    return detail::unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
        [](double x, double) {
            const double t = std::tanh(c * (x + k * x * x * x));
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
        });
}

inline Tensor sum(const Tensor& a) {
    const bool track = detail::tracking({&a});
    const double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    Tensor c = detail::make_output({1}, {s}, track);
    if (track) {
        Tape::active()->record([a, c]() mutable {
            if (!c.has_grad()) return;
            const double g = c.grad()[0];
            for (auto& v : a.grad()) v += g;
        });
    }
    return c;
}

inline Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("tensor", "mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// Mean over the rows of a matrix: [n x d] -> [1 x d].
inline Tensor mean_rows(const Tensor& a) {
    detail::require_rank2(a, "mean_rows");
    const std::size_t n = a.dim(0), d = a.dim(1);
    if (n == 0) throw ShapeError("tensor", "mean_rows of an empty matrix");
    const bool track = detail::tracking({&a});
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[j] += a.values()[i * d + j];
    }
    for (auto& v : out) v /= static_cast<double>(n);
    Tensor c = detail::make_output({1, d}, std::move(out), track);
    if (track) {
        Tape::active()->record([a, c, n, d]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[j] / static_cast<double>(n);
            }
        });
    }
    return c;
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank2(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    const bool track = detail::tracking({&a});
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
    }
    Tensor c = detail::make_output({n, m}, std::move(out), track);
    if (track) {
        Tape::active()->record([a, c, m, n]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
            }
        });
    }
    return c;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw ShapeError("tensor", "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    const bool track = detail::tracking({&a});
    Tensor c = detail::make_output(std::move(shape), a.values(), track);
    if (track) {
        Tape::active()->record([a, c]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return c;
}

// Softmax along the last axis.
inline Tensor softmax(const Tensor& a) {
    if (a.rank() == 0 || a.shape().back() == 0) {
        throw ConfigError("tensor", "softmax over an empty axis");
    }
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.size() / d;
    const bool track = detail::tracking({&a});
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.values().data() + r * d;
        double* y = out.data() + r * d;
        const double mx = *std::max_element(x, x + d);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < d; ++j) y[j] /= z;
    }
    Tensor c = detail::make_output(a.shape(), std::move(out), track);
    if (track) {
        Tape::active()->record([a, c, rows, d]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            const auto& y = c.values();
            auto& ga = a.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
                for (std::size_t j = 0; j < d; ++j) {
                    ga[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
                }
            }
        });
    }
    return c;
}

// Row-wise layer normalization with learned affine gamma/beta of width d.
inline Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
    if (x.rank() == 0) throw ShapeError("tensor", "layernorm on a scalar");
    const std::size_t d = x.shape().back();
    if (gamma.size() != d || beta.size() != d) {
        throw ShapeError("tensor", "layernorm affine width does not match " + shape_str(x.shape()));
    }
    const std::size_t rows = x.size() / d;
    const bool track = detail::tracking({&x, &gamma, &beta});
    std::vector<double> out(x.size()), xhat(x.size()), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
            out[r * d + j] = xhat[r * d + j] * gamma.values()[j] + beta.values()[j];
        }
    }
    Tensor c = detail::make_output(x.shape(), std::move(out), track);
    if (track) {
        Tape::active()->record([x, gamma, beta, c, rows, d, xhat = std::move(xhat),
                                inv_std = std::move(inv_std)]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            const auto& gm = gamma.values();
            if (gamma.requires_grad() || beta.requires_grad()) {
                auto& gg = gamma.grad();
                auto& gb = beta.grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) {
                        gg[j] += g[r * d + j] * xhat[r * d + j];
                        gb[j] += g[r * d + j];
                    }
                }
            }
            if (x.requires_grad()) {
                auto& gx = x.grad();
                const double dd = static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = g[r * d + j] * gm[j];
                        s1 += gh;
                        s2 += gh * xhat[r * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = g[r * d + j] * gm[j];
                        gx[r * d + j] += inv_std[r] * (gh - s1 / dd - xhat[r * d + j] * s2 / dd);
                    }
                }
            }
        });
    }
    return c;
}

// Rows idx of a matrix, in order; backward scatters additively.
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    detail::require_rank2(a, "gather_rows");
    const std::size_t n = a.dim(0), d = a.dim(1);
    for (std::size_t i : idx) {
        if (i >= n) throw ShapeError("tensor", "gather_rows index out of range");
    }
    const bool track = detail::tracking({&a});
    std::vector<double> out(idx.size() * d);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d,
                    out.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    Tensor c = detail::make_output({idx.size(), d}, std::move(out), track);
    if (track) {
        Tape::active()->record([a, c, idx, d]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            auto& ga = a.grad();
            for (std::size_t r = 0; r < idx.size(); ++r) {
                for (std::size_t j = 0; j < d; ++j) ga[idx[r] * d + j] += g[r * d + j];
            }
        });
    }
    return c;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("tensor", "concat_rows of nothing");
    const std::size_t d = parts.front().dim(1);
    std::size_t n = 0;
    bool track = false;
    for (const auto& p : parts) {
        detail::require_rank2(p, "concat_rows");
        if (p.dim(1) != d) throw ShapeError("tensor", "concat_rows width mismatch");
        n += p.dim(0);
        track = track || detail::tracking({&p});
    }
    std::vector<double> out;
    out.reserve(n * d);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    Tensor c = detail::make_output({n, d}, std::move(out), track);
    if (track) {
        Tape::active()->record([parts, c]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            std::size_t off = 0;
            for (auto& p : parts) {
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
                }
                off += p.size();
            }
        });
    }
    return c;
}

inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
    detail::require_rank2(a, "slice_cols");
    const std::size_t n = a.dim(0), d = a.dim(1);
    if (start + len > d) throw ShapeError("tensor", "slice_cols out of range");
    const bool track = detail::tracking({&a});
    std::vector<double> out(n * len);
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>(r * d + start), len,
                    out.begin() + static_cast<std::ptrdiff_t>(r * len));
    }
    Tensor c = detail::make_output({n, len}, std::move(out), track);
    if (track) {
        Tape::active()->record([a, c, n, d, start, len]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            auto& ga = a.grad();
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t j = 0; j < len; ++j) ga[r * d + start + j] += g[r * len + j];
            }
        });
    }
    return c;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("tensor", "concat_cols of nothing");
    const std::size_t n = parts.front().dim(0);
    std::size_t d = 0;
    bool track = false;
    for (const auto& p : parts) {
        detail::require_rank2(p, "concat_cols");
        if (p.dim(0) != n) throw ShapeError("tensor", "concat_cols height mismatch");
        d += p.dim(1);
        track = track || detail::tracking({&p});
    }
    std::vector<double> out(n * d);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t r = 0; r < n; ++r) {
            std::copy_n(p.values().begin() + static_cast<std::ptrdiff_t>(r * w), w,
                        out.begin() + static_cast<std::ptrdiff_t>(r * d + off));
        }
        off += w;
    }
    Tensor c = detail::make_output({n, d}, std::move(out), track);
    if (track) {
        Tape::active()->record([parts, c, n, d]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            std::size_t off = 0;
            for (auto& p : parts) {
                const std::size_t w = p.dim(1);
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * d + off + j];
                    }
                }
                off += w;
            }
        });
    }
    return c;
}

// A vector of width d stacked n times: [n x d].
inline Tensor repeat_rows(const Tensor& v, std::size_t n) {
    const std::size_t d = v.size();
    const bool track = detail::tracking({&v});
    std::vector<double> out(n * d);
    for (std::size_t r = 0; r < n; ++r) {
        std::copy(v.values().begin(), v.values().end(), out.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    Tensor c = detail::make_output({n, d}, std::move(out), track);
    if (track) {
        Tape::active()->record([v, c, n, d]() mutable {
            if (!c.has_grad()) return;
            const auto& g = c.grad();
            auto& gv = v.grad();
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t j = 0; j < d; ++j) gv[j] += g[r * d + j];
            }
        });
    }
    return c;
}

// x W + b for x [n x in], W [in x out], b [out].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), b);
}

}  // namespace ops

inline bool all_finite(const Tensor& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mmr
