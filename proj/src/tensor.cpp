#include "nbf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace nbf {

using detail::TensorNode;

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

std::size_t row_count(const Tensor& t) {
    return t.rank() <= 1 ? (t.size() > 0 ? 1 : 0) : t.shape()[0];
}

std::size_t col_count(const Tensor& t) {
    if (t.rank() == 0) return t.size();
    if (t.rank() == 1) return t.shape()[0];
    std::size_t c = 1;
    for (std::size_t i = 1; i < t.rank(); ++i) c *= t.shape()[i];
    return c;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// Builds the result node; provenance is recorded only when grad mode is on
// and some input requires grad.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(TensorNode&)> backprop) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& t : inputs)
            if (t.defined() && t.requires_grad()) needs = true;
    }
    if (needs) {
        node->requires_grad = true;
        for (auto& t : inputs)
            if (t.defined()) node->parents.push_back(t.node_);
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->values.assign(shape_size(shape), 0.0);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::constant(Shape shape, double value) {
    auto node = std::make_shared<TensorNode>();
    node->values.assign(shape_size(shape), value);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return constant({1}, value); }

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != values.size())
        throw ShapeError("from_values: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::randu(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return from_values(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
    if (!node_) throw InternalError("shape() on empty tensor");
    return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->values.size() : 0; }

std::size_t Tensor::rows() const { return row_count(*this); }
std::size_t Tensor::cols() const { return col_count(*this); }

double Tensor::item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->values[0];
}

double Tensor::at(std::size_t i) const {
    if (i >= size()) throw ShapeError("at(): index out of range");
    return node_->values[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    std::size_t nc = cols();
    if (r >= rows() || c >= nc) throw ShapeError("at(): index out of range");
    return node_->values[r * nc + c];
}

const std::vector<double>& Tensor::values() const {
    if (!node_) throw InternalError("values() on empty tensor");
    return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
    if (!node_) throw InternalError("mutable_values() on empty tensor");
    return node_->values;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    if (!node_) throw InternalError("set_requires_grad() on empty tensor");
    if (v && node_->backprop)
        throw ArgumentError("set_requires_grad: tensor already has recorded provenance");
    node_->requires_grad = v;
    return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!node_) throw InternalError("grad() on empty tensor");
    if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detached() const {
    if (!node_) return Tensor();
    return from_values(node_->shape, node_->values, false);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& n) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& n) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("elementwise_mul", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& n) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bn->values[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * an->values[i];
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    if (b.shape()[0] != k)
        throw ShapeError("matmul: inner dimensions " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + " do not match");
    std::vector<double> out(n * m, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &bv[p * m];
            double* orow = &out[i * m];
            for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return make_result({n, m}, std::move(out), {a, b}, [an, bn, n, k, m](TensorNode& nd) {
        if (an->requires_grad) {  // dA = g . B^T
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = &nd.grad[i * m];
                    const double* brow = &bn->values[p * m];
                    for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                    g[i * k + p] += acc;
                }
        }
        if (bn->requires_grad) {  // dB = A^T . g
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double* grow = &nd.grad[i * m];
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = an->values[i * k + p];
                    if (aip == 0.0) continue;
                    double* gbrow = &g[p * m];
                    for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    // NaN propagates instead of flushing to zero
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = xv[i] > 0.0 || std::isnan(xv[i]) ? xv[i] : 0.0;
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {x}, [xn](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xn->values[i] > 0.0) g[i] += n.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    auto xn = x.node();
    // capture forward values: sigma' = s (1 - s)
    auto s = std::make_shared<std::vector<double>>(out);
    return make_result(x.shape(), std::move(out), {x}, [xn, s](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (*s)[i] * (1.0 - (*s)[i]);
    });
}

Tensor log(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xv[i]);
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {x}, [xn](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / xn->values[i];
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    const std::size_t ca = col_count(a), cb = col_count(b);
    if (ca != cb)
        throw ShapeError("concat: column counts " + std::to_string(ca) + " and " +
                         std::to_string(cb) + " differ");
    const std::size_t ra = row_count(a), rb = row_count(b);
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    auto an = a.node();
    auto bn = b.node();
    const std::size_t na = a.size();
    return make_result({ra + rb, ca}, std::move(out), {a, b}, [an, bn, na](TensorNode& n) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) g[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[na + i];
        }
    });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t r = row_count(x), c = col_count(x);
    if (begin > end || end > r) throw ShapeError("slice: row range out of bounds");
    std::vector<double> out(x.values().begin() + begin * c, x.values().begin() + end * c);
    auto xn = x.node();
    return make_result({end - begin, c}, std::move(out), {x}, [xn, begin, c](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * c + i] += n.grad[i];
    });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t r = row_count(x), c = col_count(x);
    if (begin > end || end > c) throw ShapeError("slice: column range out of bounds");
    const std::size_t w = end - begin;
    std::vector<double> out(r * w);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * c + begin + j];
    auto xn = x.node();
    return make_result({r, w}, std::move(out), {x}, [xn, begin, c, r, w](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += n.grad[i * w + j];
    });
}

Tensor broadcast_rows(const Tensor& row, std::size_t n) {
    if (row_count(row) != 1) throw ShapeError("broadcast: expects a single row");
    const std::size_t c = col_count(row);
    std::vector<double> out(n * c);
    const auto& rv = row.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = rv[j];
    auto rn = row.node();
    return make_result({n, c}, std::move(out), {row}, [rn, n, c](TensorNode& nd) {
        auto& g = rn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) g[j] += nd.grad[i * c + j];
    });
}

Tensor dropout(const Tensor& x, const Tensor& mask) {
    check_same_shape("dropout", x, mask);
    if (mask.requires_grad()) throw ArgumentError("dropout: mask must not require grad");
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    const auto& mv = mask.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mv[i];
    auto xn = x.node();
    auto mn = mask.node();
    return make_result(x.shape(), std::move(out), {x, mask}, [xn, mn](TensorNode& n) {
        if (!xn->requires_grad) return;
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mn->values[i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw ShapeError("reshape: size mismatch for " + shape_str(shape));
    std::vector<double> out = x.values();
    auto xn = x.node();
    return make_result(std::move(shape), std::move(out), {x}, [xn](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Tensor gather_rows(const Tensor& x, std::span<const std::uint32_t> indices) {
    const std::size_t r = row_count(x), c = col_count(x);
    std::vector<double> out(indices.size() * c);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= r) throw ArgumentError("gather_rows: index out of range");
        const double* src = &xv[indices[i] * c];
        std::copy(src, src + c, &out[i * c]);
    }
    auto xn = x.node();
    std::vector<std::uint32_t> idx(indices.begin(), indices.end());
    return make_result({indices.size(), c}, std::move(out), {x},
                       [xn, idx = std::move(idx), c](TensorNode& n) {
                           auto& g = xn->ensure_grad();
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                               double* dst = &g[idx[i] * c];
                               const double* src = &n.grad[i * c];
                               for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                           }
                       });
}

Tensor place_row(const Tensor& row, std::size_t pos, std::size_t n) {
    if (row_count(row) != 1) throw ShapeError("place_row: expects a single row");
    if (pos >= n) throw ArgumentError("place_row: position out of range");
    const std::size_t c = col_count(row);
    std::vector<double> out(n * c, 0.0);
    std::copy(row.values().begin(), row.values().end(), out.begin() + pos * c);
    auto rn = row.node();
    return make_result({n, c}, std::move(out), {row}, [rn, pos, c](TensorNode& nd) {
        auto& g = rn->ensure_grad();
        for (std::size_t j = 0; j < c; ++j) g[j] += nd.grad[pos * c + j];
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    const std::size_t r = row_count(x), c = col_count(x);
    if (s.size() != r) throw ShapeError("scale_rows: scale count != row count");
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    const auto& sv = s.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] * sv[i];
    auto xn = x.node();
    auto sn = s.node();
    return make_result(x.shape(), std::move(out), {x, s}, [xn, sn, r, c](TensorNode& n) {
        if (xn->requires_grad) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i * c + j] * sn->values[i];
        }
        if (sn->requires_grad) {
            auto& g = sn->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j) acc += n.grad[i * c + j] * xn->values[i * c + j];
                g[i] += acc;
            }
        }
    });
}

Tensor add_scalar(const Tensor& x, double cst) {
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + cst;
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {x}, [xn](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Tensor mul_scalar(const Tensor& x, double cst) {
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * cst;
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {x}, [xn, cst](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * cst;
    });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (lo > hi) throw ArgumentError("clamp: lo > hi");
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, xv[i]));
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {x}, [xn, lo, hi](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xn->values[i] > lo && xn->values[i] < hi) g[i] += n.grad[i];
    });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    auto xn = x.node();
    return make_result({1}, {acc}, {x}, [xn](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    if (x.size() == 0) throw ShapeError("mean: empty tensor");
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    const double inv = 1.0 / static_cast<double>(x.size());
    auto xn = x.node();
    return make_result({1}, {acc * inv}, {x}, [xn, inv](TensorNode& n) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * inv;
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t r = row_count(x), d = col_count(x);
    if (d == 0) throw ShapeError("layer_norm: zero feature dimension");
    if (gain.size() != d || bias.size() != d)
        throw ShapeError("layer_norm: gain/bias size must equal the feature dimension");
    std::vector<double> out(x.size());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(r);
    const auto& xv = x.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    for (std::size_t i = 0; i < r; ++i) {
        const double* xr = &xv[i * d];
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mu) * inv;
            (*xhat)[i * d + j] = xh;
            out[i * d + j] = xh * gv[j] + bv[j];
        }
    }
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [xn, gn, bn, xhat, inv_std, r, d](TensorNode& n) {
                           for (std::size_t i = 0; i < r; ++i) {
                               const double* grow = &n.grad[i * d];
                               const double* xh = &(*xhat)[i * d];
                               if (gn->requires_grad) {
                                   auto& gg = gn->ensure_grad();
                                   for (std::size_t j = 0; j < d; ++j) gg[j] += grow[j] * xh[j];
                               }
                               if (bn->requires_grad) {
                                   auto& gb = bn->ensure_grad();
                                   for (std::size_t j = 0; j < d; ++j) gb[j] += grow[j];
                               }
                               if (xn->requires_grad) {
                                   auto& gx = xn->ensure_grad();
                                   double mean_dy = 0.0, mean_dy_xh = 0.0;
                                   for (std::size_t j = 0; j < d; ++j) {
                                       const double dy = grow[j] * gn->values[j];
                                       mean_dy += dy;
                                       mean_dy_xh += dy * xh[j];
                                   }
                                   mean_dy /= static_cast<double>(d);
                                   mean_dy_xh /= static_cast<double>(d);
                                   for (std::size_t j = 0; j < d; ++j) {
                                       const double dy = grow[j] * gn->values[j];
                                       gx[i * d + j] +=
                                           (dy - mean_dy - xh[j] * mean_dy_xh) * (*inv_std)[i];
                                   }
                               }
                           }
                       });
}

Tensor segment_reduce(const Tensor& messages, std::span<const std::uint32_t> segment_ids,
                      std::size_t num_segments, Reduce kind) {
    const std::size_t m = row_count(messages), d = col_count(messages);
    if (segment_ids.size() != m)
        throw ShapeError("segment_reduce: segment id count != message count");
    for (auto s : segment_ids)
        if (s >= num_segments) throw ArgumentError("segment_reduce: segment id out of range");

    const auto& mv = messages.values();
    std::vector<double> out;
    std::vector<std::size_t> counts(num_segments, 0);
    for (auto s : segment_ids) ++counts[s];

    // argmax message row per (segment, dim); only used for Max
    auto argmax = std::make_shared<std::vector<std::uint32_t>>();

    switch (kind) {
        case Reduce::Sum:
        case Reduce::Mean: {
            out.assign(num_segments * d, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                double* dst = &out[segment_ids[i] * d];
                const double* src = &mv[i * d];
                for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
            }
            if (kind == Reduce::Mean) {
                for (std::size_t s = 0; s < num_segments; ++s) {
                    if (counts[s] == 0) continue;
                    const double inv = 1.0 / static_cast<double>(counts[s]);
                    for (std::size_t j = 0; j < d; ++j) out[s * d + j] *= inv;
                }
            }
            break;
        }
        case Reduce::Max: {
            out.assign(num_segments * d, -std::numeric_limits<double>::infinity());
            argmax->assign(num_segments * d, UINT32_MAX);
            for (std::size_t i = 0; i < m; ++i) {
                double* dst = &out[segment_ids[i] * d];
                std::uint32_t* am = &(*argmax)[segment_ids[i] * d];
                const double* src = &mv[i * d];
                for (std::size_t j = 0; j < d; ++j) {
                    if (src[j] > dst[j]) {  // strict: first index wins ties
                        dst[j] = src[j];
                        am[j] = static_cast<std::uint32_t>(i);
                    }
                }
            }
            for (std::size_t s = 0; s < num_segments; ++s)
                if (counts[s] == 0)
                    for (std::size_t j = 0; j < d; ++j) out[s * d + j] = 0.0;
            break;
        }
    }

    auto msg_node = messages.node();
    std::vector<std::uint32_t> segs(segment_ids.begin(), segment_ids.end());
    auto counts_ptr = std::make_shared<std::vector<std::size_t>>(std::move(counts));
    return make_result(
        {num_segments, d}, std::move(out), {messages},
        [msg_node, segs = std::move(segs), counts_ptr, argmax, d, kind,
         num_segments](TensorNode& n) {
            auto& g = msg_node->ensure_grad();
            switch (kind) {
                case Reduce::Sum:
                    for (std::size_t i = 0; i < segs.size(); ++i) {
                        const double* src = &n.grad[segs[i] * d];
                        double* dst = &g[i * d];
                        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                    }
                    break;
                case Reduce::Mean:
                    for (std::size_t i = 0; i < segs.size(); ++i) {
                        const double inv = 1.0 / static_cast<double>((*counts_ptr)[segs[i]]);
                        const double* src = &n.grad[segs[i] * d];
                        double* dst = &g[i * d];
                        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j] * inv;
                    }
                    break;
                case Reduce::Max:
                    for (std::size_t s = 0; s < num_segments; ++s)
                        for (std::size_t j = 0; j < d; ++j) {
                            const std::uint32_t i = (*argmax)[s * d + j];
                            if (i != UINT32_MAX) g[i * d + j] += n.grad[s * d + j];
                        }
                    break;
            }
        });
}

Tensor complex_rotate(const Tensor& h, const Tensor& theta) {
    const std::size_t r = row_count(h), d = col_count(h);
    if (d % 2 != 0) throw ShapeError("complex_rotate: feature dimension must be even");
    if (row_count(theta) != r || col_count(theta) != d / 2)
        throw ShapeError("complex_rotate: theta must be [rows x d/2]");
    const std::size_t half = d / 2;
    std::vector<double> out(h.size());
    const auto& hv = h.values();
    const auto& tv = theta.values();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t c = 0; c < half; ++c) {
            const double re = hv[i * d + 2 * c];
            const double im = hv[i * d + 2 * c + 1];
            const double ct = std::cos(tv[i * half + c]);
            const double st = std::sin(tv[i * half + c]);
            out[i * d + 2 * c] = re * ct - im * st;
            out[i * d + 2 * c + 1] = re * st + im * ct;
        }
    }
    auto hn = h.node();
    auto tn = theta.node();
    auto outv = std::make_shared<std::vector<double>>(out);
    return make_result(h.shape(), std::move(out), {h, theta},
                       [hn, tn, outv, r, d, half](TensorNode& n) {
                           for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t c = 0; c < half; ++c) {
                                   const double gre = n.grad[i * d + 2 * c];
                                   const double gim = n.grad[i * d + 2 * c + 1];
                                   const double ct = std::cos(tn->values[i * half + c]);
                                   const double st = std::sin(tn->values[i * half + c]);
                                   if (hn->requires_grad) {
                                       auto& g = hn->ensure_grad();
                                       g[i * d + 2 * c] += gre * ct + gim * st;
                                       g[i * d + 2 * c + 1] += -gre * st + gim * ct;
                                   }
                                   if (tn->requires_grad) {
                                       auto& g = tn->ensure_grad();
                                       const double ore = (*outv)[i * d + 2 * c];
                                       const double oim = (*outv)[i * d + 2 * c + 1];
                                       g[i * half + c] += gre * (-oim) + gim * ore;
                                   }
                               }
                       });
}

void backward(const Tensor& loss) {
    if (!loss.defined() || !loss.is_scalar())
        throw ArgumentError("backward: loss must be a scalar tensor");
    TensorNode* root = loss.node();
    if (!root->requires_grad) return;  // nothing to do: no recorded parameters
    if (root->backward_done)
        throw ArgumentError("backward: already called on this recorded loss");
    root->backward_done = true;

    // iterative post-order DFS for reverse topological order
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next].get();
            ++next;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

double grad_check(const std::function<Tensor()>& fn, const std::vector<Tensor>& params,
                  double eps) {
    for (const auto& p : params)
        if (!p.requires_grad()) throw ArgumentError("grad_check: parameter without requires_grad");
    std::vector<Tensor> mut = params;
    for (auto& p : mut) p.zero_grad();
    Tensor loss = fn();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(mut.size());
    for (auto& p : mut) analytic.push_back(p.grad());

    double worst = 0.0;
    for (std::size_t pi = 0; pi < mut.size(); ++pi) {
        auto& vals = mut[pi].mutable_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double up = fn().item();
            vals[i] = orig - eps;
            const double down = fn().item();
            vals[i] = orig;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericError("grad_check: non-finite loss during finite differences");
            const double numeric = (up - down) / (2.0 * eps);
            const double err =
                std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace nbf
