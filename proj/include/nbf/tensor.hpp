#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nbf/error.hpp"
#include "nbf/random.hpp"

namespace nbf {

using Shape = std::vector<std::size_t>;

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    bool backward_done = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;  // adds into parents' grads

    std::size_t size() const { return values.size(); }
    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

/// Dense row-major tensor of doubles. Operations record provenance on the
/// participating nodes so a later backward() pass can accumulate exact
/// reverse-mode gradients. Copying a Tensor copies the handle, not the data.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor constant(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor randu(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = true);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t rows() const;  // rank-1 tensors count as a single row
    std::size_t cols() const;
    bool is_scalar() const { return defined() && size() == 1; }
    double item() const;

    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;

    const std::vector<double>& values() const;
    // direct value access for leaves (parameter updates, test setup)
    std::vector<double>& mutable_values();

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    Tensor detached() const;  // value copy with no provenance

    detail::TensorNode* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                              std::function<void(detail::TensorNode&)>);
};

// Recording can be suspended (inference paths) with a scoped guard.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// ---- primitives ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// leading-dimension expansion: [d] or [1 x d] -> [n x d]
Tensor broadcast_rows(const Tensor& row, std::size_t n);
// mask is a 0/1 tensor supplied by the caller; it must not require grad
Tensor dropout(const Tensor& x, const Tensor& mask);
Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& x, std::span<const std::uint32_t> indices);
// [d] placed at row `pos` of an otherwise zero [n x d] tensor
Tensor place_row(const Tensor& row, std::size_t pos, std::size_t n);
// rows of x scaled by the per-row scalars s ([n] or [n x 1])
Tensor scale_rows(const Tensor& x, const Tensor& s);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor sum(const Tensor& x);   // -> [1]
Tensor mean(const Tensor& x);  // -> [1]

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

enum class Reduce { Sum, Mean, Max };

/// Per-segment reduction of message rows. Empty segments reduce to zero rows
/// (for Max the -inf sentinel is replaced by zero and no gradient is routed).
/// Max routes gradient to the first argmax element of each segment.
Tensor segment_reduce(const Tensor& messages, std::span<const std::uint32_t> segment_ids,
                      std::size_t num_segments, Reduce kind);

/// h holds interleaved (re, im) pairs; each complex coordinate is multiplied
/// by e^{i * theta}. theta has half the columns of h.
Tensor complex_rotate(const Tensor& h, const Tensor& theta);

/// Reverse topological gradient accumulation from a scalar loss. A second
/// call on the same recorded loss is rejected.
void backward(const Tensor& loss);

/// Max over parameters of |analytic - numeric| / max(1, |numeric|), with
/// numeric gradients from central differences of `fn`.
double grad_check(const std::function<Tensor()>& fn, const std::vector<Tensor>& params,
                  double eps = 1e-4);

}  // namespace nbf
