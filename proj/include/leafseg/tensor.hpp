#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace leafseg::ad {

using Shape = std::vector<int>;

size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
};

/// Value-semantic handle to a float32 buffer participating in reverse-mode
/// differentiation. Gradients accumulate into `grad`, allocated lazily.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    static Tensor scalar(float v) { return Tensor(Shape{1}, {v}); }

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    size_t size() const { return impl_->data.size(); }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    std::vector<float>& values() { return impl_->data; }
    const std::vector<float>& values() const { return impl_->data; }

    /// Value of a single-element tensor.
    float item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    /// Gradient buffer, zero-allocated on first use.
    float* grad_data();
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    const std::vector<float>& grad() const { return impl_->grad; }
    void zero_grad();

    /// Deep copy of the values only (no grad, no tape linkage).
    Tensor detached_copy() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// Append-only record of backward closures for one forward pass.
/// Creation order is a topological order, so backward() simply runs the
/// closures in reverse. One tape per training step; clear() between steps.
class Tape {
public:
    /// Register the backward closure of an op that has just run forward.
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

    /// Seed the (scalar) root gradient with 1 and run all closures.
    void backward(Tensor& root);

    void clear() { ops_.clear(); }
    size_t num_ops() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
};

/// True when an op applied to `inputs` must be recorded on `tape`.
/// Marks no state; callers set requires_grad on their output themselves.
bool track(const Tape* tape, std::initializer_list<const Tensor*> inputs);

}  // namespace leafseg::ad
