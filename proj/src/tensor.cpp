#include "leafseg/tensor.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

namespace leafseg::ad {

size_t numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<TensorImpl>()) {
    impl_->shape = std::move(shape);
    impl_->data.assign(numel(impl_->shape), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : impl_(std::make_shared<TensorImpl>()) {
    if (numel(shape) != values.size())
        throw std::invalid_argument("tensor: " + shape_str(shape) + " does not hold " +
                                    std::to_string(values.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

float Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("tensor: item() on non-scalar " + shape_str(shape()));
    return impl_->data[0];
}

float* Tensor::grad_data() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
    return impl_->grad.data();
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::memset(impl_->grad.data(), 0, impl_->grad.size() * sizeof(float));
}

Tensor Tensor::detached_copy() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
}

void Tape::backward(Tensor& root) {
    if (root.size() != 1)
        throw std::invalid_argument("tape: backward root must be scalar, got " + shape_str(root.shape()));
    root.grad_data()[0] = 1.0f;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

bool track(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

}  // namespace leafseg::ad
