#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "eenas/errors.hpp"

namespace eenas {

/// Dense 64-bit float tensor, row-major, with an optional same-shape
/// gradient buffer. Handles share storage; copy is shallow.
class Tensor {
public:
    struct Impl {
        std::vector<int> shape;
        std::vector<double> data;
        std::vector<double> grad;  // empty until touched by backward
        bool requires_grad = false;
    };

    Tensor() : impl_(std::make_shared<Impl>()) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        Tensor t;
        t.impl_->shape = std::move(shape);
        t.impl_->data.assign(t.checked_numel(), 0.0);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::fill(t.data().begin(), t.data().end(), value);
        return t;
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return full({1}, value, requires_grad);
    }

    static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false) {
        Tensor t;
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(values);
        t.impl_->requires_grad = requires_grad;
        if (t.impl_->data.size() != t.checked_numel())
            throw ShapeError("tensor data length " + std::to_string(t.impl_->data.size()) +
                             " does not match shape product " + std::to_string(t.checked_numel()));
        return t;
    }

    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(impl_->shape.size()); }

    std::size_t numel() const { return impl_->data.size(); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }

    double value() const {
        if (numel() != 1) throw ContractError("value() requires a scalar tensor");
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return !impl_->grad.empty(); }

    std::vector<double>& grad() {
        ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad_view() const { return impl_->grad; }

    void ensure_grad() {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    }
    void clear_grad() { impl_->grad.clear(); }

    bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }
    const void* id() const { return impl_.get(); }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < impl_->shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(impl_->shape[i]);
        }
        return s + "]";
    }

private:
    std::size_t checked_numel() const {
        std::size_t n = 1;
        for (int e : impl_->shape) {
            if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str());
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    std::shared_ptr<Impl> impl_;
};

}  // namespace eenas
