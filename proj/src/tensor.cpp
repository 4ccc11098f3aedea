#include "prnet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace prnet {

DType dtype_from_name(const std::string& name) {
    if (name == "f32" || name == "float32") return DType::f32;
    if (name == "f64" || name == "float64") return DType::f64;
    throw std::invalid_argument("unknown dtype name: " + name);
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

namespace detail {

void TensorNode::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), std::byte{0});
}

void TensorNode::zero_grad() {
    if (!grad.empty()) std::memset(grad.data(), 0, grad.size());
}

}  // namespace detail

Tensor Tensor::make(Shape shape, DType dt, bool requires_grad) {
    for (auto e : shape) {
        if (e < 0) throw std::invalid_argument("tensor extent must be >= 0, got " + shape_str(shape));
    }
    auto n = std::make_shared<detail::TensorNode>();
    n->shape = std::move(shape);
    n->dtype = dt;
    n->requires_grad = requires_grad;
    n->data.assign(static_cast<std::size_t>(n->numel()) * dtype_size(dt), std::byte{0});
    return Tensor(std::move(n));
}

Tensor make_op_output(Shape shape, DType dt, bool requires_grad) {
    return Tensor::make(std::move(shape), dt, requires_grad);
}

Tensor Tensor::zeros(Shape shape, DType dt, bool requires_grad) {
    return make(std::move(shape), dt, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
    Tensor t = make(std::move(shape), dt, false);
    const std::int64_t n = t.size();
    dispatch_dtype(dt, [&](auto tag) {
        using T = typename decltype(tag)::type;
        T* p = t.data<T>();
        for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<T>(value);
    });
    return t;
}

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values, DType dt,
                           bool requires_grad) {
    Tensor t = make(std::move(shape), dt, requires_grad);
    if (static_cast<std::int64_t>(values.size()) != t.size())
        throw std::invalid_argument("from_vector: " + std::to_string(values.size()) +
                                    " values for shape " + shape_str(t.shape()));
    dispatch_dtype(dt, [&](auto tag) {
        using T = typename decltype(tag)::type;
        T* p = t.data<T>();
        for (std::size_t i = 0; i < values.size(); ++i) p[i] = static_cast<T>(values[i]);
    });
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({1}, value, dt); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, rng::Engine& g, DType dt,
                       bool requires_grad) {
    Tensor t = make(std::move(shape), dt, requires_grad);
    const std::int64_t n = t.size();
    dispatch_dtype(dt, [&](auto tag) {
        using T = typename decltype(tag)::type;
        T* p = t.data<T>();
        for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<T>(rng::uniform(g, lo, hi));
    });
    return t;
}

double Tensor::item_at(std::int64_t flat) const {
    return dispatch_dtype(dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        return static_cast<double>(node_->as<T>()[flat]);
    });
}

void Tensor::set_item(std::int64_t flat, double v) {
    dispatch_dtype(dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        node_->as<T>()[flat] = static_cast<T>(v);
    });
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() requires a single-element tensor");
    return item_at(0);
}

double Tensor::grad_at(std::int64_t flat) const {
    if (!node_->has_grad()) return 0.0;
    return dispatch_dtype(dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        return static_cast<double>(node_->grad_as<T>()[flat]);
    });
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<std::size_t>(size()));
    for (std::int64_t i = 0; i < size(); ++i) out[static_cast<std::size_t>(i)] = item_at(i);
    return out;
}

std::vector<double> Tensor::grad_to_vector() const {
    std::vector<double> out(static_cast<std::size_t>(size()), 0.0);
    if (!node_->has_grad()) return out;
    for (std::int64_t i = 0; i < size(); ++i) out[static_cast<std::size_t>(i)] = grad_at(i);
    return out;
}

Tensor Tensor::clone() const {
    Tensor t = make(shape(), dtype(), false);
    std::memcpy(t.node_->data.data(), node_->data.data(), node_->data.size());
    return t;
}

Tensor Tensor::astype(DType dt) const {
    if (dt == dtype()) return clone();
    Tensor t = make(shape(), dt, false);
    for (std::int64_t i = 0; i < size(); ++i) t.set_item(i, item_at(i));
    return t;
}

Tensor Tensor::slice_leading(std::int64_t index) const {
    if (ndim() < 1) throw std::invalid_argument("slice_leading: rank-0 tensor");
    if (index < 0 || index >= shape()[0])
        throw std::invalid_argument("slice_leading: index " + std::to_string(index) +
                                    " out of range for " + shape_str(shape()));
    Shape sub(shape().begin() + 1, shape().end());
    Tensor t = make(sub, dtype(), false);
    const std::size_t block = static_cast<std::size_t>(shape_numel(sub)) * dtype_size(dtype());
    std::memcpy(t.node_->data.data(), node_->data.data() + static_cast<std::size_t>(index) * block,
                block);
    return t;
}

Tensor Tensor::reshaped_view_copy(Shape new_shape) const {
    if (shape_numel(new_shape) != size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(shape()) + " as " +
                                    shape_str(new_shape));
    Tensor t = make(std::move(new_shape), dtype(), false);
    std::memcpy(t.node_->data.data(), node_->data.data(), node_->data.size());
    return t;
}

void check_finite(const Tensor& t, const char* op_name) {
    const std::int64_t n = t.size();
    bool ok = dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* p = t.data<T>();
        for (std::int64_t i = 0; i < n; ++i) {
            if (!std::isfinite(p[i])) return false;
        }
        return true;
    });
    if (!ok)
        throw NonFiniteError(std::string(op_name) + ": non-finite value in result of shape " +
                             shape_str(t.shape()));
}

bool allclose(const Tensor& a, const Tensor& b, double atol, double rtol) {
    if (a.shape() != b.shape()) return false;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        double x = a.item_at(i), y = b.item_at(i);
        if (std::abs(x - y) > atol + rtol * std::abs(y)) return false;
    }
    return true;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
    return std::memcmp(a.node()->data.data(), b.node()->data.data(), a.node()->data.size()) == 0;
}

}  // namespace prnet
