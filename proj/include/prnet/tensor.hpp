#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "prnet/rng.hpp"

namespace prnet {

enum class DType { f32, f64 };

inline std::size_t dtype_size(DType dt) { return dt == DType::f32 ? 4 : 8; }
inline const char* dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }
DType dtype_from_name(const std::string& name);  // throws std::invalid_argument

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

template <typename T>
struct dtype_tag {
    using type = T;
};

// Calls f(dtype_tag<T>{}) with T = float or double according to dt; the
// lambda recovers T via `using T = typename decltype(tag)::type;`.
template <typename F>
decltype(auto) dispatch_dtype(DType dt, F&& f) {
    if (dt == DType::f32) return f(dtype_tag<float>{});
    return f(dtype_tag<double>{});
}

namespace detail {

// Shared storage behind Tensor's value semantics. Copying a Tensor shares the
// node; clone() detaches.
struct TensorNode {
    Shape shape;
    DType dtype = DType::f64;
    bool requires_grad = false;
    std::uint64_t producer_graph = 0;  // 0 = leaf / not produced by a graph
    std::vector<std::byte> data;
    std::vector<std::byte> grad;  // empty until first touched

    std::int64_t numel() const { return shape_numel(shape); }

    template <typename T>
    T* as() {
        return reinterpret_cast<T*>(data.data());
    }
    template <typename T>
    const T* as() const {
        return reinterpret_cast<const T*>(data.data());
    }
    template <typename T>
    T* grad_as() {
        return reinterpret_cast<T*>(grad.data());
    }
    template <typename T>
    const T* grad_as() const {
        return reinterpret_cast<const T*>(grad.data());
    }

    bool has_grad() const { return !grad.empty(); }
    void ensure_grad();  // allocate + zero on first call
    void zero_grad();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dt = DType::f64, bool requires_grad = false);
    static Tensor full(Shape shape, double value, DType dt = DType::f64);
    static Tensor from_vector(Shape shape, const std::vector<double>& values,
                              DType dt = DType::f64, bool requires_grad = false);
    static Tensor scalar(double value, DType dt = DType::f64);
    // Uniform in [lo, hi) drawn in declaration order from g; f32 narrows after
    // drawing in double, so a given seed yields the same sequence at both
    // precisions up to rounding.
    static Tensor uniform(Shape shape, double lo, double hi, rng::Engine& g,
                          DType dt = DType::f64, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t ndim() const { return static_cast<std::int64_t>(node_->shape.size()); }
    std::int64_t size() const { return node_->numel(); }
    DType dtype() const { return node_->dtype; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    template <typename T>
    T* data() {
        return node_->as<T>();
    }
    template <typename T>
    const T* data() const {
        return node_->as<T>();
    }

    // Generic element access (converting through double); for hot loops use
    // the typed pointers instead.
    double item_at(std::int64_t flat) const;
    void set_item(std::int64_t flat, double v);
    double item() const;  // numel()==1 only

    bool has_grad() const { return node_->has_grad(); }
    void zero_grad() { node_->zero_grad(); }
    double grad_at(std::int64_t flat) const;
    template <typename T>
    T* grad_data() {
        node_->ensure_grad();
        return node_->grad_as<T>();
    }

    std::vector<double> to_vector() const;
    std::vector<double> grad_to_vector() const;

    // Deep copy of the values (fresh node, no grad, keeps requires_grad flag off).
    Tensor clone() const;
    // Deep copy converted to another dtype.
    Tensor astype(DType dt) const;

    // Data-level helpers (not autodiff ops).
    Tensor slice_leading(std::int64_t index) const;  // drop axis 0 at index
    Tensor reshaped_view_copy(Shape new_shape) const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    // Internal: shared node access for the op layer.
    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    static Tensor make(Shape shape, DType dt, bool requires_grad);

    std::shared_ptr<detail::TensorNode> node_;

    friend class Graph;
    friend Tensor make_op_output(Shape, DType, bool);
};

// Used by the op layer to allocate results.
Tensor make_op_output(Shape shape, DType dt, bool requires_grad);

// Throws NonFiniteError if any element is NaN/Inf; op_name goes in the message.
void check_finite(const Tensor& t, const char* op_name);

struct NonFiniteError : std::runtime_error {
    explicit NonFiniteError(const std::string& msg) : std::runtime_error(msg) {}
};

bool allclose(const Tensor& a, const Tensor& b, double atol, double rtol = 0.0);
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace prnet
