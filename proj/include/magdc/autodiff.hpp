#pragma once

// Minimal reverse-mode autodiff over the handful of operations the
// super-resolution model needs. Nodes live in an append-only tape, so
// creation order is a topological order and the graph cannot contain cycles.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "magdc/image.hpp"

namespace magdc {

// Fixed 64-byte alignment: vectorized reductions peel by address, so buffers with varying
// alignment would sum in varying order and break bit-level reproducibility.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

// Dense row-major tensor of doubles. Images are (channels, height, width);
// complex planes are (2, height, width) with real then imaginary channel.
struct Tensor {
    std::vector<std::size_t> shape;
    AlignedBuffer data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape_, std::span<const double> data_);
    Tensor(std::vector<std::size_t> shape_, std::initializer_list<double> data_)
        : Tensor(std::move(shape_), std::span<const double>(data_.begin(), data_.size())) {}

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t numel() const noexcept { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    bool is_scalar() const noexcept { return data.size() == 1; }
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_numel(std::span<const std::size_t> shape);

Tensor image_tensor(const RealImage& img);               // (1, H, W)
Tensor complex_tensor(std::span<const Complex> values, std::size_t height, std::size_t width);  // (2, H, W)
RealImage tensor_image(const Tensor& t);                 // expects (1, H, W)
KSpaceGrid tensor_kspace(const Tensor& t);               // expects (2, H, W)

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid as long as the Graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    const Tensor& grad() const;
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    // Leaf that collects gradient during backward().
    Var parameter(Tensor value);
    Var make(Tensor value, std::vector<Var> parents, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }
    // Gradient accumulator, allocated lazily with the value's shape.
    Tensor& grad_buffer(std::size_t id);
    bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
    const std::vector<Var>& parents(std::size_t id) const { return nodes_.at(id).parents; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and accumulates in reverse creation order.
    // Throws std::invalid_argument when loss is not a one-element node.
    void backward(Var loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<Var> parents;
        BackwardFn backward;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

// 3x3 convolution, stride 1, zero padding. x: (Cin, H, W); weight: (Cout, Cin, 3, 3); bias: (Cout).
Var conv2d(Var x, Var weight, Var bias);
Var relu(Var x);
Var add(Var a, Var b);
// Mean absolute error between two same-shaped nodes; sign(0) is taken as 0.
Var mae(Var a, Var b);
// sum_i x_i * weights_i, used to probe gradients of non-scalar outputs.
Var weighted_sum(Var x, const Tensor& weights);

// Complex plane helpers. Complex nodes use the (2, H, W) layout.
Var lift_complex(Var x);          // (1, H, W) real -> (2, H, W) with zero imaginary part
Var fft2c(Var x);                 // centered orthonormal forward DFT
Var ifft2c(Var x);                // centered orthonormal inverse DFT
// Elementwise modulus (2, H, W) -> (1, H, W). The subgradient at z = 0 is 0.
Var complex_abs(Var x);

}  // namespace magdc
