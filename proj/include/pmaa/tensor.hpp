#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pmaa {

/// Rank-4 shape in (batch, channels, height, width) order.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Node;
class Tensor;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;
};

}  // namespace detail

/// Dense rank-4 array of doubles with an optional gradient.
///
/// Copies share storage. Tensors produced by primitives are treated as
/// immutable; only parameter leaves are modified in place (by the optimizer
/// or a checkpoint loader).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const { return shape().numel(); }

    std::span<const double> data() const;
    /// Writable view of the values. Only meaningful for leaves.
    std::span<double> mutable_data();

    double item() const;
    double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);

    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    const std::shared_ptr<Node>& grad_fn() const;
    bool is_leaf() const { return grad_fn() == nullptr; }

    /// Copy of the values with no gradient history.
    Tensor detach() const;

    /// Reverse-mode sweep from this scalar. Accumulates into leaf grads.
    void backward() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    friend class Node;
    friend Tensor make_result(const Shape&, std::vector<double>, std::shared_ptr<Node>);
    friend void backward(const Tensor&);
    friend std::vector<Node*> graph_order(const Tensor&);

    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    detail::TensorImpl& impl() const;

    std::shared_ptr<detail::TensorImpl> impl_;
};

/// One executed primitive in the dynamic graph.
///
/// Nodes are numbered in execution order; backward visits the nodes reachable
/// from the loss in exactly the reverse of that order.
class Node {
public:
    explicit Node(std::vector<Tensor> inputs);
    virtual ~Node() = default;
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    virtual const char* name() const = 0;

    std::uint64_t sequence() const { return seq_; }
    const std::vector<Tensor>& inputs() const { return inputs_; }

protected:
    /// Accumulate input gradients given the gradient of this node's output.
    virtual void apply(std::span<const double> grad_out) = 0;

    /// Gradient buffer for input `i`, or an empty span if that input does not
    /// need a gradient. Implementations add into it.
    std::span<double> input_grad(std::size_t i);
    bool needs_input_grad(std::size_t i) const;

private:
    friend void backward(const Tensor&);

    std::uint64_t seq_;
    std::vector<Tensor> inputs_;
    std::vector<double> grad_out_;
};

/// Nodes reachable from `root`, in execution order.
std::vector<Node*> graph_order(const Tensor& root);

void backward(const Tensor& loss);

/// Builds the output tensor of a primitive. `node` may be null, in which case
/// the result is a constant.
Tensor make_result(const Shape& shape, std::vector<double> data, std::shared_ptr<Node> node);

/// True when a new node should be recorded for these inputs.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(std::span<const Tensor> inputs);

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace pmaa
