#include "pmaa/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <unordered_set>

namespace pmaa {

namespace {

std::atomic<std::uint64_t> g_next_sequence{1};
thread_local bool t_grad_enabled = true;

}  // namespace

std::string Shape::str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape.numel(), value), requires_grad);
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data, bool requires_grad) {
    if (data.size() != shape.numel()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape.str());
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = shape;
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return full(Shape{1, 1, 1, 1}, value, requires_grad);
}

detail::TensorImpl& Tensor::impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::span<const double> Tensor::data() const { return impl().data; }
std::span<double> Tensor::mutable_data() { return impl().data; }

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape().str());
    return impl().data[0];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    const Shape& s = shape();
    return impl().data[((n * s.c + c) * s.h + y) * s.w + x];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!is_leaf()) throw std::invalid_argument("requires_grad can only be set on leaves");
    impl().requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::mutable_grad() {
    auto& g = impl().grad;
    if (g.empty()) g.assign(numel(), 0.0);
    return g;
}

void Tensor::zero_grad() {
    auto& g = impl().grad;
    if (!g.empty()) std::fill(g.begin(), g.end(), 0.0);
}

const std::shared_ptr<Node>& Tensor::grad_fn() const { return impl().grad_fn; }

Tensor Tensor::detach() const { return from_data(shape(), impl().data, false); }

void Tensor::backward() const { pmaa::backward(*this); }

Node::Node(std::vector<Tensor> inputs)
    : seq_(g_next_sequence.fetch_add(1, std::memory_order_relaxed)), inputs_(std::move(inputs)) {}

bool Node::needs_input_grad(std::size_t i) const {
    const Tensor& t = inputs_.at(i);
    return t.defined() && t.requires_grad();
}

std::span<double> Node::input_grad(std::size_t i) {
    Tensor& t = inputs_.at(i);
    if (!needs_input_grad(i)) return {};
    if (const auto& fn = t.grad_fn()) {
        if (fn->grad_out_.empty()) fn->grad_out_.assign(t.numel(), 0.0);
        return fn->grad_out_;
    }
    return t.mutable_grad();
}

std::vector<Node*> graph_order(const Tensor& root) {
    std::vector<Node*> nodes;
    if (!root.defined() || !root.grad_fn()) return nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.grad_fn().get()};
    seen.insert(stack.back());
    while (!stack.empty()) {
        Node* node = stack.back();
        stack.pop_back();
        nodes.push_back(node);
        for (const Tensor& in : node->inputs()) {
            if (!in.defined()) continue;
            Node* next = in.grad_fn().get();
            if (next && seen.insert(next).second) stack.push_back(next);
        }
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Node* a, const Node* b) { return a->sequence() < b->sequence(); });
    return nodes;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                    (loss.defined() ? loss.shape().str() : std::string("undefined")));
    }
    if (!loss.requires_grad()) return;
    if (!loss.grad_fn()) {
        Tensor leaf = loss;
        leaf.mutable_grad()[0] += 1.0;
        return;
    }
    std::vector<Node*> order = graph_order(loss);
    for (Node* node : order) node->grad_out_.clear();
    loss.grad_fn()->grad_out_.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->grad_out_.empty()) continue;  // output unused by the loss
        node->apply(node->grad_out_);
        node->grad_out_.clear();
        node->grad_out_.shrink_to_fit();
    }
}

Tensor make_result(const Shape& shape, std::vector<double> data, std::shared_ptr<Node> node) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = shape;
    impl->data = std::move(data);
    impl->requires_grad = node != nullptr;
    impl->grad_fn = std::move(node);
    return Tensor(std::move(impl));
}

bool grad_enabled() { return t_grad_enabled; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!t_grad_enabled) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

bool should_record(std::span<const Tensor> inputs) {
    if (!t_grad_enabled) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace pmaa
