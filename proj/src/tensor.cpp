#include "docbin/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace docbin {

namespace detail {

struct Node {
    std::vector<Tensor> inputs;
    Tensor::BackwardFn backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<Scalar> data;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<Scalar> grad;
    std::shared_ptr<Node> node;
};

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0, requires_grad); }

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
    auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<Scalar>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<Scalar> data, bool requires_grad) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

const detail::TensorImpl& Tensor::impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
}

detail::TensorImpl& Tensor::impl() {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::int64_t Tensor::dim(int axis) const {
    const auto& s = shape();
    int n = static_cast<int>(s.size());
    if (axis < 0) axis += n;
    if (axis < 0 || axis >= n) throw ShapeError("axis out of range for shape " + shape_str(s));
    return s[static_cast<std::size_t>(axis)];
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl().data.size()); }

std::span<const Scalar> Tensor::data() const { return impl().data; }

std::span<Scalar> Tensor::mutable_data() {
    if (impl().node) throw GradError("mutable_data on a non-leaf tensor");
    return impl().data;
}

Scalar Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl().data[0];
}

std::vector<Scalar> Tensor::to_vector() const { return impl().data; }

bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::set_requires_grad(bool on) {
    if (impl().node) throw GradError("set_requires_grad on a non-leaf tensor");
    impl().requires_grad = on;
}

bool Tensor::is_leaf() const { return impl().node == nullptr; }

bool Tensor::has_grad() const { return impl().has_grad; }

std::span<const Scalar> Tensor::grad() const {
    if (!impl().has_grad) throw GradError("tensor has no gradient");
    return impl().grad;
}

void Tensor::zero_grad() {
    impl().has_grad = false;
    impl().grad.clear();
    impl().grad.shrink_to_fit();
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = this->impl().shape;
    impl->data = this->impl().data;
    return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
    auto t = detach();
    t.impl_->requires_grad = impl().requires_grad && impl().node == nullptr;
    return t;
}

std::span<Scalar> Tensor::grad_buffer() const {
    auto& im = const_cast<detail::TensorImpl&>(impl());
    if (!im.has_grad) {
        im.grad.assign(im.data.size(), Scalar(0));
        im.has_grad = true;
    }
    return im.grad;
}

void Tensor::accumulate_grad(std::span<const Scalar> g) const {
    auto buf = grad_buffer();
    if (g.size() != buf.size()) throw ShapeError("gradient size mismatch for " + shape_str(shape()));
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

Tensor Tensor::make_result(Shape shape, std::vector<Scalar> data, std::vector<Tensor> inputs,
                           BackwardFn backward) {
    Tensor out = from_data(std::move(shape), std::move(data), false);
    if (!g_grad_enabled) return out;
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (!any) return out;
    out.impl_->requires_grad = true;
    auto node = std::make_shared<detail::Node>();
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out.impl_->node = std::move(node);
    return out;
}

void Tensor::backward() const {
    const auto& root = impl();
    if (root.data.size() != 1) throw GradError("backward() needs a scalar loss, got " + shape_str(root.shape));
    if (!root.requires_grad) throw GradError("backward() on a tensor that does not require grad");

    // Iterative post-order DFS over the recorded graph.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [cur, next] = stack.back();
        if (cur->node && next < cur->node->inputs.size()) {
            const Tensor& in = cur->node->inputs[next++];
            if (in.defined() && in.impl_->requires_grad && seen.insert(in.impl_.get()).second) {
                stack.emplace_back(in.impl_.get(), 0);
            }
            continue;
        }
        order.push_back(cur);
        stack.pop_back();
    }

    for (auto* t : order) {
        if (!t->node && t->has_grad) {
            throw GradError("leaf gradient already populated; zero grads before a second backward()");
        }
    }

    auto* r = impl_.get();
    r->grad.assign(1, Scalar(1));
    r->has_grad = true;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* t = *it;
        if (!t->node) continue;
        if (t->has_grad) t->node->backward(t->grad);
        t->grad.clear();
        t->grad.shrink_to_fit();
        t->has_grad = false;
    }
}

}  // namespace docbin
