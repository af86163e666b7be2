#include "hydra/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace hydra::ad {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return impl;
}

const TensorImpl& checked(const std::shared_ptr<TensorImpl>& impl) {
    if (!impl) throw std::logic_error("tensor: use of undefined tensor");
    return *impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = hydra::ad::numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    return Tensor(make_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.impl_->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw ShapeError("tensor: axis out of range");
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
    if (!checked(impl_).is_leaf) throw std::logic_error("tensor: only leaves are mutable");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("tensor: item() on non-scalar " + to_string(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeError("tensor: index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw ShapeError("tensor: index out of range");
        flat = flat * s[axis] + i;
        ++axis;
    }
    return impl_->data[flat];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!checked(impl_).is_leaf) throw std::logic_error("tensor: requires_grad is fixed on op results");
    impl_->requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return checked(impl_).is_leaf; }

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(impl_).grad; }

void Tensor::zero_grad() {
    auto& g = impl_->grad;
    std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), impl_->data); }

// ---------------------------------------------------------------------------

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(std::string_view op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output, BackwardFn fn) {
    nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + to_string(loss.shape()));
    }
    if (nodes_.empty()) throw std::logic_error("backward: tape is empty");

    // Intermediate buffers restart at zero each pass; leaf buffers accumulate.
    std::unordered_set<const TensorImpl*> produced;
    for (auto& node : nodes_) {
        node.output->grad.assign(node.output->data.size(), 0.0);
        produced.insert(node.output.get());
    }
    for (auto& node : nodes_) {
        for (auto& in : node.inputs) {
            if (in->requires_grad && in->is_leaf && in->grad.size() != in->data.size()) {
                in->grad.assign(in->data.size(), 0.0);
            }
        }
    }

    auto& root = *loss.impl();
    if (produced.count(&root) == 0) {
        // Loss independent of everything recorded: all gradients stay zero,
        // except a requires_grad scalar leaf used directly as the loss.
        if (root.requires_grad && root.is_leaf) {
            if (root.grad.empty()) root.grad.assign(1, 0.0);
            root.grad[0] += 1.0;
        }
        return;
    }
    root.grad[0] = 1.0;

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        const auto& g = it->output->grad;
        if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
        it->backward(g);
    }
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

NoGradGuard::NoGradGuard() : previous_(Tape::current().enabled()) {
    Tape::current().set_enabled(false);
}

NoGradGuard::~NoGradGuard() { Tape::current().set_enabled(previous_); }

namespace {

// Exponent-bit test; integer OR-reduction vectorizes where isfinite does not.
bool all_finite(std::span<const double> values) {
    constexpr std::uint64_t exp_mask = 0x7ff0000000000000ull;
    std::uint64_t bad = 0;
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        bad |= static_cast<std::uint64_t>((bits & exp_mask) == exp_mask);
    }
    return bad == 0;
}

template <class Range>
Tensor make_result_impl(std::string_view op, Shape shape, std::vector<double> values,
                        const Range& inputs, Tape::BackwardFn fn, bool check = true) {
    if (check) check_finite(values, op);
    auto impl = make_impl(std::move(shape), std::move(values));
    auto& tape = Tape::current();
    bool needs = false;
    for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
    if (needs && tape.enabled()) {
        impl->requires_grad = true;
        impl->is_leaf = false;
        std::vector<std::shared_ptr<TensorImpl>> ins;
        for (const auto& in : inputs) {
            if (in.defined()) ins.push_back(in.impl());
        }
        tape.record(op, std::move(ins), impl, std::move(fn));
    }
    return Tensor(std::move(impl));
}

}  // namespace

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs, Tape::BackwardFn fn) {
    return make_result_impl(op, std::move(shape), std::move(values), inputs, std::move(fn));
}

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, Tape::BackwardFn fn) {
    return make_result_impl(op, std::move(shape), std::move(values), inputs, std::move(fn));
}

Tensor make_result_prechecked(std::string_view op, Shape shape, std::vector<double> values,
                              std::initializer_list<Tensor> inputs, Tape::BackwardFn fn) {
    return make_result_impl(op, std::move(shape), std::move(values), inputs, std::move(fn), false);
}

void check_finite(std::span<const double> values, std::string_view op) {
    if (!all_finite(values)) throw NumericError(std::string(op) + ": produced a non-finite value");
}

double* grad_buffer(const Tensor& t) {
    if (!t.defined() || !t.requires_grad()) return nullptr;
    auto& impl = *t.impl();
    if (impl.grad.size() != impl.data.size()) impl.grad.assign(impl.data.size(), 0.0);
    return impl.grad.data();
}

}  // namespace hydra::ad
