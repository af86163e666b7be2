#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hydra::ad {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass touches it
    bool requires_grad = false;
    bool is_leaf = true;
};

/// Dense row-major f64 tensor. Copies share storage; ops always allocate
/// fresh outputs, so a tensor's values never change except through
/// explicit leaf updates (optimizer steps).
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    /// Leaf that participates in gradient recording.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Only leaves may be written in place.
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Copy of the values with no tape history.
    Tensor detach() const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  private:
    std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode record of executed ops. One tape per thread; nodes are
/// appended in execution order so the list is always topologically sorted.
class Tape {
  public:
    using BackwardFn = std::function<void(std::span<const double> grad_out)>;

    struct Node {
        std::string_view op;
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        BackwardFn backward;
    };

    static Tape& current();

    void record(std::string_view op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                std::shared_ptr<TensorImpl> output, BackwardFn backward);
    void backward(const Tensor& loss);
    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }

    bool enabled() const { return enabled_; }
    void set_enabled(bool on) { enabled_ = on; }

  private:
    std::vector<Node> nodes_;
    bool enabled_ = true;
};

/// Runs backward over the calling thread's tape.
void backward(const Tensor& loss);

/// Disables recording on this thread for the guard's lifetime.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

/// Builds an op result and records it when any input requires grad.
/// `backward` receives the output gradient and must accumulate into the
/// inputs' grad buffers via accumulate_grad().
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs, Tape::BackwardFn backward);
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, Tape::BackwardFn backward);
/// As make_result, for ops that have already verified every output value
/// is finite themselves (e.g. sparse kernels that know which entries they
/// wrote).
Tensor make_result_prechecked(std::string_view op, Shape shape, std::vector<double> values,
                              std::initializer_list<Tensor> inputs, Tape::BackwardFn backward);
/// Throws NumericError naming `op` if any value is NaN or infinite.
void check_finite(std::span<const double> values, std::string_view op);

/// Grad buffer of an op input, or nullptr when the input needs no gradient.
double* grad_buffer(const Tensor& t);

// ---------------------------------------------------------------------------
// Differentiable op set. No broadcasting: mismatched shapes throw ShapeError.
// ---------------------------------------------------------------------------

/// [M,K]x[K,N] or batched [B,M,K]x[B,K,N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., K] * w[K, N] (+ b[N]); pass an undefined tensor for no bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});
/// Channels-last conv: x[H, W, Cin], w[k, k, Cin, Cout] with k in {1, 3},
/// stride 1, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b = {});

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);

/// Samples input[H, W, C] at fractional (row, col) coordinates coords[P, 2];
/// taps outside the map read zero. Differentiable in both arguments.
Tensor bilinear_sample(const Tensor& input, const Tensor& coords);
/// out[index[p], :] += src[p, :]; negative indices are dropped. Duplicates
/// accumulate in ascending p.
Tensor scatter_add(const Tensor& src, std::span<const std::int64_t> index, std::size_t rows);
/// out[i, :] = src[index[i], :].
Tensor gather_rows(const Tensor& src, std::span<const std::int64_t> index);
/// Elementwise max of src rows sharing a group id; empty groups are zero,
/// negative ids are dropped. Ties route gradient to the first row.
Tensor max_pool(const Tensor& src, std::span<const std::int64_t> group, std::size_t groups);

Tensor mean(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x, std::size_t axis);
/// Sum of all elements as a scalar (shape {}).
Tensor sum(const Tensor& x);

/// Normalizes over the last axis then applies gamma[C], beta[C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

}  // namespace hydra::ad
