#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mambaest {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major float64 tensor with reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage. Values are
/// immutable once an operation has consumed them; only gradient buffers (and
/// parameter values, through the optimizer) are written after creation.
class Tensor {
public:
    /// Receives d(loss)/d(output) and accumulates into the inputs' buffers.
    using BackwardFn = std::function<void(std::span<const double> grad_out)>;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    /// Builds the result of a differentiable operation. When recording is
    /// disabled or no input requires a gradient, `backward` is discarded and
    /// the result is a plain constant.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::vector<Tensor> inputs, BackwardFn backward);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Writable view of the values. Only for leaves (parameters, optimizer).
    std::span<double> mutable_data() const;
    double item() const;

    bool requires_grad() const;
    bool has_grad() const;
    /// Gradient values; all zeros if nothing has been accumulated yet.
    std::span<const double> grad() const;
    /// Gradient buffer, allocated (zeroed) on first use.
    std::span<double> grad_accumulator() const;
    void zero_grad() const;

    /// Reverse sweep from a scalar root. Leaf gradients accumulate across
    /// calls; intermediate buffers are reset at the start of every sweep.
    void backward() const;

    /// Same values, same graph position, different shape.
    Tensor reshape(Shape shape) const;
    /// Detached deep copy (no graph, no gradient).
    Tensor clone(bool requires_grad = false) const;

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Trainable tensor with a stable name.
struct Parameter {
    std::string name;
    Tensor tensor;
};

/// Ordered registry of named parameters. Names are unique.
class ParameterSet {
public:
    Tensor& add(std::string name, Tensor tensor);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::span<const Parameter> items() const { return params_; }
    std::size_t size() const { return params_.size(); }
    std::size_t numel() const;

    void zero_grad() const;
    /// Deep copy with fresh leaves.
    ParameterSet clone() const;
    /// Copies values from `other`; names and shapes must match.
    void assign(const ParameterSet& other);

private:
    std::vector<Parameter> params_;
};

// Differentiable operations. Shapes are checked; violations throw
// std::invalid_argument naming both operand shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// x[m×n] + b[n] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
/// x[m×n] + b[m] broadcast over columns.
Tensor add_col_bias(const Tensor& x, const Tensor& b);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
/// out row r = x row index[r].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

Tensor softmax_rows(const Tensor& x);

/// Normalizes over every element of x[L×C] with a single mean and variance,
/// then applies per-row affine parameters w[L], b[L].
Tensor layer_norm(const Tensor& x, const Tensor& w, const Tensor& b, double eps);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

/// Stride-1 cross-correlation of x[H×W×Cin] with kernels[kh×kw×Cin×Cout],
/// zero padded to keep H×W. Even extents pad floor((k-1)/2) before and
/// ceil((k-1)/2) after.
Tensor conv2d_same(const Tensor& x, const Tensor& kernels, const Tensor& bias);

/// Align-corners bilinear resampling of x[H×W×C] to out_h×out_w×C.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace mambaest
