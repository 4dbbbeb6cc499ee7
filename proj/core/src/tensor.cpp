#include "mambaest/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <Eigen/Dense>

namespace mambaest {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> inputs;
    Tensor::BackwardFn backward;
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << shape_str(a) << " and " << shape_str(b);
    throw std::invalid_argument(os.str());
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        std::ostringstream os;
        os << op << ": expected rank " << rank << ", got " << shape_str(t.shape());
        throw std::invalid_argument(os.str());
    }
}

void accumulate(const Tensor& t, std::span<const double> g) {
    if (!t.requires_grad()) {
        return;
    }
    auto acc = t.grad_accumulator();
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += g[i];
    }
}

double sigmoid_scalar(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " does not hold " +
                                    std::to_string(values.size()) + " values");
    }
    for (auto e : shape) {
        if (e == 0) throw std::invalid_argument("Tensor::from: zero extent in " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           BackwardFn backward) {
    Tensor out = from(std::move(shape), std::move(values));
    out.node_->leaf = false;
    if (!g_grad_enabled) {
        return out;
    }
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (!any) {
        return out;
    }
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) {
        if (in.requires_grad()) out.node_->inputs.push_back(in.node_);
    }
    return out;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= node_->shape.size()) {
        throw std::out_of_range("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(node_->shape));
    }
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() const { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("Tensor::item: not a scalar " + shape_str(shape()));
    }
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    return grad_accumulator();
}

std::span<double> Tensor::grad_accumulator() const {
    if (node_->grad.size() != node_->value.size()) {
        node_->grad.assign(node_->value.size(), 0.0);
    }
    return node_->grad;
}

void Tensor::zero_grad() const {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw std::invalid_argument("backward: root must be scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) {
        return;
    }

    // Iterative post-order DFS: each node appears once, after its inputs.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            detail::Node* child = n->inputs[next++].get();
            if (seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (auto* n : order) {
        if (!n->leaf) {
            n->grad.assign(n->value.size(), 0.0);
        } else if (n->grad.size() != n->value.size()) {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    node_->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward) {
            n->backward(n->grad);
        }
    }
}

Tensor Tensor::reshape(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        shape_error("reshape", this->shape(), shape);
    }
    const Tensor self = *this;
    return make_result(std::move(shape), node_->value, {self},
                       [self](std::span<const double> g) { accumulate(self, g); });
}

Tensor Tensor::clone(bool requires_grad) const {
    return from(shape(), node_->value, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// ParameterSet

Tensor& ParameterSet::add(std::string name, Tensor tensor) {
    if (contains(name)) {
        throw std::invalid_argument("ParameterSet: duplicate parameter name '" + name + "'");
    }
    params_.push_back({std::move(name), tensor.clone(true)});
    return params_.back().tensor;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p.tensor;
    }
    throw std::out_of_range("ParameterSet: no parameter named '" + name + "'");
}

bool ParameterSet::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(),
                       [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void ParameterSet::zero_grad() const {
    for (const auto& p : params_) p.tensor.zero_grad();
}

ParameterSet ParameterSet::clone() const {
    ParameterSet out;
    for (const auto& p : params_) out.add(p.name, p.tensor);
    return out;
}

void ParameterSet::assign(const ParameterSet& other) {
    if (other.size() != size()) {
        throw std::invalid_argument("ParameterSet::assign: parameter count mismatch");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& src = other.params_[i];
        auto& dst = params_[i];
        if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
            throw std::invalid_argument("ParameterSet::assign: mismatch at '" + dst.name + "'");
        }
        std::copy(src.tensor.data().begin(), src.tensor.data().end(),
                  dst.tensor.mutable_data().begin());
    }
}

// ---------------------------------------------------------------------------
// Linear algebra and elementwise

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) shape_error("matmul", a.shape(), b.shape());

    std::vector<double> out(m * n, 0.0);
    const auto A = a.data();
    const auto B = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    return Tensor::make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](std::span<const double> g) {
        const auto A = a.data();
        const auto B = b.data();
        if (a.requires_grad()) {
            auto ga = a.grad_accumulator();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    const double* brow = B.data() + p * n;
                    const double* grow = g.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ga[i * k + p] += s;
                }
            }
        }
        if (b.requires_grad()) {
            auto gb = b.grad_accumulator();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    double* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank("transpose", a, 2);
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    const auto A = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
    return Tensor::make_result({n, m}, std::move(out), {a}, [a, m, n](std::span<const double> g) {
        auto ga = a.grad_accumulator();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

namespace {

template <class Fwd, class BwdA, class BwdB>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, BwdA bwd_a,
                          BwdB bwd_b) {
    if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
    const auto A = a.data();
    const auto B = b.data();
    std::vector<double> out(A.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A[i], B[i]);
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b, bwd_a, bwd_b](std::span<const double> g) {
        const auto A = a.data();
        const auto B = b.data();
        if (a.requires_grad()) {
            auto ga = a.grad_accumulator();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bwd_a(A[i], B[i]);
        }
        if (b.requires_grad()) {
            auto gb = b.grad_accumulator();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * bwd_b(A[i], B[i]);
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [a, s](std::span<const double> g) {
        auto ga = a.grad_accumulator();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * g[i];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::make_result({}, {s}, {a}, [a](std::span<const double> g) {
        auto ga = a.grad_accumulator();
        for (auto& v : ga) v += g[0];
    });
}

Tensor mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
    require_rank("add_row_bias", x, 2);
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (b.numel() != n) shape_error("add_row_bias", x.shape(), b.shape());
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto B = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += B[j];
    return Tensor::make_result(x.shape(), std::move(out), {x, b}, [x, b, m, n](std::span<const double> g) {
        accumulate(x, g);
        if (b.requires_grad()) {
            auto gb = b.grad_accumulator();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
    });
}

Tensor add_col_bias(const Tensor& x, const Tensor& b) {
    require_rank("add_col_bias", x, 2);
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (b.numel() != m) shape_error("add_col_bias", x.shape(), b.shape());
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto B = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += B[i];
    return Tensor::make_result(x.shape(), std::move(out), {x, b}, [x, b, m, n](std::span<const double> g) {
        accumulate(x, g);
        if (b.requires_grad()) {
            auto gb = b.grad_accumulator();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[i] += g[i * n + j];
        }
    });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    require_rank("slice_rows", x, 2);
    const std::size_t n = x.dim(1);
    if (begin >= end || end > x.dim(0)) {
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") invalid for " + shape_str(x.shape()));
    }
    const auto X = x.data();
    std::vector<double> out(X.begin() + static_cast<std::ptrdiff_t>(begin * n),
                            X.begin() + static_cast<std::ptrdiff_t>(end * n));
    return Tensor::make_result({end - begin, n}, std::move(out), {x}, [x, begin, n](std::span<const double> g) {
        auto gx = x.grad_accumulator();
        for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
    });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    require_rank("slice_cols", x, 2);
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (begin >= end || end > n) {
        throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") invalid for " + shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    const auto X = x.data();
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = X[i * n + begin + j];
    return Tensor::make_result({m, w}, std::move(out), {x}, [x, begin, m, n, w](std::span<const double> g) {
        auto gx = x.grad_accumulator();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += g[i * w + j];
    });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const std::size_t n = parts.front().dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_rank("concat_rows", p, 2);
        if (p.dim(1) != n) shape_error("concat_rows", parts.front().shape(), p.shape());
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(rows * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return Tensor::make_result({rows, n}, std::move(out), inputs, [inputs](std::span<const double> g) {
        std::size_t offset = 0;
        for (const auto& p : inputs) {
            if (p.requires_grad()) accumulate(p, g.subspan(offset, p.numel()));
            offset += p.numel();
        }
    });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
    require_rank("gather_rows", x, 2);
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<std::size_t> idx(index.begin(), index.end());
    const auto X = x.data();
    std::vector<double> out(idx.size() * n);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= m) throw std::invalid_argument("gather_rows: index out of range for " + shape_str(x.shape()));
        std::copy_n(X.begin() + static_cast<std::ptrdiff_t>(idx[r] * n), n, out.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    return Tensor::make_result({idx.size(), n}, std::move(out), {x}, [x, idx, n](std::span<const double> g) {
        auto gx = x.grad_accumulator();
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < n; ++j) gx[idx[r] * n + j] += g[r * n + j];
    });
}

Tensor softmax_rows(const Tensor& x) {
    require_rank("softmax_rows", x, 2);
    const std::size_t m = x.dim(0), n = x.dim(1);
    const auto X = x.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = X.data() + i * n;
        double mx = row[0];
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(row[j])) {
                throw std::invalid_argument("softmax_rows: non-finite input at (" + std::to_string(i) +
                                            "," + std::to_string(j) + ")");
            }
            mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(row[j] - mx);
            z += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    std::vector<double> y = out;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [x, y = std::move(y), m, n](std::span<const double> g) {
        auto gx = x.grad_accumulator();
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& w, const Tensor& b, double eps) {
    require_rank("layer_norm", x, 2);
    if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (w.numel() != rows) shape_error("layer_norm", x.shape(), w.shape());
    if (b.numel() != rows) shape_error("layer_norm", x.shape(), b.shape());

    const auto X = x.data();
    const double count = static_cast<double>(X.size());
    double mu = 0.0;
    for (double v : X) mu += v;
    mu /= count;
    double var = 0.0;
    for (double v : X) var += (v - mu) * (v - mu);
    var /= count;
    const double inv_std = 1.0 / std::sqrt(var + eps);

    std::vector<double> xhat(X.size());
    std::vector<double> out(X.size());
    const auto W = w.data();
    const auto B = b.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            xhat[i] = (X[i] - mu) * inv_std;
            out[i] = W[r] * xhat[i] + B[r];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, w, b},
        [x, w, b, xhat = std::move(xhat), inv_std, rows, cols](std::span<const double> g) {
            const auto W = w.data();
            if (w.requires_grad() || b.requires_grad()) {
                auto gw = w.grad_accumulator();
                auto gb = b.grad_accumulator();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        const std::size_t i = r * cols + c;
                        gw[r] += g[i] * xhat[i];
                        gb[r] += g[i];
                    }
                }
            }
            if (x.requires_grad()) {
                const double count = static_cast<double>(xhat.size());
                double mean_d = 0.0, mean_dx = 0.0;
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        const std::size_t i = r * cols + c;
                        const double d = g[i] * W[r];
                        mean_d += d;
                        mean_dx += d * xhat[i];
                    }
                }
                mean_d /= count;
                mean_dx /= count;
                auto gx = x.grad_accumulator();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        const std::size_t i = r * cols + c;
                        gx[i] += inv_std * (g[i] * W[r] - mean_d - xhat[i] * mean_dx);
                    }
                }
            }
        });
}

namespace {

template <class Fwd, class Deriv>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Deriv deriv) {
    const auto X = x.data();
    std::vector<double> out(X.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(X[i]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [x, deriv](std::span<const double> g) {
        const auto X = x.data();
        auto gx = x.grad_accumulator();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(X[i]);
    });
}

}  // namespace

Tensor silu(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return v * sigmoid_scalar(v); },
        [](double v) {
            const double s = sigmoid_scalar(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return sigmoid_scalar(v); },
        [](double v) {
            const double s = sigmoid_scalar(v);
            return s * (1.0 - s);
        });
}

Tensor relu(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Convolution and resampling

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor conv2d_windows(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
    using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

    const std::size_t H = x.dim(0), W = x.dim(1), cin = x.dim(2);
    const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);

    // The input is zero-padded to Hp x Wp and the output is computed on the
    // padded width, so that for a fixed kernel row i the receptive fields of
    // consecutive output pixels are overlapping windows at a constant stride
    // of cin values. Each kernel row is then a single matrix product; the
    // extra Wp - W output columns are discarded.
    const std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t Wp = W + kw - 1, Hp = H + kh - 1;
    const std::size_t run = kw * cin;
    const std::size_t padded_size = Hp * Wp * cin + run;

    struct RowRange {
        std::size_t h0, rows;
    };
    // Output rows whose kernel row i lands inside the unpadded input.
    auto rows_for = [=](std::size_t i) {
        const std::size_t h0 = i < ph ? ph - i : 0;
        const std::size_t h1 = std::min(H, H + ph - i);
        return RowRange{h0, h1 > h0 ? h1 - h0 : 0};
    };

    std::vector<double> xpad(padded_size, 0.0);
    const auto X = x.data();
    for (std::size_t h = 0; h < H; ++h)
        std::copy_n(X.data() + h * W * cin, W * cin, xpad.data() + ((h + ph) * Wp + pw) * cin);

    const auto K = kernels.data();
    RowMat full = RowMat::Zero(static_cast<Eigen::Index>(H * Wp), static_cast<Eigen::Index>(cout));
    for (std::size_t i = 0; i < kh; ++i) {
        const auto [h0, rows] = rows_for(i);
        if (!rows) continue;
        const Strided a(xpad.data() + (h0 + i) * Wp * cin, static_cast<Eigen::Index>(rows * Wp),
                        static_cast<Eigen::Index>(run), Eigen::OuterStride<>(static_cast<Eigen::Index>(cin)));
        const Eigen::Map<const RowMat> k(K.data() + i * run * cout, static_cast<Eigen::Index>(run),
                                         static_cast<Eigen::Index>(cout));
        full.middleRows(static_cast<Eigen::Index>(h0 * Wp), static_cast<Eigen::Index>(rows * Wp)).noalias() += a * k;
    }

    const auto Bv = bias.data();
    std::vector<double> out(H * W * cout);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
            for (std::size_t co = 0; co < cout; ++co)
                out[(h * W + w) * cout + co] = full(static_cast<Eigen::Index>(h * Wp + w), static_cast<Eigen::Index>(co)) + Bv[co];

    return Tensor::make_result(
        {H, W, cout}, std::move(out), {x, kernels, bias},
        [x, kernels, bias, rows_for, xpad = std::move(xpad), H, W, Wp, cin, cout, kh, ph, pw, run,
         padded_size](std::span<const double> g) {
            if (bias.requires_grad()) {
                auto gb = bias.grad_accumulator();
                for (std::size_t p = 0; p < H * W; ++p)
                    for (std::size_t co = 0; co < cout; ++co) gb[co] += g[p * cout + co];
            }
            const bool want_x = x.requires_grad();
            const bool want_k = kernels.requires_grad();
            if (!want_x && !want_k) return;

            RowMat gfull = RowMat::Zero(static_cast<Eigen::Index>(H * Wp), static_cast<Eigen::Index>(cout));
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    for (std::size_t co = 0; co < cout; ++co)
                        gfull(static_cast<Eigen::Index>(h * Wp + w), static_cast<Eigen::Index>(co)) = g[(h * W + w) * cout + co];

            const auto K = kernels.data();
            std::vector<double> gxpad(want_x ? padded_size : 0, 0.0);
            std::span<double> gk;
            if (want_k) gk = kernels.grad_accumulator();
            RowMat t;
            for (std::size_t i = 0; i < kh; ++i) {
                const auto [h0, rows] = rows_for(i);
                if (!rows) continue;
                const auto n = static_cast<Eigen::Index>(rows * Wp);
                const auto go = gfull.middleRows(static_cast<Eigen::Index>(h0 * Wp), n);
                const std::size_t base = (h0 + i) * Wp * cin;
                if (want_k) {
                    const Strided a(xpad.data() + base, n, static_cast<Eigen::Index>(run),
                                    Eigen::OuterStride<>(static_cast<Eigen::Index>(cin)));
                    Eigen::Map<RowMat> gki(gk.data() + i * run * cout, static_cast<Eigen::Index>(run),
                                           static_cast<Eigen::Index>(cout));
                    gki.noalias() += a.transpose() * go;
                }
                if (want_x) {
                    const Eigen::Map<const RowMat> k(K.data() + i * run * cout, static_cast<Eigen::Index>(run),
                                                     static_cast<Eigen::Index>(cout));
                    t.noalias() = go * k.transpose();
                    for (Eigen::Index r = 0; r < n; ++r) {
                        double* dst = gxpad.data() + base + static_cast<std::size_t>(r) * cin;
                        const double* src = t.row(r).data();
                        for (std::size_t c = 0; c < run; ++c) dst[c] += src[c];
                    }
                }
            }
            if (want_x) {
                auto gx = x.grad_accumulator();
                for (std::size_t h = 0; h < H; ++h) {
                    const double* src = gxpad.data() + ((h + ph) * Wp + pw) * cin;
                    double* dst = gx.data() + h * W * cin;
                    for (std::size_t c = 0; c < W * cin; ++c) dst[c] += src[c];
                }
            }
        });
}

namespace {

struct ResampleTap {
    std::size_t lo, hi;
    double frac;
};

std::vector<ResampleTap> align_corners_taps(std::size_t in, std::size_t out) {
    std::vector<ResampleTap> taps(out);
    for (std::size_t o = 0; o < out; ++o) {
        const double src = (out > 1 && in > 1)
                               ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1)
                               : 0.0;
        auto lo = static_cast<std::size_t>(std::floor(src));
        lo = std::min(lo, in - 1);
        const std::size_t hi = std::min(lo + 1, in - 1);
        taps[o] = {lo, hi, src - static_cast<double>(lo)};
    }
    return taps;
}

}  // namespace

// Kernel taps that reach at least as far vertically as the image is tall:
// every output row sees every input row, so the vertical part of the
// convolution is a dense block-Toeplitz matrix per kernel column j,
//   T_j[(h, co), (hh, ci)] = K[hh - h + ph, j, ci, co],
// and the layer becomes kw products T_j * X with X laid out (H cin) x W.
Tensor conv2d_toeplitz(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
    const std::size_t H = x.dim(0), W = x.dim(1), cin = x.dim(2);
    const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
    const std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const auto rows = static_cast<Eigen::Index>(H * cout);
    const auto cols = static_cast<Eigen::Index>(H * cin);

    auto build_t = [=](std::span<const double> K, std::size_t j, Eigen::MatrixXd& t) {
        t.resize(rows, cols);
        for (std::size_t hh = 0; hh < H; ++hh)
            for (std::size_t h = 0; h < H; ++h) {
                const std::size_t i = hh + ph - h;
                const double* src = K.data() + (i * kw + j) * cin * cout;
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t co = 0; co < cout; ++co)
                        t(static_cast<Eigen::Index>(h * cout + co), static_cast<Eigen::Index>(hh * cin + ci)) =
                            src[ci * cout + co];
            }
    };
    // Output columns w whose kernel column j lands inside the image.
    auto cols_for = [=](std::size_t j) {
        const std::size_t w0 = j < pw ? pw - j : 0;
        const std::size_t w1 = std::min(W, W + pw - j);
        return std::pair<std::size_t, std::size_t>{w0, w1 > w0 ? w1 - w0 : 0};
    };

    const auto X = x.data();
    Eigen::MatrixXd xm(cols, static_cast<Eigen::Index>(W));
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
            for (std::size_t ci = 0; ci < cin; ++ci)
                xm(static_cast<Eigen::Index>(h * cin + ci), static_cast<Eigen::Index>(w)) = X[(h * W + w) * cin + ci];

    Eigen::MatrixXd om = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(W));
    Eigen::MatrixXd t;
    for (std::size_t j = 0; j < kw; ++j) {
        const auto [w0, nw] = cols_for(j);
        if (!nw) continue;
        build_t(kernels.data(), j, t);
        om.middleCols(static_cast<Eigen::Index>(w0), static_cast<Eigen::Index>(nw)).noalias() +=
            t * xm.middleCols(static_cast<Eigen::Index>(w0 + j - pw), static_cast<Eigen::Index>(nw));
    }

    const auto Bv = bias.data();
    std::vector<double> out(H * W * cout);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
            for (std::size_t co = 0; co < cout; ++co)
                out[(h * W + w) * cout + co] =
                    om(static_cast<Eigen::Index>(h * cout + co), static_cast<Eigen::Index>(w)) + Bv[co];

    return Tensor::make_result(
        {H, W, cout}, std::move(out), {x, kernels, bias},
        [x, kernels, bias, build_t, cols_for, xm = std::move(xm), H, W, cin, cout, kw, ph, pw, rows,
         cols](std::span<const double> g) {
            if (bias.requires_grad()) {
                auto gb = bias.grad_accumulator();
                for (std::size_t p = 0; p < H * W; ++p)
                    for (std::size_t co = 0; co < cout; ++co) gb[co] += g[p * cout + co];
            }
            const bool want_x = x.requires_grad();
            const bool want_k = kernels.requires_grad();
            if (!want_x && !want_k) return;

            Eigen::MatrixXd gm(rows, static_cast<Eigen::Index>(W));
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    for (std::size_t co = 0; co < cout; ++co)
                        gm(static_cast<Eigen::Index>(h * cout + co), static_cast<Eigen::Index>(w)) =
                            g[(h * W + w) * cout + co];

            Eigen::MatrixXd gxm;
            if (want_x) gxm = Eigen::MatrixXd::Zero(cols, static_cast<Eigen::Index>(W));
            std::span<double> gk;
            if (want_k) gk = kernels.grad_accumulator();
            Eigen::MatrixXd t, gt;
            for (std::size_t j = 0; j < kw; ++j) {
                const auto [w0, nw] = cols_for(j);
                if (!nw) continue;
                const auto go = gm.middleCols(static_cast<Eigen::Index>(w0), static_cast<Eigen::Index>(nw));
                const auto xin = static_cast<Eigen::Index>(w0 + j - pw);
                if (want_x) {
                    build_t(kernels.data(), j, t);
                    gxm.middleCols(xin, static_cast<Eigen::Index>(nw)).noalias() += t.transpose() * go;
                }
                if (want_k) {
                    gt.noalias() = go * xm.middleCols(xin, static_cast<Eigen::Index>(nw)).transpose();
                    for (std::size_t hh = 0; hh < H; ++hh)
                        for (std::size_t h = 0; h < H; ++h) {
                            double* dst = gk.data() + ((hh + ph - h) * kw + j) * cin * cout;
                            for (std::size_t ci = 0; ci < cin; ++ci)
                                for (std::size_t co = 0; co < cout; ++co)
                                    dst[ci * cout + co] += gt(static_cast<Eigen::Index>(h * cout + co),
                                                              static_cast<Eigen::Index>(hh * cin + ci));
                        }
                }
            }
            if (want_x) {
                auto gx = x.grad_accumulator();
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t w = 0; w < W; ++w)
                        for (std::size_t ci = 0; ci < cin; ++ci)
                            gx[(h * W + w) * cin + ci] +=
                                gxm(static_cast<Eigen::Index>(h * cin + ci), static_cast<Eigen::Index>(w));
            }
        });
}

}  // namespace

Tensor conv2d_same(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
    require_rank("conv2d_same", x, 3);
    require_rank("conv2d_same", kernels, 4);
    if (kernels.dim(2) != x.dim(2)) shape_error("conv2d_same", x.shape(), kernels.shape());
    if (bias.numel() != kernels.dim(3)) shape_error("conv2d_same", kernels.shape(), bias.shape());
    const std::size_t H = x.dim(0), kh = kernels.dim(0);
    const std::size_t ph = (kh - 1) / 2;
    // Toeplitz form only when no output row has an out-of-range kernel row
    // for any input row, i.e. it does no wasted work.
    if (ph + 1 >= H && kh - ph >= H) return conv2d_toeplitz(x, kernels, bias);
    return conv2d_windows(x, kernels, bias);
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank("bilinear_resize", x, 3);
    if (out_h == 0 || out_w == 0) throw std::invalid_argument("bilinear_resize: zero output extent");
    const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    auto ty = align_corners_taps(H, out_h);
    auto tx = align_corners_taps(W, out_w);

    const auto X = x.data();
    std::vector<double> out(out_h * out_w * C);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[oy];
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto& b = tx[ox];
            const double w00 = (1 - a.frac) * (1 - b.frac), w01 = (1 - a.frac) * b.frac;
            const double w10 = a.frac * (1 - b.frac), w11 = a.frac * b.frac;
            const double* p00 = X.data() + (a.lo * W + b.lo) * C;
            const double* p01 = X.data() + (a.lo * W + b.hi) * C;
            const double* p10 = X.data() + (a.hi * W + b.lo) * C;
            const double* p11 = X.data() + (a.hi * W + b.hi) * C;
            double* o = out.data() + (oy * out_w + ox) * C;
            for (std::size_t c = 0; c < C; ++c) {
                o[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
            }
        }
    }
    return Tensor::make_result(
        {out_h, out_w, C}, std::move(out), {x},
        [x, ty = std::move(ty), tx = std::move(tx), W, C, out_h, out_w](std::span<const double> g) {
            auto gx = x.grad_accumulator();
            for (std::size_t oy = 0; oy < out_h; ++oy) {
                const auto& a = ty[oy];
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    const auto& b = tx[ox];
                    const double w00 = (1 - a.frac) * (1 - b.frac), w01 = (1 - a.frac) * b.frac;
                    const double w10 = a.frac * (1 - b.frac), w11 = a.frac * b.frac;
                    const double* go = g.data() + (oy * out_w + ox) * C;
                    for (std::size_t c = 0; c < C; ++c) {
                        gx[(a.lo * W + b.lo) * C + c] += w00 * go[c];
                        gx[(a.lo * W + b.hi) * C + c] += w01 * go[c];
                        gx[(a.hi * W + b.lo) * C + c] += w10 * go[c];
                        gx[(a.hi * W + b.hi) * C + c] += w11 * go[c];
                    }
                }
            }
        });
}

}  // namespace mambaest
