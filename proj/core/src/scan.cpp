#include "mambaest/scan.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace mambaest {

namespace {

void check_sizes(std::span<const double> a, std::span<const double> b, std::size_t length, std::size_t channels,
                 std::span<double> out) {
    const std::size_t n = length * channels;
    if (a.size() != n || b.size() != n || out.size() != n) {
        throw std::invalid_argument("scan: expected " + std::to_string(length) + "x" + std::to_string(channels) +
                                    " inputs and output");
    }
}

// hf (reverse = false) or hb (reverse = true), written to out or added to it.
void directional_sequential(std::span<const double> a, std::span<const double> b, std::size_t length,
                            std::size_t channels, bool reverse, std::span<double> out, bool accumulate = false) {
    std::vector<double> state(channels, 0.0);
    for (std::size_t s = 0; s < length; ++s) {
        const std::size_t t = reverse ? length - 1 - s : s;
        const double* at = a.data() + t * channels;
        const double* bt = b.data() + t * channels;
        double* ot = out.data() + t * channels;
        for (std::size_t c = 0; c < channels; ++c) {
            state[c] = at[c] * state[c] + bt[c];
            ot[c] = accumulate ? ot[c] + state[c] : state[c];
        }
    }
}

void directional_parallel(std::span<const double> a, std::span<const double> b, std::size_t length,
                          std::size_t channels, bool reverse, std::span<double> out) {
    std::size_t n2 = 1;
    while (n2 < length) n2 *= 2;
    // Element i holds the pair for scan position i; padding is the identity (1, 0).
    std::vector<double> A(n2 * channels, 1.0), B(n2 * channels, 0.0);
    for (std::size_t i = 0; i < length; ++i) {
        const std::size_t t = reverse ? length - 1 - i : i;
        for (std::size_t c = 0; c < channels; ++c) {
            A[i * channels + c] = a[t * channels + c];
            B[i * channels + c] = b[t * channels + c];
        }
    }

    // Up-sweep: node i absorbs its left sibling subtree (earlier elements first).
    for (std::size_t d = 1; d < n2; d *= 2) {
        for (std::size_t i = 2 * d - 1; i < n2; i += 2 * d) {
            double* ai = A.data() + i * channels;
            double* bi = B.data() + i * channels;
            const double* al = A.data() + (i - d) * channels;
            const double* bl = B.data() + (i - d) * channels;
            for (std::size_t c = 0; c < channels; ++c) {
                bi[c] = ai[c] * bl[c] + bi[c];
                ai[c] = al[c] * ai[c];
            }
        }
    }

    // Down-sweep to an exclusive scan.
    for (std::size_t c = 0; c < channels; ++c) {
        A[(n2 - 1) * channels + c] = 1.0;
        B[(n2 - 1) * channels + c] = 0.0;
    }
    for (std::size_t d = n2 / 2; d >= 1; d /= 2) {
        for (std::size_t i = 2 * d - 1; i < n2; i += 2 * d) {
            double* ai = A.data() + i * channels;
            double* bi = B.data() + i * channels;
            double* al = A.data() + (i - d) * channels;
            double* bl = B.data() + (i - d) * channels;
            for (std::size_t c = 0; c < channels; ++c) {
                const double ta = al[c], tb = bl[c];
                al[c] = ai[c];
                bl[c] = bi[c];
                // prefix(parent) . sum(left subtree)
                bi[c] = ta * bi[c] + tb;
                ai[c] = ai[c] * ta;
            }
        }
        if (d == 1) break;
    }

    // Inclusive state: exclusive prefix applied to a zero initial state, then
    // the element itself.
    for (std::size_t i = 0; i < length; ++i) {
        const std::size_t t = reverse ? length - 1 - i : i;
        for (std::size_t c = 0; c < channels; ++c) {
            const double prefix_state = B[i * channels + c];
            out[t * channels + c] = a[t * channels + c] * prefix_state + b[t * channels + c];
        }
    }
}

}  // namespace

void scan_sequential(std::span<const double> a, std::span<const double> b, std::size_t length,
                     std::size_t channels, std::span<double> out) {
    check_sizes(a, b, length, channels, out);
    directional_sequential(a, b, length, channels, false, out);
    directional_sequential(a, b, length, channels, true, out, true);
}

void scan_parallel(std::span<const double> a, std::span<const double> b, std::size_t length,
                   std::size_t channels, std::span<double> out) {
    check_sizes(a, b, length, channels, out);
    std::vector<double> back(out.size());
    directional_parallel(a, b, length, channels, false, out);
    directional_parallel(a, b, length, channels, true, back);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += back[i];
}

Tensor selective_scan(const Tensor& a, const Tensor& b, ScanMode mode) {
    if (a.rank() != 2 || a.shape() != b.shape()) {
        throw std::invalid_argument("selective_scan: incompatible shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    }
    const std::size_t length = a.dim(0), channels = a.dim(1);
    const std::size_t n = length * channels;
    std::vector<double> hf(n), hb(n);
    if (mode == ScanMode::parallel) {
        directional_parallel(a.data(), b.data(), length, channels, false, hf);
        directional_parallel(a.data(), b.data(), length, channels, true, hb);
    } else {
        directional_sequential(a.data(), b.data(), length, channels, false, hf);
        directional_sequential(a.data(), b.data(), length, channels, true, hb);
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = hf[i] + hb[i];

    return Tensor::make_result(
        a.shape(), std::move(out), {a, b},
        [a, b, hf = std::move(hf), hb = std::move(hb), length, channels](std::span<const double> g) {
            const auto A = a.data();
            std::vector<double> da(length * channels, 0.0), db(length * channels, 0.0);
            std::vector<double> lam(channels, 0.0);
            // Forward chain adjoint runs right to left.
            for (std::size_t s = 0; s < length; ++s) {
                const std::size_t t = length - 1 - s;
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t i = t * channels + c;
                    const double next_a = t + 1 < length ? A[i + channels] : 0.0;
                    lam[c] = g[i] + next_a * lam[c];
                    db[i] += lam[c];
                    if (t > 0) da[i] += lam[c] * hf[i - channels];
                }
            }
            std::fill(lam.begin(), lam.end(), 0.0);
            // Backward chain adjoint runs left to right.
            for (std::size_t t = 0; t < length; ++t) {
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t i = t * channels + c;
                    const double prev_a = t > 0 ? A[i - channels] : 0.0;
                    lam[c] = g[i] + prev_a * lam[c];
                    db[i] += lam[c];
                    if (t + 1 < length) da[i] += lam[c] * hb[i + channels];
                }
            }
            if (a.requires_grad()) {
                auto ga = a.grad_accumulator();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += da[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_accumulator();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db[i];
            }
        });
}

}  // namespace mambaest
