#include "mambaest/dft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mambaest {

UnitaryDft::UnitaryDft(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("UnitaryDft: length must be at least 1");
    std::size_t rest = n;
    for (std::size_t p = 2; p * p <= rest; ++p) {
        while (rest % p == 0) {
            factors_.push_back(p);
            rest /= p;
        }
    }
    if (rest > 1) factors_.push_back(rest);

    twiddle_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle_[k] = {std::cos(angle), std::sin(angle)};
    }
}

void UnitaryDft::recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t fi,
                         bool inverse, cplx* scratch) const {
    if (n == 1) {
        out[0] = in[0];
        return;
    }
    const std::size_t p = factors_[fi];
    const std::size_t m = n / p;
    for (std::size_t r = 0; r < p; ++r) {
        recurse(in + r * stride, stride * p, out + r * m, m, fi + 1, inverse, scratch);
    }

    auto w = [&](std::size_t e) {
        const cplx t = twiddle_[e % n_];
        return inverse ? std::conj(t) : t;
    };
    const std::size_t step_n = n_ / n;  // W_n^e = W_N^{e*step_n}
    const std::size_t step_p = n_ / p;  // W_p^e = W_N^{e*step_p}
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t r = 0; r < p; ++r) {
            scratch[r] = out[r * m + k] * w(r * k * step_n);
        }
        for (std::size_t q = 0; q < p; ++q) {
            cplx acc = scratch[0];
            for (std::size_t r = 1; r < p; ++r) acc += scratch[r] * w(r * q * step_p);
            out[k + q * m] = acc;
        }
    }
}

void UnitaryDft::transform(std::span<const cplx> x, std::span<cplx> out, bool inverse) const {
    if (x.size() != n_) {
        throw std::invalid_argument("UnitaryDft: expected length " + std::to_string(n_) + ", got " +
                                    std::to_string(x.size()));
    }
    const std::size_t max_factor = factors_.empty() ? 1 : *std::max_element(factors_.begin(), factors_.end());
    std::vector<cplx> scratch(max_factor);
    recurse(x.data(), 1, out.data(), n_, 0, inverse, scratch.data());
    const double s = 1.0 / std::sqrt(static_cast<double>(n_));
    for (auto& v : out) v *= s;
}

std::vector<cplx> UnitaryDft::forward(std::span<const cplx> x) const {
    std::vector<cplx> out(n_);
    transform(x, out, false);
    return out;
}

std::vector<cplx> UnitaryDft::inverse(std::span<const cplx> x) const {
    std::vector<cplx> out(n_);
    transform(x, out, true);
    return out;
}

std::vector<cplx> unitary_dft(std::span<const cplx> x, bool inverse) {
    UnitaryDft plan(x.size());
    return inverse ? plan.inverse(x) : plan.forward(x);
}

}  // namespace mambaest
