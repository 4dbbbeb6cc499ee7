#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace mambaest {

using cplx = std::complex<double>;

/// Mixed-radix DFT for an arbitrary fixed length, scaled by 1/sqrt(N) in both
/// directions so the transform is unitary.
///
/// The length is factored into primes; each stage is a radix-p butterfly
/// evaluated directly, so cost is O(N * sum of prime factors). 228 = 2*2*3*19
/// costs roughly 24 N complex multiply-adds.
class UnitaryDft {
public:
    explicit UnitaryDft(std::size_t n);

    std::size_t size() const { return n_; }

    std::vector<cplx> forward(std::span<const cplx> x) const;
    std::vector<cplx> inverse(std::span<const cplx> x) const;

private:
    void transform(std::span<const cplx> x, std::span<cplx> out, bool inverse) const;
    void recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t factor_index,
                 bool inverse, cplx* scratch) const;

    std::size_t n_;
    std::vector<std::size_t> factors_;
    std::vector<cplx> twiddle_;  // exp(-2 pi i k / N)
};

/// One-shot convenience wrapper.
std::vector<cplx> unitary_dft(std::span<const cplx> x, bool inverse);

}  // namespace mambaest
