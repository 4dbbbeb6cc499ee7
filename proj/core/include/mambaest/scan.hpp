#pragma once

#include <cstddef>
#include <span>

#include "mambaest/tensor.hpp"

namespace mambaest {

// Bidirectional selective scan over row-major L x c arrays:
//   forward   hf_t = a_t * hf_{t-1} + b_t,  hf_0 = 0
//   backward  hb_t = a_t * hb_{t+1} + b_t,  hb_{L+1} = 0
//   output    h_t  = hf_t + hb_t
// Note b_t enters both directions, so each position carries it twice.

/// Plain left-to-right and right-to-left recurrences. O(L c).
void scan_sequential(std::span<const double> a, std::span<const double> b, std::size_t length,
                     std::size_t channels, std::span<double> out);

/// Work-efficient (Blelloch) prefix scan of the associative combine
/// (a1, b1) . (a2, b2) = (a1 a2, a2 b1 + b2), run in both directions.
/// Avoids the underflowing cumulative products of the closed form.
void scan_parallel(std::span<const double> a, std::span<const double> b, std::size_t length,
                   std::size_t channels, std::span<double> out);

enum class ScanMode { sequential, parallel };

/// Differentiable bidirectional scan of a[L x c], b[L x c].
Tensor selective_scan(const Tensor& a, const Tensor& b, ScanMode mode = ScanMode::sequential);

}  // namespace mambaest
