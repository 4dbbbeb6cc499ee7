#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "mambaest/dft.hpp"

namespace mambaest {

/// OFDM numerology and DM-RS pilot layout. Indices are zero-based.
struct BasebandConfig {
    std::size_t n_f = 228;
    std::size_t n_s = 14;
    std::size_t l_cp = 12;
    std::size_t l_s = 4;
    std::vector<std::size_t> pilot_symbols{2, 5, 8, 11};
    std::size_t pilot_offset = 1;
    double f_space = 15e3;
    double f_r = 5e9;
    cplx pilot_value{std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2};

    /// Throws std::invalid_argument naming the violated field.
    void validate() const;

    std::size_t pilots_per_symbol() const { return n_f / l_s; }
    std::size_t n_pilot() const { return pilot_symbols.size(); }
    std::size_t pilot_re_count() const { return pilots_per_symbol() * n_pilot(); }
    std::size_t data_re_count() const { return n_f * (n_s - n_pilot()); }
    std::size_t bits_per_slot() const { return 2 * data_re_count(); }

    bool is_pilot_symbol(std::size_t l) const;
    /// Subcarrier index of the i-th pilot within a pilot symbol.
    std::size_t pilot_subcarrier(std::size_t i) const { return pilot_offset + i * l_s; }
    /// Non-pilot symbol indices in time order.
    std::vector<std::size_t> data_symbols() const;

    double sample_period() const { return 1.0 / (static_cast<double>(n_f) * f_space); }
    /// One OFDM symbol including its cyclic prefix, in seconds.
    double symbol_period() const { return static_cast<double>(n_f + l_cp) * sample_period(); }
    std::size_t samples_per_slot() const { return n_s * (n_f + l_cp); }
};

enum class GridKind { transmitted, received, channel };

/// N_f x N_s complex resource grid stored symbol-major (subcarrier fastest).
class SlotGrid {
public:
    SlotGrid() = default;
    SlotGrid(std::size_t n_f, std::size_t n_s, GridKind kind);
    SlotGrid(std::size_t n_f, std::size_t n_s, GridKind kind, std::vector<cplx> values);

    std::size_t n_f() const { return n_f_; }
    std::size_t n_s() const { return n_s_; }
    GridKind kind() const { return kind_; }
    void set_kind(GridKind kind) { kind_ = kind; }

    cplx& operator()(std::size_t k, std::size_t l) { return values_[l * n_f_ + k]; }
    const cplx& operator()(std::size_t k, std::size_t l) const { return values_[l * n_f_ + k]; }

    std::span<cplx> symbol(std::size_t l) { return {values_.data() + l * n_f_, n_f_}; }
    std::span<const cplx> symbol(std::size_t l) const { return {values_.data() + l * n_f_, n_f_}; }

    std::span<const cplx> values() const { return values_; }
    std::span<cplx> values() { return values_; }

private:
    std::size_t n_f_ = 0;
    std::size_t n_s_ = 0;
    GridKind kind_ = GridKind::channel;
    std::vector<cplx> values_;
};

/// Baseband samples of one slot, CP included.
struct TimeSignal {
    std::vector<cplx> samples;
    double sample_period = 0.0;
};

/// Gray-mapped unit-energy QPSK: first bit sets the real sign, second the
/// imaginary sign (0 -> +, 1 -> -).
std::vector<cplx> qpsk_modulate(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> qpsk_demodulate(std::span<const cplx> symbols);

/// Places data column-major over the data symbols and the pilot comb on the
/// pilot symbols; vacant pilot-symbol subcarriers are zero.
SlotGrid build_slot(std::span<const cplx> data, const BasebandConfig& cfg);

/// Data REs of a grid in build_slot order.
std::vector<cplx> extract_data(const SlotGrid& grid, const BasebandConfig& cfg);

TimeSignal ofdm_modulate(const SlotGrid& grid, const BasebandConfig& cfg);
SlotGrid ofdm_demodulate(const TimeSignal& sig, const BasebandConfig& cfg);

std::vector<std::uint8_t> random_bits(std::size_t count, std::uint64_t seed);

/// Writes `k,l,re,im` rows after a `#` header line.
void write_grid_csv(std::ostream& os, const SlotGrid& grid, std::string_view header);

}  // namespace mambaest
