#include "mambaest/baseband.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

#include "mambaest/rng.hpp"

namespace mambaest {

void BasebandConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument("baseband." + key + ": " + why);
    };
    if (n_f == 0) fail("n_f", "must be positive");
    if (n_s == 0) fail("n_s", "must be positive");
    if (l_s == 0) fail("l_s", "must be positive");
    if (n_f % l_s != 0) fail("n_f", "must be divisible by l_s");
    if (pilot_offset >= l_s) fail("pilot_offset", "must be smaller than l_s");
    if (l_cp >= n_f) fail("l_cp", "must be smaller than n_f");
    if (pilot_symbols.empty()) fail("pilot_symbols", "must not be empty");
    for (std::size_t i = 0; i < pilot_symbols.size(); ++i) {
        if (pilot_symbols[i] >= n_s) fail("pilot_symbols", "index out of range");
        if (i > 0 && pilot_symbols[i] <= pilot_symbols[i - 1]) fail("pilot_symbols", "must be strictly increasing");
    }
    if (!(f_space > 0)) fail("f_space", "must be positive");
    if (!(f_r > 0)) fail("f_r", "must be positive");
}

bool BasebandConfig::is_pilot_symbol(std::size_t l) const {
    return std::find(pilot_symbols.begin(), pilot_symbols.end(), l) != pilot_symbols.end();
}

std::vector<std::size_t> BasebandConfig::data_symbols() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < n_s; ++l)
        if (!is_pilot_symbol(l)) out.push_back(l);
    return out;
}

SlotGrid::SlotGrid(std::size_t n_f, std::size_t n_s, GridKind kind)
    : n_f_(n_f), n_s_(n_s), kind_(kind), values_(n_f * n_s) {}

SlotGrid::SlotGrid(std::size_t n_f, std::size_t n_s, GridKind kind, std::vector<cplx> values)
    : n_f_(n_f), n_s_(n_s), kind_(kind), values_(std::move(values)) {
    if (values_.size() != n_f * n_s) throw std::invalid_argument("SlotGrid: value count does not match dimensions");
}

std::vector<cplx> qpsk_modulate(std::span<const std::uint8_t> bits) {
    if (bits.size() % 2 != 0) {
        throw std::invalid_argument("qpsk_modulate: odd bit count " + std::to_string(bits.size()));
    }
    const double a = std::numbers::sqrt2 / 2;
    std::vector<cplx> out(bits.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {bits[2 * i] ? -a : a, bits[2 * i + 1] ? -a : a};
    }
    return out;
}

std::vector<std::uint8_t> qpsk_demodulate(std::span<const cplx> symbols) {
    std::vector<std::uint8_t> out(2 * symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        out[2 * i] = symbols[i].real() < 0 ? 1 : 0;
        out[2 * i + 1] = symbols[i].imag() < 0 ? 1 : 0;
    }
    return out;
}

SlotGrid build_slot(std::span<const cplx> data, const BasebandConfig& cfg) {
    if (data.size() != cfg.data_re_count()) {
        throw std::invalid_argument("build_slot: expected " + std::to_string(cfg.data_re_count()) +
                                    " data symbols, got " + std::to_string(data.size()));
    }
    SlotGrid grid(cfg.n_f, cfg.n_s, GridKind::transmitted);
    std::size_t next = 0;
    for (std::size_t l = 0; l < cfg.n_s; ++l) {
        if (cfg.is_pilot_symbol(l)) {
            for (std::size_t i = 0; i < cfg.pilots_per_symbol(); ++i) {
                grid(cfg.pilot_subcarrier(i), l) = cfg.pilot_value;
            }
        } else {
            for (std::size_t k = 0; k < cfg.n_f; ++k) grid(k, l) = data[next++];
        }
    }
    return grid;
}

std::vector<cplx> extract_data(const SlotGrid& grid, const BasebandConfig& cfg) {
    std::vector<cplx> out;
    out.reserve(cfg.data_re_count());
    for (std::size_t l : cfg.data_symbols()) {
        const auto col = grid.symbol(l);
        out.insert(out.end(), col.begin(), col.end());
    }
    return out;
}

TimeSignal ofdm_modulate(const SlotGrid& grid, const BasebandConfig& cfg) {
    if (grid.n_f() != cfg.n_f || grid.n_s() != cfg.n_s) {
        throw std::invalid_argument("ofdm_modulate: grid dimensions do not match config");
    }
    const UnitaryDft dft(cfg.n_f);
    TimeSignal sig;
    sig.sample_period = cfg.sample_period();
    sig.samples.reserve(cfg.samples_per_slot());
    for (std::size_t l = 0; l < cfg.n_s; ++l) {
        const auto body = dft.inverse(grid.symbol(l));
        sig.samples.insert(sig.samples.end(), body.end() - static_cast<std::ptrdiff_t>(cfg.l_cp), body.end());
        sig.samples.insert(sig.samples.end(), body.begin(), body.end());
    }
    return sig;
}

SlotGrid ofdm_demodulate(const TimeSignal& sig, const BasebandConfig& cfg) {
    if (sig.samples.size() != cfg.samples_per_slot()) {
        throw std::invalid_argument("ofdm_demodulate: expected " + std::to_string(cfg.samples_per_slot()) +
                                    " samples, got " + std::to_string(sig.samples.size()));
    }
    const UnitaryDft dft(cfg.n_f);
    SlotGrid grid(cfg.n_f, cfg.n_s, GridKind::received);
    const std::size_t sym_len = cfg.n_f + cfg.l_cp;
    for (std::size_t l = 0; l < cfg.n_s; ++l) {
        const std::span<const cplx> body(sig.samples.data() + l * sym_len + cfg.l_cp, cfg.n_f);
        const auto freq = dft.forward(body);
        std::copy(freq.begin(), freq.end(), grid.symbol(l).begin());
    }
    return grid;
}

std::vector<std::uint8_t> random_bits(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> bits(count);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (i % 64 == 0) word = rng();
        bits[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1U);
    }
    return bits;
}

void write_grid_csv(std::ostream& os, const SlotGrid& grid, std::string_view header) {
    os << "# " << header << "\n";
    os << "k,l,re,im\n";
    os << std::setprecision(17);
    for (std::size_t l = 0; l < grid.n_s(); ++l)
        for (std::size_t k = 0; k < grid.n_f(); ++k)
            os << k << ',' << l << ',' << grid(k, l).real() << ',' << grid(k, l).imag() << '\n';
}

}  // namespace mambaest
