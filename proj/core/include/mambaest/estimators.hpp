#pragma once

#include <Eigen/Dense>

#include "mambaest/baseband.hpp"
#include "mambaest/channel.hpp"

namespace mambaest {

/// LS estimates at the pilot REs: (N_f/L_s) pilot subcarriers x N_pilot pilot
/// symbols, pilot-subcarrier index fastest.
class PilotLsGrid {
public:
    PilotLsGrid() = default;
    PilotLsGrid(std::size_t n_sub, std::size_t n_sym) : n_sub_(n_sub), n_sym_(n_sym), values_(n_sub * n_sym) {}

    std::size_t n_sub() const { return n_sub_; }
    std::size_t n_sym() const { return n_sym_; }
    cplx& operator()(std::size_t i, std::size_t j) { return values_[j * n_sub_ + i]; }
    const cplx& operator()(std::size_t i, std::size_t j) const { return values_[j * n_sub_ + i]; }
    std::span<const cplx> values() const { return values_; }
    std::span<cplx> values() { return values_; }

private:
    std::size_t n_sub_ = 0;
    std::size_t n_sym_ = 0;
    std::vector<cplx> values_;
};

/// Frequency-domain channel correlations for one OFDM symbol.
struct CorrelationSet {
    Eigen::MatrixXcd r_cp;  // N_f x (N_f/L_s): E{H_c H_p^H}
    Eigen::MatrixXcd r_pp;  // (N_f/L_s) x (N_f/L_s): E{H_p H_p^H}
    double noise_ratio = 0.0;  // sigma_N^2 / sigma_X^2
};

/// Y/X at every pilot RE. Rejects a zero pilot value.
PilotLsGrid ls_pilot_estimate(const SlotGrid& y, const BasebandConfig& cfg);

/// Samples a full grid (e.g. the true channel) at the pilot REs.
PilotLsGrid sample_at_pilots(const SlotGrid& grid, const BasebandConfig& cfg);

/// Linear interpolation through (xs, ys) at x, extrapolating the end segments.
/// xs must be strictly increasing with at least two points.
cplx interp_linear(std::span<const double> xs, std::span<const cplx> ys, double x);

/// Separable linear interpolation of the pilot grid to the full slot: along
/// frequency first, then along time. Edges are extrapolated from the two
/// nearest pilots.
SlotGrid interpolate_grid(const PilotLsGrid& pilots, const BasebandConfig& cfg);

/// Interpolates per-pilot-symbol columns (N_f x N_pilot) to all N_s symbols.
SlotGrid interpolate_time(const Eigen::MatrixXcd& columns, const BasebandConfig& cfg);

CorrelationSet correlation_from_pdp(const PowerDelayProfile& pdp, const BasebandConfig& cfg);

/// Wiener interpolation matrix r_cp (r_pp + rho I)^-1. At rho = 0 a 1e-12
/// diagonal jitter keeps the rank-deficient r_pp invertible.
Eigen::MatrixXcd wiener_matrix(const CorrelationSet& corr);

/// Linear MMSE per pilot symbol, then linear interpolation over time.
SlotGrid mmse_estimate(const PilotLsGrid& ls, const CorrelationSet& corr, const BasebandConfig& cfg);

/// Same as mmse_estimate with a precomputed wiener_matrix.
SlotGrid mmse_estimate(const PilotLsGrid& ls, const Eigen::MatrixXcd& wiener, const BasebandConfig& cfg);

}  // namespace mambaest
