#include "mambaest/estimators.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mambaest {

PilotLsGrid ls_pilot_estimate(const SlotGrid& y, const BasebandConfig& cfg) {
    if (cfg.pilot_value == cplx(0.0, 0.0)) throw std::invalid_argument("ls_pilot_estimate: pilot value is zero");
    if (y.n_f() != cfg.n_f || y.n_s() != cfg.n_s) {
        throw std::invalid_argument("ls_pilot_estimate: grid dimensions do not match config");
    }
    PilotLsGrid out(cfg.pilots_per_symbol(), cfg.n_pilot());
    for (std::size_t j = 0; j < cfg.n_pilot(); ++j) {
        for (std::size_t i = 0; i < cfg.pilots_per_symbol(); ++i) {
            out(i, j) = y(cfg.pilot_subcarrier(i), cfg.pilot_symbols[j]) / cfg.pilot_value;
        }
    }
    return out;
}

PilotLsGrid sample_at_pilots(const SlotGrid& grid, const BasebandConfig& cfg) {
    PilotLsGrid out(cfg.pilots_per_symbol(), cfg.n_pilot());
    for (std::size_t j = 0; j < cfg.n_pilot(); ++j)
        for (std::size_t i = 0; i < cfg.pilots_per_symbol(); ++i)
            out(i, j) = grid(cfg.pilot_subcarrier(i), cfg.pilot_symbols[j]);
    return out;
}

cplx interp_linear(std::span<const double> xs, std::span<const cplx> ys, double x) {
    const std::size_t n = xs.size();
    std::size_t seg = 0;
    if (x >= xs[n - 1]) {
        seg = n - 2;
    } else {
        while (seg + 2 < n && x >= xs[seg + 1]) ++seg;
    }
    const double t = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
    return ys[seg] + t * (ys[seg + 1] - ys[seg]);
}

namespace {

std::vector<double> pilot_subcarrier_positions(const BasebandConfig& cfg) {
    std::vector<double> xs(cfg.pilots_per_symbol());
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(cfg.pilot_subcarrier(i));
    return xs;
}

std::vector<double> pilot_symbol_positions(const BasebandConfig& cfg) {
    return {cfg.pilot_symbols.begin(), cfg.pilot_symbols.end()};
}

}  // namespace

SlotGrid interpolate_time(const Eigen::MatrixXcd& columns, const BasebandConfig& cfg) {
    if (static_cast<std::size_t>(columns.rows()) != cfg.n_f ||
        static_cast<std::size_t>(columns.cols()) != cfg.n_pilot()) {
        throw std::invalid_argument("interpolate_time: expected N_f x N_pilot columns");
    }
    if (cfg.n_pilot() < 2) throw std::invalid_argument("interpolate_time: need at least two pilot symbols");
    const auto ts = pilot_symbol_positions(cfg);
    SlotGrid out(cfg.n_f, cfg.n_s, GridKind::channel);
    std::vector<cplx> row(cfg.n_pilot());
    for (std::size_t k = 0; k < cfg.n_f; ++k) {
        for (std::size_t j = 0; j < cfg.n_pilot(); ++j) row[j] = columns(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
        for (std::size_t l = 0; l < cfg.n_s; ++l) out(k, l) = interp_linear(ts, row, static_cast<double>(l));
    }
    return out;
}

SlotGrid interpolate_grid(const PilotLsGrid& pilots, const BasebandConfig& cfg) {
    if (pilots.n_sub() != cfg.pilots_per_symbol() || pilots.n_sym() != cfg.n_pilot()) {
        throw std::invalid_argument("interpolate_grid: pilot grid dimensions do not match config");
    }
    if (pilots.n_sub() < 2 || pilots.n_sym() < 2) {
        throw std::invalid_argument("interpolate_grid: need at least two pilots along each axis");
    }
    const auto ks = pilot_subcarrier_positions(cfg);
    Eigen::MatrixXcd columns(static_cast<Eigen::Index>(cfg.n_f), static_cast<Eigen::Index>(cfg.n_pilot()));
    std::vector<cplx> col(pilots.n_sub());
    for (std::size_t j = 0; j < cfg.n_pilot(); ++j) {
        for (std::size_t i = 0; i < pilots.n_sub(); ++i) col[i] = pilots(i, j);
        for (std::size_t k = 0; k < cfg.n_f; ++k) {
            columns(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
                interp_linear(ks, col, static_cast<double>(k));
        }
    }
    return interpolate_time(columns, cfg);
}

CorrelationSet correlation_from_pdp(const PowerDelayProfile& pdp, const BasebandConfig& cfg) {
    const auto powers = pdp.normalized_powers();
    const auto delays = pdp.delays_in_samples(cfg.sample_period());
    const auto n = static_cast<Eigen::Index>(cfg.n_f);
    const auto p = static_cast<Eigen::Index>(cfg.pilots_per_symbol());

    // E{H(k) H*(k')} depends only on k - k'.
    auto corr = [&](double dk) {
        cplx s = 0.0;
        for (std::size_t m = 0; m < powers.size(); ++m) {
            s += powers[m] * std::polar(1.0, -2.0 * std::numbers::pi * dk * delays[m] / static_cast<double>(cfg.n_f));
        }
        return s;
    };

    CorrelationSet out;
    out.r_cp.resize(n, p);
    out.r_pp.resize(p, p);
    for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const auto kp = static_cast<double>(cfg.pilot_subcarrier(static_cast<std::size_t>(j)));
            out.r_cp(k, j) = corr(static_cast<double>(k) - kp);
        }
    }
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) {
            out.r_pp(i, j) = corr(static_cast<double>(cfg.pilot_subcarrier(static_cast<std::size_t>(i))) -
                                  static_cast<double>(cfg.pilot_subcarrier(static_cast<std::size_t>(j))));
        }
    }
    return out;
}

Eigen::MatrixXcd wiener_matrix(const CorrelationSet& corr) {
    const auto p = corr.r_pp.rows();
    if (corr.r_pp.cols() != p || corr.r_cp.cols() != p) {
        throw std::invalid_argument("wiener_matrix: correlation dimensions do not conform");
    }
    if (corr.noise_ratio < 0) throw std::invalid_argument("wiener_matrix: negative noise ratio");
    const double rho = corr.noise_ratio > 0 ? corr.noise_ratio : 1e-12;
    Eigen::MatrixXcd m = corr.r_pp;
    m.diagonal().array() += rho;
    // W = r_cp M^-1  <=>  M^H W^H = r_cp^H, and M is Hermitian.
    Eigen::MatrixXcd wh = m.ldlt().solve(corr.r_cp.adjoint());
    return wh.adjoint();
}

SlotGrid mmse_estimate(const PilotLsGrid& ls, const Eigen::MatrixXcd& wiener, const BasebandConfig& cfg) {
    if (static_cast<std::size_t>(wiener.cols()) != ls.n_sub() || static_cast<std::size_t>(wiener.rows()) != cfg.n_f ||
        ls.n_sym() != cfg.n_pilot()) {
        throw std::invalid_argument("mmse_estimate: dimension mismatch between LS grid, filter and config");
    }
    Eigen::MatrixXcd hls(static_cast<Eigen::Index>(ls.n_sub()), static_cast<Eigen::Index>(ls.n_sym()));
    for (std::size_t j = 0; j < ls.n_sym(); ++j)
        for (std::size_t i = 0; i < ls.n_sub(); ++i)
            hls(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ls(i, j);
    const Eigen::MatrixXcd columns = wiener * hls;
    return interpolate_time(columns, cfg);
}

SlotGrid mmse_estimate(const PilotLsGrid& ls, const CorrelationSet& corr, const BasebandConfig& cfg) {
    return mmse_estimate(ls, wiener_matrix(corr), cfg);
}

}  // namespace mambaest
