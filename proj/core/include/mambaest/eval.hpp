#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mambaest/baseband.hpp"
#include "mambaest/channel.hpp"
#include "mambaest/estimators.hpp"
#include "mambaest/mambanet.hpp"

namespace mambaest {

/// (N_f N_s)^-1 sum |est - truth|^2 for one slot.
double mse_metric(const SlotGrid& est, const SlotGrid& truth);

/// Zero-forcing Y / H_hat on the data REs (|H_hat| floored at 1e-12), QPSK
/// hard decisions, fraction of bits differing from `tx_bits`.
double ber_metric(const SlotGrid& est, const SlotGrid& rx, std::span<const std::uint8_t> tx_bits,
                  const BasebandConfig& cfg);

/// Everything an estimator may look at for one simulated slot. The true
/// channel is present for the perfect-CSI reference only.
struct Trial {
    std::size_t snr_index = 0;
    double snr_db = 0.0;
    std::vector<std::uint8_t> bits;
    SlotGrid tx;
    FrequencyResponse h;
    SlotGrid y;
    PilotLsGrid ls;
};

/// Must be safe to call concurrently.
using EstimateFn = std::function<SlotGrid(const Trial&)>;

struct Estimator {
    std::string name;
    EstimateFn estimate;
};

Estimator ls_estimator(const BasebandConfig& cfg);
/// Wiener matrices are precomputed per SNR with rho = 10^(-snr/10).
Estimator mmse_estimator(const BasebandConfig& cfg, const PowerDelayProfile& pdp, std::span<const double> snr_db);
Estimator perfect_csi_estimator();
Estimator mambanet_estimator(ParameterSet params, const MambaNetConfig& net);

struct SweepConfig {
    std::vector<double> snr_db{5, 10, 15, 20, 25, 30};
    std::size_t n_trials = 5000;
    double fd_max_hz = 97.0;  // each trial draws f_d_max uniformly in [0, fd_max_hz]
    SignalPowerReference power_ref = SignalPowerReference::nonzero_res;
    std::size_t workers = 1;
    bool keep_trials = false;
};

struct SweepRow {
    double snr_db = 0.0;
    std::string estimator;
    double mse = 0.0;
    double ber = 0.0;
    std::size_t n_trials = 0;
};

struct TrialRecord {
    std::size_t snr_index = 0;
    std::size_t trial = 0;
    std::size_t estimator = 0;
    double mse = 0.0;
    double ber = 0.0;
};

struct SweepReport {
    std::vector<std::string> estimators;
    std::vector<SweepRow> rows;  // SNR-major, estimators in the given order
    std::vector<TrialRecord> trials;  // only with keep_trials
    /// Wall time spent inside each estimator, summed over trials. Host
    /// dependent, so never part of the CSV.
    std::vector<double> estimator_seconds;

    const SweepRow& row(std::size_t snr_index, std::size_t estimator) const {
        return rows[snr_index * estimators.size() + estimator];
    }
};

/// Paired Monte Carlo: trial t at SNR index s is generated from its own seed,
/// and every estimator sees the identical slot. Means use compensated sums in
/// trial order, so the report does not depend on `workers`.
SweepReport monte_carlo_sweep(std::span<const Estimator> estimators, const SweepConfig& sweep,
                              const BasebandConfig& cfg, const PowerDelayProfile& pdp, std::uint64_t seed);

/// Generates trial (snr_index, t) exactly as monte_carlo_sweep does.
Trial make_trial(std::size_t snr_index, double snr_db, std::size_t t, double fd_max_hz, SignalPowerReference ref,
                 const BasebandConfig& cfg, const PowerDelayProfile& pdp, std::uint64_t seed);

void write_sweep_csv(std::ostream& os, const SweepReport& report, std::string_view header);
void write_trials_csv(std::ostream& os, const SweepReport& report, std::string_view header);
void write_sweep_table(std::ostream& os, const SweepReport& report);
/// Per-estimator time relative to the first estimator whose name is "ls".
void write_runtime_table(std::ostream& os, const SweepReport& report);

struct ScanTiming {
    std::size_t length = 0;
    double scan_seconds = 0.0;
    double attention_seconds = 0.0;
};

struct ScanScaling {
    std::vector<ScanTiming> rows;
    double scan_slope = 0.0;
    double attention_slope = 0.0;
};

/// Median wall time of scan_sequential (c channels) and of a dense L x L
/// score product Q K^T (head width d) at each length, after a warm-up run.
ScanScaling bench_scan_scaling(std::span<const std::size_t> lengths, std::size_t reps, std::size_t channels = 24,
                               std::size_t head_dim = 2);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

void write_scan_csv(std::ostream& os, const ScanScaling& s, std::string_view header);

}  // namespace mambaest
