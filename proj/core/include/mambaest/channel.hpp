#pragma once

#include <string>
#include <vector>

#include "mambaest/baseband.hpp"
#include "mambaest/rng.hpp"

namespace mambaest {

struct PdpTap {
    double delay_ns;
    double power_db;
};

struct PowerDelayProfile {
    std::string name;
    std::vector<PdpTap> taps;

    void validate() const;
    /// Linear tap powers scaled to sum to one.
    std::vector<double> normalized_powers() const;
    /// Tap delays in (fractional) samples of period `sample_period` seconds.
    std::vector<double> delays_in_samples(double sample_period) const;
};

/// 3GPP TS 36.101 Extended Typical Urban profile.
PowerDelayProfile etu_profile();
/// Looks up a built-in profile by case-insensitive name.
PowerDelayProfile builtin_profile(const std::string& name);

struct Path {
    cplx gain;         // a_m
    double delay;      // tau_m in samples
    double doppler;    // f_D,m in Hz
    double phase;      // phi_m in rad
};

struct ChannelRealization {
    std::vector<Path> paths;
    double f_d_max = 0.0;

    /// a_m(t) = a_m exp(-j(2 pi f_D,m t + phi_m)).
    cplx gain_at(const Path& p, double t) const;
};

/// Per-(subcarrier, symbol) gains; a SlotGrid of kind channel.
using FrequencyResponse = SlotGrid;

ChannelRealization sample_realization(const PowerDelayProfile& pdp, double f_d_max, const BasebandConfig& cfg,
                                      Rng& rng);

/// Sampled time-domain taps at time t. Integer delays give a single delta tap;
/// fractional delays spread over all N_f taps through the periodic sinc
/// kernel, scaled so that sqrt(N_f) * DFT(taps) equals the frequency response.
std::vector<cplx> channel_taps(const ChannelRealization& ch, double t, const BasebandConfig& cfg);

/// h[k,l] = sum_m a_m(l T_o) exp(-j 2 pi k tau_m / N_f).
FrequencyResponse freq_response(const ChannelRealization& ch, const BasebandConfig& cfg);

/// Which resource elements define the signal power used for SNR calibration.
enum class SignalPowerReference { nonzero_res, full_grid };

/// sigma_N^2 for a transmitted grid at the requested SNR. Infinite SNR gives 0.
double noise_variance(const SlotGrid& tx, double snr_db,
                      SignalPowerReference ref = SignalPowerReference::nonzero_res);

/// Y = H o X + N with circularly symmetric Gaussian N.
SlotGrid apply_channel_freq(const SlotGrid& tx, const FrequencyResponse& h, double snr_db, Rng& rng,
                            SignalPowerReference ref = SignalPowerReference::nonzero_res);

/// Time-domain multipath for integer delays no longer than the CP. Taps are
/// held for each OFDM symbol (evaluated at its start) and the convolution tail
/// spills into the following symbol. Noise variance is referenced to the mean
/// sample power of the signal.
TimeSignal apply_channel_time(const TimeSignal& sig, const ChannelRealization& ch, double snr_db, Rng& rng,
                              const BasebandConfig& cfg);

void add_awgn(std::span<cplx> samples, double variance, Rng& rng);

}  // namespace mambaest
