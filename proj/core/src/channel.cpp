#include "mambaest/channel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mambaest {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool is_integer_delay(double tau) { return std::abs(tau - std::round(tau)) < 1e-9; }

}  // namespace

void PowerDelayProfile::validate() const {
    if (taps.empty()) throw std::invalid_argument("pdp '" + name + "': no taps");
    for (std::size_t i = 0; i < taps.size(); ++i) {
        if (taps[i].delay_ns < 0) throw std::invalid_argument("pdp '" + name + "': negative delay");
        if (i > 0 && taps[i].delay_ns < taps[i - 1].delay_ns) {
            throw std::invalid_argument("pdp '" + name + "': delays must be nondecreasing");
        }
        if (!std::isfinite(taps[i].power_db)) throw std::invalid_argument("pdp '" + name + "': non-finite power");
    }
}

std::vector<double> PowerDelayProfile::normalized_powers() const {
    std::vector<double> p(taps.size());
    double total = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        p[i] = std::pow(10.0, taps[i].power_db / 10.0);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return p;
}

std::vector<double> PowerDelayProfile::delays_in_samples(double sample_period) const {
    std::vector<double> d(taps.size());
    for (std::size_t i = 0; i < taps.size(); ++i) d[i] = taps[i].delay_ns * 1e-9 / sample_period;
    return d;
}

PowerDelayProfile etu_profile() {
    return {"ETU",
            {{0, -1}, {50, -1}, {120, -1}, {200, 0}, {230, 0}, {500, 0}, {1600, -3}, {2300, -5}, {5000, -7}}};
}

PowerDelayProfile builtin_profile(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "etu") return etu_profile();
    throw std::invalid_argument("unknown power delay profile '" + name + "'");
}

cplx ChannelRealization::gain_at(const Path& p, double t) const {
    return p.gain * std::polar(1.0, -(kTwoPi * p.doppler * t + p.phase));
}

ChannelRealization sample_realization(const PowerDelayProfile& pdp, double f_d_max, const BasebandConfig& cfg,
                                      Rng& rng) {
    if (!(f_d_max >= 0.0)) throw std::invalid_argument("sample_realization: f_d_max must be nonnegative");
    const auto powers = pdp.normalized_powers();
    const auto delays = pdp.delays_in_samples(cfg.sample_period());
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);

    ChannelRealization ch;
    ch.f_d_max = f_d_max;
    ch.paths.reserve(powers.size());
    for (std::size_t m = 0; m < powers.size(); ++m) {
        const double g1 = gauss(rng);
        const double g2 = gauss(rng);
        const double sigma = std::sqrt(powers[m]);
        Path p;
        p.gain = sigma * cplx(g1, g2) / std::numbers::sqrt2;
        p.delay = delays[m];
        p.doppler = f_d_max * std::cos(angle(rng));
        p.phase = angle(rng);
        ch.paths.push_back(p);
    }
    return ch;
}

std::vector<cplx> channel_taps(const ChannelRealization& ch, double t, const BasebandConfig& cfg) {
    const std::size_t n = cfg.n_f;
    const double nd = static_cast<double>(n);
    std::vector<cplx> taps(n);
    for (const auto& p : ch.paths) {
        const cplx a = ch.gain_at(p, t);
        if (is_integer_delay(p.delay)) {
            const auto d = static_cast<std::size_t>(std::llround(p.delay)) % n;
            taps[d] += a;
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(i) - p.delay;
            const double kernel = std::sin(std::numbers::pi * d) / std::sin(std::numbers::pi * d / nd);
            taps[i] += a / nd * std::polar(kernel, std::numbers::pi * (nd - 1.0) * d / nd);
        }
    }
    return taps;
}

FrequencyResponse freq_response(const ChannelRealization& ch, const BasebandConfig& cfg) {
    FrequencyResponse h(cfg.n_f, cfg.n_s, GridKind::channel);
    const double to = cfg.symbol_period();
    std::vector<cplx> ramp(cfg.n_f);
    for (const auto& p : ch.paths) {
        for (std::size_t k = 0; k < cfg.n_f; ++k) {
            ramp[k] = std::polar(1.0, -kTwoPi * static_cast<double>(k) * p.delay / static_cast<double>(cfg.n_f));
        }
        for (std::size_t l = 0; l < cfg.n_s; ++l) {
            const cplx a = ch.gain_at(p, static_cast<double>(l) * to);
            auto col = h.symbol(l);
            for (std::size_t k = 0; k < cfg.n_f; ++k) col[k] += a * ramp[k];
        }
    }
    return h;
}

double noise_variance(const SlotGrid& tx, double snr_db, SignalPowerReference ref) {
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    double power = 0.0;
    std::size_t count = 0;
    for (const auto& x : tx.values()) {
        const double p = std::norm(x);
        if (ref == SignalPowerReference::full_grid || p > 0.0) {
            power += p;
            ++count;
        }
    }
    if (count == 0) return 0.0;
    return power / static_cast<double>(count) * std::pow(10.0, -snr_db / 10.0);
}

void add_awgn(std::span<cplx> samples, double variance, Rng& rng) {
    if (variance <= 0.0) return;
    std::normal_distribution<double> gauss(0.0, std::sqrt(variance / 2.0));
    for (auto& s : samples) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        s += cplx(re, im);
    }
}

SlotGrid apply_channel_freq(const SlotGrid& tx, const FrequencyResponse& h, double snr_db, Rng& rng,
                            SignalPowerReference ref) {
    if (tx.n_f() != h.n_f() || tx.n_s() != h.n_s()) {
        throw std::invalid_argument("apply_channel_freq: grid and channel dimensions differ");
    }
    SlotGrid y(tx.n_f(), tx.n_s(), GridKind::received);
    auto yv = y.values();
    const auto xv = tx.values();
    const auto hv = h.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = hv[i] * xv[i];
    add_awgn(yv, noise_variance(tx, snr_db, ref), rng);
    return y;
}

TimeSignal apply_channel_time(const TimeSignal& sig, const ChannelRealization& ch, double snr_db, Rng& rng,
                              const BasebandConfig& cfg) {
    if (sig.samples.size() != cfg.samples_per_slot()) {
        throw std::invalid_argument("apply_channel_time: signal length does not match config");
    }
    std::vector<std::size_t> delays;
    for (const auto& p : ch.paths) {
        if (!is_integer_delay(p.delay)) {
            throw std::invalid_argument("apply_channel_time: fractional delay " + std::to_string(p.delay));
        }
        const auto d = static_cast<std::size_t>(std::llround(p.delay));
        if (d > cfg.l_cp) {
            throw std::invalid_argument("apply_channel_time: delay " + std::to_string(d) + " exceeds CP length " +
                                        std::to_string(cfg.l_cp));
        }
        delays.push_back(d);
    }

    const std::size_t sym_len = cfg.n_f + cfg.l_cp;
    const std::size_t total = sig.samples.size();
    TimeSignal out{std::vector<cplx>(total), sig.sample_period};
    for (std::size_t l = 0; l < cfg.n_s; ++l) {
        const double t = static_cast<double>(l) * cfg.symbol_period();
        for (std::size_t m = 0; m < ch.paths.size(); ++m) {
            const cplx a = ch.gain_at(ch.paths[m], t);
            for (std::size_t i = 0; i < sym_len; ++i) {
                const std::size_t dst = l * sym_len + i + delays[m];
                if (dst < total) out.samples[dst] += a * sig.samples[l * sym_len + i];
            }
        }
    }

    if (!(std::isinf(snr_db) && snr_db > 0)) {
        double power = 0.0;
        for (const auto& s : sig.samples) power += std::norm(s);
        power /= static_cast<double>(total);
        add_awgn(out.samples, power * std::pow(10.0, -snr_db / 10.0), rng);
    }
    return out;
}

}  // namespace mambaest
