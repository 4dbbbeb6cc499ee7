#include "mambaest/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "mambaest/parallel.hpp"
#include "mambaest/rng.hpp"
#include "mambaest/scan.hpp"

namespace mambaest {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double stable_mean(const std::vector<double>& v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
        const double t = s + x;
        c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    return v.empty() ? 0.0 : (s + c) / static_cast<double>(v.size());
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double mse_metric(const SlotGrid& est, const SlotGrid& truth) {
    if (est.n_f() != truth.n_f() || est.n_s() != truth.n_s()) {
        throw std::invalid_argument("mse_metric: grid dimensions differ");
    }
    const auto a = est.values();
    const auto b = truth.values();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double ber_metric(const SlotGrid& est, const SlotGrid& rx, std::span<const std::uint8_t> tx_bits,
                  const BasebandConfig& cfg) {
    if (est.n_f() != rx.n_f() || est.n_s() != rx.n_s()) {
        throw std::invalid_argument("ber_metric: grid dimensions differ");
    }
    const auto y = extract_data(rx, cfg);
    const auto h = extract_data(est, cfg);
    if (tx_bits.size() != 2 * y.size()) throw std::invalid_argument("ber_metric: bit count does not match the grid");
    std::vector<cplx> x(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        cplx hh = h[i];
        const double mag = std::abs(hh);
        if (mag < 1e-12) hh = mag > 0 ? hh * (1e-12 / mag) : cplx(1e-12, 0.0);
        x[i] = y[i] / hh;
    }
    const auto bits = qpsk_demodulate(x);
    std::size_t errors = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) errors += bits[i] != tx_bits[i];
    return bits.empty() ? 0.0 : static_cast<double>(errors) / static_cast<double>(bits.size());
}

Estimator ls_estimator(const BasebandConfig& cfg) {
    return {"ls", [cfg](const Trial& t) { return interpolate_grid(t.ls, cfg); }};
}

Estimator mmse_estimator(const BasebandConfig& cfg, const PowerDelayProfile& pdp, std::span<const double> snr_db) {
    CorrelationSet corr = correlation_from_pdp(pdp, cfg);
    std::vector<Eigen::MatrixXcd> wiener;
    for (double snr : snr_db) {
        corr.noise_ratio = std::isinf(snr) && snr > 0 ? 0.0 : std::pow(10.0, -snr / 10.0);
        wiener.push_back(wiener_matrix(corr));
    }
    return {"mmse", [cfg, wiener = std::move(wiener)](const Trial& t) {
                if (t.snr_index >= wiener.size()) throw std::out_of_range("mmse estimator: SNR index out of range");
                return mmse_estimate(t.ls, wiener[t.snr_index], cfg);
            }};
}

Estimator perfect_csi_estimator() {
    return {"perfect", [](const Trial& t) { return t.h; }};
}

Estimator mambanet_estimator(ParameterSet params, const MambaNetConfig& net) {
    return {"mambanet", [params = std::move(params), net](const Trial& t) { return forward(t.ls, params, net); }};
}

Trial make_trial(std::size_t snr_index, double snr_db, std::size_t t, double fd_max_hz, SignalPowerReference ref,
                 const BasebandConfig& cfg, const PowerDelayProfile& pdp, std::uint64_t seed) {
    Rng rng = make_rng(seed, {0xe7a1, snr_index, t});
    Trial trial;
    trial.snr_index = snr_index;
    trial.snr_db = snr_db;
    const double fd = std::uniform_real_distribution<double>(0.0, fd_max_hz)(rng);
    const ChannelRealization ch = sample_realization(pdp, fd, cfg, rng);
    trial.bits = random_bits(cfg.bits_per_slot(), rng());
    trial.tx = build_slot(qpsk_modulate(trial.bits), cfg);
    trial.h = freq_response(ch, cfg);
    trial.y = apply_channel_freq(trial.tx, trial.h, snr_db, rng, ref);
    trial.ls = ls_pilot_estimate(trial.y, cfg);
    return trial;
}

SweepReport monte_carlo_sweep(std::span<const Estimator> estimators, const SweepConfig& sweep,
                              const BasebandConfig& cfg, const PowerDelayProfile& pdp, std::uint64_t seed) {
    cfg.validate();
    pdp.validate();
    if (sweep.n_trials == 0) throw std::invalid_argument("eval.n_trials: must be positive");
    if (sweep.snr_db.empty()) throw std::invalid_argument("eval.snr_db: must list at least one SNR");
    if (estimators.empty()) throw std::invalid_argument("monte_carlo_sweep: no estimators");

    const std::size_t n_snr = sweep.snr_db.size();
    const std::size_t n_est = estimators.size();
    const std::size_t n_jobs = n_snr * sweep.n_trials;
    std::vector<double> mse(n_jobs * n_est), ber(n_jobs * n_est), secs(n_jobs * n_est);

    parallel_for(n_jobs, sweep.workers, [&](std::size_t job) {
        const std::size_t s = job / sweep.n_trials;
        const std::size_t t = job % sweep.n_trials;
        const Trial trial = make_trial(s, sweep.snr_db[s], t, sweep.fd_max_hz, sweep.power_ref, cfg, pdp, seed);
        for (std::size_t e = 0; e < n_est; ++e) {
            const auto t0 = Clock::now();
            const SlotGrid est = estimators[e].estimate(trial);
            secs[job * n_est + e] = seconds_since(t0);
            mse[job * n_est + e] = mse_metric(est, trial.h);
            ber[job * n_est + e] = ber_metric(est, trial.y, trial.bits, cfg);
        }
    });

    SweepReport report;
    for (const auto& e : estimators) report.estimators.push_back(e.name);
    report.estimator_seconds.assign(n_est, 0.0);
    std::vector<double> col_mse(sweep.n_trials), col_ber(sweep.n_trials);
    for (std::size_t s = 0; s < n_snr; ++s) {
        for (std::size_t e = 0; e < n_est; ++e) {
            for (std::size_t t = 0; t < sweep.n_trials; ++t) {
                const std::size_t i = (s * sweep.n_trials + t) * n_est + e;
                col_mse[t] = mse[i];
                col_ber[t] = ber[i];
                report.estimator_seconds[e] += secs[i];
                if (sweep.keep_trials) report.trials.push_back({s, t, e, mse[i], ber[i]});
            }
            report.rows.push_back({sweep.snr_db[s], estimators[e].name, stable_mean(col_mse), stable_mean(col_ber),
                                   sweep.n_trials});
        }
    }
    return report;
}

void write_sweep_csv(std::ostream& os, const SweepReport& report, std::string_view header) {
    os << "# " << header << '\n';
    os << "snr_db,estimator,mse,ber,n_trials\n";
    for (const auto& r : report.rows) {
        os << fmt("%g", r.snr_db) << ',' << r.estimator << ',' << fmt("%.12e", r.mse) << ','
           << fmt("%.12e", r.ber) << ',' << r.n_trials << '\n';
    }
}

void write_trials_csv(std::ostream& os, const SweepReport& report, std::string_view header) {
    os << "# " << header << '\n';
    os << "snr_index,trial,estimator,mse,ber\n";
    for (const auto& r : report.trials) {
        os << r.snr_index << ',' << r.trial << ',' << report.estimators[r.estimator] << ','
           << fmt("%.12e", r.mse) << ',' << fmt("%.12e", r.ber) << '\n';
    }
}

void write_sweep_table(std::ostream& os, const SweepReport& report) {
    const std::size_t n_est = report.estimators.size();
    os << std::setw(8) << "SNR[dB]";
    for (const auto& name : report.estimators) os << std::setw(14) << (name + " MSE");
    for (const auto& name : report.estimators) os << std::setw(14) << (name + " BER");
    os << '\n';
    for (std::size_t s = 0; n_est && s < report.rows.size() / n_est; ++s) {
        os << std::setw(8) << fmt("%g", report.row(s, 0).snr_db);
        for (std::size_t e = 0; e < n_est; ++e) os << std::setw(14) << fmt("%.4e", report.row(s, e).mse);
        for (std::size_t e = 0; e < n_est; ++e) os << std::setw(14) << fmt("%.4e", report.row(s, e).ber);
        os << '\n';
    }
}

void write_runtime_table(std::ostream& os, const SweepReport& report) {
    const auto it = std::find(report.estimators.begin(), report.estimators.end(), "ls");
    const double base = it == report.estimators.end()
                            ? 0.0
                            : report.estimator_seconds[static_cast<std::size_t>(it - report.estimators.begin())];
    os << "runtime on this host (relative to ls; not comparable across hardware)\n";
    for (std::size_t e = 0; e < report.estimators.size(); ++e) {
        os << std::setw(12) << report.estimators[e] << std::setw(14) << fmt("%.4f s", report.estimator_seconds[e]);
        if (base > 0) os << std::setw(12) << fmt("x%.2f", report.estimator_seconds[e] / base);
        os << '\n';
    }
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

ScanScaling bench_scan_scaling(std::span<const std::size_t> lengths, std::size_t reps, std::size_t channels,
                               std::size_t head_dim) {
    if (reps == 0) throw std::invalid_argument("bench_scan_scaling: reps must be positive");
    ScanScaling out;
    Rng rng(0x5ca9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    volatile double sink = 0.0;
    for (std::size_t length : lengths) {
        std::vector<double> a(length * channels), b(length * channels), h(length * channels);
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng);
        std::vector<double> q(length * head_dim), k(length * head_dim), row(length);
        for (auto& v : q) v = u(rng);
        for (auto& v : k) v = u(rng);

        auto run_scan = [&] { scan_sequential(a, b, length, channels, h); sink = sink + h[length / 2]; };
        auto run_scores = [&] {
            double acc = 0.0;
            for (std::size_t i = 0; i < length; ++i) {
                const double* qi = &q[i * head_dim];
                for (std::size_t j = 0; j < length; ++j) {
                    const double* kj = &k[j * head_dim];
                    double s = 0.0;
                    for (std::size_t d = 0; d < head_dim; ++d) s += qi[d] * kj[d];
                    row[j] = s;
                }
                acc += row[i];
            }
            sink = sink + acc;
        };

        auto time_median = [&](auto&& fn) {
            fn();
            std::vector<double> t(reps);
            for (auto& x : t) {
                const auto t0 = Clock::now();
                fn();
                x = seconds_since(t0);
            }
            return median(std::move(t));
        };
        out.rows.push_back({length, time_median(run_scan), time_median(run_scores)});
    }
    if (out.rows.size() >= 2) {
        std::vector<double> ls, ts, ta;
        for (const auto& r : out.rows) {
            ls.push_back(static_cast<double>(r.length));
            ts.push_back(r.scan_seconds);
            ta.push_back(r.attention_seconds);
        }
        out.scan_slope = loglog_slope(ls, ts);
        out.attention_slope = loglog_slope(ls, ta);
    }
    return out;
}

void write_scan_csv(std::ostream& os, const ScanScaling& s, std::string_view header) {
    os << "# " << header << '\n';
    os << "length,scan_seconds,attention_seconds\n";
    for (const auto& r : s.rows) {
        os << r.length << ',' << fmt("%.6e", r.scan_seconds) << ',' << fmt("%.6e", r.attention_seconds) << '\n';
    }
    os << "# slope scan=" << fmt("%.4f", s.scan_slope) << " attention=" << fmt("%.4f", s.attention_slope) << '\n';
}

}  // namespace mambaest
