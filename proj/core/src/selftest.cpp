#include "mambaest/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <numbers>
#include <ostream>

#include "mambaest/baseband.hpp"
#include "mambaest/channel.hpp"
#include "mambaest/dft.hpp"
#include "mambaest/eval.hpp"
#include "mambaest/mambanet.hpp"
#include "mambaest/rng.hpp"
#include "mambaest/scan.hpp"
#include "mambaest/training.hpp"

namespace mambaest {

namespace {

// A check returns an empty string on success or a failure description.
using Check = std::function<std::string()>;

std::string describe(const char* what, double value, double limit) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s = %.3e (limit %.1e)", what, value, limit);
    return buf;
}

std::vector<cplx> random_complex(std::size_t n, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<cplx> v(n);
    for (auto& x : v) x = {g(rng), g(rng)};
    return v;
}

std::string check_dft() {
    Rng rng(11);
    for (std::size_t n : {1u, 7u, 48u, 228u, 256u}) {
        const auto x = random_complex(n, rng);
        UnitaryDft dft(n);
        const auto y = dft.forward(x);
        const auto back = dft.inverse(y);
        double ex = 0, ey = 0, err = 0;
        for (std::size_t i = 0; i < n; ++i) {
            ex += std::norm(x[i]);
            ey += std::norm(y[i]);
            err = std::max(err, std::abs(back[i] - x[i]));
        }
        if (std::abs(ex - ey) > 1e-12 * ex) return describe("energy mismatch", std::abs(ex - ey) / ex, 1e-12);
        if (err > 1e-12) return describe("round-trip error", err, 1e-12);
    }
    return {};
}

std::string check_softmax() {
    Rng rng(12);
    std::normal_distribution<double> g(0.0, 5.0);
    std::vector<double> v(16 * 9);
    for (auto& x : v) x = g(rng);
    const Tensor s = softmax_rows(Tensor::from({16, 9}, v));
    for (std::size_t r = 0; r < 16; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 9; ++c) sum += s.data()[r * 9 + c];
        if (std::abs(sum - 1.0) > 1e-12) return describe("row sum error", std::abs(sum - 1.0), 1e-12);
    }
    return {};
}

std::string check_scan() {
    Rng rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0), n(-1.0, 1.0);
    for (std::size_t length : {1u, 2u, 3u, 64u, 228u}) {
        const std::size_t c = 3;
        std::vector<double> a(length * c), b(length * c), hs(length * c), hp(length * c);
        for (auto& x : a) x = u(rng);
        for (auto& x : b) x = n(rng);
        scan_sequential(a, b, length, c, hs);
        scan_parallel(a, b, length, c, hp);
        for (std::size_t i = 0; i < hs.size(); ++i) {
            if (std::abs(hs[i] - hp[i]) > 1e-10) return describe("parallel vs sequential", std::abs(hs[i] - hp[i]), 1e-10);
        }
    }
    return {};
}

std::string check_qpsk_ofdm() {
    BasebandConfig cfg;
    const auto bits = random_bits(cfg.bits_per_slot(), 14);
    const SlotGrid tx = build_slot(qpsk_modulate(bits), cfg);
    const SlotGrid rx = ofdm_demodulate(ofdm_modulate(tx, cfg), cfg);
    double err = 0;
    for (std::size_t i = 0; i < tx.values().size(); ++i) err = std::max(err, std::abs(tx.values()[i] - rx.values()[i]));
    if (err > 1e-12) return describe("OFDM round-trip error", err, 1e-12);
    if (qpsk_demodulate(extract_data(rx, cfg)) != bits) return "QPSK round trip changed bits";
    return {};
}

std::string check_perfect_csi() {
    BasebandConfig cfg;
    const auto pdp = etu_profile();
    for (std::size_t t = 0; t < 10; ++t) {
        Rng rng = make_rng(15, {t});
        const auto ch = sample_realization(pdp, 97.0, cfg, rng);
        const auto bits = random_bits(cfg.bits_per_slot(), rng());
        const SlotGrid tx = build_slot(qpsk_modulate(bits), cfg);
        const auto h = freq_response(ch, cfg);
        const SlotGrid y = apply_channel_freq(tx, h, std::numeric_limits<double>::infinity(), rng);
        const double ber = ber_metric(h, y, bits, cfg);
        if (ber != 0.0) return describe("noiseless perfect-CSI BER", ber, 0.0);
    }
    return {};
}

std::string check_time_freq() {
    BasebandConfig cfg;
    Rng rng(16);
    ChannelRealization ch;
    const auto g = random_complex(3, rng);
    const double delays[] = {0.0, 3.0, 11.0};
    for (int m = 0; m < 3; ++m) ch.paths.push_back({g[m], delays[m], 0.0, 0.3 * m});
    const auto bits = random_bits(cfg.bits_per_slot(), 17);
    const SlotGrid tx = build_slot(qpsk_modulate(bits), cfg);
    const double inf = std::numeric_limits<double>::infinity();
    const SlotGrid yf = apply_channel_freq(tx, freq_response(ch, cfg), inf, rng);
    const SlotGrid yt = ofdm_demodulate(apply_channel_time(ofdm_modulate(tx, cfg), ch, inf, rng, cfg), cfg);
    double err = 0;
    for (std::size_t i = 0; i < yf.values().size(); ++i) err = std::max(err, std::abs(yf.values()[i] - yt.values()[i]));
    if (err > 1e-9) return describe("time vs frequency pathway", err, 1e-9);
    return {};
}

std::string check_estimators() {
    BasebandConfig cfg;
    const auto pdp = etu_profile();
    const double snr[] = {10.0};
    const Estimator ests[] = {ls_estimator(cfg), mmse_estimator(cfg, pdp, snr)};
    SweepConfig sweep;
    sweep.snr_db = {10.0};
    sweep.n_trials = 50;
    const auto report = monte_carlo_sweep(ests, sweep, cfg, pdp, 18);
    if (!(report.row(0, 1).mse <= report.row(0, 0).mse)) return "MMSE worse than LS at 10 dB";
    const Trial t = make_trial(0, std::numeric_limits<double>::infinity(), 0, 97.0,
                               SignalPowerReference::nonzero_res, cfg, pdp, 19);
    const PilotLsGrid truth = sample_at_pilots(t.h, cfg);
    for (std::size_t i = 0; i < truth.values().size(); ++i) {
        if (std::abs(truth.values()[i] - t.ls.values()[i]) > 1e-12) return "noiseless LS differs from the channel";
    }
    return {};
}

std::string check_huber_adam() {
    const double h = huber_loss(Tensor::from({1}, {2.0}), Tensor::from({1}, {0.0}), 1.0).item();
    if (std::abs(h - 1.5) > 1e-15) return describe("huber(2, delta 1) - 1.5", h - 1.5, 1e-15);
    ParameterSet p;
    p.add("w", Tensor::from({2}, {1.0, -1.0}));
    auto g = p.get("w").grad_accumulator();
    g[0] = 0.3;
    g[1] = -2.0;
    AdamState st;
    adam_step(p, st, 1e-3, 0.0);
    const auto w = p.get("w").data();
    if (std::abs(w[0] - (1.0 - 1e-3)) > 1e-8 || std::abs(w[1] - (-1.0 + 1e-3)) > 1e-8) {
        return "first Adam step is not -lr * sign(g)";
    }
    return {};
}

std::string check_gradients() {
    MambaNetConfig cfg;
    cfg.n_f = 8;
    cfg.n_s = 4;
    cfg.l_s = 4;
    cfg.n_pilot = 2;
    cfg.c_spread = 3;
    cfg.n_res_blocks = 1;
    cfg.cnn_channels = 3;
    cfg.body_kernel = 3;
    cfg.head_kernel_h = 4;
    cfg.head_kernel_w = 3;
    const ParameterSet params = init_parameters(cfg, 20);
    Rng rng(21);
    PilotLsGrid ls(cfg.pilots_per_symbol(), cfg.n_pilot);
    for (auto& v : ls.values()) v = random_complex(1, rng)[0];
    std::vector<double> label(cfg.n_f * cfg.n_s * 2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : label) v = gauss(rng);
    const Tensor target = Tensor::from({cfg.n_f, cfg.n_s, 2}, label);
    auto loss = [&] { return huber_loss(forward_tensor(tokenize(ls), params, cfg), target, 1.0); };

    params.zero_grad();
    loss().backward();
    const double step = 1e-6;
    double worst = 0;
    for (const auto& p : params.items()) {
        const auto grad = p.tensor.grad();
        auto w = p.tensor.mutable_data();
        for (std::size_t i = 0; i < w.size(); i += std::max<std::size_t>(1, w.size() / 3)) {
            const double orig = w[i];
            w[i] = orig + step;
            const double up = loss().item();
            w[i] = orig - step;
            const double dn = loss().item();
            w[i] = orig;
            const double fd = (up - dn) / (2 * step);
            const double rel = std::abs(fd - grad[i]) / std::max(1e-6, std::abs(fd) + std::abs(grad[i]));
            worst = std::max(worst, rel);
        }
    }
    if (worst > 1e-4) return describe("worst relative gradient error", worst, 1e-4);
    return {};
}

std::string check_param_count() {
    const auto count = count_parameters(MambaNetConfig{});
    if (count.attention_in_projection != 156636) {
        return "attention in-projection count " + std::to_string(count.attention_in_projection);
    }
    if (count.total < 250000 || count.total > 450000) return "total count " + std::to_string(count.total);
    return {};
}

}  // namespace

std::vector<SelftestResult> run_selftests(std::ostream* log) {
    const std::vector<std::pair<std::string, Check>> checks = {
        {"dft_unitary_roundtrip", check_dft},
        {"softmax_rows_normalized", check_softmax},
        {"scan_parallel_matches_sequential", check_scan},
        {"qpsk_ofdm_roundtrip", check_qpsk_ofdm},
        {"noiseless_perfect_csi_ber_zero", check_perfect_csi},
        {"time_freq_pathways_agree", check_time_freq},
        {"ls_mmse_sanity", check_estimators},
        {"huber_and_adam_hand_values", check_huber_adam},
        {"mambanet_gradients_match_finite_differences", check_gradients},
        {"parameter_count", check_param_count},
    };
    std::vector<SelftestResult> results;
    for (const auto& [name, fn] : checks) {
        SelftestResult r{name, false, {}};
        try {
            r.detail = fn();
            r.passed = r.detail.empty();
        } catch (const std::exception& e) {
            r.detail = std::string("exception: ") + e.what();
        }
        if (log) *log << (r.passed ? "PASS " : "FAIL ") << r.name << (r.passed ? "" : "  " + r.detail) << '\n';
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace mambaest
