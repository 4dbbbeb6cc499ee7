#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "mambaest/mambanet.hpp"
#include "mambaest/rng.hpp"
#include "oracles.hpp"

using namespace mambaest;

namespace {

MambaNetConfig tiny_config() {
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
    return cfg;
}

PilotLsGrid random_ls(std::size_t n_sub, std::size_t n_sym, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    PilotLsGrid ls(n_sub, n_sym);
    for (auto& v : ls.values()) v = {g(rng), g(rng)};
    return ls;
}

Tensor random_tokens(std::size_t length, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(length * 2);
    for (auto& x : v) x = g(rng);
    return Tensor::from({length, 2}, v);
}

void fill(const ParameterSet& params, const std::string& prefix, double value) {
    for (const auto& p : params.items()) {
        if (p.name.rfind(prefix, 0) == 0) std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), value);
    }
}

}  // namespace

TEST(Tokenize, LayoutAndInverse) {
    PilotLsGrid ones(57, 4);
    for (auto& v : ones.values()) v = 1.0;
    const Tensor t = tokenize(ones);
    ASSERT_EQ(t.shape(), (Shape{228, 2}));
    for (std::size_t i = 0; i < 228; ++i) {
        EXPECT_EQ(t.data()[2 * i], 1.0);
        EXPECT_EQ(t.data()[2 * i + 1], 0.0);
    }
    const PilotLsGrid ls = random_ls(57, 4, 1);
    const Tensor tok = tokenize(ls);
    // Pilot-symbol-major: token 57 is the first subcarrier of pilot symbol 1.
    EXPECT_EQ(tok.data()[2 * 57], ls(0, 1).real());
    EXPECT_EQ(tok.data()[2 * 57 + 1], ls(0, 1).imag());
    for (TokenOrder order : {TokenOrder::pilot_symbol_major, TokenOrder::subcarrier_major}) {
        const PilotLsGrid back = detokenize(tokenize(ls, order), 57, 4, order);
        for (std::size_t i = 0; i < ls.values().size(); ++i) EXPECT_EQ(back.values()[i], ls.values()[i]);
    }
}

TEST(MambaNet, DefaultShapes) {
    const MambaNetConfig cfg;
    EXPECT_EQ(cfg.seq_len(), 228u);
    EXPECT_EQ(cfg.n_heads(), 4u);
    const ParameterSet params = init_parameters(cfg, 2);
    const Tensor x = random_tokens(228, 3);
    const ScanInputs s = mamba_gates(x, params, cfg);
    EXPECT_EQ(s.a.shape(), (Shape{228, 24}));
    EXPECT_EQ(s.b.shape(), (Shape{228, 24}));
    EXPECT_EQ(s.g.shape(), (Shape{228, 24}));
    for (double v : s.a.data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    EXPECT_EQ(attention_block(x, params, cfg).shape(), (Shape{228, 2}));
    EXPECT_EQ(mamba_block(x, params, cfg).shape(), (Shape{228, 2}));
    const Tensor out = forward_tensor(x, params, cfg);
    EXPECT_EQ(out.shape(), (Shape{228, 14, 2}));
    for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(MambaNet, GateFixedPointsAtZero) {
    const MambaNetConfig cfg;
    const ParameterSet params = init_parameters(cfg, 4);
    fill(params, "mamba.", 0.0);
    fill(params, "mamba.in_proj.weight", 0.3);
    const ScanInputs s = mamba_gates(Tensor::zeros({228, 2}), params, cfg);
    for (double v : s.a.data()) EXPECT_EQ(v, 0.5);
    for (double v : s.b.data()) EXPECT_EQ(v, 0.0);
    for (double v : s.g.data()) EXPECT_EQ(v, 0.0);
}

TEST(MambaNet, ClosedGateLeavesOutputBias) {
    MambaNetConfig cfg = tiny_config();
    const ParameterSet params = init_parameters(cfg, 5);
    fill(params, "mamba.g_proj", 0.0);
    fill(params, "mamba.out_proj.bias", 0.25);
    // With the gate shut the block reduces to norm(b_out + x).
    const Tensor x = random_tokens(cfg.seq_len(), 6);
    const Tensor got = mamba_block(x, params, cfg);
    const Tensor want = layer_norm(add(x, Tensor::full(x.shape(), 0.25)), params.get("mamba.norm.weight"),
                                   params.get("mamba.norm.bias"), cfg.eps);
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-14);
}

TEST(MambaNet, UniformAttentionAveragesValues) {
    const MambaNetConfig cfg = tiny_config();
    const std::size_t L = cfg.seq_len(), head = L / cfg.n_heads();
    const ParameterSet params = init_parameters(cfg, 7);
    // Zero key rows make every score equal; the identity output projection
    // passes the head outputs straight to the residual sum.
    auto w = params.get("attention.in_proj.weight").mutable_data();
    for (std::size_t r = L; r < 2 * L; ++r)
        for (std::size_t c = 0; c < L; ++c) w[r * L + c] = 0.0;
    fill(params, "attention.in_proj.bias", 0.0);
    auto wo = params.get("attention.out_proj.weight").mutable_data();
    for (std::size_t r = 0; r < L; ++r)
        for (std::size_t c = 0; c < L; ++c) wo[r * L + c] = r == c ? 1.0 : 0.0;
    fill(params, "attention.out_proj.bias", 0.0);
    fill(params, "attention.norm.weight", 1.0);
    const Tensor x = random_tokens(L, 8);
    const Tensor v = slice_rows(matmul(params.get("attention.in_proj.weight"), x), 2 * L, 3 * L);
    const Tensor got = attention_block(x, params, cfg);
    std::vector<double> merged(L * 2);
    for (std::size_t h = 0; h < cfg.n_heads(); ++h)
        for (std::size_t c = 0; c < 2; ++c) {
            double m = 0;
            for (std::size_t r = 0; r < head; ++r) m += v.data()[((h * head) + r) * 2 + c];
            for (std::size_t r = 0; r < head; ++r) merged[((h * head) + r) * 2 + c] = m / static_cast<double>(head);
        }
    const Tensor want = layer_norm(add(Tensor::from({L, 2}, merged), x), params.get("attention.norm.weight"),
                                   params.get("attention.norm.bias"), cfg.eps);
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
}

TEST(MambaNet, ZeroCnnGivesHeadBias) {
    const MambaNetConfig cfg = tiny_config();
    const ParameterSet params = init_parameters(cfg, 9);
    fill(params, "cnn.", 0.0);
    auto b = params.get("cnn.head.bias").mutable_data();
    b[0] = 0.5;
    b[1] = -1.5;
    const Tensor out = refine_head(random_tokens(cfg.seq_len(), 10), params, cfg);
    for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out.data()[i], i % 2 ? -1.5 : 0.5);
}

TEST(MambaNet, ForwardIsDeterministic) {
    const MambaNetConfig cfg = tiny_config();
    const ParameterSet params = init_parameters(cfg, 11);
    const PilotLsGrid ls = random_ls(2, 2, 12);
    const SlotGrid a = forward(ls, params, cfg);
    const SlotGrid b = forward(ls, params, cfg);
    EXPECT_EQ(std::vector<cplx>(a.values().begin(), a.values().end()),
              std::vector<cplx>(b.values().begin(), b.values().end()));
    EXPECT_EQ(init_parameters(cfg, 11).get("cnn.head.weight").data()[3], params.get("cnn.head.weight").data()[3]);
    EXPECT_NE(init_parameters(cfg, 13).get("cnn.head.weight").data()[3], params.get("cnn.head.weight").data()[3]);
}

TEST(MambaNet, GradientsMatchFiniteDifferences) {
    for (ScanMode mode : {ScanMode::sequential, ScanMode::parallel}) {
        MambaNetConfig cfg = tiny_config();
        cfg.scan_mode = mode;
        const ParameterSet params = init_parameters(cfg, 14);
        const Tensor tokens = random_tokens(cfg.seq_len(), 15);
        const Tensor target = random_tokens(cfg.n_f * cfg.n_s, 16).reshape({cfg.n_f, cfg.n_s, 2});
        std::vector<Tensor> leaves;
        for (const auto& p : params.items()) leaves.push_back(p.tensor);
        const auto rep = oracle::check_gradients(
            [&] {
                const Tensor d = sub(forward_tensor(tokens, params, cfg), target);
                return mean(mul(d, d));
            },
            leaves);
        EXPECT_EQ(rep.checked, params.numel());
        EXPECT_LT(rep.max_rel_error, 1e-4);
    }
}

TEST(MambaNet, EveryParameterGetsGradient) {
    const MambaNetConfig cfg = tiny_config();
    const ParameterSet params = init_parameters(cfg, 17);
    const Tensor target = random_tokens(cfg.n_f * cfg.n_s, 18).reshape({cfg.n_f, cfg.n_s, 2});
    params.zero_grad();
    const Tensor d = sub(forward_tensor(random_tokens(cfg.seq_len(), 19), params, cfg), target);
    mean(mul(d, d)).backward();
    for (const auto& p : params.items()) {
        double norm = 0;
        for (double g : p.tensor.grad()) norm += g * g;
        EXPECT_GT(norm, 0.0) << p.name;
    }
}

TEST(ParameterCount, DefaultBreakdown) {
    const auto c = count_parameters(MambaNetConfig{});
    EXPECT_EQ(c.attention_in_projection, 156636u);
    EXPECT_GE(c.total, 250000u);
    EXPECT_LE(c.total, 450000u);
    std::size_t modules = 0;
    for (const auto& [name, n] : c.by_module) modules += n;
    EXPECT_EQ(modules, c.total);
    EXPECT_EQ(c.total, init_parameters(MambaNetConfig{}, 1).numel());
    // Quadratic part: in_proj and out_proj, 3L*L + 3L + L*L + L.
    EXPECT_EQ(c.quadratic, 4u * 228u * 228u + 4u * 228u);
    EXPECT_NEAR(c.quadratic_exponent, 2.0, std::log2(1.01));
}

TEST(ParameterSpecs, UniqueNames) {
    const auto specs = parameter_specs(MambaNetConfig{});
    std::set<std::string> names;
    for (const auto& s : specs) EXPECT_TRUE(names.insert(s.name).second) << s.name;
}
