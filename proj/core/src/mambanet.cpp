#include "mambaest/mambanet.hpp"

#include <cmath>
#include <stdexcept>

#include "mambaest/rng.hpp"

namespace mambaest {

MambaNetConfig MambaNetConfig::for_baseband(const BasebandConfig& bb) {
    MambaNetConfig cfg;
    cfg.n_f = bb.n_f;
    cfg.n_s = bb.n_s;
    cfg.l_s = bb.l_s;
    cfg.n_pilot = bb.n_pilot();
    return cfg;
}

void MambaNetConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument("mambanet." + key + ": " + why);
    };
    if (l_s == 0 || n_f % l_s != 0) fail("l_s", "must divide n_f");
    if (n_pilot == 0) fail("n_pilot", "must be positive");
    if (seq_len() % n_heads() != 0) fail("n_pilot", "sequence length must be divisible by the head count");
    if (c_spread < 2) fail("c_spread", "must be at least 2");
    if (cnn_channels == 0) fail("cnn_channels", "must be positive");
    if (body_kernel == 0) fail("body_kernel", "must be positive");
    if (head_kernel_h == 0 || head_kernel_w == 0) fail("head_kernel", "must be positive");
    if (!(eps > 0)) fail("eps", "must be positive");
}

std::vector<ParameterSpec> parameter_specs(const MambaNetConfig& cfg) {
    const std::size_t L = cfg.seq_len();
    const std::size_t c = cfg.c_spread;
    const std::size_t ch = cfg.cnn_channels;
    const std::size_t k = cfg.body_kernel;
    const std::size_t grid = cfg.pilots_per_symbol() * cfg.n_pilot;

    std::vector<ParameterSpec> specs;
    auto linear = [&](const std::string& name, Shape w, std::size_t fan_in, std::size_t bias) {
        specs.push_back({name + ".weight", std::move(w), fan_in});
        specs.push_back({name + ".bias", {bias}, 0});
    };
    auto norm = [&](const std::string& name, std::size_t n) {
        specs.push_back({name + ".weight", {n}, 0, 1.0});
        specs.push_back({name + ".bias", {n}, 0, 0.0});
    };

    // Projections along the sequence dimension.
    linear("attention.in_proj", {3 * L, L}, L, 3 * L);
    linear("attention.out_proj", {L, L}, L, L);
    norm("attention.norm", L);

    // Projections along the channel dimension.
    linear("mamba.in_proj", {2, 2 * c}, 2, 2 * c);
    linear("mamba.conv_fc", {c, c}, c, c);
    linear("mamba.a_proj", {c, c}, c, c);
    linear("mamba.b_proj", {c, c}, c, c);
    linear("mamba.g_proj", {c, c}, c, c);
    linear("mamba.out_proj", {c, 2}, c, 2);
    norm("mamba.norm", L);

    linear("cnn.conv_in", {k, k, 2, ch}, k * k * 2, ch);
    for (std::size_t i = 0; i < cfg.n_res_blocks; ++i) {
        const std::string block = "cnn.block" + std::to_string(i);
        linear(block + ".conv1", {k, k, ch, ch}, k * k * ch, ch);
        linear(block + ".conv2", {k, k, ch, ch}, k * k * ch, ch);
    }
    norm("cnn.norm", grid);
    linear("cnn.head", {cfg.head_kernel_h, cfg.head_kernel_w, ch, 2}, cfg.head_kernel_h * cfg.head_kernel_w * ch, 2);
    return specs;
}

ParameterSet init_parameters(const MambaNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParameterSet params;
    const auto specs = parameter_specs(cfg);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        const std::size_t n = shape_numel(spec.shape);
        std::vector<double> values(n, spec.init_constant);
        if (spec.fan_in > 0) {
            auto rng = make_rng(seed, {0x1417, i});
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (auto& v : values) v = dist(rng);
        }
        params.add(spec.name, Tensor::from(spec.shape, std::move(values)));
    }
    return params;
}

namespace {

std::size_t token_index(std::size_t i, std::size_t j, std::size_t n_sub, std::size_t n_sym, TokenOrder order) {
    return order == TokenOrder::pilot_symbol_major ? j * n_sub + i : i * n_sym + j;
}

const Tensor& p(const ParameterSet& params, const std::string& name) { return params.get(name); }

}  // namespace

Tensor tokenize(const PilotLsGrid& ls, TokenOrder order) {
    const std::size_t L = ls.n_sub() * ls.n_sym();
    std::vector<double> v(L * 2);
    for (std::size_t j = 0; j < ls.n_sym(); ++j) {
        for (std::size_t i = 0; i < ls.n_sub(); ++i) {
            const std::size_t t = token_index(i, j, ls.n_sub(), ls.n_sym(), order);
            v[2 * t] = ls(i, j).real();
            v[2 * t + 1] = ls(i, j).imag();
        }
    }
    return Tensor::from({L, 2}, std::move(v));
}

PilotLsGrid detokenize(const Tensor& tokens, std::size_t n_sub, std::size_t n_sym, TokenOrder order) {
    if (tokens.shape() != Shape{n_sub * n_sym, 2}) {
        throw std::invalid_argument("detokenize: token shape " + shape_str(tokens.shape()) + " does not match grid");
    }
    PilotLsGrid out(n_sub, n_sym);
    const auto v = tokens.data();
    for (std::size_t j = 0; j < n_sym; ++j) {
        for (std::size_t i = 0; i < n_sub; ++i) {
            const std::size_t t = token_index(i, j, n_sub, n_sym, order);
            out(i, j) = {v[2 * t], v[2 * t + 1]};
        }
    }
    return out;
}

Tensor attention_block(const Tensor& x, const ParameterSet& params, const MambaNetConfig& cfg) {
    const std::size_t L = cfg.seq_len();
    const std::size_t heads = cfg.n_heads();
    const std::size_t block = L / heads;
    if (x.shape() != Shape{L, 2}) {
        throw std::invalid_argument("attention_block: expected [" + std::to_string(L) + "x2] input, got " +
                                    shape_str(x.shape()));
    }

    const Tensor qkv = add_col_bias(matmul(p(params, "attention.in_proj.weight"), x), p(params, "attention.in_proj.bias"));
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(cfg.pilots_per_symbol()));

    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor q = slice_rows(qkv, h * block, (h + 1) * block);
        const Tensor k = slice_rows(qkv, L + h * block, L + (h + 1) * block);
        const Tensor v = slice_rows(qkv, 2 * L + h * block, 2 * L + (h + 1) * block);
        const Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_scale));
        head_out.push_back(matmul(weights, v));
    }
    const Tensor merged = concat_rows(head_out);
    const Tensor projected =
        add_col_bias(matmul(p(params, "attention.out_proj.weight"), merged), p(params, "attention.out_proj.bias"));
    return layer_norm(add(projected, x), p(params, "attention.norm.weight"), p(params, "attention.norm.bias"), cfg.eps);
}

ScanInputs mamba_gates(const Tensor& x, const ParameterSet& params, const MambaNetConfig& cfg) {
    const std::size_t c = cfg.c_spread;
    auto dense = [&](const Tensor& in, const std::string& name) {
        return add_row_bias(matmul(in, p(params, name + ".weight")), p(params, name + ".bias"));
    };
    const Tensor expanded = dense(x, "mamba.in_proj");
    const Tensor u_main = slice_cols(expanded, 0, c);
    const Tensor u_gate = slice_cols(expanded, c, 2 * c);
    const Tensor x_dc = silu(dense(u_main, "mamba.conv_fc"));
    return {sigmoid(dense(x_dc, "mamba.a_proj")), dense(x_dc, "mamba.b_proj"), silu(dense(u_gate, "mamba.g_proj"))};
}

Tensor mamba_block(const Tensor& x, const ParameterSet& params, const MambaNetConfig& cfg) {
    const ScanInputs s = mamba_gates(x, params, cfg);
    const Tensor states = selective_scan(s.a, s.b, cfg.scan_mode);
    const Tensor y = add_row_bias(matmul(mul(s.g, states), p(params, "mamba.out_proj.weight")),
                                  p(params, "mamba.out_proj.bias"));
    return layer_norm(add(y, x), p(params, "mamba.norm.weight"), p(params, "mamba.norm.bias"), cfg.eps);
}

Tensor refine_head(const Tensor& y, const ParameterSet& params, const MambaNetConfig& cfg) {
    const std::size_t n_sub = cfg.pilots_per_symbol();
    const std::size_t n_sym = cfg.n_pilot;
    const std::size_t ch = cfg.cnn_channels;
    if (y.shape() != Shape{n_sub * n_sym, 2}) {
        throw std::invalid_argument("refine_head: expected [" + std::to_string(n_sub * n_sym) + "x2] input, got " +
                                    shape_str(y.shape()));
    }
    // Grid row (i, j) takes the token that tokenize produced from LS entry (i, j).
    std::vector<std::size_t> index(n_sub * n_sym);
    for (std::size_t i = 0; i < n_sub; ++i)
        for (std::size_t j = 0; j < n_sym; ++j) index[i * n_sym + j] = token_index(i, j, n_sub, n_sym, cfg.token_order);
    const Tensor grid = gather_rows(y, index).reshape({n_sub, n_sym, 2});

    auto conv = [&](const Tensor& in, const std::string& name) {
        return conv2d_same(in, p(params, name + ".weight"), p(params, name + ".bias"));
    };
    const Tensor stem = conv(grid, "cnn.conv_in");
    Tensor z = stem;
    for (std::size_t i = 0; i < cfg.n_res_blocks; ++i) {
        const std::string block = "cnn.block" + std::to_string(i);
        z = add(z, conv(relu(conv(z, block + ".conv1")), block + ".conv2"));
    }
    const Tensor merged = add(stem, z).reshape({n_sub * n_sym, ch});
    const Tensor normed =
        layer_norm(merged, p(params, "cnn.norm.weight"), p(params, "cnn.norm.bias"), cfg.eps).reshape({n_sub, n_sym, ch});
    const Tensor upsampled = bilinear_resize(normed, cfg.n_f, cfg.n_s);
    return conv(upsampled, "cnn.head");
}

Tensor forward_tensor(const Tensor& tokens, const ParameterSet& params, const MambaNetConfig& cfg) {
    return refine_head(mamba_block(attention_block(tokens, params, cfg), params, cfg), params, cfg);
}

SlotGrid tensor_to_grid(const Tensor& t) {
    if (t.rank() != 3 || t.dim(2) != 2) throw std::invalid_argument("tensor_to_grid: expected [N_f x N_s x 2]");
    const std::size_t n_f = t.dim(0), n_s = t.dim(1);
    SlotGrid grid(n_f, n_s, GridKind::channel);
    const auto v = t.data();
    for (std::size_t k = 0; k < n_f; ++k)
        for (std::size_t l = 0; l < n_s; ++l) grid(k, l) = {v[(k * n_s + l) * 2], v[(k * n_s + l) * 2 + 1]};
    return grid;
}

std::vector<double> grid_to_channels(const SlotGrid& grid) {
    std::vector<double> v(grid.n_f() * grid.n_s() * 2);
    for (std::size_t k = 0; k < grid.n_f(); ++k) {
        for (std::size_t l = 0; l < grid.n_s(); ++l) {
            v[(k * grid.n_s() + l) * 2] = grid(k, l).real();
            v[(k * grid.n_s() + l) * 2 + 1] = grid(k, l).imag();
        }
    }
    return v;
}

SlotGrid forward(const PilotLsGrid& ls, const ParameterSet& params, const MambaNetConfig& cfg) {
    if (ls.n_sub() != cfg.pilots_per_symbol() || ls.n_sym() != cfg.n_pilot) {
        throw std::invalid_argument("forward: LS grid dimensions do not match the network");
    }
    NoGradGuard no_grad;
    return tensor_to_grid(forward_tensor(tokenize(ls, cfg.token_order), params, cfg));
}

namespace {

ParameterCount count_specs(const std::vector<ParameterSpec>& specs) {
    ParameterCount out;
    for (const auto& s : specs) {
        const std::size_t n = shape_numel(s.shape);
        out.total += n;
        out.by_module[s.name.substr(0, s.name.find('.'))] += n;
        if (s.name.rfind("attention.in_proj.", 0) == 0) out.attention_in_projection += n;
        if (s.name.rfind("attention.in_proj.", 0) == 0 || s.name.rfind("attention.out_proj.", 0) == 0) {
            out.quadratic += n;
        }
    }
    return out;
}

}  // namespace

ParameterCount count_parameters(const MambaNetConfig& cfg) {
    ParameterCount out = count_specs(parameter_specs(cfg));
    MambaNetConfig doubled = cfg;
    doubled.n_f *= 2;
    const ParameterCount bigger = count_specs(parameter_specs(doubled));
    out.quadratic_exponent =
        std::log2(static_cast<double>(bigger.quadratic) / static_cast<double>(out.quadratic));
    return out;
}

ParameterCount count_parameters(const ParameterSet& params, const MambaNetConfig& cfg) {
    std::vector<ParameterSpec> specs;
    for (const auto& prm : params.items()) specs.push_back({prm.name, prm.tensor.shape(), 0});
    ParameterCount out = count_specs(specs);
    out.quadratic_exponent = count_parameters(cfg).quadratic_exponent;
    return out;
}

}  // namespace mambaest
