#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mambaest/baseband.hpp"
#include "mambaest/estimators.hpp"
#include "mambaest/scan.hpp"
#include "mambaest/tensor.hpp"

namespace mambaest {

/// How the (N_f/L_s) x N_pilot LS grid is flattened into a token sequence.
enum class TokenOrder {
    pilot_symbol_major,  // all pilot subcarriers of pilot symbol 0, then symbol 1, ...
    subcarrier_major,
};

struct MambaNetConfig {
    std::size_t n_f = 228;
    std::size_t n_s = 14;
    std::size_t l_s = 4;
    std::size_t n_pilot = 4;
    std::size_t c_spread = 24;
    std::size_t n_res_blocks = 7;
    std::size_t cnn_channels = 12;
    std::size_t body_kernel = 5;
    std::size_t head_kernel_h = 96;
    std::size_t head_kernel_w = 5;
    double eps = 1e-5;
    TokenOrder token_order = TokenOrder::pilot_symbol_major;
    ScanMode scan_mode = ScanMode::sequential;

    static MambaNetConfig for_baseband(const BasebandConfig& bb);

    std::size_t pilots_per_symbol() const { return n_f / l_s; }
    std::size_t seq_len() const { return n_pilot * pilots_per_symbol(); }
    std::size_t n_heads() const { return n_pilot; }

    void validate() const;
};

/// Gate coefficients of the selective scan, each L x c_spread.
struct ScanInputs {
    Tensor a;
    Tensor b;
    Tensor g;
};

struct ParameterSpec {
    std::string name;
    Shape shape;
    std::size_t fan_in;  // 0 for biases and normalization parameters
    double init_constant = 0.0;
};

/// Every trainable tensor of the estimator, in registration order.
std::vector<ParameterSpec> parameter_specs(const MambaNetConfig& cfg);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit norm gains.
ParameterSet init_parameters(const MambaNetConfig& cfg, std::uint64_t seed);

Tensor tokenize(const PilotLsGrid& ls, TokenOrder order = TokenOrder::pilot_symbol_major);
PilotLsGrid detokenize(const Tensor& tokens, std::size_t n_sub, std::size_t n_sym,
                       TokenOrder order = TokenOrder::pilot_symbol_major);

Tensor attention_block(const Tensor& x, const ParameterSet& params, const MambaNetConfig& cfg);
ScanInputs mamba_gates(const Tensor& x, const ParameterSet& params, const MambaNetConfig& cfg);
Tensor mamba_block(const Tensor& x, const ParameterSet& params, const MambaNetConfig& cfg);
Tensor refine_head(const Tensor& y, const ParameterSet& params, const MambaNetConfig& cfg);

/// Token sequence [L x 2] to the real/imag channel tensor [N_f x N_s x 2].
Tensor forward_tensor(const Tensor& tokens, const ParameterSet& params, const MambaNetConfig& cfg);

/// Full estimate for one slot; runs without recording a graph.
SlotGrid forward(const PilotLsGrid& ls, const ParameterSet& params, const MambaNetConfig& cfg);

/// [N_f x N_s x 2] channel tensor to a complex grid and back.
SlotGrid tensor_to_grid(const Tensor& t);
std::vector<double> grid_to_channels(const SlotGrid& grid);

struct ParameterCount {
    std::size_t total = 0;
    std::map<std::string, std::size_t> by_module;  // attention, mamba, cnn
    std::size_t attention_in_projection = 0;       // W and b of the QKV projection
    std::size_t quadratic = 0;                     // terms growing with L^2
    /// log2 of the quadratic subtotal ratio when N_f doubles.
    double quadratic_exponent = 0.0;
};

ParameterCount count_parameters(const MambaNetConfig& cfg);
ParameterCount count_parameters(const ParameterSet& params, const MambaNetConfig& cfg);

}  // namespace mambaest
