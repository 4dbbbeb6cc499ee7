#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mambaest/baseband.hpp"
#include "mambaest/channel.hpp"
#include "mambaest/estimators.hpp"
#include "mambaest/mambanet.hpp"

namespace mambaest {

struct Sample {
    PilotLsGrid input;          // LS estimates at the pilot REs
    std::vector<double> label;  // true channel, N_f x N_s x 2 (real, imag)
    double snr_db = 0.0;
    double f_d_max = 0.0;
};

struct Dataset {
    std::size_t n_f = 0;
    std::size_t n_s = 0;
    std::vector<Sample> samples;
    std::size_t n_train = 0;  // samples [0, n_train) train, the rest validate

    std::span<const Sample> train() const { return {samples.data(), n_train}; }
    std::span<const Sample> validation() const {
        return {samples.data() + n_train, samples.size() - n_train};
    }
};

struct DatasetSpec {
    std::size_t count = 125000;
    double snr_lo_db = 5.0;
    double snr_hi_db = 25.0;
    double fd_max_hz = 97.0;
    double train_fraction = 0.95;
    SignalPowerReference power_ref = SignalPowerReference::nonzero_res;
    /// When set, every sample uses this SNR instead of the uniform draw.
    std::optional<double> snr_override;
};

/// Training split size: round(count * train_fraction), kept inside [1, count].
std::size_t train_split(std::size_t count, double train_fraction);

/// Draws `count` independent slots: SNR and maximum Doppler uniform per
/// sample, a fresh channel realization, random QPSK payload. Deterministic
/// for a given seed regardless of `workers`.
Dataset generate_dataset(const DatasetSpec& spec, const BasebandConfig& cfg, const PowerDelayProfile& pdp,
                         std::uint64_t seed, std::size_t workers = 1);

/// Binary dataset file: magic "MBNDATA1", u32 version, u32 header length,
/// header text (key=value lines), then per sample snr_db, f_d_max, the LS
/// grid as interleaved real/imag (pilot subcarrier fastest) and the label.
void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  const std::map<std::string, std::string>& header);
Dataset load_dataset(const std::filesystem::path& path, std::map<std::string, std::string>* header = nullptr);

/// Mean over elements of 0.5 e^2 (|e| <= delta) or delta (|e| - delta / 2).
Tensor huber_loss(const Tensor& pred, const Tensor& target, double delta);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update from the gradients held by `params`.
/// L2 regularization enters the gradient as l2 * theta.
void adam_step(const ParameterSet& params, AdamState& state, double lr, double l2, const AdamConfig& adam = {});

struct TrainConfig {
    AdamConfig adam;
    double initial_lr = 5e-4;
    std::size_t lr_drop_period = 25;
    double lr_drop_factor = 0.5;
    std::size_t max_epochs = 100;
    std::size_t minibatch = 128;
    double l2 = 1e-7;
    double huber_delta = 1.0;
    std::uint64_t seed = 1;
    /// Threads for gradient and validation passes. Results do not depend on it.
    std::size_t workers = 1;

    /// Step schedule for zero-based epoch index.
    double learning_rate(std::size_t epoch) const;
    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // one-based
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    ParameterSet best;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    double initial_train_loss = 0.0;
    double initial_val_loss = 0.0;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mean Huber loss of the network over `samples`, without recording a graph.
double dataset_loss(const ParameterSet& params, const MambaNetConfig& net, std::span<const Sample> samples,
                    double delta, std::size_t workers = 1);

/// Forward, backward and loss for one minibatch; gradients of the mean loss
/// are accumulated into `params` (which the caller zeroes). Returns the mean loss.
double accumulate_batch_gradients(const ParameterSet& params, const MambaNetConfig& net,
                                  std::span<const Sample* const> batch, double delta);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam over the training split with per-epoch shuffling and a step
/// learning-rate schedule. Keeps the parameters with the lowest validation
/// loss. Throws TrainingDiverged on a non-finite loss.
TrainResult train(ParameterSet params, const MambaNetConfig& net, const Dataset& data, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch = {});

void write_history_csv(std::ostream& os, std::span<const EpochRecord> history, std::string_view header);

}  // namespace mambaest
