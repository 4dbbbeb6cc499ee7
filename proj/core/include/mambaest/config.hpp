#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mambaest/baseband.hpp"
#include "mambaest/channel.hpp"
#include "mambaest/eval.hpp"
#include "mambaest/mambanet.hpp"
#include "mambaest/training.hpp"

namespace mambaest {

/// Invalid configuration; the message starts with the offending key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Profile { paper, desk };

struct EvalSettings {
    std::vector<double> snr_db{5, 10, 15, 20, 25, 30};
    std::size_t n_trials = 5000;
    double fd_max_hz = 97.0;
    bool keep_trials = false;
    std::vector<std::size_t> bench_lengths{256, 512, 1024, 2048, 4096, 8192, 16384};
    std::size_t bench_reps = 9;
};

/// Everything a CLI run needs. Network dimensions that follow from the
/// baseband (N_f, N_s, L_s, N_pilot) are taken from `baseband`.
struct RunConfig {
    Profile profile = Profile::paper;
    BasebandConfig baseband;
    std::string channel_profile = "etu";
    SignalPowerReference power_ref = SignalPowerReference::nonzero_res;
    MambaNetConfig net;
    DatasetSpec data;
    TrainConfig train;
    EvalSettings eval;
    std::uint64_t seed = 1;
    std::size_t workers = 1;

    static RunConfig for_profile(Profile p);

    /// Sets one `section.key` from its text form. Throws ConfigError naming
    /// the key on unknown keys or unparsable values.
    void apply(const std::string& key, const std::string& value);
    /// Throws ConfigError naming the first invalid key.
    void validate() const;

    MambaNetConfig net_config() const;
    PowerDelayProfile pdp() const;
    DatasetSpec dataset_spec() const;
    TrainConfig train_config() const;
    SweepConfig sweep_config() const;

    /// Canonical `key = value` lines in a fixed order.
    std::vector<std::pair<std::string, std::string>> to_kv() const;
    /// FNV-1a 64 of the canonical text, excluding run.seed and run.workers.
    std::uint64_t hash() const;
    std::string hash_hex() const;
};

std::string profile_name(Profile p);
Profile parse_profile(const std::string& name);

/// Reads `section.key = value` lines; `#` starts a comment, blank lines are
/// skipped. Applied on top of `base`.
RunConfig load_config(const std::filesystem::path& path, RunConfig base);
RunConfig parse_config_text(const std::string& text, RunConfig base);

std::string tool_version();

}  // namespace mambaest
