#include "mambaest/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace mambaest {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); }

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto s = trim(v);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) bad(key, "expected a non-negative integer, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto s = trim(v);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) bad(key, "expected a non-negative integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    const auto s = trim(v);
    double out = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size() || std::isnan(out)) {
        bad(key, "expected a number, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    const auto s = trim(v);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    bad(key, "expected true or false, got '" + v + "'");
}

template <class T, class F>
std::vector<T> to_list(const std::string& key, const std::string& v, F parse) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse(key, item));
    if (out.empty()) bad(key, "expected a comma-separated list");
    return out;
}

std::string num(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

std::string num(std::size_t v) { return std::to_string(v); }

template <class T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(v[i]);
    return out;
}

std::string power_ref_name(SignalPowerReference r) {
    return r == SignalPowerReference::nonzero_res ? "nonzero_res" : "full_grid";
}

struct Field {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(KEY, MEMBER)                                                   \
    Field {                                                                        \
        KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_size(KEY, v); }, \
            [](const RunConfig& c) { return num(c.MEMBER); }                     \
    }
#define REAL_FIELD(KEY, MEMBER)                                                     \
    Field {                                                                          \
        KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); }, \
            [](const RunConfig& c) { return num(c.MEMBER); }                       \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        SIZE_FIELD("baseband.n_f", baseband.n_f),
        SIZE_FIELD("baseband.n_s", baseband.n_s),
        SIZE_FIELD("baseband.l_cp", baseband.l_cp),
        SIZE_FIELD("baseband.l_s", baseband.l_s),
        Field{"baseband.pilot_symbols",
              [](RunConfig& c, const std::string& v) {
                  c.baseband.pilot_symbols = to_list<std::size_t>("baseband.pilot_symbols", v, to_size);
              },
              [](const RunConfig& c) { return join(c.baseband.pilot_symbols); }},
        SIZE_FIELD("baseband.pilot_offset", baseband.pilot_offset),
        REAL_FIELD("baseband.f_space", baseband.f_space),
        REAL_FIELD("baseband.f_r", baseband.f_r),
        Field{"channel.profile", [](RunConfig& c, const std::string& v) { c.channel_profile = trim(v); },
              [](const RunConfig& c) { return c.channel_profile; }},
        Field{"channel.power_ref",
              [](RunConfig& c, const std::string& v) {
                  const auto s = trim(v);
                  if (s == "nonzero_res") c.power_ref = SignalPowerReference::nonzero_res;
                  else if (s == "full_grid") c.power_ref = SignalPowerReference::full_grid;
                  else bad("channel.power_ref", "expected nonzero_res or full_grid, got '" + v + "'");
              },
              [](const RunConfig& c) { return power_ref_name(c.power_ref); }},
        SIZE_FIELD("mambanet.c_spread", net.c_spread),
        SIZE_FIELD("mambanet.n_res_blocks", net.n_res_blocks),
        SIZE_FIELD("mambanet.cnn_channels", net.cnn_channels),
        SIZE_FIELD("mambanet.body_kernel", net.body_kernel),
        SIZE_FIELD("mambanet.head_kernel_h", net.head_kernel_h),
        SIZE_FIELD("mambanet.head_kernel_w", net.head_kernel_w),
        REAL_FIELD("mambanet.eps", net.eps),
        Field{"mambanet.token_order",
              [](RunConfig& c, const std::string& v) {
                  const auto s = trim(v);
                  if (s == "pilot_symbol_major") c.net.token_order = TokenOrder::pilot_symbol_major;
                  else if (s == "subcarrier_major") c.net.token_order = TokenOrder::subcarrier_major;
                  else bad("mambanet.token_order", "expected pilot_symbol_major or subcarrier_major, got '" + v + "'");
              },
              [](const RunConfig& c) {
                  return std::string(c.net.token_order == TokenOrder::pilot_symbol_major ? "pilot_symbol_major"
                                                                                         : "subcarrier_major");
              }},
        Field{"mambanet.scan_mode",
              [](RunConfig& c, const std::string& v) {
                  const auto s = trim(v);
                  if (s == "sequential") c.net.scan_mode = ScanMode::sequential;
                  else if (s == "parallel") c.net.scan_mode = ScanMode::parallel;
                  else bad("mambanet.scan_mode", "expected sequential or parallel, got '" + v + "'");
              },
              [](const RunConfig& c) {
                  return std::string(c.net.scan_mode == ScanMode::sequential ? "sequential" : "parallel");
              }},
        SIZE_FIELD("data.count", data.count),
        REAL_FIELD("data.snr_lo_db", data.snr_lo_db),
        REAL_FIELD("data.snr_hi_db", data.snr_hi_db),
        REAL_FIELD("data.fd_max_hz", data.fd_max_hz),
        REAL_FIELD("data.train_fraction", data.train_fraction),
        REAL_FIELD("train.lr", train.initial_lr),
        SIZE_FIELD("train.lr_drop_period", train.lr_drop_period),
        REAL_FIELD("train.lr_drop_factor", train.lr_drop_factor),
        SIZE_FIELD("train.epochs", train.max_epochs),
        SIZE_FIELD("train.minibatch", train.minibatch),
        REAL_FIELD("train.l2", train.l2),
        REAL_FIELD("train.huber_delta", train.huber_delta),
        REAL_FIELD("train.beta1", train.adam.beta1),
        REAL_FIELD("train.beta2", train.adam.beta2),
        REAL_FIELD("train.adam_eps", train.adam.eps),
        Field{"eval.snr_db",
              [](RunConfig& c, const std::string& v) { c.eval.snr_db = to_list<double>("eval.snr_db", v, to_double); },
              [](const RunConfig& c) { return join(c.eval.snr_db); }},
        SIZE_FIELD("eval.n_trials", eval.n_trials),
        REAL_FIELD("eval.fd_max_hz", eval.fd_max_hz),
        Field{"eval.keep_trials", [](RunConfig& c, const std::string& v) { c.eval.keep_trials = to_bool("eval.keep_trials", v); },
              [](const RunConfig& c) { return std::string(c.eval.keep_trials ? "true" : "false"); }},
        Field{"eval.bench_lengths",
              [](RunConfig& c, const std::string& v) {
                  c.eval.bench_lengths = to_list<std::size_t>("eval.bench_lengths", v, to_size);
              },
              [](const RunConfig& c) { return join(c.eval.bench_lengths); }},
        SIZE_FIELD("eval.bench_reps", eval.bench_reps),
        Field{"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("run.seed", v); },
              [](const RunConfig& c) { return std::to_string(c.seed); }},
        SIZE_FIELD("run.workers", workers),
    };
    return table;
}

#undef SIZE_FIELD
#undef REAL_FIELD

}  // namespace

std::string profile_name(Profile p) { return p == Profile::paper ? "paper" : "desk"; }

Profile parse_profile(const std::string& name) {
    if (name == "paper") return Profile::paper;
    if (name == "desk") return Profile::desk;
    throw ConfigError("profile: expected desk or paper, got '" + name + "'");
}

RunConfig RunConfig::for_profile(Profile p) {
    RunConfig c;
    c.profile = p;
    if (p == Profile::desk) {
        c.baseband.n_f = 48;
        c.data.count = 10000;
        c.train.max_epochs = 20;
        c.train.minibatch = 16;
        c.train.initial_lr = 1e-3;
        c.train.lr_drop_period = 4;
        c.eval.n_trials = 1000;
    }
    return c;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key == f.key) {
            f.set(*this, value);
            return;
        }
    }
    throw ConfigError(key + ": unknown configuration key");
}

void RunConfig::validate() const {
    try {
        baseband.validate();
        pdp().validate();
        net_config().validate();
        train_config().validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (data.count == 0) bad("data.count", "must be positive");
    if (!(data.snr_hi_db >= data.snr_lo_db)) bad("data.snr_hi_db", "must be >= data.snr_lo_db");
    if (!(data.fd_max_hz >= 0.0 && std::isfinite(data.fd_max_hz))) bad("data.fd_max_hz", "must be finite and non-negative");
    if (!(data.train_fraction > 0.0 && data.train_fraction <= 1.0)) bad("data.train_fraction", "must be in (0, 1]");
    if (eval.n_trials == 0) bad("eval.n_trials", "must be positive");
    if (!(eval.fd_max_hz >= 0.0 && std::isfinite(eval.fd_max_hz))) bad("eval.fd_max_hz", "must be finite and non-negative");
    if (eval.bench_reps == 0) bad("eval.bench_reps", "must be positive");
    for (auto l : eval.bench_lengths)
        if (l == 0) bad("eval.bench_lengths", "lengths must be positive");
    if (workers == 0) bad("run.workers", "must be positive");
}

MambaNetConfig RunConfig::net_config() const {
    MambaNetConfig n = net;
    n.n_f = baseband.n_f;
    n.n_s = baseband.n_s;
    n.l_s = baseband.l_s;
    n.n_pilot = baseband.n_pilot();
    return n;
}

PowerDelayProfile RunConfig::pdp() const {
    try {
        return builtin_profile(channel_profile);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("channel.profile: ") + e.what());
    }
}

DatasetSpec RunConfig::dataset_spec() const {
    DatasetSpec d = data;
    d.power_ref = power_ref;
    return d;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t = train;
    t.seed = derive_seed(seed, {0x7a1e});
    t.workers = workers;
    return t;
}

SweepConfig RunConfig::sweep_config() const {
    SweepConfig s;
    s.snr_db = eval.snr_db;
    s.n_trials = eval.n_trials;
    s.fd_max_hz = eval.fd_max_hz;
    s.power_ref = power_ref;
    s.workers = workers;
    s.keep_trials = eval.keep_trials;
    return s;
}

std::vector<std::pair<std::string, std::string>> RunConfig::to_kv() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
    return out;
}

std::uint64_t RunConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [k, v] : to_kv()) {
        if (k == "run.seed" || k == "run.workers") continue;
        for (char ch : k + "=" + v + "\n") {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string RunConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'section.key = value'");
        }
        base.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("--config: cannot read " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

std::string tool_version() { return MAMBAEST_VERSION; }

}  // namespace mambaest
