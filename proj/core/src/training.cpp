#include "mambaest/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>

#include "mambaest/checkpoint.hpp"
#include "mambaest/parallel.hpp"
#include "mambaest/rng.hpp"

namespace mambaest {

namespace {

constexpr char kMagic[8] = {'M', 'B', 'N', 'D', 'A', 'T', 'A', '1'};
constexpr std::uint32_t kDatasetFormatVersion = 1;
// Minibatches are split into this many shards regardless of the worker count,
// so the gradient summation order never depends on scheduling.
constexpr std::size_t kGradShards = 8;

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("dataset: truncated file");
    return v;
}

void put_doubles(std::ostream& os, std::span<const double> v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

void get_doubles(std::istream& is, std::span<double> v) {
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()))) {
        throw std::runtime_error("dataset: truncated file");
    }
}

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Neumaier compensated sum.
double stable_sum(std::span<const double> v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
        const double t = s + x;
        c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    return s + c;
}

double sample_loss(const ParameterSet& params, const MambaNetConfig& net, const Sample& s, double delta,
                   double weight, bool with_grad) {
    const Tensor target = Tensor::from({net.n_f, net.n_s, 2}, s.label);
    const Tensor pred = forward_tensor(tokenize(s.input, net.token_order), params, net);
    const Tensor loss = huber_loss(pred, target, delta);
    const double value = loss.item();
    if (with_grad) scale(loss, weight).backward();
    return value;
}

double accumulate_weighted(const ParameterSet& params, const MambaNetConfig& net,
                           std::span<const Sample* const> batch, double delta, double weight) {
    double total = 0.0;
    for (const Sample* s : batch) total += sample_loss(params, net, *s, delta, weight, true);
    return total;
}

}  // namespace

std::size_t train_split(std::size_t count, double train_fraction) {
    if (count == 0) return 0;
    const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(count) * train_fraction));
    return std::clamp<std::size_t>(n, 1, count);
}

Dataset generate_dataset(const DatasetSpec& spec, const BasebandConfig& cfg, const PowerDelayProfile& pdp,
                         std::uint64_t seed, std::size_t workers) {
    cfg.validate();
    pdp.validate();
    if (spec.count == 0) throw std::invalid_argument("data.count: must be positive");
    if (!(spec.snr_hi_db >= spec.snr_lo_db)) throw std::invalid_argument("data.snr_hi_db: must be >= data.snr_lo_db");
    if (!(spec.fd_max_hz >= 0.0)) throw std::invalid_argument("data.fd_max_hz: must be non-negative");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0)) {
        throw std::invalid_argument("data.train_fraction: must be in (0, 1]");
    }

    Dataset data;
    data.n_f = cfg.n_f;
    data.n_s = cfg.n_s;
    data.samples.resize(spec.count);
    data.n_train = train_split(spec.count, spec.train_fraction);

    parallel_for(spec.count, workers, [&](std::size_t i) {
        Rng rng = make_rng(seed, {0xda7a, i});
        Sample& s = data.samples[i];
        s.snr_db = spec.snr_override ? *spec.snr_override : uniform(rng, spec.snr_lo_db, spec.snr_hi_db);
        s.f_d_max = uniform(rng, 0.0, spec.fd_max_hz);
        const ChannelRealization ch = sample_realization(pdp, s.f_d_max, cfg, rng);
        const auto bits = random_bits(cfg.bits_per_slot(), rng());
        const SlotGrid tx = build_slot(qpsk_modulate(bits), cfg);
        const FrequencyResponse h = freq_response(ch, cfg);
        const SlotGrid y = apply_channel_freq(tx, h, s.snr_db, rng, spec.power_ref);
        s.input = ls_pilot_estimate(y, cfg);
        s.label = grid_to_channels(h);
    });
    return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  const std::map<std::string, std::string>& header) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("dataset: cannot write " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kDatasetFormatVersion);
    const std::string text = format_header_text(header);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));

    const std::size_t n_sub = data.samples.empty() ? 0 : data.samples.front().input.n_sub();
    const std::size_t n_sym = data.samples.empty() ? 0 : data.samples.front().input.n_sym();
    put<std::uint64_t>(os, data.n_f);
    put<std::uint64_t>(os, data.n_s);
    put<std::uint64_t>(os, n_sub);
    put<std::uint64_t>(os, n_sym);
    put<std::uint64_t>(os, data.samples.size());
    put<std::uint64_t>(os, data.n_train);
    for (const auto& s : data.samples) {
        put<double>(os, s.snr_db);
        put<double>(os, s.f_d_max);
        const auto v = s.input.values();
        put_doubles(os, {reinterpret_cast<const double*>(v.data()), v.size() * 2});
        put_doubles(os, s.label);
    }
    if (!os) throw std::runtime_error("dataset: write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path, std::map<std::string, std::string>* header) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open " + path.string());
    char magic[sizeof(kMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("dataset: bad magic in " + path.string());
    }
    const auto version = get<std::uint32_t>(is);
    if (version != kDatasetFormatVersion) {
        throw std::runtime_error("dataset: unsupported format version " + std::to_string(version));
    }
    std::string text(get<std::uint32_t>(is), '\0');
    if (!text.empty() && !is.read(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw std::runtime_error("dataset: truncated file");
    }
    if (header) *header = parse_header_text(text);

    Dataset data;
    data.n_f = get<std::uint64_t>(is);
    data.n_s = get<std::uint64_t>(is);
    const auto n_sub = get<std::uint64_t>(is);
    const auto n_sym = get<std::uint64_t>(is);
    const auto count = get<std::uint64_t>(is);
    data.n_train = get<std::uint64_t>(is);
    if (data.n_train > count) throw std::runtime_error("dataset: training split exceeds sample count");
    data.samples.resize(count);
    for (auto& s : data.samples) {
        s.snr_db = get<double>(is);
        s.f_d_max = get<double>(is);
        s.input = PilotLsGrid(n_sub, n_sym);
        auto v = s.input.values();
        get_doubles(is, {reinterpret_cast<double*>(v.data()), v.size() * 2});
        s.label.resize(data.n_f * data.n_s * 2);
        get_doubles(is, s.label);
    }
    return data;
}

Tensor huber_loss(const Tensor& pred, const Tensor& target, double delta) {
    if (pred.shape() != target.shape()) {
        throw std::invalid_argument("huber_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                    shape_str(target.shape()));
    }
    if (!(delta > 0.0)) throw std::invalid_argument("huber_loss: delta must be positive");
    const auto p = pred.data();
    const auto t = target.data();
    const std::size_t n = p.size();
    std::vector<double> err(n);
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = p[i] - t[i];
        err[i] = e;
        const double a = std::abs(e);
        terms[i] = a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
    }
    const double value = stable_sum(terms) / static_cast<double>(n);
    return Tensor::make_result({}, {value}, {pred, target},
                               [pred, target, err = std::move(err), delta](std::span<const double> g) {
                                   const double s = g[0] / static_cast<double>(err.size());
                                   auto d = [&](double e) { return std::clamp(e, -delta, delta) * s; };
                                   if (pred.requires_grad()) {
                                       auto gp = pred.grad_accumulator();
                                       for (std::size_t i = 0; i < err.size(); ++i) gp[i] += d(err[i]);
                                   }
                                   if (target.requires_grad()) {
                                       auto gt = target.grad_accumulator();
                                       for (std::size_t i = 0; i < err.size(); ++i) gt[i] -= d(err[i]);
                                   }
                               });
}

void adam_step(const ParameterSet& params, AdamState& state, double lr, double l2, const AdamConfig& adam) {
    const auto items = params.items();
    if (state.m.empty()) {
        state.m.resize(items.size());
        state.v.resize(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
            state.m[i].assign(items[i].tensor.numel(), 0.0);
            state.v[i].assign(items[i].tensor.numel(), 0.0);
        }
    }
    if (state.m.size() != items.size()) throw std::invalid_argument("adam_step: state does not match parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(adam.beta1, t);
    const double c2 = 1.0 - std::pow(adam.beta2, t);
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto theta = items[i].tensor.mutable_data();
        const auto grad = items[i].tensor.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double g = grad[j] + l2 * theta[j];
            m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * g;
            v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * g * g;
            theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + adam.eps);
        }
    }
}

double TrainConfig::learning_rate(std::size_t epoch) const {
    return initial_lr * std::pow(lr_drop_factor, static_cast<double>(epoch / lr_drop_period));
}

void TrainConfig::validate() const {
    if (!(initial_lr > 0.0)) throw std::invalid_argument("train.lr: must be positive");
    if (lr_drop_period == 0) throw std::invalid_argument("train.lr_drop_period: must be positive");
    if (!(lr_drop_factor > 0.0 && lr_drop_factor <= 1.0)) {
        throw std::invalid_argument("train.lr_drop_factor: must be in (0, 1]");
    }
    if (max_epochs == 0) throw std::invalid_argument("train.epochs: must be positive");
    if (minibatch == 0) throw std::invalid_argument("train.minibatch: must be positive");
    if (!(l2 >= 0.0)) throw std::invalid_argument("train.l2: must be non-negative");
    if (!(huber_delta > 0.0)) throw std::invalid_argument("train.huber_delta: must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw std::invalid_argument("train.beta1: must be in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw std::invalid_argument("train.beta2: must be in [0, 1)");
    if (!(adam.eps > 0.0)) throw std::invalid_argument("train.adam_eps: must be positive");
}

double dataset_loss(const ParameterSet& params, const MambaNetConfig& net, std::span<const Sample> samples,
                    double delta, std::size_t workers) {
    if (samples.empty()) return 0.0;
    std::vector<double> losses(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t i) {
        NoGradGuard no_grad;
        losses[i] = sample_loss(params, net, samples[i], delta, 1.0, false);
    });
    return stable_sum(losses) / static_cast<double>(samples.size());
}

double accumulate_batch_gradients(const ParameterSet& params, const MambaNetConfig& net,
                                  std::span<const Sample* const> batch, double delta) {
    if (batch.empty()) return 0.0;
    const double w = 1.0 / static_cast<double>(batch.size());
    return accumulate_weighted(params, net, batch, delta, w) * w;
}

TrainResult train(ParameterSet params, const MambaNetConfig& net, const Dataset& data, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch) {
    tcfg.validate();
    net.validate();
    const auto train_set = data.train();
    const auto val_set = data.validation().empty() ? data.train() : data.validation();
    if (train_set.empty()) throw std::invalid_argument("train: empty training split");
    if (data.n_f != net.n_f || data.n_s != net.n_s) {
        throw std::invalid_argument("train: dataset grid does not match the network configuration");
    }

    std::vector<ParameterSet> shards;
    for (std::size_t s = 0; s < kGradShards; ++s) shards.push_back(params.clone());

    TrainResult result;
    result.initial_train_loss = dataset_loss(params, net, train_set, tcfg.huber_delta, tcfg.workers);
    result.initial_val_loss = dataset_loss(params, net, val_set, tcfg.huber_delta, tcfg.workers);
    result.best = params.clone();
    result.best_val_loss = result.initial_val_loss;
    if (!std::isfinite(result.initial_val_loss)) throw TrainingDiverged("train: non-finite initial loss");

    std::vector<std::size_t> order(train_set.size());
    std::vector<const Sample*> batch;
    std::vector<double> shard_loss(kGradShards);
    AdamState adam;
    for (std::size_t epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        const double lr = tcfg.learning_rate(epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = make_rng(tcfg.seed, {0x7a11, epoch});
        std::shuffle(order.begin(), order.end(), rng);

        std::vector<double> batch_losses;
        for (std::size_t start = 0; start < order.size(); start += tcfg.minibatch) {
            const std::size_t end = std::min(order.size(), start + tcfg.minibatch);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
            const double w = 1.0 / static_cast<double>(batch.size());

            parallel_for(kGradShards, tcfg.workers, [&](std::size_t s) {
                const std::size_t b0 = batch.size() * s / kGradShards;
                const std::size_t b1 = batch.size() * (s + 1) / kGradShards;
                shards[s].assign(params);
                shards[s].zero_grad();
                shard_loss[s] = accumulate_weighted(shards[s], net, std::span(batch).subspan(b0, b1 - b0),
                                                    tcfg.huber_delta, w);
            });

            params.zero_grad();
            const auto dst = params.items();
            for (std::size_t p = 0; p < dst.size(); ++p) {
                auto g = dst[p].tensor.grad_accumulator();
                for (const auto& shard : shards) {
                    const auto src = shard.items()[p].tensor.grad();
                    for (std::size_t j = 0; j < g.size(); ++j) g[j] += src[j];
                }
            }
            const double loss = stable_sum(shard_loss) * w;
            if (!std::isfinite(loss)) {
                throw TrainingDiverged("train: non-finite loss in epoch " + std::to_string(epoch + 1));
            }
            batch_losses.push_back(loss * static_cast<double>(batch.size()));
            adam_step(params, adam, lr, tcfg.l2, tcfg.adam);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.lr = lr;
        rec.train_loss = stable_sum(batch_losses) / static_cast<double>(order.size());
        rec.val_loss = dataset_loss(params, net, val_set, tcfg.huber_delta, tcfg.workers);
        if (!std::isfinite(rec.val_loss)) {
            throw TrainingDiverged("train: non-finite validation loss in epoch " + std::to_string(rec.epoch));
        }
        if (rec.val_loss < result.best_val_loss) {
            result.best_val_loss = rec.val_loss;
            result.best_epoch = rec.epoch;
            result.best.assign(params);
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

void write_history_csv(std::ostream& os, std::span<const EpochRecord> history, std::string_view header) {
    os << "# " << header << '\n';
    os << "epoch,lr,train_loss,val_loss\n";
    char buf[128];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6e,%.12e,%.12e\n", r.epoch, r.lr, r.train_loss, r.val_loss);
        os << buf;
    }
}

}  // namespace mambaest
