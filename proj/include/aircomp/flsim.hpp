#ifndef AIRCOMP_FLSIM_HPP
#define AIRCOMP_FLSIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/aggregate.hpp"
#include "aircomp/analysis.hpp"
#include "aircomp/common.hpp"
#include "aircomp/ldpc.hpp"
#include "aircomp/phy.hpp"

namespace aircomp {

// ---------------------------------------------------------------------------
// Toy task: Gaussian-cluster classification with softmax regression
// ---------------------------------------------------------------------------

struct Dataset {
    int dim = 0;
    int classes = 0;
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    size_t size() const { return y.size(); }
};

inline Dataset make_toy_dataset(size_t samples, int classes, int dim, uint64_t seed,
                                double separation = 3.0) {
    Dataset ds;
    ds.dim = dim;
    ds.classes = classes;
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Random unit-norm class means scaled to the requested separation.
    std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
    for (auto& m : means) {
        double n2 = 0.0;
        for (double& v : m) {
            v = gauss(rng);
            n2 += v * v;
        }
        const double s = separation / std::sqrt(n2);
        for (double& v : m) v *= s;
    }
    std::uniform_int_distribution<int> lab(0, classes - 1);
    ds.x.resize(samples, std::vector<double>(dim));
    ds.y.resize(samples);
    for (size_t i = 0; i < samples; ++i) {
        const int c = lab(rng);
        ds.y[i] = c;
        for (int j = 0; j < dim; ++j) ds.x[i][j] = means[c][j] + gauss(rng);
    }
    return ds;
}

/// Indices into the parent dataset for one device's shard.
using Shard = std::vector<size_t>;

/// Non-iid split: 80% of the samples are shuffled and dealt equally, the
/// remaining 20% are label-sorted and dealt equally in contiguous runs.
inline std::vector<Shard> split_noniid(const Dataset& ds, int q, uint64_t seed) {
    if (ds.size() == 0) throw std::invalid_argument("split_noniid: empty dataset");
    if (q < 1) throw std::invalid_argument("split_noniid: q < 1");
    std::vector<size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const size_t iid_total = ds.size() * 8 / 10;
    std::vector<size_t> iid(order.begin(), order.begin() + iid_total);
    std::vector<size_t> sorted(order.begin() + iid_total, order.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [&](size_t a, size_t b) { return ds.y[a] < ds.y[b]; });
    std::vector<Shard> shards(q);
    for (size_t i = 0; i < iid.size(); ++i) shards[i % q].push_back(iid[i]);
    const size_t per = sorted.size() / q;
    for (int d = 0; d < q; ++d) {
        const size_t a = d * per;
        const size_t b = d + 1 == q ? sorted.size() : a + per;
        shards[d].insert(shards[d].end(), sorted.begin() + a, sorted.begin() + b);
    }
    return shards;
}

/// Softmax-regression weights, flattened row-major [class][feature].
struct ToyModel {
    int dim = 0;
    int classes = 0;
    std::vector<double> w;

    static ToyModel zeros(int classes, int dim) { return {dim, classes, std::vector<double>(size_t(classes) * dim, 0.0)}; }
    size_t params() const { return w.size(); }
};

namespace fl_detail {

inline void softmax_probs(const ToyModel& m, const std::vector<double>& x, std::vector<double>& p) {
    p.assign(m.classes, 0.0);
    double mx = -1e300;
    for (int c = 0; c < m.classes; ++c) {
        double z = 0.0;
        const double* wc = m.w.data() + size_t(c) * m.dim;
        for (int j = 0; j < m.dim; ++j) z += wc[j] * x[j];
        p[c] = z;
        mx = std::max(mx, z);
    }
    double s = 0.0;
    for (double& v : p) {
        v = std::exp(v - mx);
        s += v;
    }
    for (double& v : p) v /= s;
}

}  // namespace fl_detail

/// Mean cross-entropy over the given indices.
inline double toy_loss(const ToyModel& m, const Dataset& ds, const Shard& idx) {
    if (idx.empty()) return 0.0;
    std::vector<double> p;
    double loss = 0.0;
    for (size_t i : idx) {
        fl_detail::softmax_probs(m, ds.x[i], p);
        loss -= std::log(std::max(p[ds.y[i]], 1e-300));
    }
    return loss / double(idx.size());
}

/// Gradient of the mean cross-entropy over the given indices.
inline std::vector<double> toy_grad(const ToyModel& m, const Dataset& ds, const Shard& idx) {
    std::vector<double> g(m.params(), 0.0);
    std::vector<double> p;
    for (size_t i : idx) {
        fl_detail::softmax_probs(m, ds.x[i], p);
        for (int c = 0; c < m.classes; ++c) {
            const double coef = p[c] - (c == ds.y[i] ? 1.0 : 0.0);
            double* gc = g.data() + size_t(c) * m.dim;
            for (int j = 0; j < m.dim; ++j) gc[j] += coef * ds.x[i][j];
        }
    }
    const double inv = idx.empty() ? 0.0 : 1.0 / double(idx.size());
    for (double& v : g) v *= inv;
    return g;
}

inline double toy_accuracy(const ToyModel& m, const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    std::vector<double> p;
    size_t hit = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
        fl_detail::softmax_probs(m, ds.x[i], p);
        const int pred = int(std::max_element(p.begin(), p.end()) - p.begin());
        hit += pred == ds.y[i];
    }
    return double(hit) / double(ds.size());
}

/// tau minibatch SGD steps from the round-start model; returns the delta.
inline std::vector<double> local_train(const ToyModel& start, const Dataset& ds, const Shard& shard,
                                       int tau, double eta, int batch, Rng& rng) {
    if (tau < 1) throw std::invalid_argument("local_train: tau < 1");
    ToyModel m = start;
    std::uniform_int_distribution<size_t> pick(0, shard.empty() ? 0 : shard.size() - 1);
    Shard mb;
    for (int t = 0; t < tau; ++t) {
        mb.clear();
        for (int b = 0; b < batch && !shard.empty(); ++b) mb.push_back(shard[pick(rng)]);
        const auto g = toy_grad(m, ds, mb);
        for (size_t i = 0; i < m.w.size(); ++i) m.w[i] -= eta * g[i];
    }
    std::vector<double> delta(m.w.size());
    for (size_t i = 0; i < delta.size(); ++i) delta[i] = m.w[i] - start.w[i];
    return delta;
}

// ---------------------------------------------------------------------------
// Channel modes
// ---------------------------------------------------------------------------

enum class ChannelMode { ErrorFree, Trace, FullPhy, AnalogAlignedCfo, AnalogRandomCfo };

inline const char* channel_mode_name(ChannelMode m) {
    switch (m) {
        case ChannelMode::ErrorFree: return "error-free";
        case ChannelMode::Trace: return "trace";
        case ChannelMode::FullPhy: return "full-phy";
        case ChannelMode::AnalogAlignedCfo: return "analog-aligned-cfo";
        case ChannelMode::AnalogRandomCfo: return "analog-random-cfo";
    }
    throw std::invalid_argument("channel_mode_name");
}

inline ChannelMode channel_mode_from_name(const std::string& s) {
    for (ChannelMode m : {ChannelMode::ErrorFree, ChannelMode::Trace, ChannelMode::FullPhy,
                          ChannelMode::AnalogAlignedCfo, ChannelMode::AnalogRandomCfo})
        if (s == channel_mode_name(m)) return m;
    throw std::invalid_argument("unknown channel mode: " + s);
}

struct FLConfig {
    int devices = 40;        // Q
    int selected = 4;        // P per round
    int users = 4;           // M simultaneous users; ceil(P/M) transmissions
    int tau = 5;             // local SGD steps
    double eta = 0.1;        // learning rate (decayed as eta / (1 + t/50))
    int rounds = 100;        // T
    int batch = 32;
    ChannelMode mode = ChannelMode::ErrorFree;
    double snr_db = 10.0;
    double trace_sum_ber = 0.0;          // trace mode injection rate
    QuantizerConfig quant{8, 0.25};      // shared range per round
    const ParityCheckMatrix* ldpc = nullptr;  // full-phy mode
    int ldpc_iterations = 40;
    int analog_repeats = 16;
    int analog_subcarriers = 2;          // few subcarriers -> long frames -> CFO rotation matters
    double max_cfo_hz = 350.0;
    uint64_t seed = 1;

    // dataset shape
    size_t train_samples = 4000;
    size_t test_samples = 2000;
    int classes = 10;
    int dim = 64;
    double separation = 1.5;  // class-mean spacing; lower = harder task

    void validate() const {
        if (selected > devices || users > selected || users < 1)
            throw std::invalid_argument("fl: need M <= P <= Q");
        if (mode == ChannelMode::FullPhy && !ldpc)
            throw std::invalid_argument("fl: full-phy mode needs a parity-check matrix");
        quant.validate();
    }
};

struct RoundRecord {
    int round = 0;
    std::string mode;
    double snr_db = 0.0;
    double sum_ber_observed = 0.0;
    double train_loss = 0.0;
    double test_acc = 0.0;
};

namespace fl_detail {

struct GroupResult {
    std::vector<uint64_t> qsum;  // per-parameter level sums over the group's users
    int users = 0;
    bool erased = false;
    uint64_t symbols = 0;
    uint64_t symbol_errors = 0;
};

inline SumWord true_sum_bits(const std::vector<BitBlock>& packed) {
    SumWord s(packed[0].size(), 0);
    for (const auto& b : packed)
        for (size_t i = 0; i < s.size(); ++i) s[i] = uint8_t(s[i] + b[i]);
    return s;
}

/// Trace mode: each SUM symbol independently replaced by a uniformly random
/// different value in {0..m} at the injection rate.
inline SumWord inject_sum_errors(const SumWord& truth, int m, double rate, Rng& rng) {
    SumWord out = truth;
    if (rate <= 0.0) return out;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> other(0, m - 1);
    for (auto& s : out)
        if (unif(rng) < rate) {
            int v = other(rng);
            if (v >= s) ++v;  // uniform over the m values != s
            s = uint8_t(v);
        }
    return out;
}

/// Full-phy SUM transmission of one group's packed bits: LDPC blocks over an
/// aligned AWGN channel, joint decode; DecodeFailure propagates to the caller.
inline SumWord full_phy_sum(const std::vector<BitBlock>& packed, const FLConfig& cfg,
                            uint64_t seed) {
    const ParityCheckMatrix& h = *cfg.ldpc;
    const int m = int(packed.size());
    const size_t total = packed[0].size();
    const size_t blocks = (total + h.k() - 1) / h.k();
    SumWord out(total, 0);

    FrameConfig fc;
    fc.data_subcarriers = 48;
    fc.data_symbols = int(h.n() / 48);
    std::vector<UserChannel> chans(m);
    const auto grid = build_channel_grid(chans, fc);

    for (size_t blk = 0; blk < blocks; ++blk) {
        const size_t off = blk * h.k();
        const size_t len = std::min(h.k(), total - off);
        std::vector<BitBlock> coded(m);
        for (int u = 0; u < m; ++u) {
            BitBlock msg(h.k(), 0);
            for (size_t i = 0; i < len; ++i) msg[i] = packed[u][off + i];
            coded[u] = h.encode(msg);
        }
        auto frame = superimpose_grid(coded, grid, cfg.snr_db, mix_seed(seed, 0xF0, blk));
        auto lh = soft_joint_likelihoods(frame, grid, LikelihoodOptions{DistanceNorm::None, 1e-12});
        SumWord dec = ldpc_jt_decode(lh, h, m, cfg.ldpc_iterations);
        for (size_t i = 0; i < len; ++i) out[off + i] = dec[i];
    }
    return out;
}

inline GroupResult run_group_digital(const std::vector<QuantizedBlock>& qs, const FLConfig& cfg,
                                     uint64_t seed) {
    GroupResult g;
    g.users = int(qs.size());
    std::vector<BitBlock> packed(qs.size());
    for (size_t u = 0; u < qs.size(); ++u) packed[u] = pack_bits(qs[u]);
    const SumWord truth = true_sum_bits(packed);
    SumWord received;
    switch (cfg.mode) {
        case ChannelMode::ErrorFree: received = truth; break;
        case ChannelMode::Trace: {
            Rng rng(mix_seed(seed, 0xE1));
            received = inject_sum_errors(truth, g.users, cfg.trace_sum_ber, rng);
            break;
        }
        case ChannelMode::FullPhy: {
            try {
                received = full_phy_sum(packed, cfg, seed);
            } catch (const DecodeFailure&) {
                try {  // one retransmission, then the group becomes an erasure
                    received = full_phy_sum(packed, cfg, mix_seed(seed, 0xE2));
                } catch (const DecodeFailure&) {
                    g.erased = true;
                    return g;
                }
            }
            break;
        }
        default: throw std::invalid_argument("run_group_digital: not a digital mode");
    }
    g.symbols = truth.size();
    for (size_t i = 0; i < truth.size(); ++i) g.symbol_errors += received[i] != truth[i];

    const int b = cfg.quant.bits;
    g.qsum.assign(received.size() / size_t(b), 0);
    const uint64_t qmax = uint64_t(g.users) * cfg.quant.max_level();
    for (size_t i = 0; i < g.qsum.size(); ++i) {
        uint64_t q = 0;
        for (int k = 0; k < b; ++k) q += uint64_t(received[i * b + k]) << k;
        g.qsum[i] = std::min(q, qmax);
    }
    return g;
}

/// One analog transmission: parameter i rides the I or Q slot of a subcarrier
/// in OFDM symbol i / slots_per_symbol; user u's contribution is rotated by
/// theta0[u] + dtheta[u] * symbol. Returns the per-parameter mean estimate.
inline std::vector<double> analog_estimate(const std::vector<std::vector<double>>& deltas,
                                           const std::vector<double>& theta0,
                                           const std::vector<double>& dtheta,
                                           size_t slots_per_symbol, double noise_var, Rng& rng) {
    const int p = int(deltas.size());
    const size_t d = deltas[0].size();
    std::normal_distribution<double> gauss(0.0, noise_var > 0 ? std::sqrt(noise_var) : 0.0);
    std::vector<double> est(d);
    // Consecutive parameter pairs ride the I and Q rails of one complex
    // sample; a per-user carrier rotation therefore both attenuates and
    // cross-couples the two rails.
    for (size_t i = 0; i < d; i += 2) {
        const size_t symbol = i / slots_per_symbol;
        cplx y = noise_var > 0 ? cplx{gauss(rng), gauss(rng)} : cplx{0.0, 0.0};
        for (int u = 0; u < p; ++u) {
            const cplx x{deltas[u][i], i + 1 < d ? deltas[u][i + 1] : 0.0};
            y += x * std::polar(1.0, theta0[u] + dtheta[u] * double(symbol));
        }
        est[i] = y.real() / p;
        if (i + 1 < d) est[i + 1] = y.imag() / p;
    }
    return est;
}

}  // namespace fl_detail

/// One digital aggregation round: quantize the P deltas, transmit them in
/// ceil(P/M) superimposed groups, reconstruct the average, apply it.
/// Erased groups are excluded from the average (their users drop out).
inline RoundRecord round_digital(ToyModel& model, const std::vector<std::vector<double>>& deltas,
                                 const FLConfig& cfg, uint64_t seed) {
    const int p = int(deltas.size());
    std::vector<QuantizedBlock> qs(p);
    for (int u = 0; u < p; ++u) qs[u] = quantize_stochastic(deltas[u], cfg.quant, mix_seed(seed, 0xD0, u));

    const int groups = (p + cfg.users - 1) / cfg.users;
    std::vector<uint64_t> qsum(model.params(), 0);
    int contributing = 0;
    uint64_t symbols = 0, errors = 0;
    for (int gi = 0; gi < groups; ++gi) {
        const int a = gi * cfg.users, b = std::min(p, (gi + 1) * cfg.users);
        std::vector<QuantizedBlock> group(qs.begin() + a, qs.begin() + b);
        auto res = fl_detail::run_group_digital(group, cfg, mix_seed(seed, 0xC0, gi));
        symbols += res.symbols;
        errors += res.symbol_errors;
        if (res.erased) continue;
        contributing += res.users;
        for (size_t i = 0; i < qsum.size(); ++i) qsum[i] += res.qsum[i];
    }
    if (contributing > 0) {
        const double step = cfg.quant.step();
        for (size_t i = 0; i < model.w.size(); ++i)
            model.w[i] += -cfg.quant.range + step * (double(qsum[i]) / contributing);
    }
    RoundRecord r;
    r.mode = channel_mode_name(cfg.mode);
    r.snr_db = cfg.mode == ChannelMode::ErrorFree || cfg.mode == ChannelMode::Trace
                   ? std::numeric_limits<double>::infinity()
                   : cfg.snr_db;
    r.sum_ber_observed = symbols ? double(errors) / double(symbols) : 0.0;
    return r;
}

/// One analog AirComp round: each parameter rides an I/Q slot (two per
/// subcarrier per OFDM symbol); user u's slot value is rotated by its initial
/// phase plus CFO accumulation over symbols. Of `repeats` transmissions the
/// one with minimum MSE against the true mean is kept (genie selection).
inline RoundRecord round_analog(ToyModel& model, const std::vector<std::vector<double>>& deltas,
                                const FLConfig& cfg, uint64_t seed) {
    const int p = int(deltas.size());
    const size_t d = model.params();
    std::vector<double> truth(d, 0.0);
    for (const auto& dv : deltas)
        for (size_t i = 0; i < d; ++i) truth[i] += dv[i] / p;

    const int sc = std::max(1, cfg.analog_subcarriers);
    const size_t slots_per_symbol = size_t(sc) * 2;  // I and Q per subcarrier
    const FrameConfig fc;  // timing constants only (symbol duration)
    const double sym_t = double(fc.fft_size + fc.cp_size);

    // Reference signal power for noise calibration: mean square of the deltas.
    double sig = 0.0;
    for (const auto& dv : deltas)
        for (double v : dv) sig += v * v;
    sig /= double(d);
    const double noise_var = sig / std::pow(10.0, cfg.snr_db / 10.0) / 2.0;

    // CFO and initial carrier phase are per-device oscillator state for the
    // round, shared by every retransmission; the repeat-and-pick selection
    // below can therefore only average out noise, not phase misalignment.
    std::vector<double> theta0(p, 0.0), dtheta(p);
    {
        Rng dev_rng(mix_seed(seed, 0xAB));
        std::uniform_real_distribution<double> cfo_d(-cfg.max_cfo_hz, cfg.max_cfo_hz);
        std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
        for (int u = 0; u < p; ++u) {
            dtheta[u] = 2.0 * std::numbers::pi * cfo_d(dev_rng) / fc.bandwidth_hz * sym_t;
            if (cfg.mode == ChannelMode::AnalogRandomCfo) theta0[u] = ph(dev_rng);
        }
    }

    std::vector<double> best(d, 0.0);
    double best_mse = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < cfg.analog_repeats; ++rep) {
        Rng rng(mix_seed(seed, 0xAA, uint64_t(rep)));
        auto est = fl_detail::analog_estimate(deltas, theta0, dtheta, slots_per_symbol, noise_var, rng);
        double mse = 0.0;
        for (size_t i = 0; i < d; ++i) mse += (est[i] - truth[i]) * (est[i] - truth[i]);
        if (mse < best_mse) {
            best_mse = mse;
            best = std::move(est);
        }
    }
    for (size_t i = 0; i < d; ++i) model.w[i] += best[i];
    RoundRecord r;
    r.mode = channel_mode_name(cfg.mode);
    r.snr_db = cfg.snr_db;
    return r;
}

/// Full FedAvg loop over T rounds; deterministic per seed.
inline std::vector<RoundRecord> run_fl(const FLConfig& cfg) {
    cfg.validate();
    // One generation stream: the first train_samples points are the training
    // set, the rest (same class means) are held out for testing.
    Dataset all_data = make_toy_dataset(cfg.train_samples + cfg.test_samples, cfg.classes, cfg.dim,
                                        mix_seed(cfg.seed, 1), cfg.separation);
    Dataset train{cfg.dim, cfg.classes, {}, {}};
    Dataset test{cfg.dim, cfg.classes, {}, {}};
    train.x.assign(all_data.x.begin(), all_data.x.begin() + cfg.train_samples);
    train.y.assign(all_data.y.begin(), all_data.y.begin() + cfg.train_samples);
    test.x.assign(all_data.x.begin() + cfg.train_samples, all_data.x.end());
    test.y.assign(all_data.y.begin() + cfg.train_samples, all_data.y.end());

    auto shards = split_noniid(train, cfg.devices, mix_seed(cfg.seed, 2));
    ToyModel model = ToyModel::zeros(cfg.classes, cfg.dim);
    Shard all(train.size());
    std::iota(all.begin(), all.end(), 0);

    std::vector<RoundRecord> records;
    for (int t = 0; t < cfg.rounds; ++t) {
        Rng round_rng(mix_seed(cfg.seed, 3, uint64_t(t)));
        // Select P devices without replacement.
        std::vector<int> ids(cfg.devices);
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), round_rng);
        ids.resize(cfg.selected);

        const double eta = cfg.eta / (1.0 + double(t) / 50.0);
        std::vector<std::vector<double>> deltas(cfg.selected);
        for (int i = 0; i < cfg.selected; ++i) {
            Rng dev_rng(mix_seed(cfg.seed, 4, uint64_t(t) * 1000 + ids[i]));
            deltas[i] = local_train(model, train, shards[ids[i]], cfg.tau, eta, cfg.batch, dev_rng);
        }

        RoundRecord r;
        const uint64_t round_seed = mix_seed(cfg.seed, 5, uint64_t(t));
        if (cfg.mode == ChannelMode::AnalogAlignedCfo || cfg.mode == ChannelMode::AnalogRandomCfo)
            r = round_analog(model, deltas, cfg, round_seed);
        else
            r = round_digital(model, deltas, cfg, round_seed);
        r.round = t;
        r.train_loss = toy_loss(model, train, all);
        r.test_acc = toy_accuracy(model, test);
        records.push_back(r);
    }
    return records;
}

inline void write_fl_csv(std::ostream& os, const std::vector<RoundRecord>& records, uint64_t seed,
                         uint64_t config_digest) {
    os << "# " << kToolVersion << " seed=" << seed << " config=" << to_hex(config_digest) << "\n";
    os << "round,mode,snr_db,sum_ber_observed,train_loss,test_acc\n";
    os.precision(10);
    for (const auto& r : records)
        os << r.round << ',' << r.mode << ',' << r.snr_db << ',' << r.sum_ber_observed << ','
           << r.train_loss << ',' << r.test_acc << "\n";
}

}  // namespace aircomp

#endif
