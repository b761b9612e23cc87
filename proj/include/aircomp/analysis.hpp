#ifndef AIRCOMP_ANALYSIS_HPP
#define AIRCOMP_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aircomp/aggregate.hpp"
#include "aircomp/common.hpp"
#include "aircomp/conv.hpp"
#include "aircomp/ldpc.hpp"
#include "aircomp/phy.hpp"

namespace aircomp {

/// Fraction of SUM symbols that differ; any mismatch is an error.
inline double sum_ber(const SumWord& decoded, const SumWord& truth) {
    if (decoded.size() != truth.size()) throw std::invalid_argument("sum_ber: length mismatch");
    if (decoded.empty()) return 0.0;
    size_t e = 0;
    for (size_t i = 0; i < decoded.size(); ++i) e += decoded[i] != truth[i];
    return double(e) / double(decoded.size());
}

/// Closed-form SUM BER for n users with i.i.d. per-user bit error rate alpha:
/// beta = 1 - (1-a)^n - 2^{-n} sum_{n0=1}^{n-1} C(n,n0) sum_{e=1}^{min(n0,n-n0)} a^{2e}.
inline double analytic_sum_ber(double alpha, int n) {
    if (alpha < 0 || alpha >= 1) throw std::invalid_argument("analytic_sum_ber: alpha out of [0,1)");
    if (n < 2) throw std::invalid_argument("analytic_sum_ber: n must be >= 2");
    double beta = 1.0 - std::pow(1.0 - alpha, n);
    double cancel = 0.0;
    for (int n0 = 1; n0 <= n - 1; ++n0) {
        double binom = 1.0;
        for (int i = 0; i < n0; ++i) binom = binom * double(n - i) / double(i + 1);
        double inner = 0.0;
        const int emax = std::min(n0, n - n0);
        for (int e = 1; e <= emax; ++e) inner += std::pow(alpha, 2 * e);
        cancel += binom * inner;
    }
    return beta - std::ldexp(cancel, -n);
}

/// Wilson 95% score interval for e errors in n trials.
inline std::pair<double, double> wilson_interval(uint64_t errors, uint64_t trials) {
    if (trials == 0) return {0.0, 1.0};
    const double z = 1.959963984540054;
    const double n = double(trials), p = double(errors) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2 * n)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// ---------------------------------------------------------------------------
// Convergence upper bound
// ---------------------------------------------------------------------------

/// Per-device, per-round quantizer and channel parameters feeding the
/// aggregation-error terms.
struct RoundError {
    int bits = 8;
    double span = 2.0;   // value range width seen by the quantizer
    double alpha = 0.0;  // SUM BER for this device's bits
};

struct ConvergenceParams {
    double mu = 1.0;        // strong convexity
    double l_smooth = 1.0;  // smoothness
    double gamma = 10.0;    // learning-rate shift; eta(t) = 2 / (mu (gamma + t))
    int tau = 1;            // local SGD steps
    double g2 = 1.0;        // gradient bound squared
    double gamma_div = 0.0; // heterogeneity term
    std::vector<double> sigma2{1.0};  // per-device gradient variance
    std::vector<double> p{1.0};       // per-device weights, sum 1
    int rounds = 100;                 // T
    int dim = 64;                     // parameter dimension d
    std::vector<std::vector<RoundError>> round_err;  // [round][device]

    void validate() const {
        if (sigma2.size() != p.size()) throw std::invalid_argument("bound: sigma2/p size mismatch");
        double ps = 0.0;
        for (double x : p) ps += x;
        if (std::abs(ps - 1.0) > 1e-9) throw std::invalid_argument("bound: weights must sum to 1");
        const double need = std::max({2.0, 2.0 / mu, l_smooth / mu});
        if (!(gamma > need)) throw std::invalid_argument("bound: gamma too small for the precondition");
        if (rounds < 1 || tau < 1 || dim < 1) throw std::invalid_argument("bound: bad sizes");
        if (int(round_err.size()) != rounds) throw std::invalid_argument("bound: round_err rows != T");
        for (const auto& row : round_err)
            if (row.size() != p.size()) throw std::invalid_argument("bound: round_err cols != devices");
    }

    /// Same (B, span, alpha) for every device and round.
    static std::vector<std::vector<RoundError>> uniform_rounds(int rounds, size_t devices,
                                                               RoundError e) {
        return std::vector<std::vector<RoundError>>(rounds, std::vector<RoundError>(devices, e));
    }
};

struct BoundBreakdown {
    double first_term = 0.0;
    double quant_term = 0.0;  // accumulated J^2 contributions
    double k_term = 0.0;      // accumulated transmission-error contributions
    double total() const { return first_term + quant_term + k_term; }
};

/// Evaluates the convergence upper bound after each round t = 1..T:
///   (L/2) (1/(gamma+t)) (4U/mu^2 + gamma * w0_gap)
/// + (L/2) sum_{j<t} [ sum_n p_n (J_n^2(j) + K_n(j)) prod_{i=j+1}^{t-1} (1 - 2/(gamma+i)) ],
/// U = tau^2 sum sigma_n^2 + tau G^2 + 2 L tau^2 Gamma + (mu+2) tau(tau-1)(2tau-1) G^2 / 6.
/// w0_gap is the squared distance of the initial model from the optimum.
inline std::vector<BoundBreakdown> theorem1_bound(const ConvergenceParams& cp, double w0_gap) {
    cp.validate();
    const double tau = double(cp.tau);
    double sig = 0.0;
    for (double s : cp.sigma2) sig += s;
    const double u = tau * tau * sig + tau * cp.g2 + 2.0 * cp.l_smooth * tau * tau * cp.gamma_div +
                     (cp.mu + 2.0) * tau * (tau - 1.0) * (2.0 * tau - 1.0) * cp.g2 / 6.0;
    const double half_l = cp.l_smooth / 2.0;

    // Per-round weighted error terms.
    std::vector<double> dj(cp.rounds, 0.0), dj_j2(cp.rounds, 0.0), dj_k(cp.rounds, 0.0);
    for (int j = 0; j < cp.rounds; ++j)
        for (size_t n = 0; n < cp.p.size(); ++n) {
            const RoundError& e = cp.round_err[j][n];
            QuantizerConfig q{e.bits, 1.0};
            const auto terms = lemma1_error_terms(q, cp.dim, e.alpha, e.span);
            dj_j2[j] += cp.p[n] * terms.j2;
            dj_k[j] += cp.p[n] * terms.k;
            dj[j] = dj_j2[j] + dj_k[j];
        }

    // Incremental evaluation: S_t = sum_{j<t} D_j prod_{i=j+1}^{t-1} r_i with
    // r_i = 1 - 2/(gamma+i); S_{t+1} = S_t * r_t + D_t.
    std::vector<BoundBreakdown> out(cp.rounds);
    double s_j2 = 0.0, s_k = 0.0;
    for (int t = 1; t <= cp.rounds; ++t) {
        if (t > 1) {
            const double r = 1.0 - 2.0 / (cp.gamma + (t - 1));
            s_j2 *= r;
            s_k *= r;
        }
        s_j2 += dj_j2[t - 1];
        s_k += dj_k[t - 1];
        BoundBreakdown& b = out[t - 1];
        b.first_term = half_l * (4.0 * u / (cp.mu * cp.mu) + cp.gamma * w0_gap) / (cp.gamma + t);
        b.quant_term = half_l * s_j2;
        b.k_term = half_l * s_k;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo sweeps
// ---------------------------------------------------------------------------

enum class DecoderId { Fsjd, Rsjd, Bcjr, ConvPsud, LdpcJd, LdpcPsud };

inline const char* decoder_name(DecoderId d) {
    switch (d) {
        case DecoderId::Fsjd: return "fsjd";
        case DecoderId::Rsjd: return "rsjd";
        case DecoderId::Bcjr: return "bcjr";
        case DecoderId::ConvPsud: return "conv-psud";
        case DecoderId::LdpcJd: return "ldpc-jd";
        case DecoderId::LdpcPsud: return "ldpc-psud";
    }
    throw std::invalid_argument("decoder_name");
}

inline DecoderId decoder_from_name(const std::string& s) {
    for (DecoderId d : {DecoderId::Fsjd, DecoderId::Rsjd, DecoderId::Bcjr, DecoderId::ConvPsud,
                        DecoderId::LdpcJd, DecoderId::LdpcPsud})
        if (s == decoder_name(d)) return d;
    throw std::invalid_argument("unknown decoder: " + s);
}

inline bool decoder_is_conv(DecoderId d) {
    return d == DecoderId::Fsjd || d == DecoderId::Rsjd || d == DecoderId::Bcjr ||
           d == DecoderId::ConvPsud;
}

enum class PhaseScenario { Aligned, FixedOffset, RandomPerSubcarrier, SyntheticRealistic };

inline const char* scenario_name(PhaseScenario s) {
    switch (s) {
        case PhaseScenario::Aligned: return "aligned";
        case PhaseScenario::FixedOffset: return "fixed-offset";
        case PhaseScenario::RandomPerSubcarrier: return "random-subcarrier";
        case PhaseScenario::SyntheticRealistic: return "synthetic-realistic";
    }
    throw std::invalid_argument("scenario_name");
}

inline PhaseScenario scenario_from_name(const std::string& s) {
    for (PhaseScenario p : {PhaseScenario::Aligned, PhaseScenario::FixedOffset,
                            PhaseScenario::RandomPerSubcarrier, PhaseScenario::SyntheticRealistic})
        if (s == scenario_name(p)) return p;
    throw std::invalid_argument("unknown phase scenario: " + s);
}

struct SweepSpec {
    std::vector<double> snr_db;
    PhaseScenario scenario = PhaseScenario::Aligned;
    double theta = 0.0;  // fixed-offset scenario: user u gets phase u*theta
    int users = 2;
    DecoderId decoder = DecoderId::Fsjd;
    int frames = 100;
    uint64_t seed = 1;
    int jobs = 1;

    ConvCode conv_code;
    size_t conv_info_bits = 1026;  // K per frame; coded (K+6)*2 = 2064 = 48*43
    size_t rsjd_retained = 256;
    const ParityCheckMatrix* ldpc = nullptr;
    int ldpc_iterations = 40;
    int subcarriers = 48;
    // Performance sweeps default to the unnormalized matched metric (alpha=1):
    // min-distance normalization acts as a temperature and collapses the grid
    // toward hard decisions as the frame grows, discarding soft information.
    LikelihoodOptions lh_opts{DistanceNorm::None, 1e-12};

    void validate() const {
        if (snr_db.empty()) throw std::invalid_argument("sweep: no SNR points");
        if (frames < 1) throw std::invalid_argument("sweep: frames < 1");
        if (users < 1 || users > 4) throw std::invalid_argument("sweep: users out of [1,4]");
        if (!decoder_is_conv(decoder) && !ldpc)
            throw std::invalid_argument("sweep: LDPC decoder needs a parity-check matrix");
        const size_t coded = coded_length();
        if (coded % size_t(subcarriers) != 0)
            throw std::invalid_argument("sweep: coded length not divisible by subcarrier count");
    }
    size_t coded_length() const {
        return decoder_is_conv(decoder) ? conv_code.coded_length(conv_info_bits) : ldpc->n();
    }
    FrameConfig frame_config() const {
        FrameConfig cfg;
        cfg.data_subcarriers = subcarriers;
        cfg.data_symbols = int(coded_length() / size_t(subcarriers));
        return cfg;
    }
};

struct SweepRow {
    std::string decoder;
    int users = 0;
    std::string phase_scenario;
    double snr_db = 0.0;
    uint64_t frames = 0;
    uint64_t sum_bits = 0;
    uint64_t sum_errors = 0;
    double sum_ber = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    uint64_t acs_ops = 0;
};

namespace detail {

/// Builds the per-frame effective channel grid for a phase scenario.
inline EffectiveChannelGrid scenario_grid(const SweepSpec& spec, const FrameConfig& cfg, Rng& rng) {
    std::vector<UserChannel> chans(spec.users);
    switch (spec.scenario) {
        case PhaseScenario::Aligned:
            return build_channel_grid(chans, cfg);
        case PhaseScenario::FixedOffset: {
            for (int u = 0; u < spec.users; ++u)
                chans[u].taps = {{std::polar(1.0, spec.theta * u), 0}};
            return build_channel_grid(chans, cfg);
        }
        case PhaseScenario::RandomPerSubcarrier: {
            // Unit-magnitude phases drawn per (user, subcarrier), constant in time.
            EffectiveChannelGrid g;
            g.users = spec.users;
            g.symbols = cfg.data_symbols;
            g.subcarriers = cfg.data_subcarriers;
            g.values.resize(size_t(g.users) * cfg.positions());
            std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
            for (int u = 0; u < g.users; ++u) {
                for (int k = 0; k < g.subcarriers; ++k) {
                    const cplx c = std::polar(1.0, ph(rng));
                    for (int i = 0; i < g.symbols; ++i) g.at(u, i, k) = c;
                }
            }
            return g;
        }
        case PhaseScenario::SyntheticRealistic: {
            // Random 3-tap multipath (unit mean power), TO <= 2 samples,
            // CFO uniform in [-2, 2] kHz; the receiver gets the exact grid.
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::uniform_int_distribution<int> to(0, 2);
            std::uniform_real_distribution<double> cfo(-2000.0, 2000.0);
            for (auto& ch : chans) {
                ch.taps.clear();
                double p = 0.0;
                std::vector<cplx> gains(3);
                for (int l = 0; l < 3; ++l) {
                    gains[l] = cplx{gauss(rng), gauss(rng)};
                    p += std::norm(gains[l]);
                }
                const double scale = 1.0 / std::sqrt(p);
                for (int l = 0; l < 3; ++l) ch.taps.push_back({gains[l] * scale, l});
                ch.time_offset = to(rng);
                ch.cfo_hz = cfo(rng);
                ch.validate(cfg, 2000.0);
            }
            return build_channel_grid(chans, cfg);
        }
    }
    throw std::invalid_argument("scenario_grid");
}

struct FrameOutcome {
    uint64_t bits = 0;
    uint64_t errors = 0;
    uint64_t acs = 0;
    bool failed = false;
};

inline FrameOutcome run_frame(const SweepSpec& spec, const FrameConfig& cfg, double snr_db,
                              uint64_t frame_seed) {
    Rng rng(mix_seed(frame_seed, 0xA1));
    const bool conv = decoder_is_conv(spec.decoder);
    const size_t k = conv ? spec.conv_info_bits : spec.ldpc->k();

    std::vector<BitBlock> source(spec.users), coded(spec.users);
    for (int u = 0; u < spec.users; ++u) {
        source[u] = random_bits(k, rng);
        coded[u] = conv ? conv_encode(source[u], spec.conv_code) : spec.ldpc->encode(source[u]);
    }
    SumWord truth(k, 0);
    for (int u = 0; u < spec.users; ++u)
        for (size_t i = 0; i < k; ++i) truth[i] = uint8_t(truth[i] + source[u][i]);

    auto grid = scenario_grid(spec, cfg, rng);
    auto frame = superimpose_grid(coded, grid, snr_db, mix_seed(frame_seed, 0xB2));
    auto lh = soft_joint_likelihoods(frame, grid, spec.lh_opts);

    FrameOutcome out;
    out.bits = k;
    SumWord decoded;
    try {
        AcsCounter acs;
        switch (spec.decoder) {
            case DecoderId::Fsjd: decoded = fsjd_decode(lh, spec.conv_code, spec.users, &acs); break;
            case DecoderId::Rsjd:
                decoded = rsjd_decode(lh, spec.conv_code, spec.users, spec.rsjd_retained, &acs);
                break;
            case DecoderId::Bcjr: decoded = bcjr_sum_decode(lh, spec.conv_code, spec.users); break;
            case DecoderId::ConvPsud: decoded = conv_psud_decode(lh, spec.conv_code, spec.users, &acs); break;
            case DecoderId::LdpcJd:
                decoded = ldpc_jt_decode(lh, *spec.ldpc, spec.users, spec.ldpc_iterations);
                break;
            case DecoderId::LdpcPsud:
                decoded = ldpc_psud_decode(lh, *spec.ldpc, spec.users, spec.ldpc_iterations);
                break;
        }
        out.acs = acs.ops;
    } catch (const DecodeFailure&) {
        out.failed = true;
        out.errors = k;  // failed frame counts as all-error
        return out;
    }
    for (size_t i = 0; i < k; ++i) out.errors += decoded[i] != truth[i];
    return out;
}

}  // namespace detail

/// Runs the Monte-Carlo sweep: one row per SNR point. Deterministic per seed;
/// frames are independently seeded so the worker count never changes results.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
    spec.validate();
    const FrameConfig cfg = spec.frame_config();
    std::vector<SweepRow> rows;
    for (size_t pi = 0; pi < spec.snr_db.size(); ++pi) {
        const double snr = spec.snr_db[pi];
        std::vector<detail::FrameOutcome> outcomes(spec.frames);
        auto work = [&](int first, int last) {
            for (int f = first; f < last; ++f)
                outcomes[f] = detail::run_frame(spec, cfg, snr, mix_seed(spec.seed, pi, uint64_t(f)));
        };
        const int jobs = std::max(1, spec.jobs);
        if (jobs == 1 || spec.frames < 2) {
            work(0, spec.frames);
        } else {
            std::vector<std::thread> pool;
            const int chunk = (spec.frames + jobs - 1) / jobs;
            for (int j = 0; j < jobs; ++j) {
                const int a = j * chunk, b = std::min(spec.frames, (j + 1) * chunk);
                if (a < b) pool.emplace_back(work, a, b);
            }
            for (auto& t : pool) t.join();
        }
        SweepRow r;
        r.decoder = decoder_name(spec.decoder);
        r.users = spec.users;
        r.phase_scenario = scenario_name(spec.scenario);
        r.snr_db = snr;
        r.frames = uint64_t(spec.frames);
        for (const auto& o : outcomes) {
            r.sum_bits += o.bits;
            r.sum_errors += o.errors;
            r.acs_ops += o.acs;
        }
        r.sum_ber = r.sum_bits ? double(r.sum_errors) / double(r.sum_bits) : 0.0;
        std::tie(r.ci_lo, r.ci_hi) = wilson_interval(r.sum_errors, r.sum_bits);
        rows.push_back(std::move(r));
    }
    return rows;
}

/// CSV emission with a reproducibility comment header.
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, uint64_t seed,
                            uint64_t config_digest) {
    os << "# " << kToolVersion << " seed=" << seed << " config=" << to_hex(config_digest) << "\n";
    os << "decoder,users,phase_scenario,snr_db,frames,sum_bits,sum_errors,sum_ber,ci_lo,ci_hi,acs_ops\n";
    os.precision(12);
    for (const auto& r : rows)
        os << r.decoder << ',' << r.users << ',' << r.phase_scenario << ',' << r.snr_db << ','
           << r.frames << ',' << r.sum_bits << ',' << r.sum_errors << ',' << r.sum_ber << ','
           << r.ci_lo << ',' << r.ci_hi << ',' << r.acs_ops << "\n";
}

}  // namespace aircomp

#endif
