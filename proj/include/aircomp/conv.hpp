#ifndef AIRCOMP_CONV_HPP
#define AIRCOMP_CONV_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "aircomp/common.hpp"
#include "aircomp/likelihood.hpp"

namespace aircomp {

/// Rate 1/n convolutional code given by octal generator polynomials; the
/// most significant octal digit taps the current input bit. Zero-tail
/// termination appends L-1 zeros so every path starts and ends in state 0.
struct ConvCode {
    int constraint_length = 7;                  // L
    std::vector<unsigned> generators = {0133, 0171};
    bool zero_tail = true;

    void validate() const {
        if (constraint_length < 2) throw std::invalid_argument("ConvCode: L must be >= 2");
        if (generators.empty()) throw std::invalid_argument("ConvCode: no generators");
        for (unsigned g : generators)
            if (g == 0 || g >= (1u << constraint_length))
                throw std::invalid_argument("ConvCode: generator degree out of range");
    }
    int n_out() const { return int(generators.size()); }
    int user_states() const { return 1 << (constraint_length - 1); }
    size_t coded_length(size_t k) const { return (k + constraint_length - 1) * generators.size(); }
};

namespace detail {

inline unsigned reverse_bits(unsigned v, int width) {
    unsigned r = 0;
    for (int i = 0; i < width; ++i)
        if (v & (1u << i)) r |= 1u << (width - 1 - i);
    return r;
}

/// Per-user trellis tables: state = previous L-1 input bits, LSB most recent.
struct UserTrellis {
    int states = 0;
    int n_out = 0;
    std::vector<uint16_t> next;  // [state*2 + bit]
    std::vector<uint8_t> out;    // [state*2 + bit], packed output bits (bit j = generator j)

    explicit UserTrellis(const ConvCode& code) {
        code.validate();
        const int L = code.constraint_length;
        states = code.user_states();
        n_out = code.n_out();
        if (n_out > 8) throw std::invalid_argument("ConvCode: at most 8 generators supported");
        std::vector<unsigned> taps;
        for (unsigned g : code.generators) taps.push_back(reverse_bits(g, L));
        next.resize(size_t(states) * 2);
        out.resize(size_t(states) * 2);
        for (int s = 0; s < states; ++s)
            for (int b = 0; b < 2; ++b) {
                const unsigned window = (unsigned(s) << 1) | unsigned(b);
                next[size_t(s) * 2 + b] = uint16_t(window & unsigned(states - 1));
                uint8_t o = 0;
                for (int j = 0; j < n_out; ++j)
                    o |= uint8_t(std::popcount(window & taps[j]) & 1) << j;
                out[size_t(s) * 2 + b] = o;
            }
    }
};

inline void check_feasible(const LikelihoodGrid& lh) {
    const size_t nc = lh.combos();
    for (size_t n = 0; n < lh.positions(); ++n) {
        const double* row = lh.at(n);
        bool any = false;
        for (size_t b = 0; b < nc; ++b) {
            if (!(row[b] >= 0) || !std::isfinite(row[b]))
                throw std::invalid_argument("likelihoods must be finite and nonnegative");
            any = any || row[b] > 0;
        }
        if (!any) throw std::invalid_argument("infeasible likelihoods: all-zero position");
    }
}

/// Negative-log likelihoods with the per-position minimum subtracted; the
/// offset is a per-position constant and does not move the argmin path.
inline std::vector<double> neg_log(const LikelihoodGrid& lh) {
    check_feasible(lh);
    const size_t nc = lh.combos();
    std::vector<double> nll(lh.values().size());
    for (size_t n = 0; n < lh.positions(); ++n) {
        const double* row = lh.at(n);
        double mx = 0.0;
        for (size_t b = 0; b < nc; ++b) mx = std::max(mx, row[b]);
        for (size_t b = 0; b < nc; ++b)
            nll[n * nc + b] = row[b] > 0 ? -std::log(row[b] / mx)
                                         : std::numeric_limits<double>::infinity();
    }
    return nll;
}

}  // namespace detail

inline BitBlock conv_encode(const BitBlock& bits, const ConvCode& code) {
    detail::UserTrellis t(code);
    BitBlock out;
    out.reserve(code.coded_length(bits.size()));
    int s = 0;
    auto push = [&](int b) {
        const uint8_t o = t.out[size_t(s) * 2 + b];
        for (int j = 0; j < t.n_out; ++j) out.push_back((o >> j) & 1u);
        s = t.next[size_t(s) * 2 + b];
    };
    for (uint8_t b : bits) push(b);
    for (int i = 0; i < code.constraint_length - 1; ++i) push(0);  // zero tail
    return out;
}

/// Counts one ACS operation per trellis state advanced per decoding stage.
struct AcsCounter {
    uint64_t ops = 0;
};

struct JointDecodeResult {
    SumWord sum;
    double cost = 0.0;  // accumulated -log likelihood of the winning path (offset-normalized)
};

namespace detail {

struct JointTrellisDims {
    int users;
    int L;
    int user_states;
    size_t states;
    int n_out;
    int inputs;  // 2^M joint input labels
    JointTrellisDims(const ConvCode& code, int M) {
        if (M < 1) throw std::invalid_argument("user count must be >= 1");
        users = M;
        L = code.constraint_length;
        user_states = code.user_states();
        n_out = code.n_out();
        inputs = 1 << M;
        states = size_t{1} << (size_t(M) * (L - 1));
    }
};

inline size_t decoded_stage_count(const LikelihoodGrid& lh, const ConvCode& code, size_t* k_out) {
    const size_t n_out = size_t(code.n_out());
    if (lh.positions() % n_out != 0)
        throw std::invalid_argument("likelihood grid length not a multiple of code outputs");
    const size_t stages = lh.positions() / n_out;
    if (stages < size_t(code.constraint_length) - 1)
        throw std::invalid_argument("likelihood grid shorter than the zero tail");
    *k_out = stages - (code.constraint_length - 1);
    return stages;
}

/// Forward-keyed joint-trellis edge tables: for source state p and joint
/// input label b, the destination state and the packed per-output-position
/// combination labels (M bits per output). Built only when the state space
/// is small enough to tabulate; callers fall back to on-the-fly expansion
/// otherwise.
struct ForwardEdgeTables {
    bool built = false;
    std::vector<uint32_t> dst;  // [p*2^M + b]
    std::vector<uint16_t> lbl;

    ForwardEdgeTables(const UserTrellis& ut, const JointTrellisDims& dims) {
        const size_t S = dims.states;
        const int M = dims.users, ncomb = dims.inputs, n_out = dims.n_out;
        const int Lm1 = dims.L - 1, us_mask = dims.user_states - 1;
        if (size_t(n_out) * M > 16 || S * size_t(ncomb) > (size_t{1} << 24)) return;
        dst.resize(S * size_t(ncomb));
        lbl.resize(S * size_t(ncomb));
        for (size_t p = 0; p < S; ++p)
            for (int b = 0; b < ncomb; ++b) {
                uint64_t d = 0;
                std::array<uint8_t, 8> outs{};
                for (int u = 0; u < M; ++u) {
                    const int su = int(p >> (u * Lm1)) & us_mask;
                    const int bu = (b >> u) & 1;
                    d |= uint64_t(ut.next[size_t(su) * 2 + bu]) << (u * Lm1);
                    outs[u] = ut.out[size_t(su) * 2 + bu];
                }
                uint16_t idx = 0;
                for (int j = 0; j < n_out; ++j) {
                    int combo = 0;
                    for (int u = 0; u < M; ++u) combo |= ((outs[u] >> j) & 1) << u;
                    idx |= uint16_t(combo) << (j * M);
                }
                dst[p * size_t(ncomb) + b] = uint32_t(d);
                lbl[p * size_t(ncomb) + b] = idx;
            }
        built = true;
    }
};

/// Per-stage table of summed metrics (or multiplied likelihoods) over packed
/// combination labels, matching ForwardEdgeTables::lbl.
template <class Combine>
inline void stage_table(const double* vals, size_t t, int n_out, int M, double init, Combine comb,
                        std::vector<double>& tab) {
    const int ncomb = 1 << M;
    const int combo_mask = ncomb - 1;
    for (size_t idx = 0; idx < tab.size(); ++idx) {
        double m = init;
        for (int j = 0; j < n_out; ++j)
            m = comb(m, vals[(t * n_out + j) * size_t(ncomb) + ((idx >> (j * M)) & combo_mask)]);
        tab[idx] = m;
    }
}

}  // namespace detail

/// Full-state joint Viterbi decoder over the product trellis of all users'
/// encoders. Returns the SUM of the users' source bits along the minimum-cost
/// path from joint state 0 back to joint state 0.
inline JointDecodeResult fsjd_decode_detail(const LikelihoodGrid& lh, const ConvCode& code, int users,
                                            AcsCounter* acs = nullptr) {
    if (lh.users() != users) throw std::invalid_argument("fsjd: likelihood user count mismatch");
    detail::JointTrellisDims dims(code, users);
    if (dims.states > (size_t{1} << 22)) throw std::invalid_argument("fsjd: joint state space too large");
    size_t K = 0;
    const size_t stages = detail::decoded_stage_count(lh, code, &K);
    const auto nll = detail::neg_log(lh);
    detail::UserTrellis ut(code);

    const size_t S = dims.states;
    const int M = users;
    const int Lm1 = dims.L - 1;
    const int ncomb = 1 << M;
    const int n_out = dims.n_out;
    const int us_mask = dims.user_states - 1;
    const int high_bit = 1 << (dims.L - 2);

    // Static per-destination edge tables: predecessor joint state and the
    // per-output-position combination labels, for each of the 2^M choices of
    // the bits shifted out of the users' registers.
    const size_t edges = S * size_t(ncomb);
    std::vector<uint32_t> pred(edges);
    std::vector<uint16_t> bmidx(edges);  // packed combo labels, M bits per output position
    if (size_t(n_out) * M > 16) throw std::invalid_argument("fsjd: too many outputs to pack");
    for (size_t d = 0; d < S; ++d) {
        for (int c = 0; c < ncomb; ++c) {
            uint32_t p = 0;
            std::vector<uint8_t> outs(M);
            for (int u = 0; u < M; ++u) {
                const int du = int(d >> (u * Lm1)) & us_mask;
                const int bu = du & 1;
                const int pu = (du >> 1) | (((c >> u) & 1) ? high_bit : 0);
                p |= uint32_t(pu) << (u * Lm1);
                outs[u] = ut.out[size_t(pu) * 2 + bu];
            }
            uint16_t idx = 0;
            for (int j = 0; j < n_out; ++j) {
                int combo = 0;
                for (int u = 0; u < M; ++u) combo |= ((outs[u] >> j) & 1) << u;
                idx |= uint16_t(combo) << (j * M);
            }
            pred[d * ncomb + c] = p;
            bmidx[d * ncomb + c] = idx;
        }
    }

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> pm(S, inf), pm_next(S);
    pm[0] = 0.0;
    std::vector<uint8_t> choice(stages * S);

    // Joint input label of destination d is fixed by the users' register LSBs.
    auto input_of = [&](size_t d) {
        int b = 0;
        for (int u = 0; u < M; ++u) b |= int((d >> (u * Lm1)) & 1) << u;
        return b;
    };

    std::vector<double> mtab(size_t(1) << (n_out * M));
    const int combo_mask = ncomb - 1;
    for (size_t t = 0; t < stages; ++t) {
        const size_t base = t * n_out;
        // Stage metric table over packed combo labels.
        for (size_t idx = 0; idx < mtab.size(); ++idx) {
            double m = 0.0;
            for (int j = 0; j < n_out; ++j) m += nll[(base + j) * ncomb + ((idx >> (j * M)) & combo_mask)];
            mtab[idx] = m;
        }
        const bool tail = t >= K;
        uint8_t* ch = choice.data() + t * S;
        for (size_t d = 0; d < S; ++d) {
            if (tail && input_of(d) != 0) {
                pm_next[d] = inf;
                ch[d] = 0;
                continue;
            }
            const uint32_t* pr = pred.data() + d * ncomb;
            const uint16_t* bi = bmidx.data() + d * ncomb;
            double best = pm[pr[0]] + mtab[bi[0]];
            int bestc = 0;
            for (int c = 1; c < ncomb; ++c) {
                const double m = pm[pr[c]] + mtab[bi[c]];
                // pred[d][c] is strictly increasing in c (each c bit lands on
                // the top bit of its per-user field, order-preserving), so
                // keeping the first strict minimum selects the lowest
                // predecessor state on ties; the ternaries compile to
                // branchless selects, immune to data-dependent misprediction
                bestc = m < best ? c : bestc;
                best = m < best ? m : best;
            }
            pm_next[d] = best;
            ch[d] = uint8_t(bestc);
        }
        pm.swap(pm_next);
        if (acs) acs->ops += S;
    }

    if (!std::isfinite(pm[0])) throw std::runtime_error("fsjd: no feasible path to the zero state");

    JointDecodeResult res;
    res.cost = pm[0];
    res.sum.resize(K);
    size_t d = 0;
    for (size_t t = stages; t-- > 0;) {
        const int b = input_of(d);
        if (t < K) res.sum[t] = uint8_t(std::popcount(unsigned(b)));
        d = pred[d * ncomb + choice[t * S + d]];
    }
    return res;
}

inline SumWord fsjd_decode(const LikelihoodGrid& lh, const ConvCode& code, int users,
                           AcsCounter* acs = nullptr) {
    return fsjd_decode_detail(lh, code, users, acs).sum;
}

/// Reduced-state joint decoder: after every stage only the R lowest-metric
/// states survive (ties broken toward the lowest state index). If the zero
/// end state was pruned, traceback starts from the lowest-metric survivor.
inline JointDecodeResult rsjd_decode_detail(const LikelihoodGrid& lh, const ConvCode& code, int users,
                                            size_t retained, AcsCounter* acs = nullptr) {
    if (lh.users() != users) throw std::invalid_argument("rsjd: likelihood user count mismatch");
    detail::JointTrellisDims dims(code, users);
    if (retained < 1) throw std::invalid_argument("rsjd: retained states out of range");
    retained = std::min(retained, dims.states);
    size_t K = 0;
    const size_t stages = detail::decoded_stage_count(lh, code, &K);
    const auto nll = detail::neg_log(lh);
    detail::UserTrellis ut(code);

    const int M = users;
    const int Lm1 = dims.L - 1;
    const int ncomb = 1 << M;
    const int n_out = dims.n_out;
    const int us_mask = dims.user_states - 1;

    struct Node {
        uint64_t state;
        double metric;
        uint32_t parent;  // index into previous stage's survivor list
        uint8_t input;
        uint64_t pstate;  // predecessor state, cached for tie-breaking
    };
    std::vector<std::vector<Node>> stage_nodes(stages);
    std::vector<Node> active{{0, 0.0, 0, 0, 0}};
    std::vector<Node> cand;

    const detail::ForwardEdgeTables fet(ut, dims);
    std::vector<double> mtab(fet.built ? size_t(1) << (n_out * M) : 0);
    // Stamped dense ACS scratch for the tabulated path: one slot per state,
    // reset lazily via the stage stamp.
    std::vector<double> best;
    std::vector<uint32_t> best_par, stamp;
    std::vector<uint8_t> best_in;
    std::vector<uint32_t> touched;
    if (fet.built) {
        best.resize(dims.states);
        best_par.resize(dims.states);
        best_in.resize(dims.states);
        stamp.assign(dims.states, 0);
    }
    uint32_t cur_stamp = 0;

    for (size_t t = 0; t < stages; ++t) {
        const size_t base = t * n_out;
        const bool tail = t >= K;
        const int in_count = tail ? 1 : ncomb;  // tail forces all-zero inputs
        cand.clear();
        if (fet.built) {
            detail::stage_table(nll.data(), t, n_out, M, 0.0,
                                [](double a, double b) { return a + b; }, mtab);
            // Survivors are kept in increasing state order, so on metric ties
            // the first (lowest predecessor state) edge wins; the destination
            // fixes the input label, so no further tie key exists.
            ++cur_stamp;
            touched.clear();
            for (uint32_t ai = 0; ai < active.size(); ++ai) {
                const Node& a = active[ai];
                const uint32_t* dp = fet.dst.data() + a.state * size_t(ncomb);
                const uint16_t* lp = fet.lbl.data() + a.state * size_t(ncomb);
                for (int b = 0; b < in_count; ++b) {
                    const uint32_t d = dp[b];
                    const double m = a.metric + mtab[lp[b]];
                    if (stamp[d] != cur_stamp) {
                        stamp[d] = cur_stamp;
                        best[d] = m;
                        best_par[d] = ai;
                        best_in[d] = uint8_t(b);
                        touched.push_back(d);
                    } else if (m < best[d]) {
                        best[d] = m;
                        best_par[d] = ai;
                        best_in[d] = uint8_t(b);
                    }
                }
            }
            for (uint32_t d : touched)
                cand.push_back({d, best[d], best_par[d], best_in[d], active[best_par[d]].state});
        } else {
            for (uint32_t ai = 0; ai < active.size(); ++ai) {
                const Node& a = active[ai];
                for (int b = 0; b < in_count; ++b) {
                    uint64_t d = 0;
                    double bm = 0.0;
                    std::array<uint8_t, 8> outs{};
                    for (int u = 0; u < M; ++u) {
                        const int su = int(a.state >> (u * Lm1)) & us_mask;
                        const int bu = (b >> u) & 1;
                        d |= uint64_t(ut.next[size_t(su) * 2 + bu]) << (u * Lm1);
                        outs[u] = ut.out[size_t(su) * 2 + bu];
                    }
                    for (int j = 0; j < n_out; ++j) {
                        int combo = 0;
                        for (int u = 0; u < M; ++u) combo |= ((outs[u] >> j) & 1) << u;
                        bm += nll[(base + j) * ncomb + combo];
                    }
                    cand.push_back({d, a.metric + bm, ai, uint8_t(b), a.state});
                }
            }
        }
        if (acs) acs->ops += active.size();
        if (!fet.built) {
            // ACS per destination: keep the best incoming edge, ties toward the
            // lowest predecessor state then the lexicographically smallest input.
            std::sort(cand.begin(), cand.end(), [](const Node& x, const Node& y) {
                if (x.state != y.state) return x.state < y.state;
                if (x.metric != y.metric) return x.metric < y.metric;
                if (x.pstate != y.pstate) return x.pstate < y.pstate;
                return x.input < y.input;
            });
            size_t w = 0;
            for (size_t i = 0; i < cand.size(); ++i)
                if (i == 0 || cand[i].state != cand[w - 1].state) cand[w++] = cand[i];
            cand.resize(w);
        }
        // Keep the R lowest-metric states, ties toward the lowest state index.
        const auto by_metric = [](const Node& x, const Node& y) {
            if (x.metric != y.metric) return x.metric < y.metric;
            return x.state < y.state;
        };
        if (cand.size() > retained) {
            std::nth_element(cand.begin(), cand.begin() + retained, cand.end(), by_metric);
            cand.resize(retained);
        }
        bool any_finite = false;
        for (const Node& n : cand) any_finite = any_finite || std::isfinite(n.metric);
        if (cand.empty() || !any_finite) throw std::runtime_error("rsjd: all survivors infeasible");
        // Store survivors in increasing state order; parent indices recorded
        // by the next stage refer to this order.
        std::sort(cand.begin(), cand.end(),
                  [](const Node& x, const Node& y) { return x.state < y.state; });
        stage_nodes[t] = cand;
        active = stage_nodes[t];
    }

    // Prefer the zero end state; fall back to the lowest-metric survivor.
    const auto& last = stage_nodes.back();
    uint32_t end = 0;
    bool found_zero = false;
    for (uint32_t i = 0; i < last.size(); ++i)
        if (last[i].state == 0) {
            end = i;
            found_zero = true;
            break;
        }
    if (!found_zero) {
        end = 0;
        for (uint32_t i = 1; i < last.size(); ++i)
            if (last[i].metric < last[end].metric) end = i;
    }

    JointDecodeResult res;
    res.cost = last[end].metric;
    res.sum.resize(K);
    uint32_t idx = end;
    for (size_t t = stages; t-- > 0;) {
        const Node& n = stage_nodes[t][idx];
        if (t < K) res.sum[t] = uint8_t(std::popcount(unsigned(n.input)));
        idx = n.parent;
    }
    return res;
}

inline SumWord rsjd_decode(const LikelihoodGrid& lh, const ConvCode& code, int users, size_t retained,
                           AcsCounter* acs = nullptr) {
    return rsjd_decode_detail(lh, code, users, retained, acs).sum;
}

struct BcjrMode {
    bool reduced = false;
    size_t retained = 256;
    static BcjrMode full() { return {false, 0}; }
    static BcjrMode reduced_states(size_t r) { return {true, r}; }
};

/// SUM bit-optimal trellis decoder: forward/backward recursion over the joint
/// trellis with per-stage renormalization; each stage's SUM symbol maximizes
/// the summed transition posteriors delta = alpha * gamma * beta. Reduced mode
/// restricts both recursions to the states retained by an RSJD forward pass.
inline SumWord bcjr_sum_decode(const LikelihoodGrid& lh, const ConvCode& code, int users,
                               BcjrMode mode = BcjrMode::full()) {
    if (lh.users() != users) throw std::invalid_argument("bcjr: likelihood user count mismatch");
    detail::JointTrellisDims dims(code, users);
    if (dims.states > (size_t{1} << 22)) throw std::invalid_argument("bcjr: joint state space too large");
    size_t K = 0;
    const size_t stages = detail::decoded_stage_count(lh, code, &K);
    detail::check_feasible(lh);
    detail::UserTrellis ut(code);

    const int M = users;
    const int Lm1 = dims.L - 1;
    const int ncomb = 1 << M;
    const int n_out = dims.n_out;
    const int us_mask = dims.user_states - 1;
    const size_t S = dims.states;

    // Per-position likelihoods scaled to max 1 per position; gamma products
    // then stay in range and per-stage normalization removes the common factor.
    std::vector<double> lhs(lh.values().size());
    for (size_t n = 0; n < lh.positions(); ++n) {
        const double* row = lh.at(n);
        double mx = 0.0;
        for (int b = 0; b < ncomb; ++b) mx = std::max(mx, row[b]);
        for (int b = 0; b < ncomb; ++b) lhs[n * ncomb + b] = row[b] / mx;
    }

    const detail::ForwardEdgeTables fet(ut, dims);
    std::vector<double> gtab(fet.built ? size_t(1) << (n_out * M) : 0);
    // On-the-fly edge expansion for state spaces too large to tabulate.
    auto edge_slow = [&](size_t p, int b, size_t t, uint64_t* d, double* g) {
        *d = 0;
        *g = 1.0;
        std::array<uint8_t, 8> outs{};
        for (int u = 0; u < M; ++u) {
            const int su = int(p >> (u * Lm1)) & us_mask;
            const int bu = (b >> u) & 1;
            *d |= uint64_t(ut.next[size_t(su) * 2 + bu]) << (u * Lm1);
            outs[u] = ut.out[size_t(su) * 2 + bu];
        }
        for (int j = 0; j < n_out; ++j) {
            int combo = 0;
            for (int u = 0; u < M; ++u) combo |= ((outs[u] >> j) & 1) << u;
            *g *= lhs[(t * n_out + j) * ncomb + combo];
        }
    };

    // Alive masks per stage boundary (0..stages). Full mode: everything alive.
    std::vector<std::vector<uint8_t>> alive;
    if (mode.reduced) {
        alive.assign(stages + 1, std::vector<uint8_t>(S, 0));
        alive[0][0] = 1;
        // RSJD forward pass records the retained states at each boundary.
        struct Probe {
            uint64_t state;
            double metric;
        };
        const auto nll = detail::neg_log(lh);
        std::vector<double> mtab(fet.built ? gtab.size() : 0);
        std::vector<Probe> act{{0, 0.0}};
        std::vector<Probe> cand;
        for (size_t t = 0; t < stages; ++t) {
            const bool tail = t >= K;
            const int in_count = tail ? 1 : ncomb;
            cand.clear();
            if (fet.built) {
                detail::stage_table(nll.data(), t, n_out, M, 0.0,
                                    [](double a, double b) { return a + b; }, mtab);
                for (const Probe& a : act) {
                    const uint32_t* dp = fet.dst.data() + a.state * size_t(ncomb);
                    const uint16_t* lp = fet.lbl.data() + a.state * size_t(ncomb);
                    for (int b = 0; b < in_count; ++b)
                        cand.push_back({dp[b], a.metric + mtab[lp[b]]});
                }
            } else {
                for (const Probe& a : act)
                    for (int b = 0; b < in_count; ++b) {
                        uint64_t d = 0;
                        double bm = 0.0;
                        std::array<uint8_t, 8> outs{};
                        for (int u = 0; u < M; ++u) {
                            const int su = int(a.state >> (u * Lm1)) & us_mask;
                            const int bu = (b >> u) & 1;
                            d |= uint64_t(ut.next[size_t(su) * 2 + bu]) << (u * Lm1);
                            outs[u] = ut.out[size_t(su) * 2 + bu];
                        }
                        for (int j = 0; j < n_out; ++j) {
                            int combo = 0;
                            for (int u = 0; u < M; ++u) combo |= ((outs[u] >> j) & 1) << u;
                            bm += nll[(t * n_out + j) * ncomb + combo];
                        }
                        cand.push_back({d, a.metric + bm});
                    }
            }
            std::sort(cand.begin(), cand.end(), [](const Probe& x, const Probe& y) {
                if (x.state != y.state) return x.state < y.state;
                return x.metric < y.metric;
            });
            act.clear();
            for (const Probe& c : cand)
                if (act.empty() || act.back().state != c.state) act.push_back(c);
            std::sort(act.begin(), act.end(), [](const Probe& x, const Probe& y) {
                if (x.metric != y.metric) return x.metric < y.metric;
                return x.state < y.state;
            });
            if (act.size() > mode.retained) act.resize(mode.retained);
            for (const Probe& a : act) alive[t + 1][a.state] = 1;
        }
        alive[stages][0] = 1;  // the terminating state always participates
    }
    auto is_alive = [&](size_t boundary, size_t s) {
        return !mode.reduced || alive[boundary][s] != 0;
    };

    // Forward recursion, alpha stored per boundary.
    std::vector<std::vector<double>> alpha(stages + 1, std::vector<double>(S, 0.0));
    alpha[0][0] = 1.0;
    for (size_t t = 0; t < stages; ++t) {
        const bool tail = t >= K;
        const int in_count = tail ? 1 : ncomb;
        auto& an = alpha[t + 1];
        if (fet.built)
            detail::stage_table(lhs.data(), t, n_out, M, 1.0,
                                [](double a, double b) { return a * b; }, gtab);
        for (size_t p = 0; p < S; ++p) {
            const double ap = alpha[t][p];
            if (ap == 0.0 || !is_alive(t, p)) continue;
            if (fet.built) {
                const uint32_t* dp = fet.dst.data() + p * size_t(ncomb);
                const uint16_t* lp = fet.lbl.data() + p * size_t(ncomb);
                for (int b = 0; b < in_count; ++b) {
                    const uint32_t d = dp[b];
                    if (is_alive(t + 1, d)) an[d] += ap * gtab[lp[b]];
                }
            } else {
                for (int b = 0; b < in_count; ++b) {
                    uint64_t d;
                    double g;
                    edge_slow(p, b, t, &d, &g);
                    if (is_alive(t + 1, d)) an[d] += ap * g;
                }
            }
        }
        double tot = 0.0;
        for (double v : an) tot += v;
        if (tot == 0.0) throw std::runtime_error("bcjr: forward recursion vanished");
        for (double& v : an) v /= tot;
    }

    // Backward recursion with per-stage SUM-symbol posteriors.
    std::vector<double> beta(S, 0.0), beta_prev(S);
    beta[0] = 1.0;
    SumWord sum(K);
    for (size_t t = stages; t-- > 0;) {
        const bool tail = t >= K;
        const int in_count = tail ? 1 : ncomb;
        std::fill(beta_prev.begin(), beta_prev.end(), 0.0);
        std::vector<double> post(size_t(M) + 1, 0.0);
        if (fet.built)
            detail::stage_table(lhs.data(), t, n_out, M, 1.0,
                                [](double a, double b) { return a * b; }, gtab);
        for (size_t p = 0; p < S; ++p) {
            if (!is_alive(t, p)) continue;
            const double ap = alpha[t][p];
            if (fet.built) {
                const uint32_t* dp = fet.dst.data() + p * size_t(ncomb);
                const uint16_t* lp = fet.lbl.data() + p * size_t(ncomb);
                double bp = 0.0;
                for (int b = 0; b < in_count; ++b) {
                    const double gbd = gtab[lp[b]] * beta[dp[b]];
                    bp += gbd;
                    if (!tail) post[size_t(std::popcount(unsigned(b)))] += ap * gbd;
                }
                beta_prev[p] = bp;
            } else {
                for (int b = 0; b < in_count; ++b) {
                    uint64_t d;
                    double g;
                    edge_slow(p, b, t, &d, &g);
                    const double bd = beta[d];
                    if (bd == 0.0 && ap == 0.0) continue;
                    beta_prev[p] += g * bd;
                    if (!tail) post[size_t(std::popcount(unsigned(b)))] += ap * g * bd;
                }
            }
        }
        if (!tail) {
            double tot = 0.0;
            for (double v : post) tot += v;
            if (tot == 0.0) throw std::runtime_error("bcjr: all-zero stage posterior");
            int best = 0;
            for (int s = 1; s <= M; ++s)
                if (post[s] > post[best]) best = s;
            sum[t] = uint8_t(best);
        }
        double tot = 0.0;
        for (double v : beta_prev) tot += v;
        if (tot == 0.0) throw std::runtime_error("bcjr: backward recursion vanished");
        for (double& v : beta_prev) v /= tot;
        beta.swap(beta_prev);
    }
    return sum;
}

/// Per-stage SUM-symbol posteriors (normalized), full-state mode; used by the
/// exactness checks against brute-force enumeration.
inline std::vector<std::vector<double>> bcjr_sum_posteriors(const LikelihoodGrid& lh,
                                                            const ConvCode& code, int users) {
    // Same recursions as bcjr_sum_decode, collecting the normalized posteriors.
    detail::JointTrellisDims dims(code, users);
    size_t K = 0;
    const size_t stages = detail::decoded_stage_count(lh, code, &K);
    detail::check_feasible(lh);
    detail::UserTrellis ut(code);
    const int M = users, Lm1 = dims.L - 1, ncomb = 1 << M, n_out = dims.n_out;
    const int us_mask = dims.user_states - 1;
    const size_t S = dims.states;

    std::vector<std::vector<double>> alpha(stages + 1, std::vector<double>(S, 0.0));
    alpha[0][0] = 1.0;
    auto edge = [&](size_t p, int b, size_t t, uint64_t* d, double* g) {
        *d = 0;
        *g = 1.0;
        std::array<uint8_t, 8> outs{};
        for (int u = 0; u < M; ++u) {
            const int su = int(p >> (u * Lm1)) & us_mask;
            const int bu = (b >> u) & 1;
            *d |= uint64_t(ut.next[size_t(su) * 2 + bu]) << (u * Lm1);
            outs[u] = ut.out[size_t(su) * 2 + bu];
        }
        for (int j = 0; j < n_out; ++j) {
            int combo = 0;
            for (int u = 0; u < M; ++u) combo |= ((outs[u] >> j) & 1) << u;
            *g *= lh.at(t * n_out + j)[combo];
        }
    };
    for (size_t t = 0; t < stages; ++t) {
        const int in_count = t >= K ? 1 : ncomb;
        for (size_t p = 0; p < S; ++p) {
            if (alpha[t][p] == 0.0) continue;
            for (int b = 0; b < in_count; ++b) {
                uint64_t d;
                double g;
                edge(p, b, t, &d, &g);
                alpha[t + 1][d] += alpha[t][p] * g;
            }
        }
        double tot = 0.0;
        for (double v : alpha[t + 1]) tot += v;
        for (double& v : alpha[t + 1]) v /= tot;
    }
    std::vector<double> beta(S, 0.0), beta_prev(S);
    beta[0] = 1.0;
    std::vector<std::vector<double>> posts(K);
    for (size_t t = stages; t-- > 0;) {
        const bool tail = t >= K;
        const int in_count = tail ? 1 : ncomb;
        std::fill(beta_prev.begin(), beta_prev.end(), 0.0);
        std::vector<double> post(size_t(M) + 1, 0.0);
        for (size_t p = 0; p < S; ++p) {
            for (int b = 0; b < in_count; ++b) {
                uint64_t d;
                double g;
                edge(p, b, t, &d, &g);
                beta_prev[p] += g * beta[d];
                if (!tail) post[size_t(std::popcount(unsigned(b)))] += alpha[t][p] * g * beta[d];
            }
        }
        if (!tail) {
            double tot = 0.0;
            for (double v : post) tot += v;
            for (double& v : post) v /= tot;
            posts[t] = post;
        }
        double tot = 0.0;
        for (double v : beta_prev) tot += v;
        for (double& v : beta_prev) v /= tot;
        beta.swap(beta_prev);
    }
    return posts;
}

/// Parallel single-user decoders: marginalize per user, run M independent
/// single-user Viterbi decodes, and sum the decoded source bits.
inline SumWord conv_psud_decode(const LikelihoodGrid& lh, const ConvCode& code, int users,
                                AcsCounter* acs = nullptr) {
    SumWord total;
    for (int u = 0; u < users; ++u) {
        auto single = marginalize_user(lh, u);
        SumWord bits = fsjd_decode(single, code, 1, acs);
        if (u == 0)
            total = std::move(bits);
        else
            for (size_t i = 0; i < total.size(); ++i) total[i] = uint8_t(total[i] + bits[i]);
    }
    return total;
}

}  // namespace aircomp

#endif
