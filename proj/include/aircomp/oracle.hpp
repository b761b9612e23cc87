#ifndef AIRCOMP_ORACLE_HPP
#define AIRCOMP_ORACLE_HPP

// Brute-force reference implementations, deliberately independent of the
// production decoders: exhaustive path enumeration instead of trellis
// recursions, scalar binary message passing instead of vector messages, and
// direct marginalization instead of BP. Used by the validation suite.

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "aircomp/common.hpp"
#include "aircomp/conv.hpp"
#include "aircomp/ldpc.hpp"
#include "aircomp/likelihood.hpp"

namespace aircomp::oracle {

struct JointMlResult {
    SumWord sum;
    double cost = 0.0;
    bool tie = false;  // another input tuple with a different SumWord attains the same cost
};

/// Exhaustive joint maximum-likelihood decoding: depth-first enumeration of
/// every joint input sequence (all 2^{MK} tuples) with incremental cost.
inline JointMlResult exhaustive_joint_ml(const LikelihoodGrid& lh, const ConvCode& code, int users) {
    const int n_out = code.n_out();
    const int L = code.constraint_length;
    if (lh.positions() % size_t(n_out) != 0) throw std::invalid_argument("oracle: bad grid length");
    const size_t stages = lh.positions() / n_out;
    const size_t K = stages - size_t(L - 1);
    const size_t ncomb = lh.combos();

    // Offset-normalized negative logs (per-position max scaled to 1), matching
    // the path-cost convention used throughout.
    std::vector<double> nll(lh.values().size());
    for (size_t n = 0; n < lh.positions(); ++n) {
        const double* row = lh.at(n);
        double mx = 0.0;
        for (size_t b = 0; b < ncomb; ++b) mx = std::max(mx, row[b]);
        for (size_t b = 0; b < ncomb; ++b)
            nll[n * ncomb + b] = row[b] > 0 ? -std::log(row[b] / mx)
                                            : std::numeric_limits<double>::infinity();
    }

    detail::UserTrellis ut(code);
    const int M = users;
    const int in_count = 1 << M;

    // Tail cost from a given joint-state vector (inputs forced to zero).
    auto stage_cost = [&](std::vector<int>& st, int b, size_t t) {
        double cost = 0.0;
        std::vector<uint8_t> outs(M);
        for (int u = 0; u < M; ++u) {
            const int bu = (b >> u) & 1;
            outs[u] = ut.out[size_t(st[u]) * 2 + bu];
            st[u] = ut.next[size_t(st[u]) * 2 + bu];
        }
        for (int j = 0; j < n_out; ++j) {
            int combo = 0;
            for (int u = 0; u < M; ++u) combo |= ((outs[u] >> j) & 1) << u;
            cost += nll[(t * n_out + j) * ncomb + combo];
        }
        return cost;
    };

    JointMlResult best;
    best.cost = std::numeric_limits<double>::infinity();
    std::vector<int> states(M, 0);
    std::vector<int> inputs(K, 0);

    // Recursive DFS over the K information stages. Stage costs are
    // non-negative, so a partial path strictly above the incumbent cost can
    // be cut without affecting the optimum or tie detection.
    auto dfs = [&](auto&& self, size_t t, double cost, std::vector<int> st) -> void {
        if (std::isinf(cost) || cost > best.cost + 1e-12) return;
        if (t == K) {
            for (size_t tt = K; tt < stages; ++tt) cost += stage_cost(st, 0, tt);
            if (cost < best.cost - 1e-12) {
                best.cost = cost;
                best.tie = false;
                best.sum.resize(K);
                for (size_t i = 0; i < K; ++i) best.sum[i] = uint8_t(std::popcount(unsigned(inputs[i])));
            } else if (cost <= best.cost + 1e-12) {
                for (size_t i = 0; i < K; ++i)
                    if (best.sum[i] != uint8_t(std::popcount(unsigned(inputs[i])))) {
                        best.tie = true;
                        break;
                    }
                if (cost < best.cost) best.cost = cost;
            }
            return;
        }
        for (int b = 0; b < in_count; ++b) {
            inputs[t] = b;
            std::vector<int> st2 = st;
            const double c = stage_cost(st2, b, t);
            self(self, t + 1, cost + c, std::move(st2));
        }
    };
    dfs(dfs, 0, 0.0, states);
    return best;
}

/// Plain single-user soft Viterbi over binary likelihoods (2 entries per
/// position), written directly from the textbook recursion.
inline BitBlock viterbi_reference(const LikelihoodGrid& lh, const ConvCode& code) {
    if (lh.users() != 1) throw std::invalid_argument("viterbi_reference: needs single-user grid");
    const int n_out = code.n_out();
    const size_t stages = lh.positions() / n_out;
    const int L = code.constraint_length;
    const size_t K = stages - size_t(L - 1);
    const int S = code.user_states();
    detail::UserTrellis ut(code);

    std::vector<double> nll(lh.positions() * 2);
    for (size_t n = 0; n < lh.positions(); ++n)
        for (int b = 0; b < 2; ++b) {
            const double mx = std::max(lh.at(n)[0], lh.at(n)[1]);
            nll[n * 2 + b] = lh.at(n)[b] > 0 ? -std::log(lh.at(n)[b] / mx)
                                             : std::numeric_limits<double>::infinity();
        }

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> pm(S, inf), nx(S);
    pm[0] = 0.0;
    std::vector<std::vector<int>> from(stages, std::vector<int>(S, -1));
    for (size_t t = 0; t < stages; ++t) {
        std::fill(nx.begin(), nx.end(), inf);
        const int in_count = t < K ? 2 : 1;
        for (int s = 0; s < S; ++s) {
            if (pm[s] == inf) continue;
            for (int b = 0; b < in_count; ++b) {
                const int d = ut.next[size_t(s) * 2 + b];
                const uint8_t o = ut.out[size_t(s) * 2 + b];
                double m = pm[s];
                for (int j = 0; j < n_out; ++j) m += nll[(t * n_out + j) * 2 + ((o >> j) & 1)];
                if (m < nx[d]) {
                    nx[d] = m;
                    from[t][d] = s * 2 + b;
                }
            }
        }
        pm.swap(nx);
    }
    BitBlock bits(K);
    int s = 0;
    for (size_t t = stages; t-- > 0;) {
        const int f = from[t][s];
        if (f < 0) throw std::runtime_error("viterbi_reference: broken traceback");
        if (t < K) bits[t] = uint8_t(f & 1);
        s = f >> 1;
    }
    return bits;
}

/// Plain single-user sum-product decoder in scalar probability form:
/// check rule p_even = (1 + prod(1-2 p1)) / 2, variable rule is a product.
inline BitBlock bp_reference_single(const LikelihoodGrid& lh, const ParityCheckMatrix& h,
                                    int iterations) {
    if (lh.users() != 1 || lh.positions() != h.n())
        throw std::invalid_argument("bp_reference_single: bad evidence");
    const auto& checks = h.checks();
    std::vector<double> ev(h.n());  // P(bit = 1)
    for (size_t v = 0; v < h.n(); ++v) {
        const double s = lh.at(v)[0] + lh.at(v)[1];
        if (s <= 0.0) throw std::invalid_argument("bp_reference_single: all-zero evidence");
        ev[v] = lh.at(v)[1] / s;
    }
    // messages stored per (check, slot)
    std::vector<std::vector<double>> v2c(checks.size()), c2v(checks.size());
    std::vector<std::vector<std::pair<size_t, size_t>>> var_slots(h.n());
    for (size_t c = 0; c < checks.size(); ++c) {
        v2c[c].resize(checks[c].size());
        c2v[c].assign(checks[c].size(), 0.5);
        for (size_t s = 0; s < checks[c].size(); ++s) {
            v2c[c][s] = ev[checks[c][s]];
            var_slots[checks[c][s]].push_back({c, s});
        }
    }
    for (int it = 0; it < iterations; ++it) {
        for (size_t c = 0; c < checks.size(); ++c)
            for (size_t s = 0; s < checks[c].size(); ++s) {
                double prod = 1.0;
                for (size_t s2 = 0; s2 < checks[c].size(); ++s2)
                    if (s2 != s) prod *= 1.0 - 2.0 * v2c[c][s2];
                c2v[c][s] = (1.0 - prod) / 2.0;
            }
        for (size_t v = 0; v < h.n(); ++v)
            for (size_t i = 0; i < var_slots[v].size(); ++i) {
                double p1 = ev[v], p0 = 1.0 - ev[v];
                for (size_t j = 0; j < var_slots[v].size(); ++j) {
                    if (j == i) continue;
                    const double m = c2v[var_slots[v][j].first][var_slots[v][j].second];
                    p1 *= m;
                    p0 *= 1.0 - m;
                }
                const double s = p0 + p1;
                if (s <= 0.0) throw DecodeFailure("bp_reference_single: contradiction");
                v2c[var_slots[v][i].first][var_slots[v][i].second] = p1 / s;
            }
    }
    BitBlock out;
    out.reserve(h.k());
    for (size_t v : h.systematic_positions()) {
        double p1 = ev[v], p0 = 1.0 - ev[v];
        for (auto [c, s] : var_slots[v]) {
            p1 *= c2v[c][s];
            p0 *= 1.0 - c2v[c][s];
        }
        out.push_back(p1 > p0 ? 1 : 0);
    }
    return out;
}

/// Exact per-variable posteriors over joint labels by enumerating every
/// M-tuple of codewords and weighting it by the evidence products.
inline std::vector<MessageVector> brute_joint_posteriors(const LikelihoodGrid& lh,
                                                         const ParityCheckMatrix& h, int users) {
    const size_t n = h.n(), k = h.k();
    const size_t ncomb = size_t{1} << users;
    if (k * users > 30) throw std::invalid_argument("brute_joint_posteriors: too large");
    const auto ev = init_messages(lh);

    // Precompute all single-user codewords.
    std::vector<BitBlock> words(size_t{1} << k);
    for (size_t m = 0; m < words.size(); ++m) {
        BitBlock msg(k);
        for (size_t i = 0; i < k; ++i) msg[i] = uint8_t((m >> i) & 1);
        words[m] = h.encode(msg);
    }

    std::vector<MessageVector> post(n, MessageVector(ncomb, 0.0));
    std::vector<size_t> idx(users, 0);
    const size_t total = size_t{1} << (k * users);
    for (size_t t = 0; t < total; ++t) {
        for (int u = 0; u < users; ++u) idx[u] = (t >> (u * k)) & ((size_t{1} << k) - 1);
        double w = 1.0;
        std::vector<uint8_t> labels(n);
        for (size_t v = 0; v < n; ++v) {
            uint8_t b = 0;
            for (int u = 0; u < users; ++u) b |= uint8_t(words[idx[u]][v] << u);
            labels[v] = b;
            w *= ev[v][b];
        }
        if (w == 0.0) continue;
        for (size_t v = 0; v < n; ++v) post[v][labels[v]] += w;
    }
    for (auto& p : post) {
        double s = 0.0;
        for (double x : p) s += x;
        if (s <= 0.0) throw std::runtime_error("brute_joint_posteriors: zero partition function");
        for (double& x : p) x /= s;
    }
    return post;
}

/// Monte-Carlo SUM BER for n users with i.i.d. per-user bit errors at rate
/// alpha: simulate the bit streams directly and count SUM mismatches.
inline double mc_sum_ber(double alpha, int n, size_t bits, uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    size_t errors = 0;
    for (size_t i = 0; i < bits; ++i) {
        int true_sum = 0, rx_sum = 0;
        for (int u = 0; u < n; ++u) {
            const int b = int(rng() & 1u);
            true_sum += b;
            rx_sum += unif(rng) < alpha ? 1 - b : b;
        }
        errors += rx_sum != true_sum;
    }
    return double(errors) / double(bits);
}

}  // namespace aircomp::oracle

#endif
