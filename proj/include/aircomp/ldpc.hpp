#ifndef AIRCOMP_LDPC_HPP
#define AIRCOMP_LDPC_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/common.hpp"
#include "aircomp/likelihood.hpp"

namespace aircomp {

/// Thrown when a frame cannot be decoded (contradictory or vanished beliefs).
struct DecodeFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Sparse binary parity-check code. File format: a header line "N K R"
/// followed by R lines, one per check, listing the 0-based variable indices
/// participating in that check. The systematic form is computed at load time:
/// Gaussian elimination over GF(2) picks pivot (parity) columns; the remaining
/// free columns carry the K message bits in increasing column order.
class ParityCheckMatrix {
  public:
    ParityCheckMatrix() = default;

    static ParityCheckMatrix parse(std::istream& is) {
        ParityCheckMatrix h;
        size_t rows = 0;
        if (!(is >> h.n_ >> h.k_ >> rows)) throw std::runtime_error("parity matrix: bad header");
        if (h.n_ == 0 || rows == 0 || h.k_ >= h.n_)
            throw std::runtime_error("parity matrix: inconsistent header");
        h.checks_.resize(rows);
        std::string line;
        std::getline(is, line);  // rest of header line
        for (size_t r = 0; r < rows; ++r) {
            if (!std::getline(is, line)) throw std::runtime_error("parity matrix: truncated");
            std::istringstream ls(line);
            size_t v;
            while (ls >> v) {
                if (v >= h.n_) throw std::runtime_error("parity matrix: variable index out of range");
                h.checks_[r].push_back(v);
            }
            std::sort(h.checks_[r].begin(), h.checks_[r].end());
            h.checks_[r].erase(std::unique(h.checks_[r].begin(), h.checks_[r].end()), h.checks_[r].end());
            if (h.checks_[r].empty()) throw std::runtime_error("parity matrix: all-zero row");
        }
        h.finalize();
        return h;
    }

    static ParityCheckMatrix load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("parity matrix: cannot open " + path);
        return parse(f);
    }

    /// Builds directly from adjacency lists (used by tests).
    static ParityCheckMatrix from_checks(size_t n, size_t k, std::vector<std::vector<size_t>> checks) {
        ParityCheckMatrix h;
        h.n_ = n;
        h.k_ = k;
        h.checks_ = std::move(checks);
        for (auto& c : h.checks_) {
            std::sort(c.begin(), c.end());
            if (c.empty() || c.back() >= n) throw std::runtime_error("parity matrix: bad check");
        }
        h.finalize();
        return h;
    }

    size_t n() const { return n_; }
    size_t k() const { return k_; }
    size_t rows() const { return checks_.size(); }
    const std::vector<std::vector<size_t>>& checks() const { return checks_; }
    const std::vector<std::vector<size_t>>& var_checks() const { return var_checks_; }
    const std::vector<size_t>& systematic_positions() const { return free_cols_; }

    /// Systematic encode: message bits land on the free columns, the pivot
    /// (parity) columns follow from the reduced row-echelon form.
    BitBlock encode(const BitBlock& message) const {
        if (message.size() != k_) throw std::invalid_argument("ldpc_encode: message length != K");
        BitBlock c(n_, 0);
        for (size_t i = 0; i < k_; ++i) c[free_cols_[i]] = message[i] & 1u;
        for (size_t r = 0; r < pivot_cols_.size(); ++r) {
            uint8_t acc = 0;
            for (size_t v : rref_free_[r]) acc ^= c[v];
            c[pivot_cols_[r]] = acc;
        }
        return c;
    }

    bool syndrome_ok(const BitBlock& c) const {
        if (c.size() != n_) return false;
        for (const auto& chk : checks_) {
            uint8_t s = 0;
            for (size_t v : chk) s ^= c[v] & 1u;
            if (s) return false;
        }
        return true;
    }

  private:
    void finalize() {
        std::vector<uint8_t> col_used(n_, 0);
        for (const auto& c : checks_)
            for (size_t v : c) col_used[v] = 1;
        for (size_t v = 0; v < n_; ++v)
            if (!col_used[v]) throw std::runtime_error("parity matrix: all-zero column");

        // GF(2) elimination on bitset rows.
        const size_t words = (n_ + 63) / 64;
        std::vector<std::vector<uint64_t>> m(checks_.size(), std::vector<uint64_t>(words, 0));
        for (size_t r = 0; r < checks_.size(); ++r)
            for (size_t v : checks_[r]) m[r][v / 64] |= uint64_t{1} << (v % 64);

        std::vector<size_t> pivots;
        std::vector<uint8_t> is_pivot(n_, 0);
        size_t rank = 0;
        for (size_t col = 0; col < n_ && rank < m.size(); ++col) {
            size_t sel = m.size();
            for (size_t r = rank; r < m.size(); ++r)
                if (m[r][col / 64] >> (col % 64) & 1) {
                    sel = r;
                    break;
                }
            if (sel == m.size()) continue;
            std::swap(m[rank], m[sel]);
            for (size_t r = 0; r < m.size(); ++r)
                if (r != rank && (m[r][col / 64] >> (col % 64) & 1))
                    for (size_t w = 0; w < words; ++w) m[r][w] ^= m[rank][w];
            is_pivot[col] = 1;
            pivots.push_back(col);
            ++rank;
        }
        if (n_ - rank != k_)
            throw std::runtime_error("parity matrix: rank inconsistent with declared K");

        pivot_cols_ = pivots;
        free_cols_.clear();
        for (size_t v = 0; v < n_; ++v)
            if (!is_pivot[v]) free_cols_.push_back(v);

        rref_free_.assign(rank, {});
        for (size_t r = 0; r < rank; ++r)
            for (size_t v : free_cols_)
                if (m[r][v / 64] >> (v % 64) & 1) rref_free_[r].push_back(v);

        var_checks_.assign(n_, {});
        for (size_t r = 0; r < checks_.size(); ++r)
            for (size_t v : checks_[r]) var_checks_[v].push_back(r);
    }

    size_t n_ = 0, k_ = 0;
    std::vector<std::vector<size_t>> checks_;      // check -> variables
    std::vector<std::vector<size_t>> var_checks_;  // variable -> checks
    std::vector<size_t> pivot_cols_;               // parity positions (per RREF row)
    std::vector<size_t> free_cols_;                // systematic/message positions
    std::vector<std::vector<size_t>> rref_free_;   // per RREF row: free columns present
};

inline BitBlock ldpc_encode(const BitBlock& bits, const ParityCheckMatrix& h) { return h.encode(bits); }

/// Length-2^M probability vector over user-bit combinations.
using MessageVector = std::vector<double>;

namespace ldpc_detail {

constexpr double kFloor = 1e-30;

inline void normalize(MessageVector& v) {
    double s = 0.0;
    for (double x : v) s += x;
    if (s <= 0.0) throw DecodeFailure("ldpc: message vector vanished");
    for (double& x : v) x /= s;
}

/// XOR-convolution of two message vectors: out[v] = sum_{a^b=v} I[a] J[b].
inline void xor_conv_into(const double* a, const double* b, double* out, size_t nc) {
    std::fill(out, out + nc, 0.0);
    for (size_t i = 0; i < nc; ++i) {
        if (a[i] == 0.0) continue;
        for (size_t j = 0; j < nc; ++j) out[i ^ j] += a[i] * b[j];
    }
}

inline MessageVector xor_conv(const MessageVector& a, const MessageVector& b) {
    MessageVector out(a.size());
    xor_conv_into(a.data(), b.data(), out.data(), a.size());
    return out;
}

inline void normalize_raw(double* v, size_t nc) {
    double s = 0.0;
    for (size_t b = 0; b < nc; ++b) s += v[b];
    if (s <= 0.0) throw DecodeFailure("ldpc: message vector vanished");
    for (size_t b = 0; b < nc; ++b) v[b] /= s;
}

}  // namespace ldpc_detail

/// Normalized per-variable evidence from the likelihood grid.
inline std::vector<MessageVector> init_messages(const LikelihoodGrid& lh) {
    std::vector<MessageVector> ev(lh.positions());
    for (size_t n = 0; n < lh.positions(); ++n) {
        ev[n].assign(lh.at(n), lh.at(n) + lh.combos());
        double s = 0.0;
        for (double x : ev[n]) {
            if (!(x >= 0)) throw std::invalid_argument("init_messages: negative likelihood");
            s += x;
        }
        if (s <= 0.0) throw std::invalid_argument("init_messages: all-zero position");
        for (double& x : ev[n]) x /= s;
    }
    return ev;
}

/// Check-node combination: left-to-right XOR-convolution fold, normalized.
inline MessageVector chk_update(const std::vector<MessageVector>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("chk_update: no inputs");
    MessageVector out = inputs[0];
    for (size_t i = 1; i < inputs.size(); ++i) out = ldpc_detail::xor_conv(out, inputs[i]);
    ldpc_detail::normalize(out);
    return out;
}

/// Variable-node combination: elementwise product of evidence and inputs,
/// floored to avoid exact-zero lock-in, then normalized. An identically-zero
/// product is a contradiction and raises DecodeFailure.
inline MessageVector var_update(const MessageVector& evidence,
                                const std::vector<MessageVector>& inputs) {
    MessageVector out = evidence;
    for (const auto& in : inputs) {
        if (in.size() != out.size()) throw std::invalid_argument("var_update: size mismatch");
        for (size_t b = 0; b < out.size(); ++b) out[b] *= in[b];
    }
    double s = 0.0;
    for (double x : out) s += x;
    if (s <= 0.0) throw DecodeFailure("var_update: contradictory messages");
    for (double& x : out) x = std::max(x / s, ldpc_detail::kFloor);
    ldpc_detail::normalize(out);
    return out;
}

/// argmax over SUM symbols s of the posterior mass at popcount(b) = s;
/// ties resolve to the smallest s.
inline int sum_bit_decision(const MessageVector& final, int users) {
    std::vector<double> mass(size_t(users) + 1, 0.0);
    for (size_t b = 0; b < final.size(); ++b) mass[size_t(std::popcount(b))] += final[b];
    int best = 0;
    for (int s = 1; s <= users; ++s)
        if (mass[s] > mass[best]) best = s;
    return best;
}

/// Flooding-schedule BP over the Tanner graph with 2^M-ary messages; runs
/// exactly `iterations` passes (no syndrome stop exists for SUM words) and
/// returns the final per-variable posteriors.
inline std::vector<MessageVector> ldpc_jt_posteriors(const LikelihoodGrid& lh,
                                                     const ParityCheckMatrix& h, int users,
                                                     int iterations) {
    if (iterations < 1) throw std::invalid_argument("ldpc decode: iterations < 1");
    if (lh.positions() != h.n()) throw std::invalid_argument("ldpc decode: grid length != N");
    if (lh.users() != users) throw std::invalid_argument("ldpc decode: user count mismatch");
    const size_t nc = lh.combos();
    const auto evidence = init_messages(lh);

    // Flat edge storage: edge e = coff[c] + slot, one nc-block per direction.
    const auto& checks = h.checks();
    std::vector<size_t> coff(checks.size() + 1, 0);
    for (size_t c = 0; c < checks.size(); ++c) coff[c + 1] = coff[c] + checks[c].size();
    const size_t edges = coff.back();
    std::vector<double> v2c(edges * nc), c2v(edges * nc, 1.0 / double(nc));
    // Per-variable list of incident edge indices.
    std::vector<std::vector<size_t>> var_edges(h.n());
    size_t max_deg = 1;
    for (size_t c = 0; c < checks.size(); ++c) {
        max_deg = std::max(max_deg, checks[c].size());
        for (size_t s = 0; s < checks[c].size(); ++s) {
            const size_t e = coff[c] + s;
            const size_t v = checks[c][s];
            std::copy_n(evidence[v].data(), nc, v2c.data() + e * nc);
            var_edges[v].push_back(e);
        }
    }
    for (const auto& ve : var_edges) max_deg = std::max(max_deg, ve.size());

    // Reused scratch: suffix products plus one running prefix and one output.
    std::vector<double> suf((max_deg + 1) * nc), pre(nc), out(nc);
    for (int it = 0; it < iterations; ++it) {
        // Check pass: exclude-one XOR-convolutions via prefix/suffix products.
        for (size_t c = 0; c < checks.size(); ++c) {
            const size_t deg = checks[c].size();
            double* base = c2v.data() + coff[c] * nc;
            if (deg == 1) {
                // Degree-1 check pins its variable's label to 0.
                std::fill(base, base + nc, 0.0);
                base[0] = 1.0;
                continue;
            }
            const double* in = v2c.data() + coff[c] * nc;
            std::copy_n(in + (deg - 1) * nc, nc, suf.data() + (deg - 1) * nc);
            for (size_t s = deg - 1; s-- > 1;)
                ldpc_detail::xor_conv_into(in + s * nc, suf.data() + (s + 1) * nc,
                                           suf.data() + s * nc, nc);
            for (size_t s = 0; s < deg; ++s) {
                double* dst = base + s * nc;
                if (s == 0)
                    std::copy_n(suf.data() + nc, nc, dst);
                else if (s == deg - 1)
                    std::copy_n(pre.data(), nc, dst);
                else
                    ldpc_detail::xor_conv_into(pre.data(), suf.data() + (s + 1) * nc, dst, nc);
                ldpc_detail::normalize_raw(dst, nc);
                if (s == 0) {
                    std::copy_n(in, nc, pre.data());
                } else {
                    ldpc_detail::xor_conv_into(pre.data(), in + s * nc, out.data(), nc);
                    std::copy_n(out.data(), nc, pre.data());
                }
                if (s + 1 < deg) ldpc_detail::normalize_raw(pre.data(), nc);
            }
        }
        // Variable pass: exclude-one elementwise products against evidence.
        for (size_t v = 0; v < h.n(); ++v) {
            const auto& ve = var_edges[v];
            const size_t deg = ve.size();
            // prefix/suffix elementwise products of incoming check messages
            std::fill_n(suf.data() + deg * nc, nc, 1.0);
            for (size_t s = deg; s-- > 0;) {
                const double* in = c2v.data() + ve[s] * nc;
                for (size_t b = 0; b < nc; ++b) suf[s * nc + b] = suf[(s + 1) * nc + b] * in[b];
            }
            std::fill(pre.begin(), pre.end(), 1.0);
            for (size_t s = 0; s < deg; ++s) {
                double sum = 0.0;
                for (size_t b = 0; b < nc; ++b) {
                    out[b] = evidence[v][b] * pre[b] * suf[(s + 1) * nc + b];
                    sum += out[b];
                }
                if (sum <= 0.0) throw DecodeFailure("ldpc: contradictory variable update");
                for (double& x : out) x = std::max(x / sum, ldpc_detail::kFloor);
                ldpc_detail::normalize_raw(out.data(), nc);
                const double* in = c2v.data() + ve[s] * nc;
                for (size_t b = 0; b < nc; ++b) pre[b] *= in[b];
                std::copy_n(out.data(), nc, v2c.data() + ve[s] * nc);
            }
        }
    }

    std::vector<MessageVector> post(h.n());
    for (size_t v = 0; v < h.n(); ++v) {
        MessageVector p = evidence[v];
        for (size_t e : var_edges[v])
            for (size_t b = 0; b < nc; ++b) p[b] *= c2v[e * nc + b];
        double sum = 0.0;
        for (double x : p) sum += x;
        if (sum <= 0.0) throw DecodeFailure("ldpc: contradictory posterior");
        for (double& x : p) x /= sum;
        post[v] = std::move(p);
    }
    return post;
}

/// Joint channel decoding and aggregation: BP posteriors, then SUM decisions
/// at the systematic positions.
inline SumWord ldpc_jt_decode(const LikelihoodGrid& lh, const ParityCheckMatrix& h, int users,
                              int iterations = 40) {
    const auto post = ldpc_jt_posteriors(lh, h, users, iterations);
    SumWord out;
    out.reserve(h.k());
    for (size_t v : h.systematic_positions()) out.push_back(uint8_t(sum_bit_decision(post[v], users)));
    return out;
}

/// Parallel single-user decoders: marginalized per-user evidence, M
/// independent binary BP decodes, summed hard decisions.
inline SumWord ldpc_psud_decode(const LikelihoodGrid& lh, const ParityCheckMatrix& h, int users,
                                int iterations = 40) {
    SumWord total(h.k(), 0);
    for (int u = 0; u < users; ++u) {
        auto single = marginalize_user(lh, u);
        const auto post = ldpc_jt_posteriors(single, h, 1, iterations);
        size_t i = 0;
        for (size_t v : h.systematic_positions()) {
            total[i] = uint8_t(total[i] + (post[v][1] > post[v][0] ? 1 : 0));
            ++i;
        }
    }
    return total;
}

}  // namespace aircomp

#endif
