#ifndef AIRCOMP_LIKELIHOOD_HPP
#define AIRCOMP_LIKELIHOOD_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "aircomp/common.hpp"

namespace aircomp {

/// Per coded-bit position, unnormalized likelihoods of all 2^M user-bit
/// combinations. Combination index b encodes bit u of b = user u's coded bit.
/// Positions are ordered row-major over (OFDM symbol, data subcarrier).
class LikelihoodGrid {
  public:
    LikelihoodGrid() = default;
    LikelihoodGrid(int users, size_t positions)
        : users_(users), combos_(size_t{1} << users), values_(positions * combos_, 0.0) {}

    int users() const { return users_; }
    size_t combos() const { return combos_; }
    size_t positions() const { return combos_ ? values_.size() / combos_ : 0; }

    double* at(size_t n) { return values_.data() + n * combos_; }
    const double* at(size_t n) const { return values_.data() + n * combos_; }
    std::span<const double> row(size_t n) const { return {at(n), combos_}; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    void scale(double c) {
        for (auto& v : values_) v *= c;
    }

  private:
    int users_ = 0;
    size_t combos_ = 0;
    std::vector<double> values_;
};

/// Marginalizes the joint likelihoods to a single user's binary likelihoods.
inline LikelihoodGrid marginalize_user(const LikelihoodGrid& lh, int user) {
    LikelihoodGrid out(1, lh.positions());
    const size_t nc = lh.combos();
    for (size_t n = 0; n < lh.positions(); ++n) {
        const double* row = lh.at(n);
        double p0 = 0.0, p1 = 0.0;
        for (size_t b = 0; b < nc; ++b) ((b >> user) & 1 ? p1 : p0) += row[b];
        out.at(n)[0] = p0;
        out.at(n)[1] = p1;
    }
    return out;
}

}  // namespace aircomp

#endif
