#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "aircomp/conv.hpp"
#include "aircomp/oracle.hpp"
#include "aircomp/phy.hpp"

using namespace aircomp;
using Catch::Approx;

namespace {

const ConvCode kToy{3, {05, 07}, true};          // (5,7) octal, L=3
const ConvCode kWifi{7, {0133, 0171}, true};     // (133,171) octal, L=7

LikelihoodGrid random_grid(int users, size_t positions, uint64_t seed, double lo = 0.01) {
    LikelihoodGrid lh(users, positions);
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(lo, 1.0);
    for (size_t n = 0; n < positions; ++n)
        for (size_t b = 0; b < lh.combos(); ++b) lh.at(n)[b] = unif(rng);
    return lh;
}

/// Likelihood grid for a separable (phase pi/2) noiseless two-user channel.
LikelihoodGrid separable_grid(const std::vector<BitBlock>& coded, double snr_db, uint64_t seed) {
    FrameConfig cfg;
    cfg.data_subcarriers = int(coded[0].size());
    cfg.data_symbols = 1;
    std::vector<UserChannel> chans(coded.size());
    if (coded.size() > 1) chans[1].taps = {{std::polar(1.0, std::numbers::pi / 2), 0}};
    auto grid = build_channel_grid(chans, cfg);
    auto frame = superimpose_grid(coded, grid, snr_db, seed);
    return soft_joint_likelihoods(frame, grid);
}

}  // namespace

TEST_CASE("conv_encode: all-zero input stays all-zero") {
    BitBlock z(20, 0);
    for (uint8_t b : conv_encode(z, kWifi)) CHECK(b == 0);
}

TEST_CASE("conv_encode: impulse response interleaves the generator taps") {
    // (133)_8 = 1 011 011 -> taps 1,0,1,1,0,1,1; (171)_8 = 1 111 001 -> 1,1,1,1,0,0,1
    const BitBlock g1 = {1, 0, 1, 1, 0, 1, 1};
    const BitBlock g2 = {1, 1, 1, 1, 0, 0, 1};
    BitBlock impulse(7, 0);
    impulse[0] = 1;
    auto out = conv_encode(impulse, kWifi);
    REQUIRE(out.size() == (7 + 6) * 2);
    for (size_t t = 0; t < 13; ++t) {
        CHECK(out[2 * t] == (t < 7 ? g1[t] : 0));
        CHECK(out[2 * t + 1] == (t < 7 ? g2[t] : 0));
    }
}

TEST_CASE("conv_encode linearity") {
    Rng rng(2);
    auto a = random_bits(31, rng);
    auto b = random_bits(31, rng);
    BitBlock x(31);
    for (size_t i = 0; i < 31; ++i) x[i] = a[i] ^ b[i];
    auto ea = conv_encode(a, kWifi), eb = conv_encode(b, kWifi), ex = conv_encode(x, kWifi);
    for (size_t i = 0; i < ex.size(); ++i) CHECK(ex[i] == (ea[i] ^ eb[i]));
}

TEST_CASE("conv_encode output length") {
    CHECK(conv_encode(BitBlock(10, 0), kToy).size() == 24);
    CHECK(kToy.coded_length(10) == 24);
}

TEST_CASE("ConvCode validation") {
    CHECK_THROWS(ConvCode{1, {1}, true}.validate());
    CHECK_THROWS(ConvCode{3, {010}, true}.validate());  // degree too large for L=3
    CHECK_THROWS(ConvCode{3, {}, true}.validate());
    CHECK_NOTHROW(kToy.validate());
}

TEST_CASE("fsjd equals exhaustive joint ML on the toy code") {
    const size_t k = 8;
    for (int inst = 0; inst < 40; ++inst) {
        auto lh = random_grid(2, (k + 2) * 2, mix_seed(100, inst));
        auto fs = fsjd_decode_detail(lh, kToy, 2);
        auto ex = oracle::exhaustive_joint_ml(lh, kToy, 2);
        CHECK(fs.cost == Approx(ex.cost).margin(1e-9));
        if (!ex.tie) CHECK(fs.sum == ex.sum);
    }
}

TEST_CASE("fsjd with M=1 equals the reference single-user Viterbi") {
    for (int inst = 0; inst < 30; ++inst) {
        auto lh = random_grid(1, (20 + 6) * 2, mix_seed(200, inst));
        auto sum = fsjd_decode(lh, kWifi, 1);
        auto ref = oracle::viterbi_reference(lh, kWifi);
        REQUIRE(sum.size() == ref.size());
        for (size_t i = 0; i < sum.size(); ++i) CHECK(sum[i] == ref[i]);
    }
}

TEST_CASE("noiseless separable channel decodes exactly for every decoder") {
    Rng rng(5);
    const size_t k = 18;  // coded length (18+6)*2 = 48
    std::vector<BitBlock> src = {random_bits(k, rng), random_bits(k, rng)};
    std::vector<BitBlock> coded = {conv_encode(src[0], kWifi), conv_encode(src[1], kWifi)};
    auto lh = separable_grid(coded, kNoiselessSnrDb, 1);
    SumWord truth(k);
    for (size_t i = 0; i < k; ++i) truth[i] = uint8_t(src[0][i] + src[1][i]);

    CHECK(fsjd_decode(lh, kWifi, 2) == truth);
    CHECK(rsjd_decode(lh, kWifi, 2, 256) == truth);
    CHECK(bcjr_sum_decode(lh, kWifi, 2) == truth);
    CHECK(bcjr_sum_decode(lh, kWifi, 2, BcjrMode::reduced_states(256)) == truth);
    CHECK(conv_psud_decode(lh, kWifi, 2) == truth);
}

TEST_CASE("rsjd with all states retained is identical to fsjd") {
    for (int inst = 0; inst < 10; ++inst) {
        auto lh = random_grid(2, (12 + 2) * 2, mix_seed(300, inst));
        CHECK(rsjd_decode(lh, kToy, 2, 16) == fsjd_decode(lh, kToy, 2));
    }
}

TEST_CASE("rsjd with R=1 equals greedy stage-wise chaining") {
    const size_t k = 12;
    for (int inst = 0; inst < 20; ++inst) {
        auto lh = random_grid(2, (k + 2) * 2, mix_seed(400, inst));
        auto sum = rsjd_decode(lh, kToy, 2, 1);

        // Greedy oracle: from the single surviving state, take the cheapest edge.
        detail::UserTrellis ut(kToy);
        int sa = 0, sb = 0;
        SumWord greedy;
        for (size_t t = 0; t < k + 2; ++t) {
            const bool tail = t >= k;
            double best = 1e300;
            int bestb = 0;
            for (int b = 0; b < (tail ? 1 : 4); ++b) {
                const int ba = b & 1, bb = (b >> 1) & 1;
                const uint8_t oa = ut.out[sa * 2 + ba], ob = ut.out[sb * 2 + bb];
                double m = 0.0;
                for (int j = 0; j < 2; ++j) {
                    const int combo = ((oa >> j) & 1) | (((ob >> j) & 1) << 1);
                    const double* row = lh.at(t * 2 + j);
                    double mx = 0;
                    for (int c = 0; c < 4; ++c) mx = std::max(mx, row[c]);
                    m += -std::log(row[combo] / mx);
                }
                if (m < best) {
                    best = m;
                    bestb = b;
                }
            }
            if (t < k) greedy.push_back(uint8_t((bestb & 1) + ((bestb >> 1) & 1)));
            sa = ut.next[sa * 2 + (bestb & 1)];
            sb = ut.next[sb * 2 + ((bestb >> 1) & 1)];
        }
        CHECK(sum == greedy);
    }
}

TEST_CASE("bcjr per-stage posteriors equal brute-force enumeration") {
    const size_t k = 6;
    detail::UserTrellis ut(kToy);
    for (int inst = 0; inst < 10; ++inst) {
        auto lh = random_grid(2, (k + 2) * 2, mix_seed(500, inst));
        auto posts = bcjr_sum_posteriors(lh, kToy, 2);
        REQUIRE(posts.size() == k);

        // Enumerate all 4^k joint input sequences, weight by likelihood products.
        std::vector<std::vector<double>> ref(k, std::vector<double>(3, 0.0));
        for (size_t word = 0; word < (size_t{1} << (2 * k)); ++word) {
            int sa = 0, sb = 0;
            double w = 1.0;
            std::vector<int> sums(k);
            for (size_t t = 0; t < k + 2; ++t) {
                const int b = t < k ? int((word >> (2 * t)) & 3) : 0;
                const int ba = b & 1, bb = (b >> 1) & 1;
                const uint8_t oa = ut.out[sa * 2 + ba], ob = ut.out[sb * 2 + bb];
                for (int j = 0; j < 2; ++j) {
                    const int combo = ((oa >> j) & 1) | (((ob >> j) & 1) << 1);
                    w *= lh.at(t * 2 + j)[combo];
                }
                if (t < k) sums[t] = ba + bb;
                sa = ut.next[sa * 2 + ba];
                sb = ut.next[sb * 2 + bb];
            }
            for (size_t t = 0; t < k; ++t) ref[t][sums[t]] += w;
        }
        for (size_t t = 0; t < k; ++t) {
            double z = ref[t][0] + ref[t][1] + ref[t][2];
            for (int s = 0; s <= 2; ++s) CHECK(posts[t][s] == Approx(ref[t][s] / z).margin(1e-9));
        }
    }
}

TEST_CASE("decoders are invariant under positive likelihood scaling") {
    auto lh = random_grid(2, (10 + 2) * 2, 77);
    auto lh2 = lh;
    lh2.scale(37.5);
    CHECK(fsjd_decode(lh, kToy, 2) == fsjd_decode(lh2, kToy, 2));
    CHECK(rsjd_decode(lh, kToy, 2, 5) == rsjd_decode(lh2, kToy, 2, 5));
    CHECK(bcjr_sum_decode(lh, kToy, 2) == bcjr_sum_decode(lh2, kToy, 2));
    CHECK(conv_psud_decode(lh, kToy, 2) == conv_psud_decode(lh2, kToy, 2));
}

TEST_CASE("decoded symbols stay in the SUM alphabet") {
    for (int users : {1, 2, 3}) {
        auto lh = random_grid(users, (8 + 2) * 2, 1000 + users);
        for (const SumWord& w : {fsjd_decode(lh, kToy, users), rsjd_decode(lh, kToy, users, 8),
                                 bcjr_sum_decode(lh, kToy, users), conv_psud_decode(lh, kToy, users)})
            for (uint8_t s : w) CHECK(s <= users);
    }
}

TEST_CASE("ACS instrumentation counts") {
    const size_t k = 30;
    auto lh = random_grid(2, (k + 6) * 2, 3);
    SECTION("fsjd performs exactly 2^{M(L-1)} ACS per stage") {
        AcsCounter acs;
        fsjd_decode(lh, kWifi, 2, &acs);
        CHECK(acs.ops == uint64_t(4096) * (k + 6));
    }
    SECTION("rsjd performs at most R ACS per stage") {
        AcsCounter acs;
        rsjd_decode(lh, kWifi, 2, 256, &acs);
        CHECK(acs.ops <= uint64_t(256) * (k + 6));
        CHECK(acs.ops > 0);
    }
}

TEST_CASE("infeasible likelihood positions are rejected") {
    auto lh = random_grid(2, (4 + 2) * 2, 9);
    for (size_t b = 0; b < 4; ++b) lh.at(3)[b] = 0.0;
    CHECK_THROWS(fsjd_decode(lh, kToy, 2));
    CHECK_THROWS(rsjd_decode(lh, kToy, 2, 4));
}

TEST_CASE("conv_psud with M=1 equals single-user Viterbi") {
    auto lh = random_grid(1, (15 + 2) * 2, 12);
    auto psud = conv_psud_decode(lh, kToy, 1);
    auto ref = oracle::viterbi_reference(lh, kToy);
    REQUIRE(psud.size() == ref.size());
    for (size_t i = 0; i < psud.size(); ++i) CHECK(psud[i] == ref[i]);
}

TEST_CASE("marginalize_user sums the complementary axis") {
    LikelihoodGrid lh(2, 1);
    lh.at(0)[0] = 0.1;  // A=0,B=0
    lh.at(0)[1] = 0.2;  // A=1,B=0
    lh.at(0)[2] = 0.3;  // A=0,B=1
    lh.at(0)[3] = 0.4;  // A=1,B=1
    auto a = marginalize_user(lh, 0);
    CHECK(a.at(0)[0] == Approx(0.4));
    CHECK(a.at(0)[1] == Approx(0.6));
    auto b = marginalize_user(lh, 1);
    CHECK(b.at(0)[0] == Approx(0.3));
    CHECK(b.at(0)[1] == Approx(0.7));
}
