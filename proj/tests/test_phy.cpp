#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>

#include "aircomp/phy.hpp"

using namespace aircomp;
using Catch::Approx;

namespace {
constexpr double kPi = std::numbers::pi;

FrameConfig small_cfg(int symbols, int subcarriers) {
    FrameConfig cfg;
    cfg.data_symbols = symbols;
    cfg.data_subcarriers = subcarriers;
    return cfg;
}
}  // namespace

TEST_CASE("subcarrier_channel flat channel is unity") {
    FrameConfig cfg;
    UserChannel ch;
    for (int k : {0, 1, 7, 47}) {
        const cplx a = subcarrier_channel(ch, k, cfg);
        CHECK(a.real() == Approx(1.0));
        CHECK(a.imag() == Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("subcarrier_channel time offset quarter frame at k=2 gives -1") {
    FrameConfig cfg;  // fft_size 64
    UserChannel ch;
    ch.time_offset = cfg.fft_size / 4;
    const cplx a = subcarrier_channel(ch, 2, cfg);
    CHECK(a.real() == Approx(-1.0));
    CHECK(a.imag() == Approx(0.0).margin(1e-12));
}

TEST_CASE("subcarrier_channel two taps combine as 1 + 0.5 e^{j pi}") {
    FrameConfig cfg;  // fft_size 64
    UserChannel ch;
    ch.taps = {{cplx{1.0, 0.0}, 0}, {cplx{0.5, 0.0}, 4}};
    const cplx a = subcarrier_channel(ch, 8, cfg);
    CHECK(a.real() == Approx(0.5));
    CHECK(a.imag() == Approx(0.0).margin(1e-12));
}

TEST_CASE("effective_channel with zero CFO equals subcarrier_channel") {
    FrameConfig cfg;
    UserChannel ch;
    ch.taps = {{cplx{0.3, -0.7}, 2}};
    ch.time_offset = 1;
    for (int i : {0, 3, 99})
        CHECK(std::abs(effective_channel(ch, i, 5, cfg) - subcarrier_channel(ch, 5, cfg)) < 1e-12);
}

TEST_CASE("effective_channel CFO rotation: delta_norm*(Ns+Ncp)=1/8") {
    FrameConfig cfg;  // Ns+Ncp = 80
    UserChannel ch;
    ch.cfo_hz = cfg.bandwidth_hz / (8.0 * (cfg.fft_size + cfg.cp_size));
    SECTION("i=4 rotates by pi") {
        const cplx a = effective_channel(ch, 4, 0, cfg);
        CHECK(a.real() == Approx(-1.0));
        CHECK(a.imag() == Approx(0.0).margin(1e-9));
    }
    SECTION("i=8 completes a full cycle") {
        const cplx a = effective_channel(ch, 8, 0, cfg);
        CHECK(a.real() == Approx(1.0));
        CHECK(a.imag() == Approx(0.0).margin(1e-9));
    }
}

TEST_CASE("effective_channel CFO periodicity") {
    FrameConfig cfg;
    UserChannel ch;
    ch.cfo_hz = cfg.bandwidth_hz / (16.0 * (cfg.fft_size + cfg.cp_size));  // period 16 symbols
    for (int i : {0, 1, 5})
        CHECK(std::abs(effective_channel(ch, i, 3, cfg) - effective_channel(ch, i + 16, 3, cfg)) <
              1e-9);
}

TEST_CASE("modulate_bpsk maps 1 to +1 and 0 to -1") {
    CHECK(modulate_bpsk({0, 1}) == std::vector<double>{-1.0, 1.0});
    CHECK(modulate_bpsk({}).empty());
    CHECK(modulate_bpsk({1, 1, 0, 0}) == std::vector<double>{1.0, 1.0, -1.0, -1.0});
}

TEST_CASE("UserChannel validation") {
    FrameConfig cfg;
    UserChannel ch;
    ch.taps = {{cplx{1, 0}, cfg.cp_size}};  // delay == cp_size is out of range
    CHECK_THROWS(ch.validate(cfg));
    ch.taps = {{cplx{1, 0}, 0}};
    ch.cfo_hz = 400.0;
    CHECK_THROWS(ch.validate(cfg));
    CHECK_NOTHROW(ch.validate(cfg, 2000.0));
}

TEST_CASE("superimpose noiseless single user reproduces the BPSK pattern") {
    auto cfg = small_cfg(2, 4);
    std::vector<UserChannel> chans(1);
    BitBlock bits = {1, 0, 1, 1, 0, 0, 1, 0};
    auto [frame, grid] = superimpose({bits}, chans, cfg, kNoiselessSnrDb, 7);
    REQUIRE(frame.samples.size() == 8);
    CHECK(frame.noise_var == 0.0);
    for (size_t n = 0; n < 8; ++n) {
        CHECK(frame.samples[n].real() == Approx(bits[n] ? 1.0 : -1.0));
        CHECK(frame.samples[n].imag() == Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("superimpose two aligned users add constructively") {
    auto cfg = small_cfg(1, 1);
    std::vector<UserChannel> chans(2);
    auto [frame, grid] = superimpose({{1}, {1}}, chans, cfg, kNoiselessSnrDb, 7);
    CHECK(frame.samples[0].real() == Approx(2.0));
    CHECK(frame.samples[0].imag() == Approx(0.0).margin(1e-12));
}

TEST_CASE("superimpose relative phase pi with opposite bits gives -2") {
    auto cfg = small_cfg(1, 1);
    std::vector<UserChannel> chans(2);
    chans[1].taps = {{std::polar(1.0, kPi), 0}};
    auto [frame, grid] = superimpose({{0}, {1}}, chans, cfg, kNoiselessSnrDb, 7);
    CHECK(frame.samples[0].real() == Approx(-2.0));
    CHECK(frame.samples[0].imag() == Approx(0.0).margin(1e-12));
}

TEST_CASE("superimpose rejects mismatched block lengths") {
    auto cfg = small_cfg(1, 2);
    std::vector<UserChannel> chans(1);
    CHECK_THROWS(superimpose({{1}}, chans, cfg, 10.0, 7));
}

TEST_CASE("noise calibration within 0.2 dB over 1e5 samples") {
    auto cfg = small_cfg(2500, 48);  // 120000 positions
    std::vector<UserChannel> chans(2);
    chans[1].taps = {{std::polar(1.0, 0.4), 0}};
    Rng rng(3);
    std::vector<BitBlock> bits = {random_bits(cfg.positions(), rng), random_bits(cfg.positions(), rng)};
    const double snr_db = 7.0;
    auto grid = build_channel_grid(chans, cfg);
    auto noiseless = superimpose_grid(bits, grid, kNoiselessSnrDb, 5);
    auto noisy = superimpose_grid(bits, grid, snr_db, 5);
    double sig = 0.0, noise = 0.0;
    for (size_t n = 0; n < cfg.positions(); ++n) {
        sig += std::norm(noiseless.samples[n]);
        noise += std::norm(noisy.samples[n] - noiseless.samples[n]);
    }
    const double emp_db = 10.0 * std::log10(sig / noise);
    CHECK(emp_db == Approx(snr_db).margin(0.2));
}

TEST_CASE("seed determinism of superimpose") {
    auto cfg = small_cfg(4, 4);
    std::vector<UserChannel> chans(2);
    Rng rng(9);
    std::vector<BitBlock> bits = {random_bits(16, rng), random_bits(16, rng)};
    auto a = superimpose(bits, chans, cfg, 5.0, 42).first;
    auto b = superimpose(bits, chans, cfg, 5.0, 42).first;
    auto c = superimpose(bits, chans, cfg, 5.0, 43).first;
    CHECK(a.samples == b.samples);
    CHECK(a.samples != c.samples);
}

TEST_CASE("stale_csi repeats the symbol-0 coefficients") {
    auto cfg = small_cfg(5, 3);
    std::vector<UserChannel> chans(1);
    chans[0].cfo_hz = 200.0;
    auto grid = build_channel_grid(chans, cfg);
    auto stale = stale_csi(grid);
    for (int i = 0; i < 5; ++i)
        for (int k = 0; k < 3; ++k) CHECK(stale.at(0, i, k) == grid.at(0, 0, k));
    // the real grid rotates across symbols, so stale CSI differs from it
    CHECK(std::abs(grid.at(0, 4, 0) - stale.at(0, 4, 0)) > 1e-3);
}

TEST_CASE("soft likelihoods: noiseless hard indicator") {
    auto cfg = small_cfg(1, 2);
    std::vector<UserChannel> chans(2);
    chans[1].taps = {{std::polar(1.0, kPi / 2), 0}};  // orthogonal
    std::vector<BitBlock> bits = {{1, 0}, {0, 1}};
    auto [frame, grid] = superimpose(bits, chans, cfg, kNoiselessSnrDb, 7);
    auto lh = soft_joint_likelihoods(frame, grid);
    for (size_t n = 0; n < 2; ++n) {
        const size_t truth = size_t(bits[0][n]) | (size_t(bits[1][n]) << 1);
        for (size_t b = 0; b < 4; ++b) CHECK(lh.at(n)[b] == (b == truth ? 1.0 : 0.0));
    }
}

TEST_CASE("soft likelihoods: hand-computed pi/2 constellation distances") {
    // g_A = 1, g_B = j, y = 1+j: distances 8, 4, 4, 0 for combos 00,10,01,11.
    EffectiveChannelGrid grid;
    grid.users = 2;
    grid.symbols = 1;
    grid.subcarriers = 1;
    grid.values = {cplx{1.0, 0.0}, cplx{0.0, 1.0}};
    SuperimposedFrame frame;
    frame.symbols = 1;
    frame.subcarriers = 1;
    frame.samples = {cplx{1.0, 1.0}};
    frame.noise_var = 0.5;  // 2 sigma^2 = 1
    LikelihoodOptions opts;
    opts.norm = DistanceNorm::None;
    auto lh = soft_joint_likelihoods(frame, grid, opts);
    CHECK(lh.at(0)[3] == Approx(1.0));  // zero distance, min subtracted
    CHECK(lh.at(0)[1] == Approx(std::exp(-4.0)));
    CHECK(lh.at(0)[2] == Approx(std::exp(-4.0)));
    CHECK(lh.at(0)[0] == Approx(std::exp(-8.0)));
}

TEST_CASE("soft likelihoods: equidistant constellation gives a uniform row") {
    // g_A = 1, g_B = j, y = 0: every constellation point has |y-s|^2 = 2.
    EffectiveChannelGrid grid;
    grid.users = 2;
    grid.symbols = 1;
    grid.subcarriers = 1;
    grid.values = {cplx{1.0, 0.0}, cplx{0.0, 1.0}};
    SuperimposedFrame frame;
    frame.symbols = 1;
    frame.subcarriers = 1;
    frame.samples = {cplx{0.0, 0.0}};
    frame.noise_var = 0.25;
    auto lh = soft_joint_likelihoods(frame, grid);
    for (size_t b = 0; b < 4; ++b) CHECK(lh.at(0)[b] == Approx(1.0));
}

TEST_CASE("phase-rotation invariance of the likelihood grid") {
    auto cfg = small_cfg(3, 4);
    std::vector<UserChannel> chans(2);
    chans[1].taps = {{std::polar(1.0, 0.8), 1}};
    Rng rng(11);
    std::vector<BitBlock> bits = {random_bits(12, rng), random_bits(12, rng)};
    auto grid = build_channel_grid(chans, cfg);
    auto frame = superimpose_grid(bits, grid, 6.0, 21);
    auto lh = soft_joint_likelihoods(frame, grid);

    const cplx rot = std::polar(1.0, 1.234);
    auto grid2 = grid;
    for (auto& v : grid2.values) v *= rot;
    auto frame2 = frame;
    for (auto& v : frame2.samples) v *= rot;
    auto lh2 = soft_joint_likelihoods(frame2, grid2);
    for (size_t i = 0; i < lh.values().size(); ++i)
        CHECK(lh.values()[i] == Approx(lh2.values()[i]).epsilon(1e-9));
}

TEST_CASE("likelihood normalization modes all keep a positive entry per position") {
    auto cfg = small_cfg(2, 4);
    std::vector<UserChannel> chans(2);
    Rng rng(5);
    std::vector<BitBlock> bits = {random_bits(8, rng), random_bits(8, rng)};
    auto grid = build_channel_grid(chans, cfg);
    auto frame = superimpose_grid(bits, grid, 0.0, 17);
    for (DistanceNorm norm :
         {DistanceNorm::None, DistanceNorm::GlobalMin, DistanceNorm::PerPositionMin}) {
        LikelihoodOptions opts;
        opts.norm = norm;
        auto lh = soft_joint_likelihoods(frame, grid, opts);
        for (size_t n = 0; n < lh.positions(); ++n) {
            double mx = 0.0;
            for (size_t b = 0; b < 4; ++b) {
                CHECK(std::isfinite(lh.at(n)[b]));
                CHECK(lh.at(n)[b] >= 0.0);
                mx = std::max(mx, lh.at(n)[b]);
            }
            CHECK(mx > 0.0);
        }
    }
}
