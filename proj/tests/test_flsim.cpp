#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "aircomp/flsim.hpp"

using namespace aircomp;
using Catch::Approx;

TEST_CASE("split_noniid with one device returns the whole dataset") {
    auto ds = make_toy_dataset(100, 10, 8, 1);
    auto shards = split_noniid(ds, 1, 2);
    REQUIRE(shards.size() == 1);
    CHECK(shards[0].size() == 100);
}

TEST_CASE("split_noniid is a partition") {
    auto ds = make_toy_dataset(1000, 10, 8, 3);
    auto shards = split_noniid(ds, 7, 4);
    std::set<size_t> seen;
    size_t total = 0;
    for (const auto& s : shards) {
        total += s.size();
        for (size_t i : s) CHECK(seen.insert(i).second);  // disjoint
    }
    CHECK(total == 1000);
}

TEST_CASE("split_noniid sorted share is label-concentrated at paper scale") {
    // Q=40, 20% sorted share of 250 per device requires 50000 samples.
    auto ds = make_toy_dataset(50000, 10, 4, 5);  // small dim keeps this cheap
    auto shards = split_noniid(ds, 40, 6);
    const size_t iid_per = 1000;  // 40000 iid / 40 devices
    for (const auto& s : shards) {
        REQUIRE(s.size() == 1250);
        std::set<int> labels;
        for (size_t i = iid_per; i < s.size(); ++i) labels.insert(ds.y[s[i]]);
        CHECK(labels.size() <= 2);  // contiguous slice of the sorted 20%
    }
}

TEST_CASE("local_train with eta=0 returns a zero delta") {
    auto ds = make_toy_dataset(50, 10, 8, 7);
    auto model = ToyModel::zeros(10, 8);
    Shard shard(ds.size());
    std::iota(shard.begin(), shard.end(), 0);
    Rng rng(1);
    auto delta = local_train(model, ds, shard, 5, 0.0, 16, rng);
    for (double v : delta) CHECK(v == 0.0);
}

TEST_CASE("toy gradient matches central finite differences") {
    auto ds = make_toy_dataset(40, 4, 6, 9);
    ToyModel m = ToyModel::zeros(4, 6);
    Rng rng(3);
    std::normal_distribution<double> gauss(0.0, 0.3);
    for (double& w : m.w) w = gauss(rng);
    Shard idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto g = toy_grad(m, ds, idx);
    const double h = 1e-6;
    std::uniform_int_distribution<size_t> pick(0, m.w.size() - 1);
    for (int trial = 0; trial < 10; ++trial) {
        const size_t i = pick(rng);
        ToyModel mp = m, mm = m;
        mp.w[i] += h;
        mm.w[i] -= h;
        const double fd = (toy_loss(mp, ds, idx) - toy_loss(mm, ds, idx)) / (2 * h);
        CHECK(g[i] == Approx(fd).epsilon(1e-5).margin(1e-9));
    }
}

TEST_CASE("single-device SGD decreases the convex loss") {
    auto ds = make_toy_dataset(200, 10, 8, 11);
    ToyModel m = ToyModel::zeros(10, 8);
    Shard all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    double prev = toy_loss(m, ds, all);
    Rng rng(2);
    for (int round = 0; round < 10; ++round) {
        auto delta = local_train(m, ds, all, 10, 0.05, 64, rng);
        for (size_t i = 0; i < m.w.size(); ++i) m.w[i] += delta[i];
        const double cur = toy_loss(m, ds, all);
        CHECK(cur < prev + 1e-6);
        prev = cur;
    }
}

namespace {
std::vector<std::vector<double>> test_deltas(int p, size_t d, uint64_t seed, double scale = 0.1) {
    std::vector<std::vector<double>> deltas(p, std::vector<double>(d));
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, scale);
    for (auto& v : deltas)
        for (double& x : v) x = gauss(rng);
    return deltas;
}
}  // namespace

TEST_CASE("round_digital error-free equals the exact mean of quantized deltas") {
    FLConfig cfg;
    cfg.mode = ChannelMode::ErrorFree;
    cfg.users = 2;
    cfg.selected = 4;
    auto deltas = test_deltas(4, 32, 21);
    ToyModel model = ToyModel::zeros(4, 8);  // 32 params
    ToyModel model2 = model;
    round_digital(model, deltas, cfg, 99);

    std::vector<double> mean(32, 0.0);
    for (int u = 0; u < 4; ++u) {
        auto q = quantize_stochastic(deltas[u], cfg.quant, mix_seed(99, 0xD0, u));
        auto dq = dequantize(q);
        for (size_t i = 0; i < 32; ++i) mean[i] += dq[i] / 4;
    }
    for (size_t i = 0; i < 32; ++i) CHECK(model.w[i] == Approx(model2.w[i] + mean[i]).margin(1e-12));
}

TEST_CASE("trace mode with zero SUM BER is identical to error-free") {
    FLConfig ef, tr;
    ef.mode = ChannelMode::ErrorFree;
    tr.mode = ChannelMode::Trace;
    tr.trace_sum_ber = 0.0;
    auto deltas = test_deltas(4, 32, 22);
    ToyModel a = ToyModel::zeros(4, 8), b = a;
    round_digital(a, deltas, ef, 5);
    round_digital(b, deltas, tr, 5);
    CHECK(a.w == b.w);
}

TEST_CASE("trace mode injects SUM-symbol errors at the requested rate") {
    SumWord truth(200000, 1);
    Rng rng(31);
    const double rate = 0.05;
    auto rx = fl_detail::inject_sum_errors(truth, 2, rate, rng);
    size_t diff = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        diff += rx[i] != truth[i];
        CHECK(rx[i] <= 2);
    }
    const double emp = double(diff) / double(truth.size());
    CHECK(std::abs(emp - rate) < 3 * std::sqrt(rate * (1 - rate) / double(truth.size())));
}

TEST_CASE("analog estimate with aligned phases and no noise is the exact mean") {
    auto deltas = test_deltas(3, 64, 41);
    Rng rng(1);
    auto est = fl_detail::analog_estimate(deltas, {0, 0, 0}, {0, 0, 0}, 4, 0.0, rng);
    for (size_t i = 0; i < 64; ++i) {
        double mean = (deltas[0][i] + deltas[1][i] + deltas[2][i]) / 3;
        CHECK(est[i] == Approx(mean).margin(1e-12));
    }
}

TEST_CASE("analog estimate: relative phase pi cancels equal contributions") {
    std::vector<std::vector<double>> deltas(2, std::vector<double>(8, 0.5));
    Rng rng(1);
    auto est = fl_detail::analog_estimate(deltas, {0.0, std::numbers::pi}, {0, 0}, 4, 0.0, rng);
    for (double v : est) CHECK(v == Approx(0.0).margin(1e-12));
}

TEST_CASE("round_analog aligned with zero CFO recovers the mean exactly") {
    FLConfig cfg;
    cfg.mode = ChannelMode::AnalogAlignedCfo;
    cfg.max_cfo_hz = 0.0;
    cfg.snr_db = std::numeric_limits<double>::infinity();
    auto deltas = test_deltas(4, 32, 51);
    ToyModel model = ToyModel::zeros(4, 8);
    round_analog(model, deltas, cfg, 3);
    for (size_t i = 0; i < 32; ++i) {
        double mean = 0;
        for (int u = 0; u < 4; ++u) mean += deltas[u][i] / 4;
        CHECK(model.w[i] == Approx(mean).margin(1e-12));
    }
}

TEST_CASE("run_fl is deterministic per seed") {
    FLConfig cfg;
    cfg.devices = 6;
    cfg.selected = 2;
    cfg.users = 2;
    cfg.rounds = 3;
    cfg.train_samples = 200;
    cfg.test_samples = 100;
    cfg.mode = ChannelMode::Trace;
    cfg.trace_sum_ber = 0.01;
    cfg.seed = 9;
    auto a = run_fl(cfg);
    auto b = run_fl(cfg);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].test_acc == b[i].test_acc);
        CHECK(a[i].train_loss == b[i].train_loss);
        CHECK(a[i].sum_ber_observed == b[i].sum_ber_observed);
    }
}

TEST_CASE("FLConfig validation") {
    FLConfig cfg;
    cfg.selected = 50;  // > devices
    CHECK_THROWS(cfg.validate());
    FLConfig cfg2;
    cfg2.mode = ChannelMode::FullPhy;
    cfg2.ldpc = nullptr;
    CHECK_THROWS(cfg2.validate());
}

TEST_CASE("channel mode names round trip") {
    for (ChannelMode m : {ChannelMode::ErrorFree, ChannelMode::Trace, ChannelMode::FullPhy,
                          ChannelMode::AnalogAlignedCfo, ChannelMode::AnalogRandomCfo})
        CHECK(channel_mode_from_name(channel_mode_name(m)) == m);
    CHECK_THROWS(channel_mode_from_name("nope"));
}
