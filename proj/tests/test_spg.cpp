#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "refflow/datagen.hpp"
#include "refflow/models/spg.hpp"

using namespace refflow;

namespace {
SpgBatch small_batch(const SpgParams& params, std::uint64_t seed, std::size_t m = 4, double mask_prob = 0.0) {
    const DataSet data = gaussian_blobs({{0.0, 0.0}, {3.0, 3.0}}, 0.5, 24, seed);
    TrainConfig cfg;
    cfg.reference_size = m;
    cfg.mask_prob = mask_prob;
    cfg.eps_train = 0.05;
    Rng rng(seed + 1);
    return prepare_spg_batch(params, data, cfg, rng);
}
}  // namespace

TEST_CASE("spg anchor") {
    Rng rng(501);
    SECTION("zero query map gives uniform attention and the reference mean") {
        SpgParams p = make_spg(2, 4, rng);
        for (auto& v : p.q_map.w) v = 0.0;
        for (auto& v : p.q_map.b) v = 0.0;
        const std::vector<Vec> refs{{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
        const auto a = spg_anchor(p, {0.3, 0.3}, refs);
        for (double w : a.attention) CHECK_THAT(w, Catch::Matchers::WithinAbs(0.25, 1e-12));
        CHECK_THAT(a.anchor[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
        CHECK_THAT(a.anchor[1], Catch::Matchers::WithinAbs(0.5, 1e-12));
    }
    SECTION("single reference") {
        const SpgParams p = make_spg(2, 4, rng);
        const auto a = spg_anchor(p, {0.0, 0.0}, {{2.0, -1.0}});
        CHECK(a.attention == std::vector<double>{1.0});
        CHECK(a.anchor == Vec{2.0, -1.0});
    }
    SECTION("attention matches a naive softmax over explicit logits") {
        const SpgParams p = make_spg(3, 5, rng);
        const Vec x = rng.normal_vec(3);
        std::vector<Vec> refs;
        for (int i = 0; i < 7; ++i) refs.push_back(rng.normal_vec(3));
        const auto a = spg_anchor(p, x, refs);
        // naive: exp(logit)/sum without max subtraction
        const Vec q = p.q_map.apply(x);
        std::vector<double> e(refs.size());
        double z = 0.0;
        for (std::size_t m = 0; m < refs.size(); ++m) {
            e[m] = std::exp(dot(q, p.k_map.apply(refs[m])));
            z += e[m];
        }
        for (std::size_t m = 0; m < refs.size(); ++m) CHECK(oracle::rel_err(a.attention[m], e[m] / z) <= 1e-10);
    }
    SECTION("empty reference set") {
        const SpgParams p = make_spg(2, 4, rng);
        CHECK_THROWS_AS(spg_anchor(p, {0.0, 0.0}, {}), std::invalid_argument);
    }
}

TEST_CASE("spg forward gating arithmetic") {
    Rng rng(509);
    SpgParams p = make_spg(1, 2, rng);
    // force gates: the zero-initialized sigmoid heads output exactly 0.5;
    // driving the head bias to +-40 saturates them to 1/0
    auto force_gate = [](Mlp& gate, double logit) {
        auto& head = gate.layers.back();
        for (auto& v : head.w) v = 0.0;
        head.b[0] = logit;
    };
    const std::vector<Vec> refs{{2.0}};

    SECTION("gates initialized to 0.5") {
        const SpgParams fresh = make_spg(1, 2, rng);
        CHECK(mlp_apply(fresh.gate_g, time_features(0.5))[0] == 0.5);
        CHECK(mlp_apply(fresh.gate_a, time_features(0.1))[0] == 0.5);
    }
    SECTION("g=1, a=0 returns the anchor") {
        force_gate(p.gate_g, 40.0);
        force_gate(p.gate_a, -40.0);
        const Vec mu = spg_forward(p, {0.0}, 0.3, refs);
        CHECK_THAT(mu[0], Catch::Matchers::WithinAbs(2.0, 1e-12));
    }
    SECTION("g=0, a=0 passes the state through") {
        force_gate(p.gate_g, -40.0);
        force_gate(p.gate_a, -40.0);
        const Vec mu = spg_forward(p, {0.7}, 0.3, refs);
        CHECK_THAT(mu[0], Catch::Matchers::WithinAbs(0.7, 1e-12));
    }
    SECTION("g=0.5, a=0 averages state and anchor") {
        force_gate(p.gate_g, 0.0);
        force_gate(p.gate_a, -40.0);
        const Vec mu = spg_forward(p, {0.0}, 0.3, refs);
        CHECK_THAT(mu[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("spg losses: leave-one-out structure and residual zero point") {
    Rng rng(521);
    const SpgParams p = make_spg(2, 4, rng);
    const SpgBatch batch = small_batch(p, 77, 5);

    SECTION("key sets have size M-1 without masking") {
        for (const auto& s : batch.samples) CHECK(s.refs.size() == 4);
    }
    SECTION("own endpoint is absent from the key set") {
        for (const auto& s : batch.samples) {
            for (const auto& r : s.refs) CHECK(r != s.x1);
        }
    }
    SECTION("M < 2 is rejected") {
        const DataSet data = gaussian_blobs({{0.0, 0.0}}, 0.5, 8, 1);
        TrainConfig cfg;
        cfg.reference_size = 1;
        Rng r2(3);
        CHECK_THROWS_AS(prepare_spg_batch(p, data, cfg, r2), std::invalid_argument);
    }
    SECTION("perfect residual prediction zeroes L_ref") {
        // construct a batch whose residual targets are exactly zero: anchor
        // equals the endpoint when the sample's key set is {x1}
        SpgParams q = p;
        SpgBatch b;
        for (int i = 0; i < 2; ++i) {
            SpgSample s;
            s.x1 = {double(i), 1.0};
            s.x_t = {0.1, 0.2};
            s.t = 0.4;
            s.refs = {s.x1};
            s.sg_anchor = s.x1;  // anchor == endpoint, residual target is 0
            b.samples.push_back(s);
        }
        // zero refiner output => L_ref = |0 - 0|^2 = 0
        for_each_param(q.refiner, [](double& v) { v = 0.0; });
        const auto losses = spg_losses(q, b, AffineSchedule::linear());
        CHECK(losses.ref == 0.0);
    }
}

TEST_CASE("spg combined gradient matches central finite differences") {
    const auto sched = AffineSchedule::linear();
    const double step = 1e-5;
    const double w_ref = 0.1;
    for (std::uint64_t seed : {601, 602, 603}) {
        Rng rng(seed);
        SpgParams p = make_spg(2, 3, rng);
        // give the gate heads nonzero weights so their gradients are exercised
        spg_for_each_param(p, [&](double& v) {
            if (v == 0.0) v = 0.1 * rng.normal();
        });
        const SpgBatch batch = small_batch(p, seed, 4);

        SpgGrad grad = SpgGrad::zeros_like(p);
        spg_loss_grad(p, batch, sched, w_ref, grad);

        std::vector<double> analytic;
        spg_for_each_param(p, grad, [&](double, double g) { analytic.push_back(g); });

        std::size_t i = 0;
        double max_rel = 0.0;
        spg_for_each_param(p, [&](double& v) {
            const double save = v;
            v = save + step;
            const auto hi = spg_losses(p, batch, sched);
            v = save - step;
            const auto lo = spg_losses(p, batch, sched);
            v = save;
            const double fd = ((hi.mu + w_ref * hi.ref) - (lo.mu + w_ref * lo.ref)) / (2.0 * step);
            const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
            max_rel = std::max(max_rel, std::abs(fd - analytic[i]) / denom);
            ++i;
        });
        CHECK(max_rel <= 1e-4);
    }
}

TEST_CASE("stop-gradient: L_ref ignores anchor-path parameters") {
    const auto sched = AffineSchedule::linear();
    Rng rng(611);
    SpgParams p = make_spg(2, 3, rng);
    const SpgBatch batch = small_batch(p, 5, 4);
    const SpgLosses base = spg_losses(p, batch, sched);

    SECTION("two-forward-evaluation oracle: perturbing q changes L_mu, not L_ref") {
        SpgParams q = p;
        for (auto& v : q.q_map.w) v += 1e-3;
        const SpgLosses pert = spg_losses(q, batch, sched);
        CHECK(std::abs(pert.ref - base.ref) <= 1e-10);
        CHECK(std::abs(pert.mu - base.mu) > 1e-10);
    }
    SECTION("finite differences of L_ref vanish on q and k parameters") {
        const double step = 1e-5;
        auto fd_ref = [&](double& v) {
            const double save = v;
            v = save + step;
            const double hi = spg_losses(p, batch, sched).ref;
            v = save - step;
            const double lo = spg_losses(p, batch, sched).ref;
            v = save;
            return (hi - lo) / (2.0 * step);
        };
        for (auto& v : p.q_map.w) CHECK(std::abs(fd_ref(v)) <= 1e-8);
        for (auto& v : p.q_map.b) CHECK(std::abs(fd_ref(v)) <= 1e-8);
        for (auto& v : p.k_map.w) CHECK(std::abs(fd_ref(v)) <= 1e-8);
        for (auto& v : p.k_map.b) CHECK(std::abs(fd_ref(v)) <= 1e-8);
    }
    SECTION("analytic L_ref-only gradient is zero on anchor-path parameters") {
        SpgGrad only_ref = SpgGrad::zeros_like(p);
        // w_ref = 1 and subtract the pure L_mu gradient
        SpgGrad with_ref = SpgGrad::zeros_like(p);
        spg_loss_grad(p, batch, sched, 1.0, with_ref);
        spg_loss_grad(p, batch, sched, 0.0, only_ref);
        for (std::size_t i = 0; i < p.q_map.w.size(); ++i)
            CHECK(std::abs(with_ref.q_map.w[i] - only_ref.q_map.w[i]) <= 1e-12);
        for (std::size_t i = 0; i < p.k_map.w.size(); ++i)
            CHECK(std::abs(with_ref.k_map.w[i] - only_ref.k_map.w[i]) <= 1e-12);
    }
}

TEST_CASE("reference masking drops keys at the configured rate") {
    Rng rng(617);
    const SpgParams p = make_spg(2, 3, rng);
    const DataSet data = gaussian_blobs({{0.0, 0.0}, {3.0, 3.0}}, 0.5, 64, 9);
    TrainConfig cfg;
    cfg.reference_size = 16;
    cfg.mask_prob = 0.25;
    Rng r2(13);
    std::size_t total = 0, kept = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const SpgBatch b = prepare_spg_batch(p, data, cfg, r2);
        for (const auto& s : b.samples) {
            total += cfg.reference_size - 1;
            kept += s.refs.size();
        }
    }
    const double keep_rate = double(kept) / double(total);
    CHECK(keep_rate > 0.70);
    CHECK(keep_rate < 0.80);
}

TEST_CASE("spg training decreases the probe endpoint loss") {
    const auto sched = AffineSchedule::linear();
    const DataSet data = gaussian_blobs({{-2.0, 0.0}, {2.0, 0.0}}, 0.4, 128, 21);
    TrainConfig cfg;
    cfg.steps = 300;
    cfg.learning_rate = 0.02;
    cfg.seed = 33;
    cfg.reference_size = 8;
    const auto res = spg_train(data, cfg, sched, 4);
    CHECK(res.probe_mu_final < 0.7 * res.probe_mu_initial);
}
