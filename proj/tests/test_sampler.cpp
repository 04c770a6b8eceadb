#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "refflow/posterior.hpp"
#include "refflow/sampler.hpp"

using namespace refflow;

TEST_CASE("sample_source determinism and moments") {
    SECTION("same seed gives identical output") {
        const auto a = sample_source(42, 16, 3);
        const auto b = sample_source(42, 16, 3);
        CHECK(a == b);
    }
    SECTION("different seeds differ") {
        const auto a = sample_source(1, 1, 4);
        const auto b = sample_source(2, 1, 4);
        CHECK(a != b);
    }
    SECTION("CLT bounds at n = 1e5") {
        const auto pts = sample_source(7, 100000, 2);
        for (std::size_t j = 0; j < 2; ++j) {
            double mean = 0.0;
            for (const auto& p : pts) mean += p[j];
            mean /= static_cast<double>(pts.size());
            double var = 0.0;
            for (const auto& p : pts) var += (p[j] - mean) * (p[j] - mean);
            var /= static_cast<double>(pts.size() - 1);
            CHECK(std::abs(mean) <= 0.02);
            CHECK(std::abs(var - 1.0) <= 0.03);
        }
    }
}

TEST_CASE("euler on a constant field is exact") {
    SamplerConfig cfg;
    cfg.nfe = 17;
    cfg.eps = 1e-6;
    const Vec c{0.5, -2.0};
    auto field = [&](const Vec&, double) { return c; };
    const auto traj = euler_sample(field, {1.0, 1.0}, cfg);
    CHECK_THAT(traj.endpoint()[0], Catch::Matchers::WithinAbs(1.0 + 0.5 * (1.0 - 1e-6), 1e-12));
    CHECK_THAT(traj.endpoint()[1], Catch::Matchers::WithinAbs(1.0 - 2.0 * (1.0 - 1e-6), 1e-12));
}

TEST_CASE("euler is exact on the single-point empirical field") {
    const auto sched = AffineSchedule::linear();
    const DataSet data({{2.0, -1.0}});
    auto field = [&](const Vec& x, double t) { return empirical_velocity(x, t, data, sched); };
    for (int nfe : {1, 10, 100}) {
        SamplerConfig cfg;
        cfg.nfe = nfe;
        cfg.eps = 1e-3;
        const Vec x0{-0.3, 0.7};
        const auto traj = euler_sample(field, x0, cfg);
        for (std::size_t j = 0; j < 2; ++j) {
            const double want = x0[j] + (1.0 - cfg.eps) * (data.point(0)[j] - x0[j]);
            CHECK_THAT(traj.endpoint()[j], Catch::Matchers::WithinAbs(want, 1e-9));
        }
    }
}

TEST_CASE("trajectory satisfies the exact step recurrence") {
    const auto sched = AffineSchedule::linear();
    const DataSet data({{1.0}, {-1.0}, {0.5}});
    auto field = [&](const Vec& x, double t) { return empirical_velocity(x, t, data, sched); };
    SamplerConfig cfg;
    cfg.nfe = 25;
    cfg.eps = 0.01;
    cfg.record_trajectory = true;
    const auto traj = euler_sample(field, {0.2}, cfg);
    REQUIRE(traj.times.size() == 26);
    REQUIRE(traj.states.size() == 26);
    REQUIRE(traj.velocities.size() == 26);
    CHECK(traj.times.front() == 0.0);
    CHECK(traj.times.back() == 1.0 - cfg.eps);
    for (std::size_t k = 0; k + 1 < traj.times.size(); ++k) {
        CHECK(traj.times[k + 1] > traj.times[k]);
        const double h = traj.times[k + 1] - traj.times[k];
        CHECK_THAT(traj.states[k + 1][0], Catch::Matchers::WithinAbs(traj.states[k][0] + h * traj.velocities[k][0], 1e-12));
    }
}

TEST_CASE("euler determinism") {
    const auto sched = AffineSchedule::linear();
    const DataSet data({{1.0, 0.0}, {-1.0, 0.5}});
    auto field = [&](const Vec& x, double t) { return empirical_velocity(x, t, data, sched); };
    SamplerConfig cfg;
    cfg.nfe = 40;
    cfg.seed = 9;
    const auto src = sample_source(cfg.seed, 5, 2);
    const auto a = euler_endpoints(field, src, cfg);
    const auto b = euler_endpoints(field, src, cfg);
    CHECK(a == b);
}

TEST_CASE("first-order convergence against a high-resolution oracle") {
    // smooth manufactured field, 1-D linear ODE
    auto field = [](const Vec& x, double t) { return Vec{std::cos(3.0 * t) * x[0] + std::sin(2.0 * t)}; };
    const Vec x0{0.7};

    auto endpoint_at = [&](int nfe) {
        SamplerConfig cfg;
        cfg.nfe = nfe;
        cfg.eps = 1e-3;
        return euler_sample(field, x0, cfg).endpoint()[0];
    };

    std::vector<double> log_h, log_err;
    for (int nfe : {10, 20, 40, 80}) {
        const double got = endpoint_at(nfe);
        const double want = endpoint_at(nfe * 1024);
        log_h.push_back(std::log(1.0 / nfe));
        log_err.push_back(std::log(std::abs(got - want)));
    }
    // slope of log err vs log h should be ~1 for explicit Euler
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < log_h.size(); ++i) {
        mx += log_h[i];
        my += log_err[i];
    }
    mx /= log_h.size();
    my /= log_err.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < log_h.size(); ++i) {
        sxy += (log_h[i] - mx) * (log_err[i] - my);
        sxx += (log_h[i] - mx) * (log_h[i] - mx);
    }
    const double slope = sxy / sxx;
    CHECK(slope >= 0.8);
    CHECK(slope <= 1.2);
}

TEST_CASE("two-point empirical field: error bounded by C*h via Richardson") {
    const auto sched = AffineSchedule::linear();
    const DataSet data({{-1.0}, {1.0}});
    auto field = [&](const Vec& x, double t) { return empirical_velocity(x, t, data, sched); };
    auto endpoint_at = [&](int nfe) {
        SamplerConfig cfg;
        cfg.nfe = nfe;
        cfg.eps = 0.05;
        return euler_sample(field, {0.3}, cfg).endpoint()[0];
    };
    const double ref = endpoint_at(20480);
    const double e20 = std::abs(endpoint_at(20) - ref);
    const double e40 = std::abs(endpoint_at(40) - ref);
    const double e80 = std::abs(endpoint_at(80) - ref);
    // C estimated from the coarsest run; halving h should halve the error
    // within a modest factor if the scheme is first order.
    const double c_est = e20 / (0.95 / 20.0);
    CHECK(e40 <= 1.3 * c_est * (0.95 / 40.0));
    CHECK(e80 <= 1.3 * c_est * (0.95 / 80.0));
}

TEST_CASE("flow field grid layout and symmetry") {
    SECTION("2x2 corners in row-major order, first axis fastest") {
        auto zero = [](const Vec& p, double) { return Vec(p.size(), 0.0); };
        const auto grid = flow_field_grid(zero, {{0.0, 1.0}, {0.0, 1.0}}, {2, 2}, 0.5);
        REQUIRE(grid.points.size() == 4);
        CHECK(grid.points[0] == Vec{0.0, 0.0});
        CHECK(grid.points[1] == Vec{1.0, 0.0});
        CHECK(grid.points[2] == Vec{0.0, 1.0});
        CHECK(grid.points[3] == Vec{1.0, 1.0});
        for (const auto& u : grid.velocities) CHECK(u == Vec{0.0, 0.0});
    }
    SECTION("odd symmetry of the field for symmetric two-point data") {
        const auto sched = AffineSchedule::linear();
        const DataSet data({{1.0, 0.5}, {-1.0, -0.5}});
        auto field = [&](const Vec& x, double t) { return empirical_velocity(x, t, data, sched); };
        const auto grid = flow_field_grid(field, {{-2.0, 2.0}, {-2.0, 2.0}}, {9, 9}, 0.4);
        // u(-x) == -u(x): the grid is symmetric about the origin
        const std::size_t n = grid.points.size();
        double max_asym = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& u = grid.velocities[i];
            const auto& v = grid.velocities[n - 1 - i];  // reflected point
            for (std::size_t j = 0; j < 2; ++j) max_asym = std::max(max_asym, std::abs(u[j] + v[j]));
        }
        CHECK(max_asym <= 1e-9);
    }
    SECTION("rejects dim > 2 and tiny resolutions") {
        auto zero = [](const Vec& p, double) { return Vec(p.size(), 0.0); };
        CHECK_THROWS_AS(flow_field_grid(zero, {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}, {2, 2, 2}, 0.1),
                        std::invalid_argument);
        CHECK_THROWS_AS(flow_field_grid(zero, {{0.0, 1.0}}, {1}, 0.1), std::invalid_argument);
    }
}

TEST_CASE("sampler config validation") {
    SamplerConfig cfg;
    cfg.nfe = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.nfe = 10;
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.eps = 0.2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
