#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "refflow/bridge.hpp"
#include "refflow/dataset.hpp"
#include "refflow/posterior.hpp"
#include "refflow/rng.hpp"

using namespace refflow;

namespace {
DataSet random_dataset(Rng& rng, std::size_t n, std::size_t d, double spread = 2.0) {
    std::vector<Vec> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(scale(rng.normal_vec(d), spread));
    return DataSet(std::move(pts));
}
}  // namespace

TEST_CASE("posterior weights: trivial cases") {
    const auto sched = AffineSchedule::linear();

    SECTION("t=0 gives uniform weights for uniform priors") {
        Rng rng(5);
        const DataSet data = random_dataset(rng, 4, 2);
        const auto w = posterior_weights({0.3, -0.7}, 0.0, data, sched, 1.0);
        for (double v : w) CHECK(v == 0.25);
    }
    SECTION("single candidate") {
        const DataSet data({{1.0, 2.0}});
        const auto w = posterior_weights({9.0, 9.0}, 0.4, data, sched, 1.0);
        REQUIRE(w.size() == 1);
        CHECK(w[0] == 1.0);
    }
    SECTION("symmetric two-point dataset") {
        const DataSet data({{1.0, 0.0}, {-1.0, 0.0}});
        const auto w = posterior_weights({0.0, 0.0}, 0.5, data, sched, 1.0);
        CHECK_THAT(w[0], Catch::Matchers::WithinAbs(0.5, 1e-15));
        CHECK_THAT(w[1], Catch::Matchers::WithinAbs(0.5, 1e-15));
    }
    SECTION("input errors") {
        const DataSet data({{1.0}});
        CHECK_THROWS_AS(posterior_weights({0.0}, 0.5, data, sched, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(posterior_weights({0.0}, 0.5, data, sched, -1.0), std::invalid_argument);
        CHECK_THROWS_AS(posterior_weights({0.0, 1.0}, 0.5, data, sched, 1.0), std::invalid_argument);
    }
}

TEST_CASE("posterior weights match direct Gaussian-Bayes oracle") {
    const auto sched = AffineSchedule::linear();
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        const DataSet data = random_dataset(rng, 10, 3);
        const Vec x = rng.normal_vec(3);
        const double t = rng.uniform(0.01, 0.95);
        const auto got = posterior_weights(x, t, data, sched, 1.0);
        const auto want = oracle::bayes_weights(x, t, data, sched, 1.0);
        double sum = 0.0;
        for (std::size_t n = 0; n < got.size(); ++n) {
            CHECK(oracle::rel_err(got[n], want[n]) <= 1e-9);
            sum += got[n];
        }
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-10));
    }
}

TEST_CASE("posterior weights respect non-uniform priors") {
    const auto sched = AffineSchedule::linear();
    Rng rng(23);
    DataSet data = random_dataset(rng, 6, 2).with_weights({0.5, 0.1, 0.0, 1.2, 0.7, 0.3});
    const Vec x = rng.normal_vec(2);
    const auto got = posterior_weights(x, 0.4, data, sched, 1.0);
    const auto want = oracle::bayes_weights(x, 0.4, data, sched, 1.0);
    for (std::size_t n = 0; n < got.size(); ++n) CHECK(oracle::rel_err(got[n], want[n]) <= 1e-9);
    CHECK(got[2] == 0.0);  // zero prior stays zero
}

TEST_CASE("temperature limit: tau -> 0 concentrates on the nearest point") {
    const auto sched = AffineSchedule::linear();
    Rng rng(31);
    const DataSet data = random_dataset(rng, 12, 2);
    const double t = 0.55;
    const double beta = sched.beta(t);
    for (int rep = 0; rep < 20; ++rep) {
        const Vec x = rng.normal_vec(2);
        std::size_t arg = 0;
        double best = std::numeric_limits<double>::infinity();
        double second = best;
        for (std::size_t n = 0; n < data.size(); ++n) {
            const double dist = std::sqrt(squared_distance(x, scale(data.point(n), beta)));
            if (dist < best) {
                second = best;
                best = dist;
                arg = n;
            } else if (dist < second) {
                second = dist;
            }
        }
        if (second - best < 1e-3) continue;  // only assert for unique minimizers
        const auto w = posterior_weights(x, t, data, sched, 1e-6);
        CHECK(w[arg] >= 1.0 - 1e-6);
    }
}

TEST_CASE("weight concentration grows along a bridge toward its endpoint") {
    const auto sched = AffineSchedule::linear();
    Rng rng(37);
    const DataSet data = random_dataset(rng, 20, 2);
    const std::size_t k = 7;
    std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<double> mean_wk(grid.size(), 0.0);
    const int draws = 100;
    for (int rep = 0; rep < draws; ++rep) {
        const Vec x0 = rng.normal_vec(2);
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            const Vec x = interpolate(x0, data.point(k), grid[gi], sched);
            mean_wk[gi] += posterior_weights(x, grid[gi], data, sched, 1.0)[k] / draws;
        }
    }
    for (std::size_t gi = 1; gi < grid.size(); ++gi) CHECK(mean_wk[gi] >= mean_wk[gi - 1] - 1e-12);
    CHECK(mean_wk.back() > 0.9);
}

TEST_CASE("endpoint mean: trivial cases and convex hull") {
    const auto sched = AffineSchedule::linear();
    SECTION("t=0 gives the prior-weighted dataset mean independent of x") {
        Rng rng(41);
        const DataSet data = random_dataset(rng, 8, 2);
        Vec expect(2, 0.0);
        for (std::size_t n = 0; n < data.size(); ++n) axpy(expect, 1.0 / 8.0, data.point(n));
        const Vec m1 = endpoint_mean({5.0, 5.0}, 0.0, data, sched);
        const Vec m2 = endpoint_mean({-3.0, 0.2}, 0.0, data, sched);
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK_THAT(m1[j], Catch::Matchers::WithinAbs(expect[j], 1e-12));
            CHECK_THAT(m2[j], Catch::Matchers::WithinAbs(expect[j], 1e-12));
        }
    }
    SECTION("single point") {
        const DataSet data({{2.0, -1.0}});
        const Vec m = endpoint_mean({0.0, 0.0}, 0.7, data, sched);
        CHECK(m == Vec{2.0, -1.0});
    }
    SECTION("symmetric pair") {
        const DataSet data({{1.0, 0.0}, {-1.0, 0.0}});
        const Vec m = endpoint_mean({0.0, 0.0}, 0.5, data, sched);
        CHECK_THAT(m[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
    SECTION("mean stays in the coordinate-wise hull") {
        Rng rng(43);
        const DataSet data = random_dataset(rng, 15, 2);
        Vec lo(2, std::numeric_limits<double>::infinity()), hi(2, -std::numeric_limits<double>::infinity());
        for (const auto& p : data.points())
            for (std::size_t j = 0; j < 2; ++j) {
                lo[j] = std::min(lo[j], p[j]);
                hi[j] = std::max(hi[j], p[j]);
            }
        for (int rep = 0; rep < 50; ++rep) {
            const Vec m = endpoint_mean(rng.normal_vec(2), rng.uniform(0.0, 0.95), data, sched);
            for (std::size_t j = 0; j < 2; ++j) {
                CHECK(m[j] >= lo[j] - 1e-12);
                CHECK(m[j] <= hi[j] + 1e-12);
            }
        }
    }
}

TEST_CASE("empirical velocity matches Bayes + duality oracle") {
    const auto sched = AffineSchedule::linear();
    SECTION("single point reduces to (x1 - x)/(1 - t)") {
        const DataSet data({{3.0}});
        const Vec u = empirical_velocity({1.0}, 0.5, data, sched);
        CHECK_THAT(u[0], Catch::Matchers::WithinAbs((3.0 - 1.0) / 0.5, 1e-12));
    }
    SECTION("two-point dataset against scalar oracle") {
        const DataSet data({{-1.0}, {1.0}});
        const double t = 0.5, x = 0.3;
        const Vec got = empirical_velocity({x}, t, data, sched);
        const Vec mu = oracle::bayes_mean({x}, t, data, sched);
        const double want = (mu[0] - x) / (1.0 - t);
        CHECK(oracle::rel_err(got[0], want) <= 1e-12);
    }
    SECTION("x at the dataset mean at t=0 is stationary") {
        Rng rng(47);
        const DataSet data = random_dataset(rng, 9, 3);
        Vec mean(3, 0.0);
        for (std::size_t n = 0; n < data.size(); ++n) axpy(mean, 1.0 / 9.0, data.point(n));
        const Vec u = empirical_velocity(mean, 0.0, data, sched);
        for (double v : u) CHECK_THAT(v, Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("log marginal density matches naive summation") {
    const auto sched = AffineSchedule::linear();
    Rng rng(53);
    for (int rep = 0; rep < 30; ++rep) {
        const DataSet data = random_dataset(rng, 5, 2);
        const Vec x = rng.normal_vec(2);
        const double t = rng.uniform(0.01, 0.9);
        const double got = log_marginal_density(x, t, data, sched);
        const double naive = oracle::naive_marginal(x, t, data, sched);
        CHECK(oracle::rel_err(got, std::log(naive)) <= 1e-10);
    }
}

TEST_CASE("log marginal density trivia") {
    const auto sched = AffineSchedule::linear();
    SECTION("single point at the kernel mode") {
        const DataSet data({{1.0, -2.0, 0.5}});
        const double t = 0.6;
        const double al = sched.alpha(t), be = sched.beta(t);
        const Vec x = scale(data.point(0), be);
        const double got = log_marginal_density(x, t, data, sched);
        CHECK_THAT(got, Catch::Matchers::WithinAbs(-1.5 * std::log(2.0 * M_PI * al * al), 1e-12));
    }
    SECTION("t=0 is the standard normal log density regardless of data") {
        Rng rng(59);
        const DataSet data = random_dataset(rng, 7, 2);
        const Vec x = rng.normal_vec(2);
        const double want = -std::log(2.0 * M_PI) - 0.5 * dot(x, x);
        CHECK_THAT(log_marginal_density(x, 0.0, data, sched), Catch::Matchers::WithinAbs(want, 1e-12));
    }
}

TEST_CASE("empirical score equals FD gradient of the log marginal") {
    const auto sched = AffineSchedule::linear();
    Rng rng(61);
    const DataSet data = random_dataset(rng, 8, 2);
    for (int rep = 0; rep < 50; ++rep) {
        const Vec x = rng.normal_vec(2);
        const double t = rng.uniform(0.05, 0.95);
        const Vec got = empirical_score(x, t, data, sched);
        const Vec fd = oracle::fd_gradient(
            [&](const Vec& q) { return log_marginal_density(q, t, data, sched); }, x, 1e-4);
        CHECK(oracle::rel_err_vec(got, fd) <= 1e-5);
    }
}

TEST_CASE("empirical score trivia") {
    const auto sched = AffineSchedule::linear();
    SECTION("single point gives the exact Gaussian score") {
        const DataSet data({{2.0, 1.0}});
        const double t = 0.4;
        const double al = sched.alpha(t), be = sched.beta(t);
        const Vec x{0.3, -0.8};
        const Vec got = empirical_score(x, t, data, sched);
        for (std::size_t j = 0; j < 2; ++j)
            CHECK_THAT(got[j], Catch::Matchers::WithinAbs((be * data.point(0)[j] - x[j]) / (al * al), 1e-12));
    }
    SECTION("symmetry zero at the origin") {
        const DataSet data({{1.0}, {-1.0}});
        const Vec got = empirical_score({0.0}, 0.5, data, sched);
        CHECK_THAT(got[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("shift equivariance of weights and mean") {
    const auto sched = AffineSchedule::linear();
    Rng rng(67);
    const DataSet data = random_dataset(rng, 10, 2);
    const Vec v = rng.normal_vec(2);
    const double t = 0.45;
    const double be = sched.beta(t);

    std::vector<Vec> shifted_pts;
    for (const auto& p : data.points()) shifted_pts.push_back(add(p, v));
    const DataSet shifted(std::move(shifted_pts));

    for (int rep = 0; rep < 20; ++rep) {
        const Vec x = rng.normal_vec(2);
        const Vec xs = add(x, scale(v, be));
        const auto w0 = posterior_weights(x, t, data, sched);
        const auto w1 = posterior_weights(xs, t, shifted, sched);
        for (std::size_t n = 0; n < w0.size(); ++n) CHECK_THAT(w1[n], Catch::Matchers::WithinAbs(w0[n], 1e-10));
        const Vec m0 = endpoint_mean(x, t, data, sched);
        const Vec m1 = endpoint_mean(xs, t, shifted, sched);
        for (std::size_t j = 0; j < 2; ++j) CHECK_THAT(m1[j], Catch::Matchers::WithinAbs(m0[j] + v[j], 1e-10));
    }
}

TEST_CASE("posterior estimate bundles weights, mean and log marginal") {
    const auto sched = AffineSchedule::linear();
    Rng rng(71);
    const DataSet data = random_dataset(rng, 6, 2);
    const Vec x = rng.normal_vec(2);
    const auto est = posterior_estimate(x, 0.3, data, sched);
    double s = 0.0;
    for (double w : est.weights) s += w;
    CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-10));
    CHECK(est.t == 0.3);
    CHECK(est.query == x);
    CHECK_THAT(est.log_marginal, Catch::Matchers::WithinAbs(std::log(oracle::naive_marginal(x, 0.3, data, sched)), 1e-9));
}
