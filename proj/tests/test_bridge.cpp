#include <catch2/catch_amalgamated.hpp>

#include "refflow/bridge.hpp"
#include "refflow/rng.hpp"

using namespace refflow;

TEST_CASE("linear schedule evaluates closed forms exactly") {
    const auto sched = AffineSchedule::linear();
    CHECK(sched.alpha(0.3) == 0.7);
    CHECK(sched.beta(0.3) == 0.3);
    CHECK(sched.dalpha(0.3) == -1.0);
    CHECK(sched.dbeta(0.3) == 1.0);

    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform(0.0, 0.99);
        const auto k = coefficients(sched, t);
        CHECK(std::abs(k.a - (-1.0 / (1.0 - t))) <= 1e-12 * std::abs(k.a));
        CHECK(std::abs(k.c - 1.0 / (1.0 - t)) <= 1e-12 * std::abs(k.c));
    }
}

TEST_CASE("coefficients at spec'd points") {
    const auto sched = AffineSchedule::linear();
    auto k = coefficients(sched, 0.5);
    CHECK(k.alpha == 0.5);
    CHECK(k.beta == 0.5);
    CHECK(k.dalpha == -1.0);
    CHECK(k.dbeta == 1.0);
    CHECK(k.a == -2.0);
    CHECK(k.c == 2.0);

    k = coefficients(sched, 0.0);
    CHECK(k.a == -1.0);
    CHECK(k.c == 1.0);

    k = coefficients(sched, 0.9);
    CHECK_THAT(k.a, Catch::Matchers::WithinAbs(-10.0, 1e-12));
    CHECK_THAT(k.c, Catch::Matchers::WithinAbs(10.0, 1e-12));
}

TEST_CASE("interpolate boundary and midpoint") {
    const auto sched = AffineSchedule::linear();
    CHECK(interpolate({0, 0}, {2, 2}, 0.5, sched) == Vec{1, 1});
    CHECK(interpolate({3, -1}, {5, 9}, 0.0, sched) == Vec{3, -1});
    CHECK(interpolate({3, -1}, {5, 9}, 1.0, sched) == Vec{5, 9});
    CHECK(interpolate({1}, {3}, 0.25, sched) == Vec{1.5});
    CHECK_THROWS_AS(interpolate({1}, {1, 2}, 0.5, sched), std::invalid_argument);
}

TEST_CASE("velocity from mean, linear special cases") {
    const auto sched = AffineSchedule::linear();
    CHECK(velocity_from_mean({0}, {1}, 0.5, sched) == Vec{2});
    CHECK(velocity_from_mean({2}, {0}, 0.75, sched) == Vec{-8});
    const Vec x{0.4, -1.2};
    const Vec u = velocity_from_mean(x, x, 0.37, sched);
    CHECK_THAT(u[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(u[1], Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("mean from velocity, linear special cases") {
    const auto sched = AffineSchedule::linear();
    CHECK(mean_from_velocity({0}, {2}, 0.5, sched) == Vec{1});
    const Vec fixed = mean_from_velocity({0.7, -2}, {0, 0}, 0.31, sched);
    CHECK_THAT(fixed[0], Catch::Matchers::WithinAbs(0.7, 1e-12));
    CHECK_THAT(fixed[1], Catch::Matchers::WithinAbs(-2.0, 1e-12));
    const Vec m = mean_from_velocity({1, 1}, {-1, -1}, 0.9, sched);
    CHECK_THAT(m[0], Catch::Matchers::WithinAbs(0.9, 1e-12));
    CHECK_THAT(m[1], Catch::Matchers::WithinAbs(0.9, 1e-12));
}

TEST_CASE("duality round-trips to 1e-12 on random probes") {
    const auto sched = AffineSchedule::linear();
    Rng rng(202);
    for (int i = 0; i < 1000; ++i) {
        const double t = rng.uniform(0.0, 0.99);
        Vec x = rng.normal_vec(3);
        Vec m = rng.normal_vec(3);
        const Vec u = velocity_from_mean(x, m, t, sched);
        const Vec m2 = mean_from_velocity(x, u, t, sched);
        for (std::size_t j = 0; j < 3; ++j) CHECK_THAT(m2[j], Catch::Matchers::WithinAbs(m[j], 1e-12));
    }
}

TEST_CASE("custom schedule validation and singularity") {
    auto quad = AffineSchedule::custom(
        [](double t) { return (1.0 - t) * (1.0 - t); },
        [](double t) { return t * (2.0 - t); },
        [](double t) { return -2.0 * (1.0 - t); },
        [](double t) { return 2.0 - 2.0 * t; });
    const auto k = coefficients(quad, 0.5);
    CHECK_THAT(k.a, Catch::Matchers::WithinRel(-2.0 / 0.5, 1e-12));

    // broken boundary conditions are rejected
    CHECK_THROWS_AS(AffineSchedule::custom([](double) { return 0.5; }, [](double t) { return t; },
                                           [](double) { return 0.0; }, [](double) { return 1.0; }),
                    std::invalid_argument);

    // evaluation too close to the alpha -> 0 singularity
    CHECK_THROWS_AS(coefficients(AffineSchedule::linear(), 1.0 - 1e-13), std::domain_error);
    CHECK_THROWS_AS(coefficients(AffineSchedule::linear(), 1.0), std::domain_error);
}

TEST_CASE("bridge state invariants") {
    CHECK_THROWS_AS(BridgeState(Vec{}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(BridgeState(Vec{1.0}, 1.0), std::invalid_argument);
    const BridgeState s({1.0, 2.0}, 0.25);
    CHECK(s.t == 0.25);
}
