#pragma once

// Test-only oracles, deliberately written without the log-sum-exp / softmax
// machinery the library uses: direct Gaussian density evaluation, naive
// linear-space sums, and central finite differences. They stay independent
// of the implementation paths they check.

#include <cmath>
#include <functional>
#include <vector>

#include "refflow/bridge.hpp"
#include "refflow/dataset.hpp"
#include "refflow/vec.hpp"

namespace oracle {

using refflow::DataSet;
using refflow::Vec;

// Unnormalized bridge kernel N(x; beta_t x_n, tau alpha_t^2 I) evaluated in
// linear space, including the Gaussian normalizer.
inline double bridge_density(const Vec& x, const Vec& endpoint, double alpha, double beta, double tau = 1.0) {
    const double var = tau * alpha * alpha;
    const double d = static_cast<double>(x.size());
    double sq = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double diff = x[j] - beta * endpoint[j];
        sq += diff * diff;
    }
    return std::pow(2.0 * M_PI * var, -0.5 * d) * std::exp(-sq / (2.0 * var));
}

// Bayes posterior weights from raw densities, no dot-product simplification.
inline std::vector<double> bayes_weights(const Vec& x, double t, const DataSet& data,
                                         const refflow::AffineSchedule& sched, double tau = 1.0) {
    const double alpha = sched.alpha(t);
    const double beta = sched.beta(t);
    const std::vector<double> prior = data.normalized_weights();
    std::vector<double> w(data.size());
    double z = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        w[n] = prior[n] * bridge_density(x, data.point(n), alpha, beta, tau);
        z += w[n];
    }
    for (auto& v : w) v /= z;
    return w;
}

inline Vec bayes_mean(const Vec& x, double t, const DataSet& data, const refflow::AffineSchedule& sched,
                      double tau = 1.0) {
    const std::vector<double> w = bayes_weights(x, t, data, sched, tau);
    Vec m(data.dim(), 0.0);
    for (std::size_t n = 0; n < data.size(); ++n)
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += w[n] * data.point(n)[j];
    return m;
}

// Naive linear-space marginal density sum_n prior_n N(x; beta x_n, alpha^2 I).
inline double naive_marginal(const Vec& x, double t, const DataSet& data, const refflow::AffineSchedule& sched) {
    const double alpha = sched.alpha(t);
    const double beta = sched.beta(t);
    const std::vector<double> prior = data.normalized_weights();
    double z = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) z += prior[n] * bridge_density(x, data.point(n), alpha, beta);
    return z;
}

// Central finite-difference gradient of a scalar function of x.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
    Vec g(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        Vec hi = x, lo = x;
        hi[j] += h;
        lo[j] -= h;
        g[j] = (f(hi) - f(lo)) / (2.0 * h);
    }
    return g;
}

inline double rel_err(double got, double want, double floor = 1e-12) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

// |got - want| / max(|want|, floor), vector norms.
inline double rel_err_vec(const Vec& got, const Vec& want, double floor = 1e-8) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < got.size(); ++j) {
        num += (got[j] - want[j]) * (got[j] - want[j]);
        den += want[j] * want[j];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

}  // namespace oracle
