#pragma once

// Exact closed-form endpoint posterior over an empirical dataset under a
// standard normal source: per-point weights, endpoint mean, log marginal
// density and score. For a point x at time t the bridge kernel is
// N(x; beta_t x_n, alpha_t^2 I), so
//
//   w_n(x) ~ prior_n * exp(-|x - beta_t x_n|^2 / (2 tau alpha_t^2)),
//   mu(x)  = sum_n w_n(x) x_n.
//
// Everything runs through max-subtracted log-sum-exp; the naive form with
// (1-t)^2 denominators overflows long before t reaches 1.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "refflow/bridge.hpp"
#include "refflow/dataset.hpp"
#include "refflow/vec.hpp"

namespace refflow {

struct PosteriorEstimate {
    std::vector<double> weights;
    Vec mean;
    double log_marginal;  // tau = 1 always
    double t;
    Vec query;
};

// Softmax temperature tau divides the squared distance, i.e. multiplies the
// kernel variance. tau = 1 reproduces the exact Bayes posterior; sqrt(d) is
// the scaled-dot-product choice for high-dimensional data.
inline double sqrt_d_temperature(std::size_t d) { return std::sqrt(static_cast<double>(d)); }

inline std::vector<double> posterior_weights(const Vec& x, double t, const DataSet& data,
                                             const AffineSchedule& sched, double temperature = 1.0) {
    if (!(temperature > 0.0)) throw std::invalid_argument("posterior_weights: temperature must be > 0");
    if (data.size() == 0) throw std::invalid_argument("posterior_weights: empty dataset");
    if (x.size() != data.dim()) throw std::invalid_argument("posterior_weights: query dimension mismatch");
    const BridgeCoeffs k = coefficients(sched, t);
    const double inv_var = 1.0 / (2.0 * temperature * k.alpha * k.alpha);
    const std::vector<double> prior = data.normalized_weights();

    std::vector<double> logits(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        const Vec& p = data.point(n);
        double sq = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double diff = x[j] - k.beta * p[j];
            sq += diff * diff;
        }
        logits[n] = (prior[n] > 0.0 ? std::log(prior[n]) : -std::numeric_limits<double>::infinity()) - sq * inv_var;
    }
    softmax_in_place(logits);
    return logits;
}

inline Vec endpoint_mean(const Vec& x, double t, const DataSet& data, const AffineSchedule& sched,
                         double temperature = 1.0) {
    const std::vector<double> w = posterior_weights(x, t, data, sched, temperature);
    Vec mean(data.dim(), 0.0);
    for (std::size_t n = 0; n < data.size(); ++n) axpy(mean, w[n], data.point(n));
    return mean;
}

inline Vec empirical_velocity(const Vec& x, double t, const DataSet& data, const AffineSchedule& sched,
                              double temperature = 1.0) {
    return velocity_from_mean(x, endpoint_mean(x, t, data, sched, temperature), t, sched);
}

// log rho_t(x) = log sum_n prior_n N(x; beta_t x_n, alpha_t^2 I).
inline double log_marginal_density(const Vec& x, double t, const DataSet& data, const AffineSchedule& sched) {
    if (data.size() == 0) throw std::invalid_argument("log_marginal_density: empty dataset");
    if (x.size() != data.dim()) throw std::invalid_argument("log_marginal_density: query dimension mismatch");
    const BridgeCoeffs k = coefficients(sched, t);
    const double inv_var = 1.0 / (2.0 * k.alpha * k.alpha);
    const double d = static_cast<double>(x.size());
    const double log_norm = -0.5 * d * std::log(2.0 * M_PI * k.alpha * k.alpha);
    const std::vector<double> prior = data.normalized_weights();

    std::vector<double> terms(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        const Vec& p = data.point(n);
        double sq = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double diff = x[j] - k.beta * p[j];
            sq += diff * diff;
        }
        terms[n] = (prior[n] > 0.0 ? std::log(prior[n]) : -std::numeric_limits<double>::infinity()) - sq * inv_var;
    }
    return log_sum_exp(terms) + log_norm;
}

// grad_x log rho_t(x) = (beta_t mu(x) - x) / alpha_t^2, with the tau = 1
// mean: the score-to-mean identity holds for the unscaled bridge kernel.
inline Vec empirical_score(const Vec& x, double t, const DataSet& data, const AffineSchedule& sched) {
    const BridgeCoeffs k = coefficients(sched, t);
    const Vec mu = endpoint_mean(x, t, data, sched, 1.0);
    Vec s(x.size());
    const double inv_var = 1.0 / (k.alpha * k.alpha);
    for (std::size_t j = 0; j < x.size(); ++j) s[j] = (k.beta * mu[j] - x[j]) * inv_var;
    return s;
}

inline PosteriorEstimate posterior_estimate(const Vec& x, double t, const DataSet& data,
                                            const AffineSchedule& sched, double temperature = 1.0) {
    PosteriorEstimate e;
    e.weights = posterior_weights(x, t, data, sched, temperature);
    e.mean = Vec(data.dim(), 0.0);
    for (std::size_t n = 0; n < data.size(); ++n) axpy(e.mean, e.weights[n], data.point(n));
    e.log_marginal = log_marginal_density(x, t, data, sched);
    e.t = t;
    e.query = x;
    return e;
}

}  // namespace refflow
