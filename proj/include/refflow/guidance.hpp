#pragma once

// Reference-mean guidance. A guided velocity field adds a schedule-scaled
// pull toward the reference-set endpoint mean:
//
//   u_guided(x, t) = u_base(x, t) + gamma_t c_t (mu_ref(x, t) - mu_base(x, t)).
//
// The guidance strength is written gamma to keep it apart from the bridge
// coefficient beta_t; the CLI flag is still spelled beta0.
//
// The arithmetic mixture (1-lambda) p1 + lambda rho1 admits an exact
// posterior mean with a state-dependent weight computed from the two
// marginal densities; it is evaluated in log space because naive density
// ratios underflow near t = 1.

#include <cmath>
#include <concepts>
#include <stdexcept>

#include "refflow/bridge.hpp"
#include "refflow/dataset.hpp"
#include "refflow/posterior.hpp"
#include "refflow/vec.hpp"

namespace refflow {

enum class GuidanceKind { Constant, QuadraticDecay, Bell };

struct GuidanceSpec {
    GuidanceKind kind = GuidanceKind::QuadraticDecay;
    double gamma0 = 1.0;       // >= 0; values above 1 act as extrapolated strength
    double cutoff = 0.85;      // guidance is zero for t >= cutoff
    double temperature = 1.0;  // softmax temperature for the reference posterior

    void validate() const {
        if (!(gamma0 >= 0.0)) throw std::invalid_argument("GuidanceSpec: gamma0 must be >= 0");
        if (!(cutoff > 0.0 && cutoff <= 1.0)) throw std::invalid_argument("GuidanceSpec: cutoff must lie in (0, 1]");
        if (!(temperature > 0.0)) throw std::invalid_argument("GuidanceSpec: temperature must be > 0");
    }
};

inline double schedule_value(const GuidanceSpec& spec, double t) {
    if (t >= spec.cutoff) return 0.0;
    switch (spec.kind) {
        case GuidanceKind::Constant: return spec.gamma0;
        case GuidanceKind::QuadraticDecay: return spec.gamma0 * (1.0 - t) * (1.0 - t);
        case GuidanceKind::Bell: return 4.0 * spec.gamma0 * t * (1.0 - t);
    }
    return 0.0;
}

inline Vec guided_mean(const Vec& mu_base, const Vec& mu_ref, double gamma) {
    check_same_dim(mu_base, mu_ref, "guided_mean");
    Vec m(mu_base.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = (1.0 - gamma) * mu_base[i] + gamma * mu_ref[i];
    return m;
}

// Anything exposing an endpoint-mean evaluation can drive guidance: the
// empirical posterior, a trained MLP, or the SPG predictor.
template <class P>
concept MeanProvider = requires(const P& p, const Vec& x, double t) {
    { p.mean_at(x, t) } -> std::convertible_to<Vec>;
};

struct EmpiricalMean {
    const DataSet* data;
    AffineSchedule sched;
    double temperature = 1.0;

    Vec mean_at(const Vec& x, double t) const { return endpoint_mean(x, t, *data, sched, temperature); }
};

template <MeanProvider P>
Vec rmg_velocity(const Vec& x, double t, const P& base, const DataSet& reference, const GuidanceSpec& spec,
                 const AffineSchedule& sched) {
    const Vec mu = base.mean_at(x, t);
    Vec u = velocity_from_mean(x, mu, t, sched);
    const double gamma = schedule_value(spec, t);
    if (gamma == 0.0) return u;  // keep the unguided path bit-identical
    const BridgeCoeffs k = coefficients(sched, t);
    const Vec mu_ref = endpoint_mean(x, t, reference, sched, spec.temperature);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += gamma * k.c * (mu_ref[i] - mu[i]);
    return u;
}

// --- arithmetic mixture ----------------------------------------------------

struct ArithmeticMixture {
    double lambda;
    const DataSet* train;
    const DataSet* reference;

    ArithmeticMixture(double lam, const DataSet& tr, const DataSet& ref)
        : lambda(lam), train(&tr), reference(&ref) {
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("ArithmeticMixture: lambda must lie in [0, 1]");
        if (tr.dim() != ref.dim()) throw std::invalid_argument("ArithmeticMixture: dataset dimensions differ");
    }
};

// omega*(x) = lambda rho_t(x) / ((1-lambda) p_t(x) + lambda rho_t(x)),
// computed as sigmoid(log lambda + log rho_t - log(1-lambda) - log p_t).
inline double arithmetic_weight(const ArithmeticMixture& mix, const Vec& x, double t, const AffineSchedule& sched) {
    if (mix.lambda == 0.0) return 0.0;
    if (mix.lambda == 1.0) return 1.0;
    const double log_rho = log_marginal_density(x, t, *mix.reference, sched);
    const double log_p = log_marginal_density(x, t, *mix.train, sched);
    const double z = std::log(mix.lambda) + log_rho - std::log(1.0 - mix.lambda) - log_p;
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline Vec arithmetic_guided_mean(const ArithmeticMixture& mix, const Vec& x, double t, const AffineSchedule& sched,
                                  double temperature = 1.0) {
    if (mix.lambda == 0.0) return endpoint_mean(x, t, *mix.train, sched, temperature);
    if (mix.lambda == 1.0) return endpoint_mean(x, t, *mix.reference, sched, temperature);
    const double w = arithmetic_weight(mix, x, t, sched);
    return guided_mean(endpoint_mean(x, t, *mix.train, sched, temperature),
                       endpoint_mean(x, t, *mix.reference, sched, temperature), w);
}

}  // namespace refflow
