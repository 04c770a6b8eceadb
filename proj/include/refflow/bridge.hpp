#pragma once

// Affine interpolant x_t = alpha(t) x0 + beta(t) x1 and the algebraic
// duality between velocity fields and endpoint means:
//
//   u(x, t) = a_t x + c_t mu(x, t),   a_t = alpha'/alpha,
//                                     c_t = beta' - beta alpha'/alpha.
//
// For the linear schedule (alpha = 1-t, beta = t) this is the familiar
// u = (mu - x) / (1 - t).

#include <cmath>
#include <functional>
#include <stdexcept>

#include "refflow/vec.hpp"

namespace refflow {

// Hard floor on (1 - t) for coefficient evaluation.
inline constexpr double kEpsMin = 1e-6;
// alpha(t) at or below this is treated as singular.
inline constexpr double kAlphaFloor = 1e-12;

enum class ScheduleKind { Linear, Custom };

using ScalarFn = std::function<double(double)>;

class AffineSchedule {
  public:
    static AffineSchedule linear() { return AffineSchedule(); }

    // Custom schedules supply their own derivatives; nothing is
    // differentiated numerically, so the duality stays exact.
    static AffineSchedule custom(ScalarFn alpha, ScalarFn beta, ScalarFn dalpha, ScalarFn dbeta) {
        AffineSchedule s;
        s.kind_ = ScheduleKind::Custom;
        s.alpha_ = std::move(alpha);
        s.beta_ = std::move(beta);
        s.dalpha_ = std::move(dalpha);
        s.dbeta_ = std::move(dbeta);
        s.validate();
        return s;
    }

    ScheduleKind kind() const { return kind_; }

    double alpha(double t) const { return kind_ == ScheduleKind::Linear ? 1.0 - t : alpha_(t); }
    double beta(double t) const { return kind_ == ScheduleKind::Linear ? t : beta_(t); }
    double dalpha(double t) const { return kind_ == ScheduleKind::Linear ? -1.0 : dalpha_(t); }
    double dbeta(double t) const { return kind_ == ScheduleKind::Linear ? 1.0 : dbeta_(t); }

  private:
    AffineSchedule() = default;

    void validate() const {
        const double tol = 1e-12;
        if (std::abs(alpha(0.0) - 1.0) > tol || std::abs(beta(0.0)) > tol ||
            std::abs(alpha(1.0)) > tol || std::abs(beta(1.0) - 1.0) > tol) {
            throw std::invalid_argument(
                "AffineSchedule: boundary conditions alpha(0)=1, beta(0)=0, alpha(1)=0, beta(1)=1 violated");
        }
        // alpha must stay positive away from t = 1.
        for (int i = 0; i <= 100; ++i) {
            const double t = (1.0 - kEpsMin) * static_cast<double>(i) / 100.0;
            if (alpha(t) <= 0.0) {
                throw std::invalid_argument("AffineSchedule: alpha(t) must be > 0 on [0, 1-eps_min]");
            }
        }
    }

    ScheduleKind kind_ = ScheduleKind::Linear;
    ScalarFn alpha_, beta_, dalpha_, dbeta_;
};

struct BridgeState {
    Vec x;
    double t = 0.0;

    BridgeState(Vec point, double time) : x(std::move(point)), t(time) {
        if (x.empty()) throw std::invalid_argument("BridgeState: dimension must be >= 1");
        if (!(t >= 0.0 && t < 1.0)) throw std::invalid_argument("BridgeState: t must lie in [0, 1)");
    }
};

struct BridgeCoeffs {
    double alpha;
    double beta;
    double dalpha;
    double dbeta;
    double a;  // alpha'/alpha
    double c;  // beta' - beta alpha'/alpha
};

inline BridgeCoeffs coefficients(const AffineSchedule& sched, double t) {
    if (!(t >= 0.0 && t < 1.0)) throw std::domain_error("coefficients: t must lie in [0, 1)");
    const double al = sched.alpha(t);
    if (al <= kAlphaFloor) throw std::domain_error("coefficients: alpha(t) vanishes, bridge is singular here");
    const double be = sched.beta(t);
    const double da = sched.dalpha(t);
    const double db = sched.dbeta(t);
    const double a = da / al;
    const double c = db - be * a;
    return {al, be, da, db, a, c};
}

inline Vec interpolate(const Vec& x0, const Vec& x1, double t, const AffineSchedule& sched) {
    check_same_dim(x0, x1, "interpolate");
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t must lie in [0, 1]");
    const double al = sched.alpha(t);
    const double be = sched.beta(t);
    Vec r(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) r[i] = al * x0[i] + be * x1[i];
    return r;
}

inline Vec velocity_from_mean(const Vec& x, const Vec& mean, double t, const AffineSchedule& sched) {
    check_same_dim(x, mean, "velocity_from_mean");
    const BridgeCoeffs k = coefficients(sched, t);
    Vec u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = k.a * x[i] + k.c * mean[i];
    return u;
}

inline Vec mean_from_velocity(const Vec& x, const Vec& u, double t, const AffineSchedule& sched) {
    check_same_dim(x, u, "mean_from_velocity");
    const BridgeCoeffs k = coefficients(sched, t);
    if (k.c == 0.0) throw std::domain_error("mean_from_velocity: c_t = 0, velocity does not determine the mean");
    Vec m(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) m[i] = (u[i] - k.a * x[i]) / k.c;
    return m;
}

}  // namespace refflow
