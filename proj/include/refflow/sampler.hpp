#pragma once

// Fixed-step explicit Euler integration of a velocity field over
// t in [0, 1-eps], from a standard normal source. Trajectories record the
// exact step recurrence: states[k+1] = states[k] + (times[k+1]-times[k]) *
// velocities[k].

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "refflow/rng.hpp"
#include "refflow/vec.hpp"

namespace refflow {

struct SamplerConfig {
    int nfe = 100;             // number of Euler steps
    double eps = 1e-3;         // terminal cutoff, integrate over [0, 1-eps]
    std::uint64_t seed = 0;
    bool record_trajectory = false;

    void validate() const {
        if (nfe < 1) throw std::invalid_argument("SamplerConfig: nfe must be >= 1");
        if (!(eps > 0.0 && eps <= 0.1)) throw std::invalid_argument("SamplerConfig: eps must lie in (0, 0.1]");
    }
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<Vec> velocities;  // same length as times when recorded

    const Vec& endpoint() const { return states.back(); }
};

// n i.i.d. standard normal d-vectors; Box-Muller over mt19937_64 (see
// rng.hpp for the stability contract).
inline std::vector<Vec> sample_source(std::uint64_t seed, std::size_t n, std::size_t d) {
    if (n < 1 || d < 1) throw std::invalid_argument("sample_source: n and d must be >= 1");
    Rng rng(seed);
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(rng.normal_vec(d));
    return out;
}

template <class Field>
Trajectory euler_sample(Field&& field, const Vec& x0, const SamplerConfig& cfg) {
    cfg.validate();
    const double horizon = 1.0 - cfg.eps;
    Trajectory traj;
    Vec x = x0;
    double t = 0.0;
    if (cfg.record_trajectory) {
        traj.times.reserve(cfg.nfe + 1);
        traj.states.reserve(cfg.nfe + 1);
        traj.velocities.reserve(cfg.nfe + 1);
    }
    for (int k = 0; k < cfg.nfe; ++k) {
        const double t_next = horizon * static_cast<double>(k + 1) / static_cast<double>(cfg.nfe);
        Vec u;
        try {
            u = field(x, t);
        } catch (const std::exception& e) {
            throw std::runtime_error("euler_sample: field evaluation failed at step " + std::to_string(k) +
                                     " (t=" + std::to_string(t) + "): " + e.what());
        }
        if (cfg.record_trajectory) {
            traj.times.push_back(t);
            traj.states.push_back(x);
            traj.velocities.push_back(u);
        }
        const double h = t_next - t;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * u[i];
        t = t_next;
    }
    traj.times.push_back(t);
    traj.states.push_back(std::move(x));
    if (cfg.record_trajectory) {
        // terminal velocity, so velocities lines up with times
        traj.velocities.push_back(field(traj.states.back(), t));
    }
    return traj;
}

// Integrate a batch of source points; returns endpoints only.
template <class Field>
std::vector<Vec> euler_endpoints(Field&& field, const std::vector<Vec>& sources, const SamplerConfig& cfg) {
    std::vector<Vec> out;
    out.reserve(sources.size());
    SamplerConfig c = cfg;
    c.record_trajectory = false;
    for (const Vec& x0 : sources) out.push_back(euler_sample(field, x0, c).endpoint());
    return out;
}

struct FlowGrid {
    std::vector<Vec> points;      // row major, first axis fastest
    std::vector<Vec> velocities;
    std::vector<std::size_t> resolution;  // per axis
    double t = 0.0;
};

// Evaluate a field on a regular 1-D or 2-D grid. Higher dimensions have no
// grid emission; integrate trajectories instead.
template <class Field>
FlowGrid flow_field_grid(Field&& field, const std::vector<std::pair<double, double>>& bounds,
                         const std::vector<std::size_t>& resolution, double t) {
    if (bounds.empty() || bounds.size() > 2) throw std::invalid_argument("flow_field_grid: grid dimension must be 1 or 2");
    if (resolution.size() != bounds.size()) throw std::invalid_argument("flow_field_grid: one resolution per axis");
    for (std::size_t r : resolution) {
        if (r < 2) throw std::invalid_argument("flow_field_grid: resolution must be >= 2 per axis");
    }
    FlowGrid grid;
    grid.resolution = resolution;
    grid.t = t;
    auto coord = [&](std::size_t axis, std::size_t i) {
        return bounds[axis].first + (bounds[axis].second - bounds[axis].first) * static_cast<double>(i) /
                                        static_cast<double>(resolution[axis] - 1);
    };
    if (bounds.size() == 1) {
        for (std::size_t i = 0; i < resolution[0]; ++i) {
            Vec p{coord(0, i)};
            grid.velocities.push_back(field(p, t));
            grid.points.push_back(std::move(p));
        }
    } else {
        for (std::size_t iy = 0; iy < resolution[1]; ++iy) {
            for (std::size_t ix = 0; ix < resolution[0]; ++ix) {
                Vec p{coord(0, ix), coord(1, iy)};
                grid.velocities.push_back(field(p, t));
                grid.points.push_back(std::move(p));
            }
        }
    }
    return grid;
}

}  // namespace refflow
