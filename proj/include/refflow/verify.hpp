#pragma once

// Runtime oracle checks behind the `verify` subcommand. Each check evaluates
// one of the independently-computable contracts (direct Bayes evaluation,
// naive density sums, finite differences, high-resolution integration,
// hand-computed special cases) and reports its measured error against the
// pinned threshold. The same oracles back the unit and acceptance suites;
// here they are packaged for a quick end-to-end health check of a build.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "refflow/datagen.hpp"
#include "refflow/experiments.hpp"
#include "refflow/guidance.hpp"
#include "refflow/metrics.hpp"
#include "refflow/models/mlp.hpp"
#include "refflow/models/spg.hpp"
#include "refflow/posterior.hpp"
#include "refflow/sampler.hpp"
#include "refflow/svg.hpp"

namespace refflow {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string note;
};

namespace verifydetail {

inline double rel(double got, double want, double floor = 1e-12) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

inline double rel_vec(const Vec& got, const Vec& want, double floor = 1e-8) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < got.size(); ++j) {
        num += (got[j] - want[j]) * (got[j] - want[j]);
        den += want[j] * want[j];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

// Direct Gaussian-Bayes weights without the softmax simplification.
inline std::vector<double> bayes_weights(const Vec& x, double t, const DataSet& data, const AffineSchedule& sched) {
    const double alpha = sched.alpha(t), beta = sched.beta(t);
    const std::vector<double> prior = data.normalized_weights();
    std::vector<double> w(data.size());
    double z = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        double sq = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double diff = x[j] - beta * data.point(n)[j];
            sq += diff * diff;
        }
        const double d = static_cast<double>(x.size());
        w[n] = prior[n] * std::pow(2.0 * M_PI * alpha * alpha, -0.5 * d) * std::exp(-sq / (2.0 * alpha * alpha));
        z += w[n];
    }
    for (auto& v : w) v /= z;
    return w;
}

inline double naive_marginal(const Vec& x, double t, const DataSet& data, const AffineSchedule& sched) {
    const double alpha = sched.alpha(t), beta = sched.beta(t);
    const std::vector<double> prior = data.normalized_weights();
    const double d = static_cast<double>(x.size());
    double z = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        double sq = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double diff = x[j] - beta * data.point(n)[j];
            sq += diff * diff;
        }
        z += prior[n] * std::pow(2.0 * M_PI * alpha * alpha, -0.5 * d) * std::exp(-sq / (2.0 * alpha * alpha));
    }
    return z;
}

inline DataSet random_dataset(Rng& rng, std::size_t n, std::size_t d, double spread = 2.0) {
    std::vector<Vec> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(scale(rng.normal_vec(d), spread));
    return DataSet(std::move(pts));
}

}  // namespace verifydetail

inline std::vector<CheckResult> run_verification_checks() {
    using namespace verifydetail;
    std::vector<CheckResult> results;
    const auto sched = AffineSchedule::linear();
    auto record = [&](const std::string& name, double measured, double threshold, const std::string& note = "") {
        results.push_back({name, measured <= threshold, measured, threshold, note});
    };

    {  // posterior weights vs direct Gaussian-Bayes (d in {1, 2, 10})
        Rng rng(1001);
        double worst = 0.0;
        for (std::size_t d : {1u, 2u, 10u}) {
            for (int rep = 0; rep < 100; ++rep) {
                const DataSet data = random_dataset(rng, 10, d);
                const Vec x = rng.normal_vec(d);
                const double t = rng.uniform(0.01, 0.95);
                const auto got = posterior_weights(x, t, data, sched);
                const auto want = bayes_weights(x, t, data, sched);
                for (std::size_t n = 0; n < got.size(); ++n) worst = std::max(worst, rel(got[n], want[n]));
            }
        }
        record("posterior-weights-vs-bayes", worst, 1e-9);
    }
    {  // empirical velocity against the two-point 1-D oracle
        const DataSet data({{-1.0}, {1.0}});
        const double t = 0.5, x = 0.3;
        const auto w = bayes_weights({x}, t, data, sched);
        const double mu = -w[0] + w[1];
        const double want = (mu - x) / (1.0 - t);
        record("empirical-velocity-two-point", rel(empirical_velocity({x}, t, data, sched)[0], want), 1e-9);
    }
    {  // log marginal vs naive linear-space sum
        Rng rng(1003);
        double worst = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            const DataSet data = random_dataset(rng, 5, 2);
            const Vec x = rng.normal_vec(2);
            const double t = rng.uniform(0.01, 0.9);
            worst = std::max(worst, rel(log_marginal_density(x, t, data, sched),
                                        std::log(naive_marginal(x, t, data, sched))));
        }
        record("log-marginal-vs-naive-sum", worst, 1e-10);
    }
    {  // score vs finite differences of the log marginal
        Rng rng(1005);
        const DataSet data = random_dataset(rng, 8, 2);
        double worst = 0.0;
        for (int rep = 0; rep < 50; ++rep) {
            const Vec x = rng.normal_vec(2);
            const double t = rng.uniform(0.05, 0.95);
            const Vec got = empirical_score(x, t, data, sched);
            Vec fd(2);
            for (std::size_t j = 0; j < 2; ++j) {
                Vec hi = x, lo = x;
                hi[j] += 1e-4;
                lo[j] -= 1e-4;
                fd[j] = (log_marginal_density(hi, t, data, sched) - log_marginal_density(lo, t, data, sched)) / 2e-4;
            }
            worst = std::max(worst, rel_vec(got, fd));
        }
        record("score-vs-finite-difference", worst, 1e-5);
    }
    {  // RMG hand oracle, 1-D
        const DataSet data({{-1.0}, {1.0}});
        const DataSet refs({{1.0}});
        GuidanceSpec spec;
        spec.kind = GuidanceKind::Constant;
        spec.gamma0 = 1.0;
        spec.cutoff = 1.0;
        EmpiricalMean base{&data, sched, 1.0};
        const double t = 0.5, x = 0.0;
        const double a = std::exp(-std::pow(x + t, 2) / (2 * (1 - t) * (1 - t)));
        const double b = std::exp(-std::pow(x - t, 2) / (2 * (1 - t) * (1 - t)));
        const double mu = (-a + b) / (a + b);
        const double want = (mu - x) / (1 - t) + (1.0 - mu) / (1 - t);
        record("rmg-velocity-hand-oracle", rel(rmg_velocity({x}, t, base, refs, spec, sched)[0], want), 1e-9);
    }
    {  // arithmetic weight vs naive density ratio
        Rng rng(1007);
        const DataSet train = random_dataset(rng, 7, 2);
        std::vector<Vec> b_pts;
        for (int i = 0; i < 4; ++i) b_pts.push_back(add(rng.normal_vec(2), Vec{2.0, -1.0}));
        const DataSet refs(b_pts);
        const ArithmeticMixture mix(0.3, train, refs);
        double worst = 0.0;
        for (int rep = 0; rep < 50; ++rep) {
            const Vec x = rng.normal_vec(2);
            const double t = rng.uniform(0.01, 0.9);
            const double p = naive_marginal(x, t, train, sched);
            const double r = naive_marginal(x, t, refs, sched);
            worst = std::max(worst, rel(arithmetic_weight(mix, x, t, sched), 0.3 * r / (0.7 * p + 0.3 * r)));
        }
        record("arithmetic-weight-vs-naive-ratio", worst, 1e-9);
    }
    {  // arithmetic mean: pooled-union special case and weighted-union oracle
        Rng rng(1009);
        const DataSet train = random_dataset(rng, 9, 2);
        std::vector<Vec> b_pts;
        for (int i = 0; i < 5; ++i) b_pts.push_back(add(rng.normal_vec(2), Vec{1.5, 0.5}));
        const DataSet refs(b_pts);
        std::vector<Vec> pooled = train.points();
        pooled.insert(pooled.end(), b_pts.begin(), b_pts.end());
        const DataSet union_set(pooled);
        const ArithmeticMixture mix(5.0 / 14.0, train, refs);
        double worst = 0.0;
        for (int rep = 0; rep < 50; ++rep) {
            const Vec x = rng.normal_vec(2);
            const double t = rng.uniform(0.01, 0.9);
            worst = std::max(worst, rel_vec(arithmetic_guided_mean(mix, x, t, sched),
                                            endpoint_mean(x, t, union_set, sched), 1.0));
        }
        record("arithmetic-mean-union-case", worst, 1e-9);
    }
    {  // source sampler CLT bounds
        const auto pts = sample_source(7, 100000, 2);
        double worst_mean = 0.0, worst_var = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            double mean = 0.0;
            for (const auto& p : pts) mean += p[j];
            mean /= static_cast<double>(pts.size());
            double var = 0.0;
            for (const auto& p : pts) var += (p[j] - mean) * (p[j] - mean);
            var /= static_cast<double>(pts.size() - 1);
            worst_mean = std::max(worst_mean, std::abs(mean));
            worst_var = std::max(worst_var, std::abs(var - 1.0));
        }
        record("source-sampler-mean-clt", worst_mean, 0.02);
        record("source-sampler-variance-clt", worst_var, 0.03);
    }
    {  // Euler single-point exactness and first-order error vs fine oracle
        const DataSet one({{2.0, -1.0}});
        auto field1 = [&](const Vec& x, double t) { return empirical_velocity(x, t, one, sched); };
        double worst = 0.0;
        for (int nfe : {1, 10, 100}) {
            SamplerConfig cfg;
            cfg.nfe = nfe;
            cfg.eps = 1e-3;
            const Vec x0{-0.3, 0.7};
            const auto end = euler_sample(field1, x0, cfg).endpoint();
            for (std::size_t j = 0; j < 2; ++j)
                worst = std::max(worst, std::abs(end[j] - (x0[j] + (1 - cfg.eps) * (one.point(0)[j] - x0[j]))));
        }
        record("euler-single-point-exact", worst, 1e-9);

        const DataSet two({{-1.0}, {1.0}});
        auto field2 = [&](const Vec& x, double t) { return empirical_velocity(x, t, two, sched); };
        auto endpoint_at = [&](int nfe) {
            SamplerConfig cfg;
            cfg.nfe = nfe;
            cfg.eps = 0.05;
            return euler_sample(field2, {0.3}, cfg).endpoint()[0];
        };
        const double ref = endpoint_at(20480);
        const double e20 = std::abs(endpoint_at(20) - ref);
        const double e40 = std::abs(endpoint_at(40) - ref);
        // halving h should roughly halve the error for a first-order scheme
        record("euler-first-order-ratio", e40 / e20, 0.65, "error ratio nfe 40 vs 20");
    }
    {  // flow-field odd symmetry for symmetric data
        const DataSet data({{1.0, 0.5}, {-1.0, -0.5}});
        auto field = [&](const Vec& x, double t) { return empirical_velocity(x, t, data, sched); };
        const auto grid = flow_field_grid(field, {{-2.0, 2.0}, {-2.0, 2.0}}, {9, 9}, 0.4);
        double worst = 0.0;
        const std::size_t n = grid.points.size();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                worst = std::max(worst, std::abs(grid.velocities[i][j] + grid.velocities[n - 1 - i][j]));
        record("flow-field-odd-symmetry", worst, 1e-9);
    }
    {  // affine MLP vs hand matrix multiply
        Rng rng(1013);
        const MlpParams p = make_mlp(2, {}, rng);
        const Vec x{0.5, -1.5};
        const double t = 0.27;
        const Vec got = mlp_forward(p, x, t);
        const Vec in{x[0], x[1], t, std::sin(2 * M_PI * t), std::cos(2 * M_PI * t)};
        double worst = 0.0;
        for (std::size_t r = 0; r < 2; ++r) {
            double want = p.net.layers[0].b[r];
            for (std::size_t c = 0; c < in.size(); ++c) want += p.net.layers[0].w[r * in.size() + c] * in[c];
            worst = std::max(worst, std::abs(got[r] - want));
        }
        record("mlp-affine-hand-multiply", worst, 1e-12);
    }
    {  // FM loss gradient vs finite differences
        Rng rng(1015);
        MlpParams p = make_mlp(2, {5}, rng);
        std::vector<FmSample> batch(6);
        for (auto& s : batch) {
            s.x0 = rng.normal_vec(2);
            s.x1 = rng.normal_vec(2);
            s.t = rng.uniform(0.0, 0.95);
        }
        MlpGrad grad = MlpGrad::zeros_like(p.net);
        fm_loss_grad(p, batch, sched, grad);
        std::vector<double> analytic;
        for_each_param(p.net, grad, [&](double, double g) { analytic.push_back(g); });
        std::size_t i = 0;
        double worst = 0.0;
        for_each_param(p.net, [&](double& v) {
            const double save = v;
            v = save + 1e-5;
            const double hi = fm_loss(p, batch, sched);
            v = save - 1e-5;
            const double lo = fm_loss(p, batch, sched);
            v = save;
            const double fd = (hi - lo) / 2e-5;
            worst = std::max(worst, std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6}));
            ++i;
        });
        record("fm-gradient-vs-fd", worst, 1e-4);
    }
    {  // SPG gradient vs finite differences, and the stop-gradient contract
        Rng rng(1017);
        SpgParams p = make_spg(2, 3, rng);
        spg_for_each_param(p, [&](double& v) {
            if (v == 0.0) v = 0.1 * rng.normal();
        });
        const DataSet data = gaussian_blobs({{0.0, 0.0}, {3.0, 3.0}}, 0.5, 24, 5);
        TrainConfig tcfg;
        tcfg.reference_size = 4;
        tcfg.mask_prob = 0.0;
        Rng brng(6);
        const SpgBatch batch = prepare_spg_batch(p, data, tcfg, brng);

        SpgGrad grad = SpgGrad::zeros_like(p);
        spg_loss_grad(p, batch, sched, 0.1, grad);
        std::vector<double> analytic;
        spg_for_each_param(p, grad, [&](double, double g) { analytic.push_back(g); });
        std::size_t i = 0;
        double worst = 0.0;
        spg_for_each_param(p, [&](double& v) {
            const double save = v;
            v = save + 1e-5;
            const auto hi = spg_losses(p, batch, sched);
            v = save - 1e-5;
            const auto lo = spg_losses(p, batch, sched);
            v = save;
            const double fd = ((hi.mu + 0.1 * hi.ref) - (lo.mu + 0.1 * lo.ref)) / 2e-5;
            worst = std::max(worst, std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6}));
            ++i;
        });
        record("spg-gradient-vs-fd", worst, 1e-4);

        SpgParams q = p;
        for (auto& v : q.q_map.w) v += 1e-3;
        for (auto& v : q.k_map.w) v -= 1e-3;
        const double base_ref = spg_losses(p, batch, sched).ref;
        const double pert_ref = spg_losses(q, batch, sched).ref;
        record("spg-stop-gradient-invariance", std::abs(pert_ref - base_ref), 1e-10);
    }
    {  // SPG attention vs naive softmax
        Rng rng(1019);
        const SpgParams p = make_spg(3, 5, rng);
        const Vec x = rng.normal_vec(3);
        std::vector<Vec> refs;
        for (int i = 0; i < 7; ++i) refs.push_back(rng.normal_vec(3));
        const auto a = spg_anchor(p, x, refs);
        const Vec q = p.q_map.apply(x);
        std::vector<double> e(refs.size());
        double z = 0.0;
        for (std::size_t m = 0; m < refs.size(); ++m) {
            e[m] = std::exp(dot(q, p.k_map.apply(refs[m])));
            z += e[m];
        }
        double worst = 0.0;
        for (std::size_t m = 0; m < refs.size(); ++m) worst = std::max(worst, rel(a.attention[m], e[m] / z));
        record("spg-attention-vs-naive-softmax", worst, 1e-10);
    }
    {  // soft reweighting in the bandwidth -> 0 limit equals nearest-neighbor
        const DataSet data({{-1.0}, {-0.5}, {0.5}, {1.0}});
        const DataSet refs({{-1.0}, {1.0}}, {0, 1});
        const auto w = soft_reweight(data, refs, 1, 1e-6).normalized_weights();
        double worst = std::max({w[0], w[1], std::abs(w[2] - 0.5), std::abs(w[3] - 0.5)});
        record("soft-reweight-bandwidth-zero-nn", worst, 1e-12);
    }
    {  // image-grid pixel mapping matches the [-1, 1] scaling
        const std::string svg = svg_image_grid({Vec{-1.0, 0.0, 1.0, -1.0}}, 2, 2, 1, 2.0);
        const bool ok = svg.find("#000000") != std::string::npos && svg.find("#ffffff") != std::string::npos &&
                        svg.find("#808080") != std::string::npos;
        record("image-grid-pixel-mapping", ok ? 0.0 : 1.0, 0.5, "gray levels for -1/0/+1");
    }
    {  // IDX round trip keeps pixels in [-1, 1]
        const auto dir = std::filesystem::temp_directory_path() / "refflow_verify_idx";
        std::filesystem::create_directories(dir);
        std::vector<std::vector<unsigned char>> images(4, std::vector<unsigned char>(784, 0));
        images[0][5] = 255;
        images[1][9] = 255;
        images[2][3] = 128;
        images[3][0] = 255;
        write_mnist_idx((dir / "i.idx").string(), (dir / "l.idx").string(), images, {0, 1, 0, 1}, 28, 28);
        const DataSet data = read_mnist_idx((dir / "i.idx").string(), (dir / "l.idx").string(), {0, 1}, 10);
        double lo = 1e9, hi = -1e9;
        for (const auto& p : data.points())
            for (double v : p) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        std::filesystem::remove_all(dir);
        record("mnist-idx-pixel-scaling", std::abs(lo + 1.0) + std::abs(hi - 1.0), 1e-12, "min/max of emitted values");
    }
    {  // fm_train on a single point approaches the exact field
        const DataSet data({{1.5}});
        TrainConfig cfg;
        cfg.steps = 1500;
        cfg.batch_size = 32;
        cfg.learning_rate = 0.02;
        cfg.seed = 11;
        const auto res = fm_train(data, cfg, sched, {32});
        Rng prng(99);
        double mse = 0.0, field_sq = 0.0;
        for (int i = 0; i < 200; ++i) {
            const double t = prng.uniform(0.0, 0.9);
            const Vec xt = interpolate(prng.normal_vec(1), data.point(0), t, sched);
            const double want = empirical_velocity(xt, t, data, sched)[0];
            const double got = mlp_forward(res.params, xt, t)[0];
            mse += (want - got) * (want - got) / 200.0;
            field_sq += want * want / 200.0;
        }
        record("fm-train-single-point-field", mse / field_sq, 0.05, "relative MSE on bridge states");
    }
    {  // composition extremes bracket: pure-bank references steer to the bank
        const DataSet data = gaussian_blobs({{-2.0, 0.0}, {2.0, 0.0}}, 0.4, 200, 31);
        const DataSet bank1 = hard_filter(data, 1), bank0 = hard_filter(data, 0);
        const LabeledPrototypes protos = LabeledPrototypes::from_dataset(data);
        GuidanceSpec spec;
        spec.kind = GuidanceKind::Constant;
        spec.gamma0 = 1.0;
        SamplerConfig cfg;
        cfg.nfe = 50;
        cfg.seed = 17;
        EmpiricalMean base{&data, sched, 1.0};
        const CompositionCurve curve =
            composition_sweep(base, bank1, bank0, {0.0, 1.0}, spec, cfg, protos, 1, 120, sched, 20);
        const double lo = curve.rows[0].generated_fraction, hi = curve.rows[1].generated_fraction;
        record("composition-extremes-bracket", lo + (1.0 - hi), 0.2, "f=0 fraction + 1 - f=1 fraction");
    }

    return results;
}

}  // namespace refflow
