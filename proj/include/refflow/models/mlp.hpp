#pragma once

// Small MLP velocity model u(x, t) trained with the flow-matching loss
//
//   L = E[ |(x1 - x0) - u(x_t, t)|^2 ],   x_t = (1-t) x0 + t x1,
//
// acting as the "pretrained model" for guidance. Inverting the duality gives
// its endpoint mean, mu(x, t) = x + (1-t) u(x, t) for the linear bridge.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "refflow/bridge.hpp"
#include "refflow/dataset.hpp"
#include "refflow/nets.hpp"
#include "refflow/rng.hpp"
#include "refflow/vec.hpp"

namespace refflow {

struct MlpParams {
    std::size_t d = 0;  // data dimension; net input is d + time features
    Mlp net;
};

inline MlpParams make_mlp(std::size_t d, const std::vector<std::size_t>& hidden, Rng& rng) {
    MlpParams p;
    p.d = d;
    p.net = Mlp::make(d + kTimeFeatures, hidden, d, OutputAct::Identity, rng);
    return p;
}

inline Vec mlp_input(const Vec& x, double t) {
    Vec in = x;
    const Vec tf = time_features(t);
    in.insert(in.end(), tf.begin(), tf.end());
    return in;
}

inline Vec mlp_forward(const MlpParams& params, const Vec& x, double t) {
    if (x.size() != params.d) throw std::invalid_argument("mlp_forward: input dimension mismatch");
    return mlp_apply(params.net, mlp_input(x, t));
}

struct FmSample {
    Vec x0;
    Vec x1;
    double t;
};

inline double fm_loss(const MlpParams& params, const std::vector<FmSample>& batch, const AffineSchedule& sched) {
    if (batch.empty()) throw std::invalid_argument("fm_loss: empty batch");
    double loss = 0.0;
    for (const auto& s : batch) {
        const Vec xt = interpolate(s.x0, s.x1, s.t, sched);
        const Vec pred = mlp_forward(params, xt, s.t);
        for (std::size_t j = 0; j < pred.size(); ++j) {
            const double e = (s.x1[j] - s.x0[j]) - pred[j];
            loss += e * e;
        }
    }
    return loss / static_cast<double>(batch.size());
}

inline double fm_loss_grad(const MlpParams& params, const std::vector<FmSample>& batch, const AffineSchedule& sched,
                           MlpGrad& grad) {
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& s : batch) {
        const Vec xt = interpolate(s.x0, s.x1, s.t, sched);
        MlpCache cache;
        const Vec pred = mlp_apply(params.net, mlp_input(xt, s.t), &cache);
        Vec dpred(pred.size());
        for (std::size_t j = 0; j < pred.size(); ++j) {
            const double e = pred[j] - (s.x1[j] - s.x0[j]);
            loss += e * e;
            dpred[j] = 2.0 * e * inv_b;
        }
        mlp_backward(params.net, cache, std::move(dpred), grad);
    }
    return loss * inv_b;
}

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    OptimizerKind optimizer = OptimizerKind::Momentum;
    std::uint64_t seed = 0;
    double eps_train = 0.05;      // t sampled uniform on [0, 1 - eps_train]
    std::size_t reference_size = 16;  // SPG: M points per training batch
    double mask_prob = 0.1;           // SPG: per-reference drop probability
    double clip_norm = 1.0;           // SPG: global gradient-norm clip, 0 disables

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
        if (!(eps_train > 0.0 && eps_train < 0.5)) throw std::invalid_argument("TrainConfig: eps_train must lie in (0, 0.5)");
        if (!(mask_prob >= 0.0 && mask_prob < 1.0)) throw std::invalid_argument("TrainConfig: mask_prob must lie in [0, 1)");
    }
};

class TrainingError : public std::runtime_error {
  public:
    TrainingError(const std::string& what, std::size_t step) : std::runtime_error(what), step_(step) {}
    std::size_t step() const { return step_; }

  private:
    std::size_t step_;
};

namespace detail {
// Index sampler honoring optional per-point prior weights.
class PointSampler {
  public:
    explicit PointSampler(const DataSet& data) {
        if (data.has_weights()) {
            cdf_ = data.normalized_weights();
            for (std::size_t i = 1; i < cdf_.size(); ++i) cdf_[i] += cdf_[i - 1];
        }
        n_ = data.size();
    }

    std::size_t draw(Rng& rng) const {
        if (cdf_.empty()) return rng.index(n_);
        const double u = rng.uniform();
        return static_cast<std::size_t>(std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    }

  private:
    std::vector<double> cdf_;
    std::size_t n_ = 0;
};
}  // namespace detail

struct FmTrainResult {
    MlpParams params;
    double probe_initial = 0.0;
    double probe_final = 0.0;
    std::vector<double> loss_history;  // minibatch loss per step
};

inline FmTrainResult fm_train(const DataSet& data, const TrainConfig& cfg, const AffineSchedule& sched,
                              const std::vector<std::size_t>& hidden = {64, 64}) {
    cfg.validate();
    if (sched.kind() != ScheduleKind::Linear)
        throw std::invalid_argument("fm_train: the x1 - x0 target assumes the linear schedule");
    Rng rng(cfg.seed);
    FmTrainResult res;
    res.params = make_mlp(data.dim(), hidden, rng);

    const detail::PointSampler sampler(data);
    auto draw_batch = [&](std::size_t count) {
        std::vector<FmSample> batch(count);
        for (auto& s : batch) {
            s.x1 = data.point(sampler.draw(rng));
            s.x0 = rng.normal_vec(data.dim());
            s.t = rng.uniform(0.0, 1.0 - cfg.eps_train);
        }
        return batch;
    };

    const std::vector<FmSample> probe = draw_batch(std::max<std::size_t>(cfg.batch_size, 128));
    res.probe_initial = fm_loss(res.params, probe, sched);

    SgdOptimizer opt(cfg.optimizer, cfg.learning_rate);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto batch = draw_batch(cfg.batch_size);
        MlpGrad grad = MlpGrad::zeros_like(res.params.net);
        const double loss = fm_loss_grad(res.params, batch, sched, grad);
        if (!std::isfinite(loss)) throw TrainingError("fm_train: non-finite loss at step " + std::to_string(step), step);
        opt.step(res.params.net, grad);
        res.loss_history.push_back(loss);
    }
    res.probe_final = fm_loss(res.params, probe, sched);
    return res;
}

inline Vec model_mean(const MlpParams& params, const Vec& x, double t, const AffineSchedule& sched) {
    return mean_from_velocity(x, mlp_forward(params, x, t), t, sched);
}

// MeanProvider over a trained velocity model.
struct MlpMean {
    const MlpParams* params;
    AffineSchedule sched;

    Vec mean_at(const Vec& x, double t) const { return model_mean(*params, x, t, sched); }
};

}  // namespace refflow
