#pragma once

// Minimal dense-net machinery shared by the flow-matching MLP and the SPG
// gates/refiner: row-major affine layers, tanh hidden activations, identity
// or sigmoid outputs, and analytic backprop. Correctness is pinned by
// finite-difference contracts in the tests, not by an autodiff framework.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "refflow/rng.hpp"
#include "refflow/vec.hpp"

namespace refflow {

struct DenseLayer {
    std::size_t rows = 0;  // outputs
    std::size_t cols = 0;  // inputs
    std::vector<double> w;  // row-major rows x cols
    Vec b;

    static DenseLayer zeros(std::size_t rows, std::size_t cols) {
        DenseLayer l;
        l.rows = rows;
        l.cols = cols;
        l.w.assign(rows * cols, 0.0);
        l.b.assign(rows, 0.0);
        return l;
    }

    static DenseLayer glorot(std::size_t rows, std::size_t cols, Rng& rng) {
        DenseLayer l = zeros(rows, cols);
        const double s = 1.0 / std::sqrt(static_cast<double>(cols));
        for (auto& v : l.w) v = s * rng.normal();
        return l;
    }

    Vec apply(const Vec& x) const {
        if (x.size() != cols) throw std::invalid_argument("DenseLayer: input dimension mismatch");
        Vec y(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            double s = b[r];
            const double* wr = w.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
            y[r] = s;
        }
        return y;
    }
};

enum class OutputAct { Identity, Sigmoid };

// Feed-forward net: affine layers with tanh between them and a configurable
// output activation. hidden = {} degenerates to a single affine map.
struct Mlp {
    std::vector<DenseLayer> layers;
    OutputAct out_act = OutputAct::Identity;

    static Mlp make(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                    OutputAct out_act, Rng& rng, bool zero_head = false) {
        Mlp m;
        m.out_act = out_act;
        std::size_t prev = in_dim;
        for (std::size_t h : hidden) {
            m.layers.push_back(DenseLayer::glorot(h, prev, rng));
            prev = h;
        }
        m.layers.push_back(zero_head ? DenseLayer::zeros(out_dim, prev) : DenseLayer::glorot(out_dim, prev, rng));
        return m;
    }

    std::size_t in_dim() const { return layers.front().cols; }
    std::size_t out_dim() const { return layers.back().rows; }
};

struct MlpCache {
    std::vector<Vec> inputs;  // inputs[l] is the input to layer l
    Vec output;               // post output-activation
};

inline Vec mlp_apply(const Mlp& net, const Vec& x, MlpCache* cache = nullptr) {
    Vec a = x;
    if (cache) cache->inputs.clear();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (cache) cache->inputs.push_back(a);
        a = net.layers[l].apply(a);
        if (l + 1 < net.layers.size()) {
            for (auto& v : a) v = std::tanh(v);
        }
    }
    if (net.out_act == OutputAct::Sigmoid) {
        for (auto& v : a) v = 1.0 / (1.0 + std::exp(-v));
    }
    if (cache) cache->output = a;
    return a;
}

struct MlpGrad {
    std::vector<DenseLayer> layers;  // same shapes, gradient values

    static MlpGrad zeros_like(const Mlp& net) {
        MlpGrad g;
        for (const auto& l : net.layers) g.layers.push_back(DenseLayer::zeros(l.rows, l.cols));
        return g;
    }

    void accumulate(const MlpGrad& other, double scale = 1.0) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (std::size_t i = 0; i < layers[l].w.size(); ++i) layers[l].w[i] += scale * other.layers[l].w[i];
            for (std::size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] += scale * other.layers[l].b[i];
        }
    }
};

// Backprop dL/dout through the net; accumulates parameter gradients into
// grad and returns dL/dinput. cache must come from mlp_apply on the same x.
inline Vec mlp_backward(const Mlp& net, const MlpCache& cache, Vec dout, MlpGrad& grad) {
    if (net.out_act == OutputAct::Sigmoid) {
        for (std::size_t i = 0; i < dout.size(); ++i) {
            const double y = cache.output[i];
            dout[i] *= y * (1.0 - y);
        }
    }
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const DenseLayer& layer = net.layers[li];
        const Vec& in = cache.inputs[li];
        // through the tanh that followed this layer (its output is the next
        // layer's cached input)
        if (li + 1 < net.layers.size()) {
            const Vec& post = cache.inputs[li + 1];
            for (std::size_t r = 0; r < dout.size(); ++r) dout[r] *= 1.0 - post[r] * post[r];
        }
        DenseLayer& g = grad.layers[li];
        Vec din(layer.cols, 0.0);
        for (std::size_t r = 0; r < layer.rows; ++r) {
            g.b[r] += dout[r];
            const double* wr = layer.w.data() + r * layer.cols;
            double* gr = g.w.data() + r * layer.cols;
            for (std::size_t c = 0; c < layer.cols; ++c) {
                gr[c] += dout[r] * in[c];
                din[c] += dout[r] * wr[c];
            }
        }
        dout = std::move(din);
    }
    return dout;
}

// Visit every parameter scalar (used by the optimizer and the FD oracles).
template <class Fn>
void for_each_param(Mlp& net, Fn&& fn) {
    for (auto& l : net.layers) {
        for (auto& v : l.w) fn(v);
        for (auto& v : l.b) fn(v);
    }
}

template <class Fn>
void for_each_param(const Mlp& net, const MlpGrad& grad, Fn&& fn) {
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        for (std::size_t i = 0; i < net.layers[li].w.size(); ++i) fn(net.layers[li].w[i], grad.layers[li].w[i]);
        for (std::size_t i = 0; i < net.layers[li].b.size(); ++i) fn(net.layers[li].b[i], grad.layers[li].b[i]);
    }
}

enum class OptimizerKind { Sgd, Momentum };

// SGD with optional momentum (0.9). State persists across steps.
class SgdOptimizer {
  public:
    SgdOptimizer(OptimizerKind kind, double lr, double momentum = 0.9)
        : kind_(kind), lr_(lr), momentum_(momentum) {}

    void step(Mlp& net, const MlpGrad& grad) {
        ensure_state(net);
        std::size_t idx = 0;
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            auto upd = [&](double& w, double g) {
                if (kind_ == OptimizerKind::Momentum) {
                    velocity_[idx] = momentum_ * velocity_[idx] - lr_ * g;
                    w += velocity_[idx];
                } else {
                    w -= lr_ * g;
                }
                ++idx;
            };
            for (std::size_t i = 0; i < net.layers[li].w.size(); ++i) upd(net.layers[li].w[i], grad.layers[li].w[i]);
            for (std::size_t i = 0; i < net.layers[li].b.size(); ++i) upd(net.layers[li].b[i], grad.layers[li].b[i]);
        }
    }

  private:
    void ensure_state(const Mlp& net) {
        if (!velocity_.empty()) return;
        std::size_t n = 0;
        for (const auto& l : net.layers) n += l.w.size() + l.b.size();
        velocity_.assign(n, 0.0);
    }

    OptimizerKind kind_;
    double lr_;
    double momentum_;
    std::vector<double> velocity_;
};

// Time conditioning: the raw scalar plus one sinusoidal pair.
inline Vec time_features(double t) { return {t, std::sin(2.0 * M_PI * t), std::cos(2.0 * M_PI * t)}; }
inline constexpr std::size_t kTimeFeatures = 3;

}  // namespace refflow
