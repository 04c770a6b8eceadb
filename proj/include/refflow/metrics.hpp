#pragma once

// Steerability and diversity measurements, plus the soft/hard conditioning
// constructions: a nearest-centroid classifier stands in for the heavyweight
// labelers used on image data, diversity is mean pairwise Euclidean
// distance, and a small labeled reference set induces soft class
// probabilities that reweight the empirical posterior's priors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "refflow/dataset.hpp"
#include "refflow/guidance.hpp"
#include "refflow/sampler.hpp"
#include "refflow/vec.hpp"

namespace refflow {

struct LabeledPrototypes {
    std::vector<Vec> centroids;
    std::vector<int> class_ids;  // sorted ascending

    static LabeledPrototypes from_dataset(const DataSet& data) {
        if (!data.has_labels()) throw std::invalid_argument("LabeledPrototypes: dataset has no labels");
        std::map<int, std::pair<Vec, std::size_t>> acc;
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto& slot = acc[data.label(i)];
            if (slot.second == 0) slot.first.assign(data.dim(), 0.0);
            axpy(slot.first, 1.0, data.point(i));
            ++slot.second;
        }
        if (acc.size() < 2) throw std::invalid_argument("LabeledPrototypes: need at least 2 classes");
        LabeledPrototypes p;
        for (auto& [cls, slot] : acc) {
            p.class_ids.push_back(cls);
            p.centroids.push_back(scale(slot.first, 1.0 / static_cast<double>(slot.second)));
        }
        return p;
    }
};

// Nearest centroid by Euclidean distance; ties go to the lowest class id.
inline int classify_point(const Vec& x, const LabeledPrototypes& protos) {
    int best = protos.class_ids[0];
    double best_d = squared_distance(x, protos.centroids[0]);
    for (std::size_t c = 1; c < protos.centroids.size(); ++c) {
        const double d = squared_distance(x, protos.centroids[c]);
        if (d < best_d || (d == best_d && protos.class_ids[c] < best)) {
            best_d = d;
            best = protos.class_ids[c];
        }
    }
    return best;
}

inline std::vector<int> classify(const std::vector<Vec>& points, const LabeledPrototypes& protos) {
    std::vector<int> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = classify_point(points[i], protos);
    return out;
}

// Per-class fractions, keyed by class id; fractions sum to 1.
inline std::map<int, double> class_frequency(const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("class_frequency: empty label list");
    std::map<int, double> freq;
    for (int l : labels) freq[l] += 1.0;
    for (auto& [cls, f] : freq) f /= static_cast<double>(labels.size());
    return freq;
}

inline double fraction_of_class(const std::vector<int>& labels, int cls) {
    std::size_t k = 0;
    for (int l : labels) k += (l == cls);
    return static_cast<double>(k) / static_cast<double>(labels.size());
}

// Mean Euclidean distance over all unordered pairs.
inline double pairwise_diversity(const std::vector<Vec>& points) {
    if (points.size() < 2) throw std::invalid_argument("pairwise_diversity: need at least 2 points");
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            s += distance(points[i], points[j]);
            ++pairs;
        }
    }
    return s / static_cast<double>(pairs);
}

// --- soft / hard conditioning ----------------------------------------------

inline double median_pairwise_distance(const DataSet& refs) {
    std::vector<double> d;
    for (std::size_t i = 0; i < refs.size(); ++i)
        for (std::size_t j = i + 1; j < refs.size(); ++j) d.push_back(distance(refs.point(i), refs.point(j)));
    if (d.empty()) throw std::invalid_argument("median_pairwise_distance: need at least 2 reference points");
    std::sort(d.begin(), d.end());
    const std::size_t m = d.size() / 2;
    return d.size() % 2 ? d[m] : 0.5 * (d[m - 1] + d[m]);
}

// log p(c | x) for every class in the labeled reference set, under the
// Gaussian-kernel soft classifier p(c|x) ~ sum_{r in class c} exp(-|x-r|^2 /
// (2 bw^2)). Returned in the order of the sorted class-id list.
inline std::vector<double> soft_class_log_probs(const Vec& x, const DataSet& labeled_refs,
                                                const std::vector<int>& class_ids, double bandwidth) {
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    std::vector<double> lse(class_ids.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < class_ids.size(); ++c) {
        std::vector<double> terms;
        for (std::size_t r = 0; r < labeled_refs.size(); ++r) {
            if (labeled_refs.label(r) != class_ids[c]) continue;
            terms.push_back(-squared_distance(x, labeled_refs.point(r)) * inv);
        }
        if (!terms.empty()) lse[c] = log_sum_exp(terms);
    }
    const double total = log_sum_exp(lse);
    for (double& v : lse) v -= total;
    return lse;
}

inline std::vector<int> distinct_labels(const DataSet& data) {
    std::vector<int> ids(data.labels());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

// Per-point priors w_n ~ p(target | x_n); normalized by DataSet on access.
inline DataSet soft_reweight(const DataSet& data, const DataSet& labeled_refs, int target_class, double bandwidth) {
    if (!labeled_refs.has_labels()) throw std::invalid_argument("soft_reweight: reference set has no labels");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("soft_reweight: bandwidth must be > 0");
    const std::vector<int> ids = distinct_labels(labeled_refs);
    const auto it = std::find(ids.begin(), ids.end(), target_class);
    if (it == ids.end()) throw std::invalid_argument("soft_reweight: target class absent from labeled references");
    const std::size_t target_idx = static_cast<std::size_t>(it - ids.begin());

    std::vector<double> w(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        const std::vector<double> lp = soft_class_log_probs(data.point(n), labeled_refs, ids, bandwidth);
        w[n] = std::exp(lp[target_idx]);
    }
    return data.with_weights(std::move(w));
}

// Composition variant: w_n ~ sum_c comp(c) p(c | x_n). A point mass on one
// class reduces to soft_reweight; a mixed composition reweights the dataset
// toward the reference composition itself (this is what the 15% vs 85%
// flow-field comparison uses).
inline DataSet soft_composition_reweight(const DataSet& data, const DataSet& labeled_refs,
                                         const std::map<int, double>& composition, double bandwidth) {
    if (!labeled_refs.has_labels()) throw std::invalid_argument("soft_composition_reweight: reference set has no labels");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("soft_composition_reweight: bandwidth must be > 0");
    const std::vector<int> ids = distinct_labels(labeled_refs);
    std::vector<double> comp(ids.size(), 0.0);
    for (std::size_t c = 0; c < ids.size(); ++c) {
        auto it = composition.find(ids[c]);
        if (it != composition.end()) comp[c] = it->second;
    }
    std::vector<double> w(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        const std::vector<double> lp = soft_class_log_probs(data.point(n), labeled_refs, ids, bandwidth);
        double acc = 0.0;
        for (std::size_t c = 0; c < ids.size(); ++c) acc += comp[c] * std::exp(lp[c]);
        w[n] = acc;
    }
    return data.with_weights(std::move(w));
}

inline DataSet hard_filter(const DataSet& data, int target_class) {
    if (!data.has_labels()) throw std::invalid_argument("hard_filter: dataset has no labels");
    std::vector<Vec> pts;
    std::vector<int> labs;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.label(i) == target_class) {
            pts.push_back(data.point(i));
            labs.push_back(target_class);
        }
    }
    if (pts.empty()) throw std::invalid_argument("hard_filter: no points with the target class");
    return DataSet(std::move(pts), std::move(labs));
}

// --- composition sweep ------------------------------------------------------

struct CompositionRow {
    double reference_composition;
    double generated_fraction;
    std::size_t sample_count;
};

struct CompositionCurve {
    std::vector<CompositionRow> rows;
};

// Mixed reference set: round(f*M) points from bankA, the rest from bankB.
inline DataSet mix_banks(const DataSet& bank_a, const DataSet& bank_b, double fraction, std::size_t m) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("mix_banks: fraction must lie in [0, 1]");
    const std::size_t from_a = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(m)));
    if (from_a > bank_a.size() || m - from_a > bank_b.size())
        throw std::invalid_argument("mix_banks: banks too small for requested mix");
    std::vector<Vec> pts;
    pts.reserve(m);
    for (std::size_t i = 0; i < from_a; ++i) pts.push_back(bank_a.point(i));
    for (std::size_t i = 0; i < m - from_a; ++i) pts.push_back(bank_b.point(i));
    return DataSet(std::move(pts));
}

// For each fraction f: build the mixed reference set, integrate n_samples
// RMG trajectories, classify endpoints, record the target-class fraction.
// Row seeds are derived from cfg.seed by row index, so rows are independent
// and the curve is reproducible whether or not rows run concurrently.
template <MeanProvider P>
CompositionCurve composition_sweep(const P& base, const DataSet& bank_a, const DataSet& bank_b,
                                   const std::vector<double>& fractions, const GuidanceSpec& spec,
                                   const SamplerConfig& cfg, const LabeledPrototypes& protos, int target_class,
                                   std::size_t n_samples, const AffineSchedule& sched, std::size_t m = 0) {
    if (m == 0) m = std::min(bank_a.size(), bank_b.size());
    CompositionCurve curve;
    for (std::size_t row = 0; row < fractions.size(); ++row) {
        const DataSet refs = mix_banks(bank_a, bank_b, fractions[row], m);
        SamplerConfig row_cfg = cfg;
        row_cfg.seed = mix_seed(cfg.seed ^ (row + 1));
        auto field = [&](const Vec& x, double t) { return rmg_velocity(x, t, base, refs, spec, sched); };
        const std::vector<Vec> sources = sample_source(row_cfg.seed, n_samples, bank_a.dim());
        const std::vector<Vec> endpoints = euler_endpoints(field, sources, row_cfg);
        const std::vector<int> labels = classify(endpoints, protos);
        curve.rows.push_back({fractions[row], fraction_of_class(labels, target_class), n_samples});
    }
    return curve;
}

inline CompositionCurve composition_sweep(const DataSet& base_data, const DataSet& bank_a, const DataSet& bank_b,
                                          const std::vector<double>& fractions, const GuidanceSpec& spec,
                                          const SamplerConfig& cfg, const LabeledPrototypes& protos, int target_class,
                                          std::size_t n_samples, const AffineSchedule& sched, std::size_t m = 0) {
    EmpiricalMean base{&base_data, sched, spec.temperature};
    return composition_sweep(base, bank_a, bank_b, fractions, spec, cfg, protos, target_class, n_samples, sched, m);
}

// --- small statistics helpers ----------------------------------------------

inline double spearman_correlation(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("spearman_correlation: bad input");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {  // average ranks over ties
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> rx = ranks(xs), ry = ranks(ys);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// Least-squares slope and R^2 of y against x.
struct LinearFit {
    double slope;
    double intercept;
    double r_squared;
};

inline LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("linear_fit: bad input");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(ys.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("linear_fit: degenerate x");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (intercept + slope * xs[i]);
        ss_res += e * e;
    }
    const double r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
    return {slope, intercept, r2};
}

}  // namespace refflow
