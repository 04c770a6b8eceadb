#pragma once

// Labeled/unlabeled point clouds. A DataSet plays the role of the empirical
// endpoint distribution (training set) or of a reference bank. Optional
// per-point prior weights generalize the uniform 1/N prior; they are kept
// unnormalized internally and normalized on access.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "refflow/vec.hpp"

namespace refflow {

class DataSet {
  public:
    DataSet() = default;

    explicit DataSet(std::vector<Vec> points, std::vector<int> labels = {}, std::vector<double> weights = {})
        : points_(std::move(points)), labels_(std::move(labels)), weights_(std::move(weights)) {
        validate();
    }

    DataSet(std::initializer_list<Vec> points, std::vector<int> labels = {})
        : DataSet(std::vector<Vec>(points), std::move(labels)) {}

    std::size_t size() const { return points_.size(); }
    std::size_t dim() const { return points_.empty() ? 0 : points_[0].size(); }

    const std::vector<Vec>& points() const { return points_; }
    const Vec& point(std::size_t i) const { return points_[i]; }

    bool has_labels() const { return !labels_.empty(); }
    const std::vector<int>& labels() const { return labels_; }
    int label(std::size_t i) const { return labels_[i]; }

    bool has_weights() const { return !weights_.empty(); }

    // Normalized prior weights (uniform when none were supplied).
    std::vector<double> normalized_weights() const {
        std::vector<double> w(size());
        if (weights_.empty()) {
            const double u = 1.0 / static_cast<double>(size());
            for (auto& v : w) v = u;
            return w;
        }
        double s = 0.0;
        for (double v : weights_) s += v;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = weights_[i] / s;
        return w;
    }

    DataSet with_weights(std::vector<double> weights) const {
        return DataSet(points_, labels_, std::move(weights));
    }

    DataSet without_weights() const { return DataSet(points_, labels_); }

  private:
    void validate() const {
        if (points_.empty()) throw std::invalid_argument("DataSet: needs at least one point");
        const std::size_t d = points_[0].size();
        if (d == 0) throw std::invalid_argument("DataSet: dimension must be >= 1");
        for (const auto& p : points_) {
            if (p.size() != d) throw std::invalid_argument("DataSet: all points must share one dimension");
        }
        if (!labels_.empty() && labels_.size() != points_.size()) {
            throw std::invalid_argument("DataSet: label count must match point count");
        }
        if (!weights_.empty()) {
            if (weights_.size() != points_.size()) {
                throw std::invalid_argument("DataSet: weight count must match point count");
            }
            double s = 0.0;
            for (double w : weights_) {
                if (!(w >= 0.0)) throw std::invalid_argument("DataSet: weights must be nonnegative");
                s += w;
            }
            if (!(s > 0.0)) throw std::invalid_argument("DataSet: weights must have positive sum");
        }
    }

    std::vector<Vec> points_;
    std::vector<int> labels_;
    std::vector<double> weights_;
};

// --- CSV round trip -------------------------------------------------------
//
// One row per point: d feature columns then an optional integer label
// column. Header row names columns x0..x{d-1}[,label]. Doubles are written
// with %.17g so the file round-trips bit-exactly.

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_dataset_csv(const DataSet& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
    const std::size_t d = data.dim();
    for (std::size_t j = 0; j < d; ++j) out << (j ? ",x" : "x") << j;
    if (data.has_labels()) out << ",label";
    out << "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Vec& p = data.point(i);
        for (std::size_t j = 0; j < d; ++j) {
            if (j) out << ',';
            out << format_double(p[j]);
        }
        if (data.has_labels()) out << ',' << data.label(i);
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_dataset_csv: write failed for " + path);
}

inline DataSet read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path);
    // Header decides whether a label column exists.
    bool labeled = line.find("label") != std::string::npos;
    std::size_t ncols = 1;
    for (char c : line) ncols += (c == ',');
    const std::size_t d = labeled ? ncols - 1 : ncols;
    if (d == 0) throw std::runtime_error("read_dataset_csv: no feature columns in " + path);

    std::vector<Vec> points;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream iss(line);
        std::string tok;
        Vec p(d);
        for (std::size_t j = 0; j < d; ++j) {
            if (!std::getline(iss, tok, ',')) throw std::runtime_error("read_dataset_csv: short row in " + path);
            p[j] = std::stod(tok);
        }
        if (labeled) {
            if (!std::getline(iss, tok, ',')) throw std::runtime_error("read_dataset_csv: missing label in " + path);
            labels.push_back(std::stoi(tok));
        }
        points.push_back(std::move(p));
    }
    return DataSet(std::move(points), std::move(labels));
}

}  // namespace refflow
