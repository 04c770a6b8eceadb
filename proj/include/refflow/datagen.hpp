#pragma once

// Dataset generators and the MNIST IDX reader.
//
// Two moons: the upper moon is (cos th, sin th) and the lower moon
// (1 - cos th, 0.5 - sin th) for th evenly spaced on [0, pi], plus isotropic
// Gaussian noise. Labels: 0 = upper, 1 = lower.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "refflow/dataset.hpp"
#include "refflow/rng.hpp"

namespace refflow {

inline DataSet two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("two_moons: n must be >= 2");
    Rng rng(seed);
    const std::size_t n_upper = (n + 1) / 2;
    const std::size_t n_lower = n - n_upper;
    std::vector<Vec> points;
    std::vector<int> labels;
    points.reserve(n);
    labels.reserve(n);
    auto theta = [](std::size_t i, std::size_t count) {
        return count > 1 ? M_PI * static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    };
    for (std::size_t i = 0; i < n_upper; ++i) {
        const double th = theta(i, n_upper);
        points.push_back({std::cos(th) + noise * rng.normal(), std::sin(th) + noise * rng.normal()});
        labels.push_back(0);
    }
    for (std::size_t i = 0; i < n_lower; ++i) {
        const double th = theta(i, n_lower);
        points.push_back({1.0 - std::cos(th) + noise * rng.normal(), 0.5 - std::sin(th) + noise * rng.normal()});
        labels.push_back(1);
    }
    return DataSet(std::move(points), std::move(labels));
}

// n points split round-robin across the given centers; label = center index.
inline DataSet gaussian_blobs(const std::vector<Vec>& centers, double sigma, std::size_t n, std::uint64_t seed) {
    if (centers.empty()) throw std::invalid_argument("gaussian_blobs: need at least one center");
    if (n < centers.size()) throw std::invalid_argument("gaussian_blobs: need at least one point per center");
    Rng rng(seed);
    const std::size_t d = centers[0].size();
    std::vector<Vec> points;
    std::vector<int> labels;
    points.reserve(n);
    labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % centers.size();
        Vec p = centers[c];
        for (std::size_t j = 0; j < d; ++j) p[j] += sigma * rng.normal();
        points.push_back(std::move(p));
        labels.push_back(static_cast<int>(c));
    }
    return DataSet(std::move(points), std::move(labels));
}

// --- MNIST IDX ------------------------------------------------------------
//
// Standard IDX byte format: magic 2051 for images (u8, [count, rows, cols]),
// 2049 for labels (u8, [count]); dimensions big-endian. Pixels are scaled
// to [-1, 1]. Files are user supplied; nothing is downloaded.

namespace detail {
inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("IDX read failed: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}
inline void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}
}  // namespace detail

inline DataSet read_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              const std::vector<int>& digits, std::size_t max_per_class) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("read_mnist_idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("read_mnist_idx: cannot open " + labels_path);

    if (detail::read_be32(img, images_path) != 2051u)
        throw std::runtime_error("read_mnist_idx: bad image magic in " + images_path);
    if (detail::read_be32(lab, labels_path) != 2049u)
        throw std::runtime_error("read_mnist_idx: bad label magic in " + labels_path);

    const std::uint32_t n_img = detail::read_be32(img, images_path);
    const std::uint32_t rows = detail::read_be32(img, images_path);
    const std::uint32_t cols = detail::read_be32(img, images_path);
    const std::uint32_t n_lab = detail::read_be32(lab, labels_path);
    if (n_img != n_lab) throw std::runtime_error("read_mnist_idx: image/label counts differ");

    const std::size_t d = static_cast<std::size_t>(rows) * cols;
    std::vector<Vec> points;
    std::vector<int> labels;
    std::vector<std::size_t> taken(10, 0);
    std::vector<unsigned char> buf(d);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d)))
            throw std::runtime_error("read_mnist_idx: truncated image data in " + images_path);
        char lc;
        if (!lab.get(lc)) throw std::runtime_error("read_mnist_idx: truncated label data in " + labels_path);
        const int digit = static_cast<unsigned char>(lc);
        bool wanted = digits.empty();
        for (int want : digits) wanted = wanted || (digit == want);
        if (!wanted) continue;
        if (digit >= 0 && digit < 10 && max_per_class > 0 && taken[digit] >= max_per_class) continue;
        if (digit >= 0 && digit < 10) ++taken[digit];
        Vec p(d);
        for (std::size_t j = 0; j < d; ++j) p[j] = static_cast<double>(buf[j]) / 255.0 * 2.0 - 1.0;
        points.push_back(std::move(p));
        labels.push_back(digit);
    }
    if (points.empty()) throw std::runtime_error("read_mnist_idx: no matching digits in " + images_path);
    return DataSet(std::move(points), std::move(labels));
}

// IDX writers; used to build small raster fixtures without shipping data.
inline void write_mnist_idx(const std::string& images_path, const std::string& labels_path,
                            const std::vector<std::vector<unsigned char>>& images, const std::vector<int>& labels,
                            std::uint32_t rows, std::uint32_t cols) {
    if (images.size() != labels.size()) throw std::invalid_argument("write_mnist_idx: count mismatch");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("write_mnist_idx: cannot open " + images_path);
    detail::write_be32(img, 2051u);
    detail::write_be32(img, static_cast<std::uint32_t>(images.size()));
    detail::write_be32(img, rows);
    detail::write_be32(img, cols);
    for (const auto& im : images) {
        if (im.size() != static_cast<std::size_t>(rows) * cols) throw std::invalid_argument("write_mnist_idx: bad image size");
        img.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size()));
    }
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("write_mnist_idx: cannot open " + labels_path);
    detail::write_be32(lab, 2049u);
    detail::write_be32(lab, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) lab.put(static_cast<char>(l));
}

}  // namespace refflow
