#pragma once

// Standalone SVG emission for flow fields, trajectories, curves and raster
// grids. No plotting dependency; output bytes are deterministic for a fixed
// input and style version, so plots are testable by element counts and
// hashes. Coordinates are formatted with three decimals.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "refflow/sampler.hpp"
#include "refflow/vec.hpp"
#include "refflow/version.hpp"

namespace refflow {

namespace svgdetail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

struct Mapper {
    double x_lo, x_hi, y_lo, y_hi;
    double width, height, margin;

    double px(double x) const { return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin); }
    double py(double y) const { return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin); }
};

inline Mapper fit_bounds(const std::vector<Vec>& points, double width, double height, double margin) {
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const auto& p : points) {
        x_lo = std::min(x_lo, p[0]);
        x_hi = std::max(x_hi, p[0]);
        const double y = p.size() > 1 ? p[1] : 0.0;
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
    }
    if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
    if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
    return {x_lo, x_hi, y_lo, y_hi, width, height, margin};
}

inline std::string header(double width, double height) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
       << "<!-- refflow plot, style v" << kPlotStyleVersion << " -->\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return os.str();
}

}  // namespace svgdetail

// Each grid point becomes exactly one <path class="arrow"> (shaft + head).
inline std::string svg_flow_field(const FlowGrid& grid, double width = 600, double height = 600) {
    using namespace svgdetail;
    if (grid.points.empty()) throw std::invalid_argument("svg_flow_field: empty grid");
    const Mapper map = fit_bounds(grid.points, width, height, 30.0);

    double max_norm = 0.0;
    for (const auto& u : grid.velocities) max_norm = std::max(max_norm, norm(u));
    // longest arrow spans roughly one grid cell
    const double cell = (width - 60.0) / static_cast<double>(std::max<std::size_t>(grid.resolution[0] - 1, 1));
    const double scale = max_norm > 0.0 ? 0.9 * cell / max_norm : 0.0;

    std::ostringstream os;
    os << header(width, height);
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        const auto& p = grid.points[i];
        const auto& u = grid.velocities[i];
        const double x0 = map.px(p[0]);
        const double y0 = map.py(p.size() > 1 ? p[1] : 0.0);
        const double ux = u[0] * scale;
        const double uy = (u.size() > 1 ? u[1] : 0.0) * scale;
        const double x1 = x0 + ux;
        const double y1 = y0 - uy;  // svg y grows downward
        // arrow head: two short strokes at 150 degrees off the shaft
        const double len = std::hypot(ux, uy);
        const double hx = len > 1e-9 ? ux / len : 1.0;
        const double hy = len > 1e-9 ? -uy / len : 0.0;
        const double hs = std::min(4.0, 0.3 * len + 1.0);
        const double c = std::cos(2.6), s = std::sin(2.6);
        const double a1x = x1 + hs * (c * hx - s * hy), a1y = y1 + hs * (s * hx + c * hy);
        const double a2x = x1 + hs * (c * hx + s * hy), a2y = y1 + hs * (-s * hx + c * hy);
        os << "<path class=\"arrow\" stroke=\"#1b6ca8\" fill=\"none\" stroke-width=\"1\" d=\"M " << fmt(x0) << ' '
           << fmt(y0) << " L " << fmt(x1) << ' ' << fmt(y1) << " M " << fmt(a1x) << ' ' << fmt(a1y) << " L "
           << fmt(x1) << ' ' << fmt(y1) << " L " << fmt(a2x) << ' ' << fmt(a2y) << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// One <polyline class="traj"> per trajectory (2-D states).
inline std::string svg_trajectories(const std::vector<Trajectory>& trajectories, double width = 600,
                                    double height = 600) {
    using namespace svgdetail;
    if (trajectories.empty()) throw std::invalid_argument("svg_trajectories: no trajectories");
    std::vector<Vec> all;
    for (const auto& t : trajectories)
        for (const auto& s : t.states) all.push_back(s);
    const Mapper map = fit_bounds(all, width, height, 30.0);

    std::ostringstream os;
    os << header(width, height);
    for (const auto& t : trajectories) {
        os << "<polyline class=\"traj\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\" points=\"";
        for (std::size_t k = 0; k < t.states.size(); ++k) {
            if (k) os << ' ';
            os << fmt(map.px(t.states[k][0])) << ',' << fmt(map.py(t.states[k].size() > 1 ? t.states[k][1] : 0.0));
        }
        os << "\"/>\n";
        // endpoint marker
        const auto& e = t.endpoint();
        os << "<circle class=\"endpoint\" r=\"2.5\" fill=\"#c0392b\" cx=\"" << fmt(map.px(e[0])) << "\" cy=\""
           << fmt(map.py(e.size() > 1 ? e[1] : 0.0)) << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// Polyline through (x, y) rows plus plain axes.
inline std::string svg_curve(const std::vector<double>& xs, const std::vector<double>& ys,
                             const std::string& x_label = "", const std::string& y_label = "", double width = 480,
                             double height = 360) {
    using namespace svgdetail;
    if (xs.size() != ys.size() || xs.empty()) throw std::invalid_argument("svg_curve: bad input");
    std::vector<Vec> pts;
    for (std::size_t i = 0; i < xs.size(); ++i) pts.push_back({xs[i], ys[i]});
    const Mapper map = fit_bounds(pts, width, height, 42.0);

    std::ostringstream os;
    os << header(width, height);
    os << "<line stroke=\"#222222\" x1=\"" << fmt(map.margin) << "\" y1=\"" << fmt(height - map.margin) << "\" x2=\""
       << fmt(width - map.margin) << "\" y2=\"" << fmt(height - map.margin) << "\"/>\n";
    os << "<line stroke=\"#222222\" x1=\"" << fmt(map.margin) << "\" y1=\"" << fmt(map.margin) << "\" x2=\""
       << fmt(map.margin) << "\" y2=\"" << fmt(height - map.margin) << "\"/>\n";
    if (!x_label.empty())
        os << "<text x=\"" << fmt(width / 2) << "\" y=\"" << fmt(height - 8.0)
           << "\" font-size=\"12\" text-anchor=\"middle\">" << x_label << "</text>\n";
    if (!y_label.empty())
        os << "<text x=\"12\" y=\"" << fmt(height / 2) << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 "
           << fmt(height / 2) << ")\">" << y_label << "</text>\n";
    os << "<polyline class=\"curve\" fill=\"none\" stroke=\"#1b6ca8\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) os << ' ';
        os << fmt(map.px(pts[i][0])) << ',' << fmt(map.py(pts[i][1]));
    }
    os << "\"/>\n";
    for (const auto& p : pts)
        os << "<circle class=\"marker\" r=\"3\" fill=\"#1b6ca8\" cx=\"" << fmt(map.px(p[0])) << "\" cy=\""
           << fmt(map.py(p[1])) << "\"/>\n";
    os << "</svg>\n";
    return os.str();
}

// Raster cells from rows of rows*cols values in [-1, 1]; one <g class="cell">
// per image, one <rect> per pixel, grayscale mapped linearly.
inline std::string svg_image_grid(const std::vector<Vec>& images, std::size_t rows, std::size_t cols,
                                  std::size_t per_row = 5, double pixel = 3.0) {
    if (images.empty()) throw std::invalid_argument("svg_image_grid: no images");
    for (const auto& im : images)
        if (im.size() != rows * cols) throw std::invalid_argument("svg_image_grid: image size mismatch");
    const double pad = 4.0;
    const std::size_t n_rows = (images.size() + per_row - 1) / per_row;
    const double width = per_row * (cols * pixel + pad) + pad;
    const double height = n_rows * (rows * pixel + pad) + pad;

    std::ostringstream os;
    os << svgdetail::header(width, height);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const double ox = pad + (i % per_row) * (cols * pixel + pad);
        const double oy = pad + (i / per_row) * (rows * pixel + pad);
        os << "<g class=\"cell\">\n";
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double v = images[i][r * cols + c];
                int gray = static_cast<int>(std::lround((std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * 255.0));
                char color[8];
                std::snprintf(color, sizeof(color), "#%02x%02x%02x", gray, gray, gray);
                os << "<rect x=\"" << svgdetail::fmt(ox + c * pixel) << "\" y=\"" << svgdetail::fmt(oy + r * pixel)
                   << "\" width=\"" << svgdetail::fmt(pixel) << "\" height=\"" << svgdetail::fmt(pixel) << "\" fill=\""
                   << color << "\"/>\n";
            }
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_text_file(const std::string& content, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
    out << content;
    if (!out) throw std::runtime_error("write_text_file: write failed for " + path);
}

}  // namespace refflow
