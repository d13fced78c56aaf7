#pragma once

// Dense image containers and small vector helpers.
//
// Storage is planar: channel c of an image occupies one contiguous
// width*height plane, values[c*w*h + y*w + x].  Gradient fields hold one
// plane per (channel, direction) pair, plane index c*2 + j with j = 0 for
// the x-difference and j = 1 for the y-difference.  Every operator and
// proximal map in this library assumes this layout.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace pdhg {

using Vec = std::vector<double>;

struct ImageShape {
    int width = 0;
    int height = 0;
    int channels = 1;

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    std::size_t value_count() const {
        return pixel_count() * static_cast<std::size_t>(channels);
    }
    bool operator==(const ImageShape&) const = default;
};

struct ImageGrid {
    ImageShape shape;
    Vec values;

    ImageGrid() = default;
    ImageGrid(int w, int h, int k, double fill = 0.0)
        : shape{w, h, k}, values(shape.value_count(), fill) {
        if (w <= 0 || h <= 0 || k <= 0)
            throw std::invalid_argument("ImageGrid: dimensions must be positive");
    }
    explicit ImageGrid(ImageShape s, double fill = 0.0) : ImageGrid(s.width, s.height, s.channels, fill) {}

    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
    }
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
    }
};

// Per-pixel d x k matrices, d = 2 spatial directions.
struct GradientField {
    static constexpr int dirs = 2;

    ImageShape shape;  // of the underlying image
    Vec values;        // dirs * channels planes

    GradientField() = default;
    explicit GradientField(ImageShape s, double fill = 0.0)
        : shape(s), values(s.value_count() * dirs, fill) {}

    std::size_t plane_size() const { return shape.pixel_count(); }
    // plane for channel c, direction j
    std::size_t plane(int c, int j) const {
        return (static_cast<std::size_t>(c) * dirs + j) * plane_size();
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) {
        double x = std::fabs(v);
        if (x > m) m = x;
    }
    return m;
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace pdhg
