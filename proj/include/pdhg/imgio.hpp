#pragma once

// Image and trace I/O plus synthetic data generation.
//
// Values are stored in [0, 1]; writing clamps to [0, 1] and quantizes
// round-half-up.  PGM (binary P5, 8- or 16-bit gray) is the dependency-free
// reference format, PNG (8/16-bit gray, 8-bit RGB) the convenience format.
// All files are written atomically (temp + rename) and all floating-point
// text uses a fixed %.17g encoding so reruns are byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "pdhg/grid.hpp"
#include "pdhg/rng.hpp"
#include "pdhg/solver.hpp"

namespace pdhg {

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path + " (" + ec.message() + ")");
}

// ---------------------------------------------------------------- PGM (P5)

namespace detail {
inline int pgm_next_int(std::istream& in) {
    // skips whitespace and '#' comments
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw IoError("PGM: malformed header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}
}  // namespace detail

inline ImageGrid read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw IoError("PGM: wrong magic in " + path);
    const int w = detail::pgm_next_int(in);
    const int h = detail::pgm_next_int(in);
    const int maxval = detail::pgm_next_int(in);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw IoError("PGM: bad dimensions in " + path);
    // header ends with exactly one whitespace byte, already consumed by the
    // integer reader's terminating character
    ImageGrid img(w, h, 1);
    const std::size_t n = img.shape.pixel_count();
    if (maxval < 256) {
        std::vector<unsigned char> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
        if (!in) throw IoError("PGM: truncated file " + path);
        for (std::size_t i = 0; i < n; ++i) img.values[i] = raw[i] / static_cast<double>(maxval);
    } else {
        std::vector<unsigned char> raw(2 * n);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(2 * n));
        if (!in) throw IoError("PGM: truncated file " + path);
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
            img.values[i] = v / static_cast<double>(maxval);
        }
    }
    return img;
}

inline void write_pgm(const ImageGrid& img, const std::string& path, int bit_depth = 8) {
    if (img.shape.channels != 1) throw IoError("PGM: only single-channel images");
    if (bit_depth != 8 && bit_depth != 16) throw IoError("PGM: bit depth must be 8 or 16");
    const int maxval = bit_depth == 8 ? 255 : 65535;
    std::ostringstream out;
    out << "P5\n" << img.shape.width << " " << img.shape.height << "\n" << maxval << "\n";
    for (double v : img.values) {
        const double c = std::clamp(v, 0.0, 1.0);
        const unsigned q = static_cast<unsigned>(std::floor(c * maxval + 0.5));
        if (bit_depth == 8) {
            out.put(static_cast<char>(q));
        } else {
            out.put(static_cast<char>(q >> 8));
            out.put(static_cast<char>(q & 0xff));
        }
    }
    write_file_atomic(path, out.str());
}

// ---------------------------------------------------------------- PNG

inline ImageGrid read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("PNG: init failed");
    }
    std::vector<std::vector<png_byte>> rows;
    ImageGrid img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("PNG: decode error in " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    // color stays 8-bit; only grayscale keeps 16 bits
    if (depth == 16 && (color & PNG_COLOR_MASK_COLOR)) png_set_strip_16(png);
    png_read_update_info(png, info);

    color = png_get_color_type(png, info);
    depth = png_get_bit_depth(png, info);
    const int channels = static_cast<int>(png_get_channels(png, info));
    if (!((channels == 1 && (depth == 8 || depth == 16)) || (channels == 3 && depth == 8))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("PNG: unsupported format in " + path);
    }

    rows.assign(h, std::vector<png_byte>(png_get_rowbytes(png, info)));
    std::vector<png_bytep> row_ptrs(h);
    for (int y = 0; y < h; ++y) row_ptrs[y] = rows[y].data();
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    img = ImageGrid(w, h, channels);
    const std::size_t ps = img.shape.pixel_count();
    const double maxval = depth == 8 ? 255.0 : 65535.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                double v;
                if (depth == 8) {
                    v = rows[y][static_cast<std::size_t>(x) * channels + c] / maxval;
                } else {
                    const std::size_t o = 2 * (static_cast<std::size_t>(x) * channels + c);
                    v = ((static_cast<unsigned>(rows[y][o]) << 8) | rows[y][o + 1]) / maxval;
                }
                img.values[static_cast<std::size_t>(c) * ps +
                           static_cast<std::size_t>(y) * w + x] = v;
            }
        }
    }
    return img;
}

inline void write_png(const ImageGrid& img, const std::string& path) {
    if (img.shape.channels != 1 && img.shape.channels != 3)
        throw IoError("PNG: only 1- or 3-channel images");
    const std::string tmp = path + ".tmp";
    std::FILE* fp = std::fopen(tmp.c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing: " + tmp);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG: init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG: encode error for " + path);
    }
    const int w = img.shape.width, h = img.shape.height, k = img.shape.channels;
    png_init_io(png, fp);
    png_set_IHDR(png, info, w, h, 8,
                 k == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t ps = img.shape.pixel_count();
    std::vector<png_byte> row(static_cast<std::size_t>(w) * k);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < k; ++c) {
                const double v = std::clamp(
                    img.values[static_cast<std::size_t>(c) * ps +
                               static_cast<std::size_t>(y) * w + x],
                    0.0, 1.0);
                row[static_cast<std::size_t>(x) * k + c] =
                    static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path);
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline ImageGrid read_image(const std::string& path) {
    if (has_suffix(path, ".pgm")) return read_pgm(path);
    if (has_suffix(path, ".png")) return read_png(path);
    throw IoError("unsupported image format (expect .pgm or .png): " + path);
}

inline void write_image(const ImageGrid& img, const std::string& path) {
    if (has_suffix(path, ".pgm")) {
        write_pgm(img, path);
        return;
    }
    if (has_suffix(path, ".png")) {
        write_png(img, path);
        return;
    }
    throw IoError("unsupported image format (expect .pgm or .png): " + path);
}

// ---------------------------------------------------------------- noise & curves

inline ImageGrid add_gaussian_noise(const ImageGrid& u, double std_dev, std::uint64_t seed) {
    if (std_dev < 0.0) throw std::invalid_argument("add_gaussian_noise: std must be >= 0");
    ImageGrid out = u;
    if (std_dev == 0.0) return out;
    Rng rng(seed);
    for (double& v : out.values) v = std::clamp(v + std_dev * rng.normal(), 0.0, 1.0);
    return out;
}

// channel-mean intensities sorted ascending
inline Vec sorted_intensity_curve(const ImageGrid& u) {
    if (u.shape.channels != 3)
        throw std::invalid_argument("sorted_intensity_curve: requires 3 channels");
    const std::size_t ps = u.shape.pixel_count();
    Vec curve(ps);
    for (std::size_t i = 0; i < ps; ++i)
        curve[i] = (u.values[i] + u.values[ps + i] + u.values[2 * ps + i]) / 3.0;
    std::sort(curve.begin(), curve.end());
    return curve;
}

inline void write_curve_csv(const Vec& curve, const std::string& path) {
    std::ostringstream out;
    out << "index,intensity\n";
    for (std::size_t i = 0; i < curve.size(); ++i)
        out << i << "," << format_g17(curve[i]) << "\n";
    write_file_atomic(path, out.str());
}

inline void write_trace_csv(const ConvergenceTrace& trace, const std::string& path) {
    std::ostringstream out;
    out << "iter,du,dq,residual,energy,sigma,tau,theta,wall_ms\n";
    for (const auto& r : trace.records) {
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.3f", r.wall_ms);
        out << r.iter << "," << format_g17(r.du) << "," << format_g17(r.dq) << ","
            << format_g17(r.residual) << "," << format_g17(r.energy) << ","
            << format_g17(r.sigma) << "," << format_g17(r.tau) << "," << format_g17(r.theta)
            << "," << wall << "\n";
    }
    write_file_atomic(path, out.str());
}

// ---------------------------------------------------------------- synthetic data

// Piecewise test pattern: dark background with a soft ramp, a bright disk
// and a mid-gray rectangle.  Deterministic.
inline ImageGrid synthetic_shapes(int w, int h) {
    ImageGrid img(w, h, 1);
    const double cx = 0.35 * w, cy = 0.4 * h, rad = 0.22 * std::min(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double v = 0.15 + 0.1 * static_cast<double>(x) / w;
            const double dx = x - cx, dy = y - cy;
            if (std::sqrt(dx * dx + dy * dy) < rad) v = 0.85;
            if (x > 0.55 * w && x < 0.9 * w && y > 0.55 * h && y < 0.85 * h) v = 0.5;
            img.at(0, y, x) = v;
        }
    }
    return img;
}

// Low-dynamic-range color pattern used by the illumination experiment:
// regions sit near (but not on) the target intensities.
inline ImageGrid synthetic_color(int w, int h) {
    ImageGrid img(w, h, 3);
    const double cx = 0.4 * w, cy = 0.45 * h, rad = 0.25 * std::min(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx, dy = y - cy;
            const bool disk = std::sqrt(dx * dx + dy * dy) < rad;
            const bool band = x > 0.65 * w && x < 0.92 * w;
            double r, g, b;
            if (disk) {
                r = 0.93;
                g = 0.87;
                b = 0.82;
            } else if (band) {
                r = 0.80;
                g = 0.86;
                b = 0.90;
            } else {
                r = 0.38;
                g = 0.34;
                b = 0.30;
            }
            img.at(0, y, x) = r;
            img.at(1, y, x) = g;
            img.at(2, y, x) = b;
        }
    }
    return img;
}

// Inpainting benchmark: boundary data from the radial jump profile
//   u(r, phi) = 0.5 + 0.5 sqrt(r / rmax) sin(phi / 2),
// which is discontinuous across the ray phi = pi.  The unknown region is a
// central disk of radius 0.35 n together with the left half of the center
// row (the slit carrying the discontinuity).  Seed-free and reproducible.
inline std::pair<ImageGrid, std::vector<std::uint8_t>> make_cracktip_mask(int n) {
    if (n <= 0 || n % 2 == 0) throw std::invalid_argument("make_cracktip_mask: n must be odd");
    ImageGrid img(n, n, 1);
    std::vector<std::uint8_t> known(img.shape.value_count(), 1);
    const int c = (n - 1) / 2;
    const double rmax = std::sqrt(2.0) * c + 1.0;
    const double disk = 0.35 * n;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double dx = x - c;
            const double dy = y - c;
            const double r = std::sqrt(dx * dx + dy * dy);
            const double phi = std::atan2(dy, dx);
            img.at(0, y, x) = 0.5 + 0.5 * std::sqrt(r / rmax) * std::sin(0.5 * phi);
            const bool slit = (y == c && x <= c);
            if (r < disk || slit) known[static_cast<std::size_t>(y) * n + x] = 0;
        }
    }
    return {std::move(img), std::move(known)};
}

}  // namespace pdhg
