#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vvtrack/error.hpp"

namespace vvtrack {

// Row-major single-plane raster.
template <class T>
class Plane {
public:
    using value_type = T;

    Plane() = default;
    Plane(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(checked(width, height)), fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }
    bool same_shape(const Plane& o) const noexcept {
        return width_ == o.width_ && height_ == o.height_;
    }
    template <class U>
    bool same_shape(const Plane<U>& o) const noexcept {
        return width_ == o.width() && height_ == o.height();
    }

    T& operator()(int x, int y) { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const { return data_[index(x, y)]; }

    // Replicate-border access.
    const T& clamped(int x, int y) const {
        return (*this)(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
    }

    std::span<T> pixels() noexcept { return data_; }
    std::span<const T> pixels() const noexcept { return data_; }
    std::vector<T>& raw() noexcept { return data_; }
    const std::vector<T>& raw() const noexcept { return data_; }

    bool operator==(const Plane&) const = default;

private:
    static long checked(int w, int h) {
        if (w < 0 || h < 0) throw InvalidArgument("negative plane dimensions");
        return static_cast<long>(w) * h;
    }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

// Intensities in [0,1].
using GrayFrame = Plane<double>;
// 0 / 1 per pixel.
using BinaryMask = Plane<std::uint8_t>;

struct Rgb {
    double r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

struct RgbFrame {
    Plane<double> r, g, b;

    RgbFrame() = default;
    RgbFrame(int width, int height, Rgb fill = {})
        : r(width, height, fill.r), g(width, height, fill.g), b(width, height, fill.b) {}

    int width() const noexcept { return r.width(); }
    int height() const noexcept { return r.height(); }
    bool empty() const noexcept { return r.empty(); }

    Rgb at(int x, int y) const { return {r(x, y), g(x, y), b(x, y)}; }
    void set(int x, int y, Rgb c) {
        r(x, y) = c.r;
        g(x, y) = c.g;
        b(x, y) = c.b;
    }

    bool operator==(const RgbFrame&) const = default;
};

// Axis-aligned box in continuous pixel coordinates; pixel (i,j) covers [i,i+1)x[j,j+1).
struct Box {
    double x = 0, y = 0, w = 0, h = 0;

    double cx() const noexcept { return x + w / 2; }
    double cy() const noexcept { return y + h / 2; }
    double area() const noexcept { return w > 0 && h > 0 ? w * h : 0.0; }

    static Box centered(double cx, double cy, double w, double h) {
        return {cx - w / 2, cy - h / 2, w, h};
    }
    bool operator==(const Box&) const = default;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

// Integer pixel rectangle [x0,x1) x [y0,y1).
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool empty() const noexcept { return x1 <= x0 || y1 <= y0; }
    long area() const noexcept { return empty() ? 0 : static_cast<long>(x1 - x0) * (y1 - y0); }
    bool contains(int x, int y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool operator==(const PixelRect&) const = default;
};

// Pixels whose centers fall in the half-open box, clipped to [0,width)x[0,height).
PixelRect pixel_cover(const Box& box, int width, int height);
PixelRect intersect(const PixelRect& a, const PixelRect& b);

}  // namespace vvtrack
