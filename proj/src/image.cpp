#include "vvtrack/image.hpp"

#include <cmath>

namespace vvtrack {

double intersection_area(const Box& a, const Box& b) {
    const double w = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double h = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

double iou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

PixelRect pixel_cover(const Box& box, int width, int height) {
    // center i+0.5 in [x, x+w)  <=>  i in [ceil(x-0.5), ceil(x+w-0.5))
    PixelRect r;
    r.x0 = static_cast<int>(std::ceil(box.x - 0.5));
    r.y0 = static_cast<int>(std::ceil(box.y - 0.5));
    r.x1 = static_cast<int>(std::ceil(box.x + box.w - 0.5));
    r.y1 = static_cast<int>(std::ceil(box.y + box.h - 0.5));
    return intersect(r, PixelRect{0, 0, width, height});
}

PixelRect intersect(const PixelRect& a, const PixelRect& b) {
    PixelRect r{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
                std::min(a.y1, b.y1)};
    if (r.empty()) return PixelRect{};
    return r;
}

}  // namespace vvtrack
