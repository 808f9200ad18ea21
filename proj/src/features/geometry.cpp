#include "satforge/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace satforge {

double polygon_area(std::span<const Point> v) {
    double twice = 0.0;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        twice += v[j].x * v[i].y - v[i].x * v[j].y;
    }
    return std::abs(twice) * 0.5;
}

bool contains_even_odd(std::span<const Point> v, double x, double y) {
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const Point& a = v[i];
        const Point& b = v[j];
        if ((a.y > y) != (b.y > y)) {
            const double cross_x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x < cross_x) inside = !inside;
        }
    }
    return inside;
}

Raster rasterize_polygon(std::span<const Point> vertices, int height, int width, double origin_x,
                         double origin_y) {
    Raster out(height, width, 1);
    if (vertices.size() < 3) return out;

    std::vector<Point> local(vertices.begin(), vertices.end());
    for (Point& p : local) {
        p.x -= origin_x;
        p.y -= origin_y;
    }
    double min_x = local[0].x, max_x = local[0].x, min_y = local[0].y, max_y = local[0].y;
    for (const Point& p : local) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }

    // Only centres inside the bounding box can be covered.
    const int y_begin = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int y_end = std::min(height, static_cast<int>(std::ceil(max_y + 0.5)) + 1);
    const int x_begin = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
    const int x_end = std::min(width, static_cast<int>(std::ceil(max_x + 0.5)) + 1);
    for (int y = y_begin; y < y_end; ++y) {
        for (int x = x_begin; x < x_end; ++x) {
            if (contains_even_odd(local, x + 0.5, y + 0.5)) out.at(y, x) = 255;
        }
    }
    return out;
}

}  // namespace satforge
