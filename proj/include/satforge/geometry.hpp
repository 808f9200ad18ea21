#pragma once

#include <span>
#include <vector>

#include "satforge/imaging.hpp"

namespace satforge {

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

// Absolute shoelace area.
double polygon_area(std::span<const Point> vertices);

// Even-odd rule. Points exactly on a horizontal edge follow the half-open
// crossing convention, so adjacent polygons never both claim a sample.
bool contains_even_odd(std::span<const Point> vertices, double x, double y);

// Single-channel 0/255 coverage of a polygon sampled at pixel centres
// (x + 0.5, y + 0.5), after translating vertices by (-origin_x, -origin_y).
Raster rasterize_polygon(std::span<const Point> vertices, int height, int width,
                         double origin_x = 0.0, double origin_y = 0.0);

}  // namespace satforge
