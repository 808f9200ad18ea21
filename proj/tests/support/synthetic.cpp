#include "synthetic.hpp"

#include <cmath>

namespace satforge::testing {

Raster smooth_background(int height, int width, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 6.283);
    const double p0 = phase(rng), p1 = phase(rng), p2 = phase(rng);
    Raster r(height, width, 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = 0.5 + 0.5 * std::sin(x * 0.021 + p0) * std::cos(y * 0.017 + p1);
            const double v = 0.5 + 0.5 * std::sin((x + y) * 0.013 + p2);
            r.at(y, x, 0) = static_cast<std::uint8_t>(70 + 40 * u);
            r.at(y, x, 1) = static_cast<std::uint8_t>(90 + 45 * v);
            r.at(y, x, 2) = static_cast<std::uint8_t>(60 + 30 * u * v);
        }
    }
    return r;
}

void paint_box(Raster& r, int x0, int y0, int x1, int y1, std::uint8_t cr, std::uint8_t cg, std::uint8_t cb) {
    for (int y = std::max(0, y0); y <= std::min(r.height - 1, y1); ++y) {
        for (int x = std::max(0, x0); x <= std::min(r.width - 1, x1); ++x) {
            r.at(y, x, 0) = cr;
            r.at(y, x, 1) = cg;
            r.at(y, x, 2) = cb;
        }
    }
}

Raster synthetic_scene(int height, int width, std::uint32_t seed, int objects_per_64px_tile) {
    Raster r = smooth_background(height, width, seed);
    std::mt19937 rng(seed * 7919u + 17u);
    const int count = std::max(1, objects_per_64px_tile * (height / 64) * (width / 64));
    std::uniform_int_distribution<int> px(0, width - 1), py(0, height - 1), size(5, 14), tone(150, 240);
    for (int i = 0; i < count; ++i) {
        const int x = px(rng), y = py(rng), w = size(rng), h = size(rng);
        const auto t = static_cast<std::uint8_t>(tone(rng));
        paint_box(r, x, y, x + w, y + h, t, static_cast<std::uint8_t>(t - 20), static_cast<std::uint8_t>(t - 60));
    }
    return r;
}

Raster random_raster(int height, int width, int channels, std::mt19937& rng) {
    Raster r(height, width, channels);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : r.data) v = static_cast<std::uint8_t>(d(rng));
    return r;
}

}  // namespace satforge::testing
