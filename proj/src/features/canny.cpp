#include <algorithm>
#include <cmath>
#include <deque>

#include "satforge/error.hpp"
#include "satforge/features.hpp"

namespace satforge {

void CannyParams::validate() const {
    if (!(gaussian_sigma > 0.0)) {
        throw Error(ErrorCode::InvalidParams, "gaussian_sigma must be positive", {{"sigma", gaussian_sigma}});
    }
    if (!(low_threshold > 0.0) || !(low_threshold < high_threshold)) {
        throw Error(ErrorCode::InvalidParams, "thresholds must satisfy 0 < low < high",
                    {{"low", low_threshold}, {"high", high_threshold}});
    }
    if (aperture != 3) {
        throw Error(ErrorCode::InvalidParams, "only a 3x3 Sobel aperture is supported", {{"aperture", aperture}});
    }
}

void to_json(nlohmann::json& j, const CannyParams& p) {
    j = {{"gaussian_sigma", p.gaussian_sigma},
         {"low_threshold", p.low_threshold},
         {"high_threshold", p.high_threshold},
         {"aperture", p.aperture}};
}

void from_json(const nlohmann::json& j, CannyParams& p) {
    CannyParams d;
    p.gaussian_sigma = j.value("gaussian_sigma", d.gaussian_sigma);
    p.low_threshold = j.value("low_threshold", d.low_threshold);
    p.high_threshold = j.value("high_threshold", d.high_threshold);
    p.aperture = j.value("aperture", d.aperture);
}

std::string to_string(FeatureKind k) { return k == FeatureKind::CFI ? "CFI" : "SFI"; }

int FeatureImage::white_count() const {
    return static_cast<int>(std::count_if(data.data.begin(), data.data.end(), [](auto v) { return v != 0; }));
}

namespace canny {

Plane luma(const Raster& r) {
    Plane out(r.height, r.width);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            if (r.channels == 1) {
                out.at(y, x) = r.at(y, x);
            } else {
                out.at(y, x) = static_cast<float>(0.299 * r.at(y, x, 0) + 0.587 * r.at(y, x, 1) +
                                                  0.114 * r.at(y, x, 2));
            }
        }
    }
    return out;
}

std::vector<float> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    std::vector<float> out(k.size());
    std::transform(k.begin(), k.end(), out.begin(), [sum](double v) { return static_cast<float>(v / sum); });
    return out;
}

Plane gaussian_blur(const Plane& in, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    Plane tmp(in.height, in.width);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in.at(y, reflect_index(x + i, in.width));
            tmp.at(y, x) = acc;
        }
    }
    Plane out(in.height, in.width);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(reflect_index(y + i, in.height), x);
            out.at(y, x) = acc;
        }
    }
    return out;
}

Gradients sobel(const Plane& in) {
    Gradients g{Plane(in.height, in.width), Plane(in.height, in.width), Plane(in.height, in.width)};
    auto px = [&in](int y, int x) { return in.at(reflect_index(y, in.height), reflect_index(x, in.width)); };
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            const float gx = (px(y - 1, x + 1) + 2.0f * px(y, x + 1) + px(y + 1, x + 1)) -
                             (px(y - 1, x - 1) + 2.0f * px(y, x - 1) + px(y + 1, x - 1));
            const float gy = (px(y + 1, x - 1) + 2.0f * px(y + 1, x) + px(y + 1, x + 1)) -
                             (px(y - 1, x - 1) + 2.0f * px(y - 1, x) + px(y - 1, x + 1));
            g.gx.at(y, x) = gx;
            g.gy.at(y, x) = gy;
            g.magnitude.at(y, x) = std::sqrt(gx * gx + gy * gy);
        }
    }
    return g;
}

Plane non_max_suppression(const Gradients& g) {
    const Plane& m = g.magnitude;
    Plane out(m.height, m.width);
    auto mag = [&m](int y, int x) {
        return (y < 0 || x < 0 || y >= m.height || x >= m.width) ? 0.0f : m.at(y, x);
    };
    constexpr float kTan22 = 0.41421356f;
    constexpr float kTan67 = 2.41421356f;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            const float v = m.at(y, x);
            if (v <= 0.0f) continue;
            const float ax = std::abs(g.gx.at(y, x));
            const float ay = std::abs(g.gy.at(y, x));
            float before = 0.0f;
            float after = 0.0f;
            if (ay <= ax * kTan22) {
                before = mag(y, x - 1);
                after = mag(y, x + 1);
            } else if (ay >= ax * kTan67) {
                before = mag(y - 1, x);
                after = mag(y + 1, x);
            } else if ((g.gx.at(y, x) > 0) == (g.gy.at(y, x) > 0)) {
                before = mag(y - 1, x - 1);
                after = mag(y + 1, x + 1);
            } else {
                before = mag(y - 1, x + 1);
                after = mag(y + 1, x - 1);
            }
            // Strict on one side, lenient on the other: a plateau of two equal
            // maxima keeps exactly one sample.
            if (v > before && v >= after) out.at(y, x) = v;
        }
    }
    return out;
}

Raster hysteresis(const Plane& s, double low, double high) {
    Raster out(s.height, s.width, 1);
    std::deque<std::pair<int, int>> frontier;
    for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
            if (s.at(y, x) > high) {
                out.at(y, x) = 255;
                frontier.emplace_back(y, x);
            }
        }
    }
    while (!frontier.empty()) {
        const auto [y, x] = frontier.front();
        frontier.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy;
                const int nx = x + dx;
                if (ny < 0 || nx < 0 || ny >= s.height || nx >= s.width) continue;
                if (out.at(ny, nx) == 0 && s.at(ny, nx) > low) {
                    out.at(ny, nx) = 255;
                    frontier.emplace_back(ny, nx);
                }
            }
        }
    }
    return out;
}

}  // namespace canny

FeatureImage extract_cfi(const Raster& pixels, const CannyParams& params) {
    params.validate();
    const auto smoothed = canny::gaussian_blur(canny::luma(pixels), params.gaussian_sigma);
    const auto suppressed = canny::non_max_suppression(canny::sobel(smoothed));
    FeatureImage f;
    f.kind = FeatureKind::CFI;
    f.data = canny::hysteresis(suppressed, params.low_threshold, params.high_threshold);
    f.canny = params;
    return f;
}

FeatureImage extract_cfi(const Tile& tile, const CannyParams& params) { return extract_cfi(tile.pixels, params); }

std::vector<std::pair<Tile, FeatureImage>> batch_extract(const TileGrid& grid, const CannyParams& params) {
    params.validate();
    std::vector<std::pair<Tile, FeatureImage>> out;
    out.reserve(grid.tiles.size());
    for (const Tile& t : grid.tiles) out.emplace_back(t, extract_cfi(t, params));
    return out;
}

}  // namespace satforge
