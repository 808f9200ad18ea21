#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "satforge/geometry.hpp"
#include "satforge/imaging.hpp"

namespace satforge {

struct CannyParams {
    double gaussian_sigma = 1.4;
    double low_threshold = 50.0;   // raw Sobel magnitude on 0-255 intensities
    double high_threshold = 150.0;
    int aperture = 3;

    void validate() const;
    bool operator==(const CannyParams&) const = default;
};

void to_json(nlohmann::json& j, const CannyParams& p);
void from_json(const nlohmann::json& j, CannyParams& p);

enum class FeatureKind { CFI, SFI };

std::string to_string(FeatureKind k);

// Single-channel conditioning image. CFI samples are 0 or 255; SFI samples
// are class-palette indices with 0 as background.
struct FeatureImage {
    FeatureKind kind = FeatureKind::CFI;
    Raster data;
    std::optional<CannyParams> canny;  // set for CFI

    int white_count() const;
};

inline constexpr int kNumClasses = 15;

struct PaletteEntry {
    int class_id = 0;
    std::string name;
    std::array<std::uint8_t, 3> color{};
};

// Background plus the fifteen aerial instance categories, indexed by class id.
const std::vector<PaletteEntry>& class_palette();
nlohmann::json palette_json();

struct PolygonAnnotation {
    int class_id = 0;
    std::vector<Point> vertices;  // scene coordinates
};

// {"class_id": 5, "vertices": [[x, y], ...]}
void to_json(nlohmann::json& j, const PolygonAnnotation& a);
void from_json(const nlohmann::json& j, PolygonAnnotation& a);

// Stages of the edge detector, exposed for testing against direct oracles.
namespace canny {

struct Plane {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Plane() = default;
    Plane(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
    float& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct Gradients {
    Plane gx;
    Plane gy;
    Plane magnitude;
};

// Luma 0.299 R + 0.587 G + 0.114 B; single-channel input passes through.
Plane luma(const Raster& r);
std::vector<float> gaussian_kernel(double sigma);
Plane gaussian_blur(const Plane& in, double sigma);
Gradients sobel(const Plane& in);
Plane non_max_suppression(const Gradients& g);
// 8-connected double-threshold hysteresis; returns a 0/255 map.
Raster hysteresis(const Plane& suppressed, double low, double high);

}  // namespace canny

FeatureImage extract_cfi(const Raster& pixels, const CannyParams& params = {});
FeatureImage extract_cfi(const Tile& tile, const CannyParams& params = {});

FeatureImage render_sfi(const std::vector<PolygonAnnotation>& annotations, GridCoord coord, int tile_size);

std::vector<std::pair<Tile, FeatureImage>> batch_extract(const TileGrid& grid, const CannyParams& params = {});

}  // namespace satforge
