#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "satforge/features.hpp"
#include "satforge/geometry.hpp"
#include "satforge/imaging.hpp"
#include "satforge/translator.hpp"

namespace satforge {

enum class MaskShape { rectangle, polygon };

// Region, in tile pixel coordinates, whose CFI edges are erased. Rectangles
// are inclusive pixel bounds; polygons are rasterized with the even-odd rule
// sampled at pixel centres.
struct RemovalMask {
    MaskShape shape = MaskShape::rectangle;
    std::array<int, 4> rect{0, 0, 0, 0};  // x0, y0, x1, y1
    std::vector<Point> polygon;
    GridCoord tile;

    static RemovalMask rectangle(GridCoord tile, int x0, int y0, int x1, int y1);
    static RemovalMask polygon_mask(GridCoord tile, std::vector<Point> vertices);

    void validate(int tile_size) const;
    Raster rasterize(int tile_size) const;  // 1 channel, 255 inside
};

void to_json(nlohmann::json& j, const RemovalMask& m);
void from_json(const nlohmann::json& j, RemovalMask& m);

struct ForgedResult {
    Scene forged_scene;
    FeatureImage source_cfi;
    FeatureImage edited_cfi;
    Tile output_tile;
    RemovalMask mask;
    std::string checkpoint_id;
    std::string started_at;
    std::string finished_at;
};

FeatureImage erase_edges(const FeatureImage& cfi, const RemovalMask& mask);

ForgedResult remove_object(const Scene& scene, const TileGrid& grid, const RemovalMask& mask,
                           const Translator& translator, const CannyParams& canny);

// Translation of the unedited CFI: isolates translator error from removal.
Tile reconstruction_baseline(const Scene& scene, const TileGrid& grid, GridCoord coord, const Translator& translator,
                             const CannyParams& canny);

// {forged.png, edited_cfi.png, output_tile.png, mask.json, meta.json}
void save_forged_result(const ForgedResult& r, const std::filesystem::path& dir);
nlohmann::json forged_result_meta(const ForgedResult& r);

std::string utc_timestamp();

}  // namespace satforge
