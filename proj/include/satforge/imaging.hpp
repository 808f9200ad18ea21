#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace satforge {

// Interleaved 8-bit raster, row-major, channels innermost. Value type: copies
// never share storage.
struct Raster {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    Raster() = default;
    Raster(int h, int w, int c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::size_t index(int y, int x, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    std::uint8_t& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
    std::uint8_t at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

    bool empty() const { return data.empty(); }
    bool same_shape(const Raster& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    bool operator==(const Raster&) const = default;
};

enum class Provenance { pristine, forged };
enum class PadPolicy { reflect, zero };

std::string to_string(Provenance p);
std::string to_string(PadPolicy p);
PadPolicy pad_policy_from_string(const std::string& s);

struct Scene {
    std::string id;
    Raster pixels;  // H x W x 3
    Provenance provenance = Provenance::pristine;
    std::string source_path;
};

struct GridCoord {
    int row = 0;
    int col = 0;
    bool operator==(const GridCoord&) const = default;
};

struct ValidRegion {
    int height = 0;
    int width = 0;
    bool operator==(const ValidRegion&) const = default;
};

struct Tile {
    GridCoord coord;
    Raster pixels;  // tile_size x tile_size x 3
    ValidRegion valid;
};

struct TileGrid {
    std::string scene_id;
    int tile_size = 256;
    int rows = 0;
    int cols = 0;
    PadPolicy pad_policy = PadPolicy::reflect;
    int scene_height = 0;
    int scene_width = 0;
    std::vector<Tile> tiles;  // row-major

    const Tile& at(GridCoord c) const;
    bool contains(GridCoord c) const { return c.row >= 0 && c.col >= 0 && c.row < rows && c.col < cols; }
};

inline constexpr int kDefaultTileSize = 256;
inline constexpr int kMinTileSize = 8;

// Content-derived identifier (FNV-1a over dimensions and samples).
std::string content_id(const Raster& r);

Scene load_scene(const std::filesystem::path& path);
Scene scene_from_raster(Raster pixels, std::string source_path = {});

// Decodes any OpenCV-readable buffer to RGB (3 channels) or, with
// keep_single_channel, to grayscale when the source has one channel.
Raster decode_image(std::span<const std::uint8_t> bytes);
Raster read_image(const std::filesystem::path& path, bool keep_single_channel = false);
void write_png(const std::filesystem::path& path, const Raster& r);
std::vector<std::uint8_t> encode_png(const Raster& r);

// Mirror index into [0, n) with edge repetition; valid for any offset.
int reflect_index(int i, int n);

TileGrid slice_tiles(const Scene& scene, int tile_size = kDefaultTileSize,
                     PadPolicy pad_policy = PadPolicy::reflect);
Raster stitch_tiles(const TileGrid& grid);
Scene composite_tile(const Scene& scene, GridCoord coord, const Tile& new_tile);

// Grid metadata only: {scene_id, tile_size, rows, cols, pad_policy, height, width}.
nlohmann::json grid_metadata(const TileGrid& grid);

}  // namespace satforge
