#include "satforge/imaging.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "satforge/error.hpp"

namespace fs = std::filesystem;

namespace satforge {

std::string to_string(Provenance p) { return p == Provenance::pristine ? "pristine" : "forged"; }

std::string to_string(PadPolicy p) { return p == PadPolicy::reflect ? "reflect" : "zero"; }

PadPolicy pad_policy_from_string(const std::string& s) {
    if (s == "reflect") return PadPolicy::reflect;
    if (s == "zero") return PadPolicy::zero;
    throw Error(ErrorCode::InvalidParams, "unknown pad policy '" + s + "'");
}

const Tile& TileGrid::at(GridCoord c) const {
    if (!contains(c)) {
        throw Error(ErrorCode::OutOfBounds, "tile coordinate outside grid",
                    {{"row", c.row}, {"col", c.col}, {"rows", rows}, {"cols", cols}});
    }
    return tiles[static_cast<std::size_t>(c.row) * cols + c.col];
}

std::string content_id(const Raster& r) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    mix(static_cast<std::uint64_t>(r.height));
    mix(static_cast<std::uint64_t>(r.width));
    mix(static_cast<std::uint64_t>(r.channels));
    for (auto v : r.data) mix(v);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

Raster from_mat(const cv::Mat& decoded, bool keep_single_channel) {
    cv::Mat m = decoded;
    if (m.depth() == CV_16U) {
        std::clog << "warning: 16-bit source rescaled to 8-bit\n";
        cv::Mat tmp;
        m.convertTo(tmp, CV_8U, 1.0 / 257.0);
        m = tmp;
    } else if (m.depth() != CV_8U) {
        throw Error(ErrorCode::UnsupportedFormat, "only 8- and 16-bit integer rasters are supported");
    }

    cv::Mat rgb;
    switch (m.channels()) {
        case 1:
            if (keep_single_channel) {
                rgb = m;
            } else {
                cv::cvtColor(m, rgb, cv::COLOR_GRAY2RGB);
            }
            break;
        case 3: cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB); break;
        case 4: cv::cvtColor(m, rgb, cv::COLOR_BGRA2RGB); break;
        default: throw Error(ErrorCode::UnsupportedFormat, "unsupported channel count");
    }
    rgb = rgb.isContinuous() ? rgb : rgb.clone();

    Raster out(rgb.rows, rgb.cols, rgb.channels());
    std::copy(rgb.data, rgb.data + out.data.size(), out.data.begin());
    return out;
}

cv::Mat to_mat(const Raster& r) {
    cv::Mat m(r.height, r.width, CV_8UC(r.channels), const_cast<std::uint8_t*>(r.data.data()));
    cv::Mat out;
    if (r.channels == 3) {
        cv::cvtColor(m, out, cv::COLOR_RGB2BGR);
    } else {
        out = m.clone();
    }
    return out;
}

}  // namespace

Raster decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw Error(ErrorCode::UnreadableFile, "empty image buffer");
    cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat m = cv::imdecode(buf, cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
    if (m.empty()) throw Error(ErrorCode::UnsupportedFormat, "buffer does not decode to a raster");
    return from_mat(m, false);
}

Raster read_image(const fs::path& path, bool keep_single_channel) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        throw Error(ErrorCode::UnreadableFile, "missing file: " + path.string(), {{"path", path.string()}});
    }
    if (fs::file_size(path, ec) == 0) {
        throw Error(ErrorCode::UnreadableFile, "zero-byte file: " + path.string(), {{"path", path.string()}});
    }
    if (!cv::haveImageReader(path.string())) {
        throw Error(ErrorCode::UnsupportedFormat, "no decoder for " + path.string(), {{"path", path.string()}});
    }
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
    if (m.empty()) {
        throw Error(ErrorCode::UnreadableFile, "corrupt image: " + path.string(), {{"path", path.string()}});
    }
    return from_mat(m, keep_single_channel);
}

void write_png(const fs::path& path, const Raster& r) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto bytes = encode_png(r);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::UnreadableFile, "failed to write " + path.string());
}

std::vector<std::uint8_t> encode_png(const Raster& r) {
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", to_mat(r), out, {cv::IMWRITE_PNG_COMPRESSION, 3})) {
        throw Error(ErrorCode::UnsupportedFormat, "PNG encoding failed");
    }
    return out;
}

Scene scene_from_raster(Raster pixels, std::string source_path) {
    Scene s;
    s.id = content_id(pixels);
    s.pixels = std::move(pixels);
    s.provenance = Provenance::pristine;
    s.source_path = std::move(source_path);
    return s;
}

Scene load_scene(const fs::path& path) {
    return scene_from_raster(read_image(path), path.string());
}

int reflect_index(int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

TileGrid slice_tiles(const Scene& scene, int tile_size, PadPolicy pad_policy) {
    if (tile_size < kMinTileSize) {
        throw Error(ErrorCode::InvalidTileSize, "tile_size must be >= 8", {{"tile_size", tile_size}});
    }
    const Raster& src = scene.pixels;
    const int channels = src.channels;

    TileGrid grid;
    grid.scene_id = scene.id;
    grid.tile_size = tile_size;
    grid.pad_policy = pad_policy;
    grid.scene_height = src.height;
    grid.scene_width = src.width;
    grid.rows = (src.height + tile_size - 1) / tile_size;
    grid.cols = (src.width + tile_size - 1) / tile_size;
    grid.tiles.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);

    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            Tile t;
            t.coord = {r, c};
            const int y0 = r * tile_size;
            const int x0 = c * tile_size;
            t.valid = {std::min(tile_size, src.height - y0), std::min(tile_size, src.width - x0)};
            t.pixels = Raster(tile_size, tile_size, channels);
            for (int y = 0; y < tile_size; ++y) {
                const bool row_inside = y < t.valid.height;
                for (int x = 0; x < tile_size; ++x) {
                    const bool inside = row_inside && x < t.valid.width;
                    if (!inside && pad_policy == PadPolicy::zero) continue;
                    const int sy = inside ? y0 + y : reflect_index(y0 + y, src.height);
                    const int sx = inside ? x0 + x : reflect_index(x0 + x, src.width);
                    for (int ch = 0; ch < channels; ++ch) t.pixels.at(y, x, ch) = src.at(sy, sx, ch);
                }
            }
            grid.tiles.push_back(std::move(t));
        }
    }
    return grid;
}

Raster stitch_tiles(const TileGrid& grid) {
    const auto expected = static_cast<std::size_t>(grid.rows) * grid.cols;
    if (grid.tiles.size() != expected || grid.rows <= 0 || grid.cols <= 0) {
        throw Error(ErrorCode::InconsistentGrid, "tile count does not match rows x cols",
                    {{"tiles", grid.tiles.size()}, {"expected", expected}});
    }
    const int channels = grid.tiles.front().pixels.channels;
    Raster out(grid.scene_height, grid.scene_width, channels);
    for (const Tile& t : grid.tiles) {
        if (t.pixels.height != grid.tile_size || t.pixels.width != grid.tile_size ||
            t.pixels.channels != channels) {
            throw Error(ErrorCode::InconsistentGrid, "tile dimensions disagree with grid");
        }
        const int y0 = t.coord.row * grid.tile_size;
        const int x0 = t.coord.col * grid.tile_size;
        for (int y = 0; y < t.valid.height; ++y) {
            const auto* from = &t.pixels.data[t.pixels.index(y, 0)];
            std::copy(from, from + static_cast<std::size_t>(t.valid.width) * channels,
                      out.data.begin() + static_cast<std::ptrdiff_t>(out.index(y0 + y, x0)));
        }
    }
    return out;
}

Scene composite_tile(const Scene& scene, GridCoord coord, const Tile& new_tile) {
    const int ts = new_tile.pixels.height;
    if (ts < kMinTileSize || new_tile.pixels.width != ts || new_tile.pixels.channels != scene.pixels.channels) {
        throw Error(ErrorCode::InvalidTileSize, "replacement tile must be square and match scene channels");
    }
    const int rows = (scene.pixels.height + ts - 1) / ts;
    const int cols = (scene.pixels.width + ts - 1) / ts;
    if (coord.row < 0 || coord.col < 0 || coord.row >= rows || coord.col >= cols) {
        throw Error(ErrorCode::OutOfBounds, "tile coordinate outside grid",
                    {{"row", coord.row}, {"col", coord.col}, {"rows", rows}, {"cols", cols}});
    }
    Scene out = scene;
    out.provenance = Provenance::forged;
    const int y0 = coord.row * ts;
    const int x0 = coord.col * ts;
    const int vh = std::min(ts, scene.pixels.height - y0);
    const int vw = std::min(ts, scene.pixels.width - x0);
    const int ch = scene.pixels.channels;
    for (int y = 0; y < vh; ++y) {
        const auto* from = &new_tile.pixels.data[new_tile.pixels.index(y, 0)];
        std::copy(from, from + static_cast<std::size_t>(vw) * ch,
                  out.pixels.data.begin() + static_cast<std::ptrdiff_t>(out.pixels.index(y0 + y, x0)));
    }
    return out;
}

nlohmann::json grid_metadata(const TileGrid& grid) {
    return {{"scene_id", grid.scene_id}, {"tile_size", grid.tile_size}, {"rows", grid.rows},
            {"cols", grid.cols},         {"pad_policy", to_string(grid.pad_policy)},
            {"height", grid.scene_height}, {"width", grid.scene_width}};
}

}  // namespace satforge
