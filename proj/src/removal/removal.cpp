#include "satforge/removal.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "satforge/error.hpp"

namespace fs = std::filesystem;

namespace satforge {

RemovalMask RemovalMask::rectangle(GridCoord tile, int x0, int y0, int x1, int y1) {
    RemovalMask m;
    m.shape = MaskShape::rectangle;
    m.rect = {x0, y0, x1, y1};
    m.tile = tile;
    return m;
}

RemovalMask RemovalMask::polygon_mask(GridCoord tile, std::vector<Point> vertices) {
    RemovalMask m;
    m.shape = MaskShape::polygon;
    m.polygon = std::move(vertices);
    m.tile = tile;
    return m;
}

void RemovalMask::validate(int tile_size) const {
    auto inside = [tile_size](double v) { return v >= 0.0 && v < tile_size; };
    if (shape == MaskShape::rectangle) {
        const auto [x0, y0, x1, y1] = rect;
        if (x0 > x1 || y0 > y1) {
            throw Error(ErrorCode::MaskOutOfBounds, "rectangle requires x0 <= x1 and y0 <= y1", nlohmann::json(*this));
        }
        if (!inside(x0) || !inside(x1) || !inside(y0) || !inside(y1)) {
            throw Error(ErrorCode::MaskOutOfBounds, "rectangle outside tile", nlohmann::json(*this));
        }
        return;
    }
    if (polygon.size() < 3) {
        throw Error(ErrorCode::DegeneratePolygon, "polygon mask needs at least 3 vertices", nlohmann::json(*this));
    }
    for (const Point& p : polygon) {
        if (!inside(p.x) || !inside(p.y)) {
            throw Error(ErrorCode::MaskOutOfBounds, "polygon vertex outside tile", nlohmann::json(*this));
        }
    }
}

Raster RemovalMask::rasterize(int tile_size) const {
    validate(tile_size);
    if (shape == MaskShape::polygon) return rasterize_polygon(polygon, tile_size, tile_size);
    Raster out(tile_size, tile_size, 1);
    for (int y = rect[1]; y <= rect[3]; ++y) {
        for (int x = rect[0]; x <= rect[2]; ++x) out.at(y, x) = 255;
    }
    return out;
}

void to_json(nlohmann::json& j, const RemovalMask& m) {
    j["shape"] = m.shape == MaskShape::rectangle ? "rectangle" : "polygon";
    if (m.shape == MaskShape::rectangle) {
        j["geometry"] = m.rect;
    } else {
        auto pts = nlohmann::json::array();
        for (const Point& p : m.polygon) pts.push_back({p.x, p.y});
        j["geometry"] = pts;
    }
    j["tile"] = {m.tile.row, m.tile.col};
}

void from_json(const nlohmann::json& j, RemovalMask& m) {
    try {
        const auto shape = j.at("shape").get<std::string>();
        const auto& g = j.at("geometry");
        const auto& t = j.at("tile");
        m.tile = {t.at(0).get<int>(), t.at(1).get<int>()};
        if (shape == "rectangle") {
            m.shape = MaskShape::rectangle;
            m.rect = g.get<std::array<int, 4>>();
            m.polygon.clear();
        } else if (shape == "polygon") {
            m.shape = MaskShape::polygon;
            m.polygon.clear();
            for (const auto& p : g) m.polygon.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        } else {
            throw Error(ErrorCode::InvalidParams, "mask shape must be rectangle or polygon");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidParams, std::string("malformed mask JSON: ") + e.what());
    }
}

FeatureImage erase_edges(const FeatureImage& cfi, const RemovalMask& mask) {
    if (cfi.kind != FeatureKind::CFI) throw Error(ErrorCode::WrongFeatureKind, "edge erasure requires a CFI");
    if (cfi.data.height != cfi.data.width) throw Error(ErrorCode::DimMismatch, "CFI must be square");
    const Raster cover = mask.rasterize(cfi.data.height);
    FeatureImage out = cfi;
    for (std::size_t i = 0; i < cover.data.size(); ++i) {
        if (cover.data[i]) out.data.data[i] = 0;
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

namespace {

void check_compat(const Scene& scene, const TileGrid& grid, const Translator& translator, const CannyParams& canny) {
    if (grid.scene_height != scene.pixels.height || grid.scene_width != scene.pixels.width) {
        throw Error(ErrorCode::InconsistentGrid, "grid was not sliced from this scene");
    }
    const auto& prov = translator.checkpoint().provenance;
    if (translator.tile_size() != grid.tile_size) {
        throw Error(ErrorCode::CheckpointMismatch, "checkpoint tile size differs from grid tile size",
                    {{"checkpoint", translator.tile_size()}, {"grid", grid.tile_size}});
    }
    if (prov.feature_kind != FeatureKind::CFI) {
        throw Error(ErrorCode::CheckpointMismatch, "checkpoint was not trained on CFI features");
    }
    if (!(prov.canny == canny)) {
        throw Error(ErrorCode::CheckpointMismatch, "Canny parameters differ from the checkpoint's",
                    {{"checkpoint", prov.canny}, {"requested", canny}});
    }
}

}  // namespace

ForgedResult remove_object(const Scene& scene, const TileGrid& grid, const RemovalMask& mask,
                           const Translator& translator, const CannyParams& canny) {
    ForgedResult r;
    r.started_at = utc_timestamp();
    if (!grid.contains(mask.tile)) {
        throw Error(ErrorCode::MaskOutOfBounds, "mask tile outside grid",
                    {{"tile", {mask.tile.row, mask.tile.col}}, {"rows", grid.rows}, {"cols", grid.cols}});
    }
    mask.validate(grid.tile_size);
    check_compat(scene, grid, translator, canny);

    const Tile& source = grid.at(mask.tile);
    r.source_cfi = extract_cfi(source, canny);
    r.edited_cfi = erase_edges(r.source_cfi, mask);
    r.output_tile = translator.translate(r.edited_cfi);
    r.output_tile.coord = mask.tile;
    r.output_tile.valid = source.valid;
    r.forged_scene = composite_tile(scene, mask.tile, r.output_tile);
    r.mask = mask;
    r.checkpoint_id = translator.checkpoint().id;
    r.finished_at = utc_timestamp();
    return r;
}

Tile reconstruction_baseline(const Scene& scene, const TileGrid& grid, GridCoord coord, const Translator& translator,
                             const CannyParams& canny) {
    if (!grid.contains(coord)) throw Error(ErrorCode::OutOfBounds, "tile coordinate outside grid");
    check_compat(scene, grid, translator, canny);
    const Tile& source = grid.at(coord);
    Tile out = translator.translate(extract_cfi(source, canny));
    out.coord = coord;
    out.valid = source.valid;
    return out;
}

nlohmann::json forged_result_meta(const ForgedResult& r) {
    return {{"checkpoint_id", r.checkpoint_id},
            {"scene_id", r.forged_scene.id},
            {"source_path", r.forged_scene.source_path},
            {"provenance", to_string(r.forged_scene.provenance)},
            {"tile", {r.mask.tile.row, r.mask.tile.col}},
            {"canny", r.edited_cfi.canny.value_or(CannyParams{})},
            {"source_edge_pixels", r.source_cfi.white_count()},
            {"edited_edge_pixels", r.edited_cfi.white_count()},
            {"height", r.forged_scene.pixels.height},
            {"width", r.forged_scene.pixels.width},
            {"started_at", r.started_at},
            {"finished_at", r.finished_at}};
}

void save_forged_result(const ForgedResult& r, const fs::path& dir) {
    fs::create_directories(dir);
    write_png(dir / "forged.png", r.forged_scene.pixels);
    write_png(dir / "edited_cfi.png", r.edited_cfi.data);
    write_png(dir / "output_tile.png", r.output_tile.pixels);
    std::ofstream(dir / "mask.json") << nlohmann::json(r.mask).dump(2) << '\n';
    std::ofstream(dir / "meta.json") << forged_result_meta(r).dump(2) << '\n';
}

}  // namespace satforge
