#include <algorithm>
#include <numeric>

#include "satforge/error.hpp"
#include "satforge/features.hpp"

namespace satforge {

const std::vector<PaletteEntry>& class_palette() {
    static const std::vector<PaletteEntry> palette = {
        {0, "Background", {0, 0, 0}},
        {1, "Ship", {0, 0, 63}},
        {2, "Storage Tank", {0, 63, 63}},
        {3, "Baseball Diamond", {0, 63, 0}},
        {4, "Tennis Court", {0, 63, 127}},
        {5, "Basketball Court", {0, 63, 191}},
        {6, "Ground Track Field", {0, 63, 255}},
        {7, "Bridge", {0, 127, 63}},
        {8, "Large Vehicle", {0, 127, 127}},
        {9, "Small Vehicle", {0, 0, 127}},
        {10, "Helicopter", {0, 0, 191}},
        {11, "Swimming Pool", {0, 0, 255}},
        {12, "Roundabout", {0, 191, 127}},
        {13, "Soccer Ball Field", {0, 127, 191}},
        {14, "Airplane", {0, 127, 255}},
        {15, "Harbor", {0, 100, 155}},
    };
    return palette;
}

nlohmann::json palette_json() {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& e : class_palette()) {
        j[std::to_string(e.class_id)] = {{"name", e.name}, {"color", {e.color[0], e.color[1], e.color[2]}}};
    }
    return j;
}

FeatureImage render_sfi(const std::vector<PolygonAnnotation>& annotations, GridCoord coord, int tile_size) {
    if (tile_size < kMinTileSize) {
        throw Error(ErrorCode::InvalidTileSize, "tile_size must be >= 8", {{"tile_size", tile_size}});
    }
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const auto& a = annotations[i];
        if (a.vertices.size() < 3) {
            throw Error(ErrorCode::DegeneratePolygon, "polygon needs at least 3 vertices",
                        {{"index", i}, {"vertices", a.vertices.size()}});
        }
        if (a.class_id < 1 || a.class_id > kNumClasses) {
            throw Error(ErrorCode::InvalidParams, "class_id outside [1, 15]", {{"index", i}, {"class_id", a.class_id}});
        }
    }

    // Paint largest first so that smaller polygons end up on top.
    std::vector<std::size_t> order(annotations.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> area(annotations.size());
    for (std::size_t i = 0; i < annotations.size(); ++i) area[i] = polygon_area(annotations[i].vertices);
    std::stable_sort(order.begin(), order.end(), [&area](auto a, auto b) { return area[a] > area[b]; });

    FeatureImage f;
    f.kind = FeatureKind::SFI;
    f.data = Raster(tile_size, tile_size, 1);
    const double ox = static_cast<double>(coord.col) * tile_size;
    const double oy = static_cast<double>(coord.row) * tile_size;
    for (auto idx : order) {
        const auto& a = annotations[idx];
        const Raster cover = rasterize_polygon(a.vertices, tile_size, tile_size, ox, oy);
        for (std::size_t i = 0; i < cover.data.size(); ++i) {
            if (cover.data[i]) f.data.data[i] = static_cast<std::uint8_t>(a.class_id);
        }
    }
    return f;
}

void to_json(nlohmann::json& j, const PolygonAnnotation& a) {
    auto v = nlohmann::json::array();
    for (const auto& p : a.vertices) v.push_back({p.x, p.y});
    j = {{"class_id", a.class_id}, {"vertices", v}};
}

void from_json(const nlohmann::json& j, PolygonAnnotation& a) {
    a.class_id = j.at("class_id").get<int>();
    a.vertices.clear();
    for (const auto& p : j.at("vertices")) a.vertices.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
}

}  // namespace satforge
