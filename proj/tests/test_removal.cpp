#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "satforge/error.hpp"
#include "satforge/removal.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "support/torch_helpers.hpp"

using namespace satforge;
namespace synth = satforge::testing;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::JobFailed;
}

RemovalMask random_mask(std::mt19937& rng, int ts) {
    std::uniform_int_distribution<int> c(0, ts - 1);
    if (rng() % 2) {
        int x0 = c(rng), x1 = c(rng), y0 = c(rng), y1 = c(rng);
        return RemovalMask::rectangle({0, 0}, std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1));
    }
    std::uniform_real_distribution<double> u(0.0, ts - 1e-6);
    std::vector<Point> v(3 + rng() % 5);
    for (auto& p : v) p = {u(rng), u(rng)};
    return RemovalMask::polygon_mask({0, 0}, v);
}

Raster oracle_cover(const RemovalMask& m, int ts) {
    if (m.shape == MaskShape::polygon) return oracle::rasterize(m.polygon, ts, ts);
    Raster out(ts, ts, 1);
    for (int y = 0; y < ts; ++y) {
        for (int x = 0; x < ts; ++x) {
            if (x >= m.rect[0] && x <= m.rect[2] && y >= m.rect[1] && y <= m.rect[3]) out.at(y, x) = 255;
        }
    }
    return out;
}

}  // namespace

TEST(Erase, MatchesBruteForceOnRandomMasks) {
    std::mt19937 rng(31);
    const int ts = 64;
    for (int i = 0; i < 100; ++i) {
        const auto cfi = extract_cfi(synth::synthetic_scene(ts, ts, i, 4));
        const auto mask = random_mask(rng, ts);
        const auto out = erase_edges(cfi, mask);
        const auto cover = oracle_cover(mask, ts);
        for (std::size_t p = 0; p < cover.data.size(); ++p) {
            const std::uint8_t want = cover.data[p] ? 0 : cfi.data.data[p];
            ASSERT_EQ(out.data.data[p], want) << "mask " << i << " pixel " << p;
        }
    }
}

TEST(Erase, RejectsSfi) {
    const auto sfi = render_sfi({}, {0, 0}, 16);
    EXPECT_EQ(code_of([&] { erase_edges(sfi, RemovalMask::rectangle({0, 0}, 0, 0, 3, 3)); }),
              ErrorCode::WrongFeatureKind);
}

TEST(Mask, Validation) {
    EXPECT_EQ(code_of([] { RemovalMask::rectangle({0, 0}, 5, 0, 2, 3).validate(16); }), ErrorCode::MaskOutOfBounds);
    EXPECT_EQ(code_of([] { RemovalMask::rectangle({0, 0}, 0, 0, 16, 3).validate(16); }), ErrorCode::MaskOutOfBounds);
    EXPECT_EQ(code_of([] { RemovalMask::polygon_mask({0, 0}, {{1, 1}, {2, 2}}).validate(16); }),
              ErrorCode::DegeneratePolygon);
    EXPECT_EQ(code_of([] { RemovalMask::polygon_mask({0, 0}, {{1, 1}, {2, 2}, {-1, 3}}).validate(16); }),
              ErrorCode::MaskOutOfBounds);
}

TEST(Mask, JsonRoundTrip) {
    const auto r = RemovalMask::rectangle({1, 2}, 3, 4, 5, 6);
    EXPECT_EQ(nlohmann::json(nlohmann::json(r).get<RemovalMask>()), nlohmann::json(r));
    const auto p = RemovalMask::polygon_mask({0, 1}, {{1, 1}, {5, 1.5}, {3, 7}});
    EXPECT_EQ(nlohmann::json(nlohmann::json(p).get<RemovalMask>()), nlohmann::json(p));
    EXPECT_EQ(code_of([] { nlohmann::json{{"shape", "circle"}}.get<RemovalMask>(); }), ErrorCode::InvalidParams);
}

class RemovalFixture : public ::testing::Test {
protected:
    void SetUp() override {
        scene = scene_from_raster(synth::synthetic_scene(64, 96, 12, 3));
        grid = slice_tiles(scene, 32);
        translator = std::make_unique<Translator>(synth::toy_checkpoint(grid, 2, 3));
    }
    Scene scene;
    TileGrid grid;
    std::unique_ptr<Translator> translator;
};

TEST_F(RemovalFixture, ChangesOnlyTheMaskedTile) {
    const auto mask = RemovalMask::rectangle({1, 2}, 4, 4, 20, 20);
    const auto r = remove_object(scene, grid, mask, *translator, {});
    EXPECT_EQ(r.forged_scene.provenance, Provenance::forged);
    EXPECT_EQ(r.checkpoint_id, translator->checkpoint().id);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 96; ++x) {
            if (y >= 32 && x >= 64) continue;
            for (int c = 0; c < 3; ++c) ASSERT_EQ(r.forged_scene.pixels.at(y, x, c), scene.pixels.at(y, x, c));
        }
    }
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            for (int c = 0; c < 3; ++c) {
                ASSERT_EQ(r.forged_scene.pixels.at(32 + y, 64 + x, c), r.output_tile.pixels.at(y, x, c));
            }
        }
    }
    EXPECT_EQ(r.edited_cfi.data, erase_edges(r.source_cfi, mask).data);
    EXPECT_LE(r.edited_cfi.white_count(), r.source_cfi.white_count());
}

TEST_F(RemovalFixture, EmptyMaskMatchesBaseline) {
    // A one-pixel mask over a pixel with no edge leaves the CFI untouched.
    const auto src = extract_cfi(grid.at({0, 0}));
    int px = -1;
    for (int i = 0; i < 32 * 32 && px < 0; ++i) {
        if (!src.data.data[i]) px = i;
    }
    ASSERT_GE(px, 0);
    const auto mask = RemovalMask::rectangle({0, 0}, px % 32, px / 32, px % 32, px / 32);
    const auto r = remove_object(scene, grid, mask, *translator, {});
    EXPECT_EQ(r.output_tile.pixels, reconstruction_baseline(scene, grid, {0, 0}, *translator, {}).pixels);
}

TEST_F(RemovalFixture, Errors) {
    EXPECT_EQ(code_of([&] { remove_object(scene, grid, RemovalMask::rectangle({2, 0}, 0, 0, 1, 1), *translator, {}); }),
              ErrorCode::MaskOutOfBounds);
    CannyParams other;
    other.high_threshold = 120;
    EXPECT_EQ(code_of([&] { remove_object(scene, grid, RemovalMask::rectangle({0, 0}, 0, 0, 1, 1), *translator, other); }),
              ErrorCode::CheckpointMismatch);
    const auto grid16 = slice_tiles(scene, 16);
    EXPECT_EQ(code_of([&] { remove_object(scene, grid16, RemovalMask::rectangle({0, 0}, 0, 0, 1, 1), *translator, {}); }),
              ErrorCode::CheckpointMismatch);
    const Scene other_scene = scene_from_raster(Raster(32, 32, 3));
    EXPECT_EQ(code_of([&] { remove_object(other_scene, grid, RemovalMask::rectangle({0, 0}, 0, 0, 1, 1), *translator, {}); }),
              ErrorCode::InconsistentGrid);
}

TEST_F(RemovalFixture, SavedResultLayout) {
    const auto r = remove_object(scene, grid, RemovalMask::rectangle({0, 1}, 0, 0, 5, 5), *translator, {});
    const auto dir = fs::temp_directory_path() / "satforge_test_forged";
    fs::remove_all(dir);
    save_forged_result(r, dir);
    for (const char* f : {"forged.png", "edited_cfi.png", "output_tile.png", "mask.json", "meta.json"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    EXPECT_EQ(read_image(dir / "forged.png"), r.forged_scene.pixels);
    nlohmann::json meta;
    std::ifstream(dir / "meta.json") >> meta;
    EXPECT_EQ(meta["checkpoint_id"], translator->checkpoint().id);
    EXPECT_EQ(meta["provenance"], "forged");
}
