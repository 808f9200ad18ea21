#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "satforge/metrics.hpp"
#include "satforge/removal.hpp"
#include "support/synthetic.hpp"
#include "support/torch_helpers.hpp"

using namespace satforge;
namespace synth = satforge::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(SATFORGE_CLI) + " " + args + " 2>/dev/null";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("satforge_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        scene = synth::synthetic_scene(64, 64, 8, 3);
        write_png(dir / "scene.png", scene);
    }
    std::string q(const fs::path& p) const { return "'" + p.string() + "'"; }

    fs::path dir;
    Raster scene;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("").status, 2);
    EXPECT_EQ(run("slice --in " + q(dir / "scene.png")).status, 2);
    EXPECT_EQ(run("frobnicate").status, 2);
    EXPECT_EQ(run("metrics --a " + q(dir / "scene.png") + " --b " + q(dir / "scene.png") + " --region disk").status, 2);
    EXPECT_EQ(run("--help").status, 0);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
    EXPECT_EQ(run("slice --in " + q(dir / "absent.png") + " --out " + q(dir / "t")).status, 1);
    EXPECT_EQ(run("slice --in " + q(dir / "scene.png") + " --out " + q(dir / "t") + " --tile 3").status, 1);
}

TEST_F(Cli, SliceWritesTilesMatchingTheLibrary) {
    ASSERT_EQ(run("slice --in " + q(dir / "scene.png") + " --out " + q(dir / "tiles") + " --tile 32").status, 0);
    const auto grid = slice_tiles(scene_from_raster(scene), 32);
    int files = 0;
    for (const auto& e : fs::directory_iterator(dir / "tiles")) files += e.path().extension() == ".png";
    EXPECT_EQ(files, 4);
    for (const auto& t : grid.tiles) {
        const auto name = "tile_" + std::to_string(t.coord.row) + "_" + std::to_string(t.coord.col) + ".png";
        const auto bytes = encode_png(t.pixels);
        EXPECT_EQ(slurp(dir / "tiles" / name), std::string(bytes.begin(), bytes.end())) << name;
    }
    json meta;
    std::ifstream(dir / "tiles" / "grid.json") >> meta;
    EXPECT_EQ(meta, grid_metadata(grid));
}

TEST_F(Cli, ExtractCfiMatchesTheLibrary) {
    ASSERT_EQ(run("extract-cfi --in " + q(dir / "scene.png") + " --out " + q(dir / "cfi.png") + " --high 120").status,
              0);
    CannyParams p;
    p.high_threshold = 120;
    const auto bytes = encode_png(extract_cfi(scene, p).data);
    EXPECT_EQ(slurp(dir / "cfi.png"), std::string(bytes.begin(), bytes.end()));
}

TEST_F(Cli, MetricsReportMatchesTheLibrary) {
    Raster other = scene;
    for (int y = 40; y < 50; ++y) other.at(y, 40, 1) ^= 0x55;
    write_png(dir / "other.png", other);
    const auto r = run("metrics --a " + q(dir / "scene.png") + " --b " + q(dir / "other.png") +
                       " --region tile --row 1 --col 1 --tile 32");
    ASSERT_EQ(r.status, 0);
    const auto expected = to_json(degradation_report(scene, other, RegionSelector::of_tile({1, 1}, 32)));
    EXPECT_EQ(json::parse(r.out), expected);
    EXPECT_GT(expected["mse_unit"].get<double>(), 0.0);
}

TEST_F(Cli, TrainThenRemoveIsLocal) {
    std::ofstream(dir / "cfg.json") << json{
        {"generator", {{"family", "unet_skip"}, {"base_channels", 4}, {"depth", 3}}},
        {"discriminator", {{"num_scales", 1}, {"n_layers", 1}, {"base_channels", 4}}},
        {"train", {{"steps", 2}}},
    }.dump();
    const auto t = run("train --scene " + q(dir / "scene.png") + " --out " + q(dir / "ckpt") + " --config " +
                       q(dir / "cfg.json") + " --tile 32");
    ASSERT_EQ(t.status, 0);
    const auto ckpt = load_checkpoint(dir / "ckpt");
    EXPECT_EQ(json::parse(t.out)["checkpoint_id"], ckpt.id);

    std::ofstream(dir / "mask.json") << json(RemovalMask::rectangle({0, 1}, 3, 3, 15, 15)).dump();
    const auto r = run("remove --scene " + q(dir / "scene.png") + " --mask " + q(dir / "mask.json") + " --ckpt " +
                       q(dir / "ckpt") + " --out " + q(dir / "forged"));
    ASSERT_EQ(r.status, 0);
    const Raster forged = read_image(dir / "forged" / "forged.png");
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            if (y < 32 && x >= 32) continue;
            for (int c = 0; c < 3; ++c) ASSERT_EQ(forged.at(y, x, c), scene.at(y, x, c));
        }
    }
    // Same checkpoint through the library gives the same pixels.
    const Translator tr(ckpt);
    const Scene s = scene_from_raster(scene);
    const auto lib = remove_object(s, slice_tiles(s, 32), RemovalMask::rectangle({0, 1}, 3, 3, 15, 15), tr,
                                   ckpt.provenance.canny);
    EXPECT_EQ(forged, lib.forged_scene.pixels);

    std::ofstream(dir / "far.json") << json(RemovalMask::rectangle({3, 3}, 0, 0, 1, 1)).dump();
    EXPECT_EQ(run("remove --scene " + q(dir / "scene.png") + " --mask " + q(dir / "far.json") + " --ckpt " +
                  q(dir / "ckpt") + " --out " + q(dir / "forged2"))
                  .status,
              1);
}
