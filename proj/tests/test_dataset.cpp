#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "satforge/dataset.hpp"
#include "satforge/error.hpp"
#include "support/synthetic.hpp"
#include "support/torch_helpers.hpp"

using namespace satforge;
namespace synth = satforge::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("satforge_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Writes n tiny pristine PNGs and returns their paths.
std::vector<std::string> pristine_files(const fs::path& dir, int n) {
    fs::create_directories(dir);
    std::vector<std::string> out;
    const Raster px(4, 4, 3, 10);
    for (int i = 0; i < n; ++i) {
        const auto p = dir / ("p" + std::to_string(1000 + i) + ".png");
        write_png(p, px);
        out.push_back(p.string());
    }
    return out;
}

std::vector<RemovalJobSpec> job_list(int n) {
    std::vector<RemovalJobSpec> jobs;
    for (int i = 0; i < n; ++i) {
        RemovalJobSpec j;
        j.job_id = "job" + std::to_string(1000 + i);
        jobs.push_back(j);
    }
    return jobs;
}

// Stands in for the removal pipeline: persists a result directory without a translator.
JobRunner fake_runner(const fs::path& forged_root, std::set<std::string> fail_ids = {}) {
    return [forged_root, fail_ids](const RemovalJobSpec& job) {
        if (fail_ids.contains(job.job_id)) throw Error(ErrorCode::MaskOutOfBounds, "bad mask");
        const auto dir = forged_root / job.job_id;
        fs::create_directories(dir);
        write_png(dir / "forged.png", Raster(4, 4, 3, 200));
        std::ofstream(dir / "meta.json") << "{}";
        return dir;
    };
}

}  // namespace

TEST(Dataset, PublishedSplitCounts) {
    const auto root = fresh("ds_counts");
    const auto out = build_forged_dataset(job_list(257), pristine_files(root / "images", 380),
                                          fake_runner(root / "forged"), root);
    EXPECT_TRUE(out.failures.empty());
    const auto& c = out.manifest.counts;
    EXPECT_EQ(c.at(Split::train), (SplitCounts{162, 266}));
    EXPECT_EQ(c.at(Split::validation), (SplitCounts{95, 114}));
    const auto report = validate_manifest(out.manifest);
    EXPECT_TRUE(report.ok()) << to_json(report).dump();
}

TEST(Dataset, DeterministicAcrossWorkerCounts) {
    const auto root = fresh("ds_det");
    const auto pristine = pristine_files(root / "images", 30);
    BuildOptions one, four;
    one.seed = four.seed = 42;
    four.workers = 4;
    const auto a = build_forged_dataset(job_list(25), pristine, fake_runner(root / "forged"), root, one);
    const auto b = build_forged_dataset(job_list(25), pristine, fake_runner(root / "forged"), root, four);
    EXPECT_EQ(to_json(a.manifest).dump(), to_json(b.manifest).dump());
    EXPECT_EQ(manifest_csv(a.manifest), manifest_csv(b.manifest));

    BuildOptions other = one;
    other.seed = 43;
    const auto c = build_forged_dataset(job_list(25), pristine, fake_runner(root / "forged"), root, other);
    EXPECT_NE(to_json(a.manifest).dump(), to_json(c.manifest).dump());
    EXPECT_EQ(a.manifest.counts, c.manifest.counts);
}

TEST(Dataset, FailuresAreRecordedNotFatal) {
    const auto root = fresh("ds_fail");
    const auto out = build_forged_dataset(job_list(10), pristine_files(root / "images", 5),
                                          fake_runner(root / "forged", {"job1003", "job1007"}), root);
    ASSERT_EQ(out.failures.size(), 2u);
    EXPECT_EQ(out.failures[0].job_id, "job1003");
    EXPECT_EQ(out.failures[0].code, "MaskOutOfBounds");
    int forged = 0;
    for (const auto& e : out.manifest.entries) forged += e.label == Label::forged;
    EXPECT_EQ(forged, 8);
    EXPECT_TRUE(validate_manifest(out.manifest).ok());
}

TEST(Dataset, EmptyPristinePoolIsDegenerate) {
    try {
        build_forged_dataset(job_list(2), {}, fake_runner(fresh("ds_empty")), fresh("ds_empty"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateManifest);
    }
}

TEST(Dataset, ValidatorDetectsEachViolation) {
    const auto root = fresh("ds_viol");
    auto m = build_forged_dataset(job_list(4), pristine_files(root / "images", 4), fake_runner(root / "forged"), root)
                 .manifest;
    ASSERT_TRUE(validate_manifest(m).ok());

    auto dup = m;
    dup.entries.push_back(dup.entries.front());
    dup.recount();
    EXPECT_EQ(validate_manifest(dup).count("duplicate_path"), 1u);

    auto counts = m;
    counts.counts[Split::train].pristine += 1;
    EXPECT_EQ(validate_manifest(counts).count("count_mismatch"), 1u);

    auto missing = m;
    missing.entries.back().image_path = "images/nope.png";
    EXPECT_EQ(validate_manifest(missing).count("missing_path"), 1u);

    auto unreachable = m;
    for (auto& e : unreachable.entries) {
        if (e.label == Label::forged) {
            fs::remove(unreachable.resolve(*e.provenance) / "meta.json");
            break;
        }
    }
    EXPECT_EQ(validate_manifest(unreachable).count("unreachable_provenance"), 1u);
}

TEST(Dataset, ManifestSaveLoadRoundTrip) {
    const auto root = fresh("ds_io");
    const auto m = build_forged_dataset(job_list(6), pristine_files(root / "images", 6), fake_runner(root / "forged"),
                                        root)
                       .manifest;
    save_manifest(m, root / "manifests" / "m.json");
    EXPECT_TRUE(fs::exists(root / "manifests" / "m.csv"));
    const auto back = load_manifest(root / "manifests" / "m.json");
    EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
    EXPECT_TRUE(validate_manifest(back).ok());

    std::string header;
    std::ifstream(root / "manifests" / "m.csv") >> header;
    EXPECT_EQ(header, "image_path,label,split,provenance,source_id");

    // Tampered counts survive the load so the validator can see them.
    auto j = to_json(m);
    j["counts"]["train"]["forged"] = 99;
    std::ofstream(root / "manifests" / "bad.json") << j.dump();
    EXPECT_EQ(validate_manifest(load_manifest(root / "manifests" / "bad.json")).count("count_mismatch"), 1u);

    EXPECT_THROW(load_manifest(root / "manifests" / "absent.json"), Error);
}

TEST(Dataset, PipelineRunnerProducesForgedScenes) {
    const auto root = fresh("ds_pipe");
    const Workspace ws{root};
    ws.create();
    const Raster scene = synth::synthetic_scene(64, 64, 5, 3);
    write_png(ws.images() / "scene.png", scene);
    const auto grid = slice_tiles(scene_from_raster(scene), 32);
    const Translator t(synth::toy_checkpoint(grid, 1));

    std::vector<RemovalJobSpec> jobs;
    for (int i = 0; i < 3; ++i) {
        RemovalJobSpec j;
        j.job_id = "r" + std::to_string(i);
        j.source_image = (ws.images() / "scene.png").string();
        j.mask = RemovalMask::rectangle({i % 2, 1}, 2, 2, 12, 12);
        j.checkpoint_id = t.checkpoint().id;
        jobs.push_back(j);
    }
    jobs[2].checkpoint_id = "unknown";
    auto runner = make_pipeline_runner(ws, [&](const std::string& id) -> const Translator& {
        if (id != t.checkpoint().id) throw Error(ErrorCode::NotFound, "no checkpoint " + id);
        return t;
    });
    const auto out = build_forged_dataset(jobs, {(ws.images() / "scene.png").string()}, runner, root);
    EXPECT_EQ(out.failures.size(), 1u);
    EXPECT_TRUE(validate_manifest(out.manifest).ok()) << to_json(validate_manifest(out.manifest)).dump();
    const Raster forged = read_image(ws.forged() / "r0" / "forged.png");
    EXPECT_EQ(forged.height, 64);
    for (int y = 32; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) ASSERT_EQ(forged.at(y, x, 0), scene.at(y, x, 0));
    }
}

TEST(Dataset, JobSpecJsonRoundTrip) {
    RemovalJobSpec j;
    j.job_id = "a";
    j.source_image = "x.png";
    j.mask = RemovalMask::polygon_mask({1, 1}, {{1, 1}, {4, 1}, {2, 5}});
    j.checkpoint_id = "c";
    j.canny.high_threshold = 140;
    EXPECT_EQ(nlohmann::json(nlohmann::json(j).get<RemovalJobSpec>()), nlohmann::json(j));
}

TEST(Ingest, ReadsPolygonsAndSkipsBadRecords) {
    const auto root = fresh("ingest");
    fs::create_directories(root / "images");
    fs::create_directories(root / "annotations");
    write_png(root / "images" / "P0001.png", Raster(8, 8, 3));
    const nlohmann::json doc = {
        {"images", {{{"id", 1}, {"file_name", "P0001.png"}, {"width", 8}, {"height", 8}},
                    {{"id", 2}, {"file_name", "absent.png"}}}},
        {"categories", {{{"id", 5}, {"name", "plane"}}}},
        {"annotations",
         {{{"image_id", 1}, {"category_id", 5}, {"segmentation", {{1, 1, 6, 1, 6, 6}}}},
          {{"image_id", 1}, {"category_id", 99}, {"segmentation", {{1, 1, 6, 1, 6, 6}}}},
          {{"image_id", 2}, {"category_id", 5}, {"segmentation", {{1, 1, 6, 1, 6, 6}}}},
          {{"image_id", 1}, {"category_id", 5}, {"segmentation", {{1, 1}}}}}},
    };
    std::ofstream(root / "annotations" / "train.json") << doc.dump();
    const auto idx = ingest_isaid(root);
    ASSERT_EQ(idx.images.size(), 1u);
    ASSERT_EQ(idx.by_image.at(1).size(), 1u);
    EXPECT_EQ(idx.by_image.at(1)[0].vertices.size(), 3u);
    EXPECT_EQ(idx.instances_per_class.at(5), 1);
    EXPECT_EQ(idx.skipped_malformed, 2);
    EXPECT_EQ(idx.skipped_missing_image, 1);
    EXPECT_EQ(idx.category_names.at(5), "plane");
}

TEST(Ingest, Errors) {
    const auto empty = fresh("ingest_empty");
    try {
        ingest_isaid(empty);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDirectory);
    }
    write_png(empty / "x.png", Raster(2, 2, 3));
    try {
        ingest_isaid(empty);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingAnnotations);
    }
}
