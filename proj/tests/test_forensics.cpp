#include <cmath>
#include <filesystem>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "satforge/error.hpp"
#include "satforge/forensics.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

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

int class_id_of(const std::string& name) {
    for (const auto& e : class_palette()) {
        if (e.name == name) return e.class_id;
    }
    return -1;
}

// Eight scenes per class; forged ones carry a flat gray patch.
void toy_set(std::vector<Raster>& images, std::vector<int>& labels, int size = 32, int per_class = 8) {
    for (int i = 0; i < 2 * per_class; ++i) {
        Raster r = synth::synthetic_scene(size, size, 100 + i, 1);
        const int label = i % 2;
        if (label) synth::paint_box(r, size / 4, size / 4, 3 * size / 4, 3 * size / 4, 128, 128, 128);
        images.push_back(std::move(r));
        labels.push_back(label);
    }
}

}  // namespace

TEST(Roc, AucMatchesMannWhitneyOnRandomSets) {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 29);
        std::vector<double> s(n);
        std::vector<int> l(n);
        for (int i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 8) / 8.0;  // coarse grid forces ties
            l[i] = static_cast<int>(rng() % 2);
        }
        l[0] = 0;
        l[1] = 1;
        const auto r = roc_curve(s, l);
        EXPECT_NEAR(r.auc, oracle::mann_whitney_auc(s, l), 1e-12) << trial;
        ASSERT_GE(r.points.size(), 2u);
        EXPECT_EQ(r.points.front().fpr, 0.0);
        EXPECT_EQ(r.points.front().tpr, 0.0);
        EXPECT_EQ(r.points.back().fpr, 1.0);
        EXPECT_EQ(r.points.back().tpr, 1.0);
        for (std::size_t k = 1; k < r.points.size(); ++k) {
            EXPECT_GE(r.points[k].fpr, r.points[k - 1].fpr);
            EXPECT_GE(r.points[k].tpr, r.points[k - 1].tpr);
            EXPECT_LT(r.points[k].threshold, r.points[k - 1].threshold);
        }
    }
}

TEST(Roc, PerfectAndInvertedRankings) {
    EXPECT_EQ(roc_curve({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}).auc, 1.0);
    EXPECT_EQ(roc_curve({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}).auc, 0.0);
    EXPECT_EQ(roc_curve({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}).auc, 0.5);
}

TEST(Roc, Errors) {
    EXPECT_EQ(code_of([] { roc_curve({0.1, 0.2}, {1, 1}); }), ErrorCode::SingleClass);
    EXPECT_EQ(code_of([] { roc_curve({0.1}, {1}); }), ErrorCode::InvalidParams);
    EXPECT_EQ(code_of([] { roc_curve({0.1, 0.2}, {1}); }), ErrorCode::InvalidParams);
    EXPECT_EQ(code_of([] { roc_curve({0.1, NAN}, {1, 0}); }), ErrorCode::InvalidParams);
    EXPECT_EQ(code_of([] { roc_curve({0.1, 0.2}, {2, 0}); }), ErrorCode::InvalidParams);
}

TEST(Roc, JsonAndSvg) {
    const auto r = roc_curve({0.9, 0.4, 0.6, 0.1}, {1, 0, 1, 0});
    const auto j = to_json(r);
    EXPECT_EQ(j["positives"], 2);
    EXPECT_EQ(j["negatives"], 2);
    EXPECT_EQ(j["points"].size(), r.points.size());
    const auto svg = roc_svg({{"a", r}});
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Scoring, StubFindsEdgesInsidePolygonOnly) {
    const int airplane = class_id_of("Airplane");
    ASSERT_GT(airplane, 0);
    Raster img(64, 64, 3, 90);
    for (int k = 0; k < 4; ++k) synth::paint_box(img, 8 + 5 * k, 8, 10 + 5 * k, 28, 250, 250, 250);
    const std::vector<PolygonAnnotation> anns = {{airplane, {{4, 4}, {32, 4}, {32, 32}, {4, 32}}},
                                                 {class_id_of("Ship"), {{40, 40}, {60, 40}, {60, 60}, {40, 60}}}};
    StubScorer stub(anns);
    const auto found = score_objects(img, stub);
    ASSERT_EQ(found.size(), 1u);
    EXPECT_EQ(found[0].label, "Airplane");
    EXPECT_GE(found[0].confidence, 90.0);

    EXPECT_TRUE(score_objects(Raster(64, 64, 3, 90), stub).empty());
}

TEST(Scoring, ClampDedupAndSort) {
    struct Fixed : ObjectScorer {
        std::vector<DetectionScore> detect(const Raster&) override {
            return {{"b", 40}, {"a", 120}, {"b", 70}, {"c", -3}, {"d", 70}};
        }
    } fixed;
    const auto out = score_objects(Raster(1, 1, 3), fixed);
    const std::vector<DetectionScore> want = {{"a", 100}, {"b", 70}, {"d", 70}, {"c", 0}};
    EXPECT_EQ(out, want);
}

TEST(Scoring, HttpClientRoundTripAndUnavailable) {
    httplib::Server srv;
    int calls = 0;
    srv.Post("/detect", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        if (calls == 1) {
            res.status = 503;
            return;
        }
        const Raster img = decode_image({reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()});
        res.set_content(nlohmann::json::array({{{"label", "Plane"}, {"confidence", img.width}}}).dump(),
                        "application/json");
    });
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread t([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();

    HttpScorerClient client({.url = "http://127.0.0.1:" + std::to_string(port) + "/detect",
                             .retries = 2,
                             .min_interval = std::chrono::milliseconds(1),
                             .timeout = std::chrono::seconds(5)});
    const auto out = client.detect(Raster(3, 7, 3));
    srv.stop();
    t.join();
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].label, "Plane");
    EXPECT_EQ(out[0].confidence, 7.0);
    EXPECT_EQ(calls, 2);

    HttpScorerClient dead({.url = "http://127.0.0.1:" + std::to_string(port) + "/detect",
                           .retries = 1,
                           .min_interval = std::chrono::milliseconds(1),
                           .timeout = std::chrono::seconds(1)});
    EXPECT_EQ(code_of([&] { dead.detect(Raster(2, 2, 3)); }), ErrorCode::ScorerUnavailable);
    EXPECT_EQ(code_of([] { HttpScorerClient({}); }), ErrorCode::ScorerUnavailable);
}

TEST(DetectionTableTest, CsvRoundTripAndReference) {
    const auto ref = reference_detection_table();
    const auto back = detection_table_from_csv(detection_table_csv(ref));
    EXPECT_EQ(back.labels, ref.labels);
    EXPECT_EQ(back.scores, ref.scores);
    EXPECT_DOUBLE_EQ(ref.scores.at("Airplane").at(FeatureKind::CFI)[3], 87.8);
    EXPECT_DOUBLE_EQ(ref.scores.at("Terminal").at(FeatureKind::SFI)[2], 69.2);
    EXPECT_DOUBLE_EQ(ref.scores.at("Terminal").at(FeatureKind::CFI)[0], 0.0);

    DetectionTable t;
    t.labels = {"Airplane", "Ship"};
    t.record(FeatureKind::CFI, 1, {{"Airplane", 91.5}});
    EXPECT_DOUBLE_EQ(t.scores.at("Airplane").at(FeatureKind::CFI)[1], 91.5);
    EXPECT_DOUBLE_EQ(t.scores.at("Airplane").at(FeatureKind::CFI)[0], 0.0);
    EXPECT_DOUBLE_EQ(t.scores.at("Ship").at(FeatureKind::CFI)[1], 0.0);
}

TEST(Backbone, BuiltinIsSeededAndFileErrorsAreReported) {
    auto a = load_backbone("builtin:3");
    auto b = load_backbone("builtin:3");
    const auto x = torch::rand({2, 3, 32, 32});
    torch::NoGradGuard ng;
    EXPECT_TRUE(torch::equal(a->logits(x), b->logits(x)));
    EXPECT_EQ(a->num_classes(), 1000);
    EXPECT_EQ(code_of([] { load_backbone("/nonexistent/model.pt"); }), ErrorCode::BackboneUnavailable);
    const auto junk = fs::temp_directory_path() / "satforge_junk.pt";
    std::ofstream(junk) << "junk";
    EXPECT_EQ(code_of([&] { load_backbone(junk.string()); }), ErrorCode::BackboneUnavailable);
}

TEST(Projection, SoftmaxRowsSumToOne) {
    std::vector<Raster> images;
    std::vector<int> labels;
    toy_set(images, labels, 32, 3);
    auto bb = load_backbone("builtin");
    const auto p = embed_projection(images, *bb, 1, {}, {}, 32);
    ASSERT_EQ(p.features.size(), images.size());
    for (const auto& row : p.features) {
        ASSERT_EQ(row.size(), 1000u);
        double s = 0;
        for (double v : row) s += v;
        EXPECT_NEAR(s, 1.0, 1e-5);
    }
}

TEST(Projection, DeterministicForSeed) {
    std::vector<Raster> images;
    std::vector<int> labels;
    toy_set(images, labels, 32, 4);
    auto bb = load_backbone("builtin");
    const auto a = embed_projection(images, *bb, 9, {}, {}, 32);
    const auto b = embed_projection(images, *bb, 9, {}, {}, 32);
    EXPECT_EQ(a.points, b.points);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Projection, IdenticalImagesShareFeatures) {
    std::vector<Raster> images(3, synth::synthetic_scene(32, 32, 3));
    Raster other = synth::synthetic_scene(32, 32, 4);
    for (auto& v : other.data) v = static_cast<std::uint8_t>(255 - v);
    images.push_back(other);
    images.push_back(other);
    auto bb = load_backbone("builtin");
    const auto p = embed_projection(images, *bb, 2, {}, {}, 32);
    EXPECT_EQ(p.features[0], p.features[1]);
    EXPECT_EQ(p.features[0], p.features[2]);
    EXPECT_EQ(p.features[3], p.features[4]);
    auto d = [&](int i, int j) { return std::hypot(p.points[i][0] - p.points[j][0], p.points[i][1] - p.points[j][1]); };
    EXPECT_LT(std::max(d(0, 1), d(3, 4)), d(0, 3));
}

TEST(Tsne, SmallSetsStayBounded) {
    const std::vector<std::vector<double>> x = {{0, 0}, {0, 0}, {0, 0}, {0, 0}, {1, 1}, {1, 1}};
    const auto y = tsne(x, 2);
    for (const auto& q : y) EXPECT_LT(std::hypot(q[0], q[1]), 50.0);
    EXPECT_LT(std::hypot(y[4][0] - y[5][0], y[4][1] - y[5][1]), 1e-3);
}

TEST(Projection, SeparatesBrightFromDark) {
    std::vector<Raster> images;
    std::vector<int> labels;
    std::mt19937 rng(5);
    for (int i = 0; i < 20; ++i) {
        Raster r = synth::random_raster(32, 32, 3, rng);
        for (auto& v : r.data) v = static_cast<std::uint8_t>(i % 2 ? 200 + v % 56 : v % 56);
        images.push_back(r);
        labels.push_back(i % 2);
    }
    auto bb = load_backbone("builtin");
    const auto p = embed_projection(images, *bb, 3, {}, {}, 32);
    std::vector<std::vector<double>> pts;
    for (const auto& q : p.points) pts.push_back({q[0], q[1]});
    EXPECT_GT(oracle::silhouette(pts, labels), 0.5);
    const auto svg = projection_svg(p);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Projection, TooFewImages) {
    auto bb = load_backbone("builtin");
    EXPECT_EQ(code_of([&] { embed_projection({Raster(8, 8, 3), Raster(8, 8, 3)}, *bb, 0); }), ErrorCode::TooFewImages);
}

TEST(Tsne, PerplexityClampedForSmallSets) {
    const std::vector<std::vector<double>> x = {{0, 0}, {0, 1}, {5, 5}, {5, 6}};
    const auto y = tsne(x, 1);
    ASSERT_EQ(y.size(), 4u);
    for (const auto& p : y) {
        EXPECT_TRUE(std::isfinite(p[0]));
        EXPECT_TRUE(std::isfinite(p[1]));
    }
}

TEST(Detector, ConfigDefaultsAndValidation) {
    const auto b = DetectorConfig::defaults(DetectorKind::binary_cnn);
    EXPECT_EQ(b.optimizer, OptimizerKind::adam);
    EXPECT_DOUBLE_EQ(b.learning_rate, 0.001);
    EXPECT_EQ(b.epochs, 100);
    const auto f = DetectorConfig::defaults(DetectorKind::finetune_pretrained);
    EXPECT_EQ(f.optimizer, OptimizerKind::rmsprop);
    EXPECT_EQ(f.epochs, 100);
    auto bad = b;
    bad.epochs = 0;
    EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::InvalidParams);
    EXPECT_EQ(nlohmann::json(nlohmann::json(f).get<DetectorConfig>()), nlohmann::json(f));
}

TEST(Detector, BinaryCnnHasTenWeightedLayers) {
    BinaryCnn net(64);
    int weighted = 0;
    for (const auto& m : net->modules(false)) {
        if (m->as<torch::nn::Conv2d>() || m->as<torch::nn::Linear>()) ++weighted;
    }
    EXPECT_EQ(weighted, 10);
    torch::NoGradGuard ng;
    EXPECT_EQ(net->forward(torch::zeros({3, 3, 64, 64})).sizes(), (std::vector<std::int64_t>{3}));
}

TEST(Detector, ImagesToBatchResizesBilinearly) {
    const auto b = images_to_batch({Raster(10, 20, 3, 255), Raster(40, 40, 3, 0)}, 16);
    EXPECT_EQ(b.sizes(), (std::vector<std::int64_t>{2, 3, 16, 16}));
    EXPECT_NEAR(b[0].min().item<float>(), 1.0f, 1e-6);
    EXPECT_NEAR(b[1].max().item<float>(), 0.0f, 1e-6);
}

TEST(Detector, TrainPredictSaveLoad) {
    std::vector<Raster> images;
    std::vector<int> labels;
    toy_set(images, labels);
    for (auto kind : {DetectorKind::binary_cnn, DetectorKind::finetune_pretrained}) {
        auto cfg = DetectorConfig::defaults(kind);
        cfg.epochs = 3;
        cfg.input_size = 32;
        auto det = train_detector(images, labels, cfg);
        ASSERT_EQ(det->history.size(), 3u);
        const auto p = det->predict(images);
        for (double v : p) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        const auto roc = roc_curve(p, labels);
        EXPECT_GE(roc.auc, 0.0);
        EXPECT_LE(roc.auc, 1.0);

        const auto dir = fs::temp_directory_path() / ("satforge_det_" + to_string(kind));
        fs::remove_all(dir);
        save_detector(*det, dir);
        auto back = load_detector(dir);
        EXPECT_EQ(back->predict(images), p);
        EXPECT_EQ(nlohmann::json(back->config()), nlohmann::json(det->config()));
    }
}

TEST(Detector, ManifestNeedsBothLabels) {
    DatasetManifest m;
    m.root = fs::temp_directory_path();
    m.entries.push_back({"a.png", Label::pristine, Split::train, std::nullopt, "a"});
    m.recount();
    EXPECT_EQ(code_of([&] { train_detector(m, DetectorConfig::defaults(DetectorKind::binary_cnn)); }),
              ErrorCode::DegenerateManifest);
}
