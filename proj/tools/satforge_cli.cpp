// satforge command-line interface.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "satforge/dataset.hpp"
#include "satforge/error.hpp"
#include "satforge/forensics.hpp"
#include "satforge/metrics.hpp"
#include "satforge/removal.hpp"
#include "satforge/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace satforge;

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::UnreadableFile, "malformed JSON in " + p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream(p) << s;
}

struct CannyOpts {
    double sigma = CannyParams{}.gaussian_sigma;
    double low = CannyParams{}.low_threshold;
    double high = CannyParams{}.high_threshold;

    void add(CLI::App* app) {
        app->add_option("--sigma", sigma, "Gaussian sigma")->capture_default_str();
        app->add_option("--low", low, "hysteresis low threshold")->capture_default_str();
        app->add_option("--high", high, "hysteresis high threshold")->capture_default_str();
    }
    CannyParams params() const {
        CannyParams p;
        p.gaussian_sigma = sigma;
        p.low_threshold = low;
        p.high_threshold = high;
        p.validate();
        return p;
    }
};

std::vector<PolygonAnnotation> read_annotations(const fs::path& p) {
    const json j = read_json(p);
    try {
        return j.get<std::vector<PolygonAnnotation>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidParams, std::string("annotations must be [{class_id, vertices}]: ") + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"satforge: one-shot GAN object removal for satellite imagery"};
    app.require_subcommand(1);

    // slice
    auto* slice = app.add_subcommand("slice", "Cut a scene into tiles");
    std::string in_path, out_path, pad = "reflect";
    int tile = kDefaultTileSize;
    slice->add_option("--in", in_path)->required();
    slice->add_option("--out", out_path)->required();
    slice->add_option("--tile", tile)->capture_default_str();
    slice->add_option("--pad", pad, "reflect | zero")->capture_default_str();

    // extract-cfi
    auto* cfi = app.add_subcommand("extract-cfi", "Canny feature image of a tile or scene");
    CannyOpts canny;
    cfi->add_option("--in", in_path)->required();
    cfi->add_option("--out", out_path)->required();
    canny.add(cfi);

    // render-sfi
    auto* sfi = app.add_subcommand("render-sfi", "Segmented feature image of one tile");
    std::string annotations_path;
    int row = 0, col = 0;
    sfi->add_option("--annotations", annotations_path, "JSON list of {class_id, vertices}")->required();
    sfi->add_option("--row", row);
    sfi->add_option("--col", col);
    sfi->add_option("--tile", tile)->capture_default_str();
    sfi->add_option("--out", out_path)->required();

    // train
    auto* train = app.add_subcommand("train", "One-shot translator training on a single scene");
    std::string scene_path, config_path, feature = "cfi";
    int steps = -1;
    std::uint64_t seed = 0;
    train->add_option("--scene", scene_path)->required();
    train->add_option("--out", out_path, "checkpoint directory")->required();
    train->add_option("--config", config_path, "JSON {generator, discriminator, train}");
    train->add_option("--tile", tile)->capture_default_str();
    train->add_option("--feature", feature, "cfi | sfi")->capture_default_str();
    train->add_option("--annotations", annotations_path, "required for sfi");
    train->add_option("--steps", steps, "override train.steps");
    train->add_option("--seed", seed);
    canny.add(train);

    // remove
    auto* remove = app.add_subcommand("remove", "Erase a masked region and re-translate its tile");
    std::string mask_path, ckpt_path;
    remove->add_option("--scene", scene_path)->required();
    remove->add_option("--mask", mask_path)->required();
    remove->add_option("--ckpt", ckpt_path)->required();
    remove->add_option("--out", out_path)->required();

    // baseline
    auto* baseline = app.add_subcommand("baseline", "Translate an unedited tile");
    baseline->add_option("--scene", scene_path)->required();
    baseline->add_option("--ckpt", ckpt_path)->required();
    baseline->add_option("--row", row);
    baseline->add_option("--col", col);
    baseline->add_option("--out", out_path)->required();

    // metrics
    auto* metrics = app.add_subcommand("metrics", "MSE / PSNR / SSIM between two images");
    std::string a_path, b_path, region = "full";
    metrics->add_option("--a", a_path)->required();
    metrics->add_option("--b", b_path)->required();
    metrics->add_option("--region", region, "full | tile | mask")->capture_default_str();
    metrics->add_option("--row", row);
    metrics->add_option("--col", col);
    metrics->add_option("--tile", tile)->capture_default_str();
    metrics->add_option("--mask", mask_path, "mask JSON for --region mask");

    // dataset
    auto* dataset = app.add_subcommand("dataset", "Forged/pristine dataset tooling");
    dataset->require_subcommand(1);
    auto* dbuild = dataset->add_subcommand("build", "Run removal jobs and write a manifest");
    std::string jobs_path, pristine_dir, root_dir, ckpt_dir, name = "forged-satellite";
    std::vector<int> targets;
    int workers = 1;
    dbuild->add_option("--jobs", jobs_path, "JSON list of removal jobs")->required();
    dbuild->add_option("--pristine", pristine_dir, "directory of pristine images")->required();
    dbuild->add_option("--workspace", root_dir, "workspace root")->required();
    dbuild->add_option("--checkpoints", ckpt_dir, "directory holding checkpoint subdirectories")->required();
    dbuild->add_option("--name", name)->capture_default_str();
    dbuild->add_option("--seed", seed);
    dbuild->add_option("--workers", workers)->capture_default_str();
    dbuild->add_option("--targets", targets, "train_forged train_pristine val_forged val_pristine")->expected(4);
    auto* dvalidate = dataset->add_subcommand("validate", "Check a manifest for violations");
    std::string manifest_path;
    dvalidate->add_option("--manifest", manifest_path)->required();
    auto* dingest = dataset->add_subcommand("ingest", "Summarize instance-segmentation annotations");
    dingest->add_option("--root", root_dir)->required();

    // detector
    auto* detector = app.add_subcommand("detector", "Forged-image detectors");
    detector->require_subcommand(1);
    auto* dtrain = detector->add_subcommand("train", "Train a detector on a manifest's train split");
    std::string kind = "binary_cnn", backbone = "builtin";
    int epochs = -1, input_size = -1;
    double lr = -1;
    auto add_detector_opts = [&](CLI::App* c) {
        c->add_option("--manifest", manifest_path)->required();
        c->add_option("--epochs", epochs);
        c->add_option("--lr", lr);
        c->add_option("--input-size", input_size);
        c->add_option("--seed", seed);
        c->add_option("--backbone", backbone, "builtin[:seed] or TorchScript file")->capture_default_str();
    };
    add_detector_opts(dtrain);
    dtrain->add_option("--kind", kind, "binary_cnn | finetune_pretrained")->capture_default_str();
    dtrain->add_option("--out", out_path)->required();
    auto* deval = detector->add_subcommand("eval", "Train and score detectors; ROC on validation split");
    std::vector<std::string> kinds{"binary_cnn", "finetune_pretrained"};
    std::vector<std::string> detector_dirs;
    add_detector_opts(deval);
    deval->add_option("--kinds", kinds, "detector kinds to train and evaluate");
    deval->add_option("--detector", detector_dirs, "previously trained detector directories (skips training)");
    deval->add_option("--out", out_path)->required();

    // score-objects
    auto* score = app.add_subcommand("score-objects", "Object detection scores for an image");
    std::string scorer = "stub";
    score->add_option("--image", in_path)->required();
    score->add_option("--annotations", annotations_path, "stub scorer annotations");
    score->add_option("--scorer", scorer, "stub | http")->capture_default_str();

    // project
    auto* project = app.add_subcommand("project", "2-D embedding of backbone class probabilities");
    project->add_option("--manifest", manifest_path)->required();
    project->add_option("--backbone", backbone)->capture_default_str();
    project->add_option("--seed", seed);
    project->add_option("--out", out_path)->required();

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP service for interactive sessions");
    int port = -1;
    std::string host, ui_dir;
    serve->add_option("--config", config_path, "flat key = value file");
    serve->add_option("--port", port);
    serve->add_option("--host", host);
    serve->add_option("--workspace", root_dir);
    serve->add_option("--ui-dir", ui_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << Error(ErrorCode::UsageError, e.what()).to_json().dump() << '\n';
        return 2;
    }

    try {
        if (*slice) {
            const Scene scene = load_scene(in_path);
            const TileGrid grid = slice_tiles(scene, tile, pad_policy_from_string(pad));
            fs::create_directories(out_path);
            for (const auto& t : grid.tiles) {
                write_png(fs::path(out_path) / ("tile_" + std::to_string(t.coord.row) + "_" +
                                                std::to_string(t.coord.col) + ".png"),
                          t.pixels);
            }
            write_text(fs::path(out_path) / "grid.json", grid_metadata(grid).dump(2) + "\n");
        } else if (*cfi) {
            write_png(out_path, extract_cfi(read_image(in_path), canny.params()).data);
        } else if (*sfi) {
            write_png(out_path, render_sfi(read_annotations(annotations_path), {row, col}, tile).data);
        } else if (*train) {
            GeneratorSpec g;
            DiscriminatorSpec d;
            TrainConfig cfg;
            if (!config_path.empty()) {
                const json j = read_json(config_path);
                if (j.contains("generator")) g = j["generator"].get<GeneratorSpec>();
                if (j.contains("discriminator")) d = j["discriminator"].get<DiscriminatorSpec>();
                if (j.contains("train")) cfg = j["train"].get<TrainConfig>();
            }
            if (steps > 0) cfg.steps = steps;
            if (train->count("--seed")) cfg.seed = seed;
            const Scene scene = load_scene(scene_path);
            const TileGrid grid = slice_tiles(scene, tile);
            std::vector<TrainingPair> pairs;
            if (feature == "sfi") {
                if (annotations_path.empty()) throw Error(ErrorCode::UsageError, "--annotations is required for sfi");
                pairs = sfi_training_pairs(grid, read_annotations(annotations_path));
            } else if (feature == "cfi") {
                pairs = cfi_training_pairs(grid, canny.params());
            } else {
                throw Error(ErrorCode::UsageError, "--feature must be cfi or sfi");
            }
            const auto ckpt = train_translator(pairs, g, d, cfg, scene.id, [](int step, int total) {
                if (step % 100 == 0 || step == total) std::clog << "step " << step << '/' << total << '\n';
            });
            save_checkpoint(ckpt, out_path);
            std::cout << json{{"checkpoint_id", ckpt.id}, {"dir", out_path}}.dump() << '\n';
        } else if (*remove) {
            const Translator translator(load_checkpoint(ckpt_path));
            const Scene scene = load_scene(scene_path);
            const TileGrid grid = slice_tiles(scene, translator.tile_size());
            const RemovalMask mask = read_json(mask_path).get<RemovalMask>();
            const auto canny_used = translator.checkpoint().provenance.canny;
            const ForgedResult r = remove_object(scene, grid, mask, translator, canny_used);
            save_forged_result(r, out_path);
            std::cout << forged_result_meta(r).dump(2) << '\n';
        } else if (*baseline) {
            const Translator translator(load_checkpoint(ckpt_path));
            const Scene scene = load_scene(scene_path);
            const TileGrid grid = slice_tiles(scene, translator.tile_size());
            write_png(out_path, reconstruction_baseline(scene, grid, {row, col}, translator,
                                                        translator.checkpoint().provenance.canny)
                                    .pixels);
        } else if (*metrics) {
            const Raster a = read_image(a_path), b = read_image(b_path);
            RegionSelector sel;
            if (region == "tile") sel = RegionSelector::of_tile({row, col}, tile);
            else if (region == "mask") {
                if (mask_path.empty()) throw Error(ErrorCode::UsageError, "--mask is required for region mask");
                const RemovalMask m = read_json(mask_path).get<RemovalMask>();
                sel = RegionSelector::of_mask(m.tile, tile, m.rasterize(tile));
            } else if (region != "full") {
                throw Error(ErrorCode::UsageError, "--region must be full, tile or mask");
            }
            std::cout << to_json(degradation_report(a, b, sel)).dump(2) << '\n';
        } else if (*dbuild) {
            std::vector<RemovalJobSpec> jobs = read_json(jobs_path).get<std::vector<RemovalJobSpec>>();
            std::vector<std::string> pristine;
            for (const auto& e : fs::directory_iterator(pristine_dir)) {
                if (e.is_regular_file()) pristine.push_back(e.path().string());
            }
            const Workspace ws{root_dir};
            ws.create();
            std::map<std::string, std::unique_ptr<Translator>> loaded;
            std::mutex mu;
            auto resolve = [&](const std::string& id) -> const Translator& {
                std::lock_guard lock(mu);
                auto& slot = loaded[id];
                if (!slot) slot = std::make_unique<Translator>(load_checkpoint(fs::path(ckpt_dir) / id));
                return *slot;
            };
            BuildOptions opts;
            opts.name = name;
            opts.seed = seed;
            opts.workers = workers;
            if (targets.size() == 4) opts.targets = {targets[0], targets[1], targets[2], targets[3]};
            const auto outcome = build_forged_dataset(jobs, pristine, make_pipeline_runner(ws, resolve), ws.root, opts);
            const fs::path manifest_file = ws.manifests() / (name + ".json");
            save_manifest(outcome.manifest, manifest_file);
            json failures = json::array();
            for (const auto& f : outcome.failures) {
                failures.push_back({{"job_id", f.job_id}, {"code", f.code}, {"message", f.message}});
            }
            std::cout << json{{"manifest", manifest_file.string()},
                              {"counts", to_json(outcome.manifest)["counts"]},
                              {"failures", failures},
                              {"validation", to_json(validate_manifest(outcome.manifest))}}
                             .dump(2)
                      << '\n';
        } else if (*dvalidate) {
            const auto report = validate_manifest(load_manifest(manifest_path));
            std::cout << to_json(report).dump(2) << '\n';
            return report.ok() ? 0 : 1;
        } else if (*dingest) {
            const auto index = ingest_isaid(root_dir);
            json per_class = json::object();
            for (const auto& [k, v] : index.instances_per_class) per_class[std::to_string(k)] = v;
            std::cout << json{{"images", index.images.size()},
                              {"instances_per_class", per_class},
                              {"skipped_malformed", index.skipped_malformed},
                              {"skipped_missing_image", index.skipped_missing_image}}
                             .dump(2)
                      << '\n';
        } else if (*dtrain || *deval) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            auto make_config = [&](const std::string& k) {
                if (k != "binary_cnn" && k != "finetune_pretrained") {
                    throw Error(ErrorCode::UsageError, "unknown detector kind '" + k + "'");
                }
                DetectorConfig c = DetectorConfig::defaults(k == "binary_cnn" ? DetectorKind::binary_cnn
                                                                              : DetectorKind::finetune_pretrained);
                if (epochs > 0) c.epochs = epochs;
                if (lr > 0) c.learning_rate = lr;
                if (input_size > 0) c.input_size = input_size;
                c.seed = seed;
                c.backbone = backbone;
                return c;
            };
            if (*dtrain) {
                auto d = train_detector(manifest, make_config(kind));
                save_detector(*d, out_path);
                std::cout << json{{"dir", out_path}, {"final_accuracy", d->history.back().accuracy}}.dump() << '\n';
            } else {
                std::vector<DetectorEvaluation> evals;
                if (!detector_dirs.empty()) {
                    std::vector<Raster> train_images, val_images;
                    std::vector<int> train_labels, val_labels;
                    load_split(manifest, Split::train, train_images, train_labels);
                    load_split(manifest, Split::validation, val_images, val_labels);
                    for (const auto& dir : detector_dirs) {
                        auto d = load_detector(dir);
                        DetectorEvaluation e;
                        e.config = d->config();
                        e.history = d->history;
                        e.validation = roc_curve(d->predict(val_images), val_labels);
                        e.training = roc_curve(d->predict(train_images), train_labels);
                        evals.push_back(std::move(e));
                    }
                } else {
                    std::vector<DetectorConfig> configs;
                    for (const auto& k : kinds) configs.push_back(make_config(k));
                    evals = evaluate_detectors(manifest, configs);
                }
                std::vector<std::pair<std::string, ROCReport>> curves;
                json out = json::array();
                for (const auto& e : evals) {
                    curves.emplace_back(to_string(e.config.kind), e.validation);
                    out.push_back({{"config", e.config}, {"validation", to_json(e.validation)},
                                   {"training", to_json(e.training)}});
                }
                write_text(fs::path(out_path) / "roc.json", out.dump(2) + "\n");
                write_text(fs::path(out_path) / "roc.svg", roc_svg(curves));
                std::cout << evaluation_summary(evals);
            }
        } else if (*score) {
            const Raster image = read_image(in_path);
            std::vector<DetectionScore> scores;
            if (scorer == "stub") {
                StubScorer s(annotations_path.empty() ? std::vector<PolygonAnnotation>{}
                                                      : read_annotations(annotations_path));
                scores = score_objects(image, s);
            } else if (scorer == "http") {
                auto s = HttpScorerClient::from_env();
                scores = score_objects(image, s);
            } else {
                throw Error(ErrorCode::UsageError, "--scorer must be stub or http");
            }
            std::cout << json(scores).dump(2) << '\n';
        } else if (*project) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            std::vector<Raster> images;
            std::vector<std::string> labels;
            for (const auto& e : manifest.entries) {
                images.push_back(read_image(manifest.resolve(e.image_path)));
                labels.push_back(to_string(e.label));
            }
            auto bb = load_backbone(backbone);
            const auto p = embed_projection(images, *bb, seed, labels);
            write_text(fs::path(out_path) / "projection.json", to_json(p).dump(2) + "\n");
            write_text(fs::path(out_path) / "projection.svg", projection_svg(p));
        } else if (*serve) {
            ServiceConfig cfg =
                ServiceConfig::load(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path));
            if (port >= 0) cfg.port = port;
            if (!host.empty()) cfg.host = host;
            if (!root_dir.empty()) cfg.workspace = root_dir;
            if (!ui_dir.empty()) cfg.ui_dir = ui_dir;
            Service service(cfg);
            service.listen();
        }
    } catch (const Error& e) {
        std::cerr << e.to_json().dump() << '\n';
        return e.code() == ErrorCode::UsageError ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"code", "Internal"}, {"message", e.what()}, {"details", json::object()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
