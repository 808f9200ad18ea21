#include <cfenv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "satforge/error.hpp"
#include "satforge/translator.hpp"

namespace fs = std::filesystem;

namespace satforge {

torch::Tensor feature_to_tensor(const FeatureImage& f) {
    const double scale = f.kind == FeatureKind::CFI ? 255.0 : static_cast<double>(kNumClasses);
    auto t = torch::empty({1, f.data.height, f.data.width}, torch::kFloat);
    auto* p = t.data_ptr<float>();
    for (std::size_t i = 0; i < f.data.data.size(); ++i) {
        p[i] = static_cast<float>(f.data.data[i] / scale * 2.0 - 1.0);
    }
    return t;
}

torch::Tensor raster_to_tensor(const Raster& r) {
    auto t = torch::empty({r.channels, r.height, r.width}, torch::kFloat);
    auto acc = t.accessor<float, 3>();
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            for (int c = 0; c < r.channels; ++c) acc[c][y][x] = r.at(y, x, c) / 127.5f - 1.0f;
        }
    }
    return t;
}

Raster tensor_to_raster(const torch::Tensor& chw) {
    const auto t = chw.detach().to(torch::kFloat).contiguous();
    const int c = static_cast<int>(t.size(0));
    const int h = static_cast<int>(t.size(1));
    const int w = static_cast<int>(t.size(2));
    auto acc = t.accessor<float, 3>();
    Raster r(h, w, c);
    std::fesetround(FE_TONEAREST);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                const double v = std::clamp((static_cast<double>(acc[ch][y][x]) + 1.0) * 127.5, 0.0, 255.0);
                r.at(y, x, ch) = static_cast<std::uint8_t>(std::nearbyint(v));
            }
        }
    }
    return r;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t fnv(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

nlohmann::json provenance_json(const TrainingProvenance& p) {
    return {{"scene_id", p.scene_id},
            {"canny", p.canny},
            {"feature_kind", to_string(p.feature_kind)},
            {"tile_size", p.tile_size},
            {"pair_count", p.pair_count}};
}

TrainingProvenance provenance_from(const nlohmann::json& j) {
    TrainingProvenance p;
    p.scene_id = j.value("scene_id", std::string{});
    p.canny = j.value("canny", CannyParams{});
    p.feature_kind = j.value("feature_kind", std::string("CFI")) == "SFI" ? FeatureKind::SFI : FeatureKind::CFI;
    p.tile_size = j.value("tile_size", kDefaultTileSize);
    p.pair_count = j.value("pair_count", 0);
    return p;
}

void dump_triplet(const fs::path& dir, int step, const FeatureImage& f, const torch::Tensor& out,
                  const Raster& target) {
    char name[32];
    std::snprintf(name, sizeof name, "step%06d", step);
    write_png(dir / (std::string(name) + "_feature.png"), f.data);
    write_png(dir / (std::string(name) + "_output.png"), tensor_to_raster(out));
    write_png(dir / (std::string(name) + "_target.png"), target);
}

bool finite(const torch::Tensor& t) { return std::isfinite(t.item<double>()); }

}  // namespace

nlohmann::json TranslatorCheckpoint::metadata() const {
    nlohmann::json summary = nlohmann::json::object();
    if (!loss_log.empty()) {
        const auto& last = loss_log.back();
        const std::size_t window = std::min<std::size_t>(100, loss_log.size());
        double l1 = 0.0;
        for (std::size_t i = loss_log.size() - window; i < loss_log.size(); ++i) l1 += loss_log[i].g_l1;
        summary = {{"steps", loss_log.size()},
                   {"final", {{"d_loss", last.d_loss}, {"g_adv", last.g_adv}, {"g_fm", last.g_fm}, {"g_l1", last.g_l1}}},
                   {"mean_g_l1_last_window", l1 / static_cast<double>(window)}};
    }
    return {{"format_version", 1},
            {"id", id},
            {"generator_spec", generator_spec},
            {"discriminator_spec", discriminator_spec},
            {"train_config", train_config},
            {"provenance", provenance_json(provenance)},
            {"loss_summary", summary}};
}

std::vector<TrainingPair> cfi_training_pairs(const TileGrid& grid, const CannyParams& canny) {
    std::vector<TrainingPair> out;
    for (const auto& t : grid.tiles) out.push_back({extract_cfi(t, canny), t});
    return out;
}

std::vector<TrainingPair> sfi_training_pairs(const TileGrid& grid, const std::vector<PolygonAnnotation>& annotations) {
    std::vector<TrainingPair> out;
    for (const auto& t : grid.tiles) out.push_back({render_sfi(annotations, t.coord, grid.tile_size), t});
    return out;
}

TranslatorCheckpoint train_translator(const std::vector<TrainingPair>& pairs, const GeneratorSpec& g_spec,
                                      const DiscriminatorSpec& d_spec, const TrainConfig& config,
                                      const std::string& scene_id, const ProgressFn& progress) {
    if (pairs.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training pairs");
    g_spec.validate();
    d_spec.validate();
    config.validate();

    const int ts = pairs.front().tile.pixels.height;
    const FeatureKind kind = pairs.front().feature.kind;
    for (const auto& p : pairs) {
        if (p.tile.pixels.height != ts || p.tile.pixels.width != ts || p.feature.data.height != ts ||
            p.feature.data.width != ts) {
            throw Error(ErrorCode::DimMismatch, "all training pairs must share one tile size", {{"tile_size", ts}});
        }
        if (p.feature.kind != kind) throw Error(ErrorCode::InvalidParams, "mixed feature kinds in training set");
    }
    if (ts % g_spec.size_multiple() != 0) {
        throw Error(ErrorCode::InvalidSpec, "tile size incompatible with generator depth",
                    {{"tile_size", ts}, {"multiple", g_spec.size_multiple()}});
    }

    DiscriminatorSpec d_eff = d_spec;
    d_eff.input_channels = g_spec.input_channels + g_spec.output_channels;

    Generator gen = build_generator(g_spec, config.seed);
    MultiScaleDiscriminator disc = build_discriminators(d_eff, config.adversarial_loss, config.seed + 1);
    gen->train();
    disc->train();

    std::vector<torch::Tensor> feats, imgs;
    for (const auto& p : pairs) {
        feats.push_back(feature_to_tensor(p.feature));
        imgs.push_back(raster_to_tensor(p.tile.pixels));
    }
    const auto all_feats = torch::stack(feats);
    const auto all_imgs = torch::stack(imgs);

    auto adam = [&config](std::vector<torch::Tensor> params) {
        return torch::optim::Adam(std::move(params), torch::optim::AdamOptions(config.learning_rate)
                                                         .betas({config.beta1, config.beta2}));
    };
    auto opt_g = adam(gen->parameters());
    auto opt_d = adam(disc->parameters());

    std::mt19937_64 rng(config.seed);
    std::vector<std::int64_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    const auto batch = std::min<std::size_t>(config.batch_size, pairs.size());

    TranslatorCheckpoint ckpt;
    ckpt.loss_log.reserve(config.steps);
    for (int step = 0; step < config.steps; ++step) {
        std::vector<std::int64_t> idx;
        while (idx.size() < batch) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        const auto sel = torch::tensor(idx, torch::kLong);
        const auto feat = all_feats.index_select(0, sel);
        const auto real = all_imgs.index_select(0, sel);

        const auto fake = gen->forward(feat);
        const auto real_pair = torch::cat({feat, real}, 1);
        const auto real_out = disc->forward(real_pair);
        const auto fake_out = disc->forward(torch::cat({feat, fake}, 1));
        const auto fake_out_detached = disc->forward(torch::cat({feat, fake.detach()}, 1));

        LossTerms g = generator_loss(real_out, fake_out, fake, real, config);
        torch::Tensor d_loss = discriminator_loss(real_out, fake_out_detached, config.adversarial_loss);

        LossRecord rec{step, d_loss.item<double>(), g.g_adv.item<double>(), g.g_fm.item<double>(),
                       g.g_l1.item<double>()};
        if (!finite(d_loss) || !finite(g.generator_loss)) {
            throw Error(ErrorCode::NonFiniteLoss, "non-finite loss during training",
                        {{"step", step}, {"d_loss", rec.d_loss}, {"g_adv", rec.g_adv}, {"g_fm", rec.g_fm},
                         {"g_l1", rec.g_l1}});
        }

        opt_g.zero_grad();
        g.generator_loss.backward();
        opt_g.step();

        opt_d.zero_grad();
        d_loss.backward();
        opt_d.step();

        ckpt.loss_log.push_back(rec);
        if (config.dump_every > 0 && !config.dump_dir.empty() && (step + 1) % config.dump_every == 0) {
            dump_triplet(config.dump_dir, step + 1, pairs[idx[0]].feature, fake[0], pairs[idx[0]].tile.pixels);
        }
        if (progress) progress(step + 1, config.steps);
    }

    gen->eval();
    ckpt.generator = gen;
    ckpt.generator_spec = g_spec;
    ckpt.discriminator_spec = d_eff;
    ckpt.train_config = config;
    ckpt.provenance.scene_id = scene_id;
    ckpt.provenance.canny = pairs.front().feature.canny.value_or(CannyParams{});
    ckpt.provenance.feature_kind = kind;
    ckpt.provenance.tile_size = ts;
    ckpt.provenance.pair_count = static_cast<int>(pairs.size());
    ckpt.id = hex64(fnv(ckpt.metadata().dump(), parameter_checksum(*gen)));
    return ckpt;
}

std::string loss_log_csv(const std::vector<LossRecord>& log) {
    std::ostringstream os;
    os.precision(17);
    os << "step,d_loss,g_adv,g_fm,g_l1\n";
    for (const auto& r : log) os << r.step << ',' << r.d_loss << ',' << r.g_adv << ',' << r.g_fm << ',' << r.g_l1 << '\n';
    return os.str();
}

void save_checkpoint(const TranslatorCheckpoint& ckpt, const fs::path& dir) {
    fs::create_directories(dir);
    const auto meta = ckpt.metadata();
    torch::serialize::OutputArchive archive;
    ckpt.generator->save(archive);
    archive.write("satforge_metadata", c10::IValue(meta.dump()));
    archive.save_to((dir / "translator.pt").string());
    std::ofstream(dir / "checkpoint.json") << meta.dump(2) << '\n';
    std::ofstream(dir / "loss_log.csv") << loss_log_csv(ckpt.loss_log);
}

TranslatorCheckpoint load_checkpoint(const fs::path& dir) {
    const fs::path file = fs::is_directory(dir) ? dir / "translator.pt" : dir;
    if (!fs::exists(file)) throw Error(ErrorCode::NotFound, "no checkpoint at " + dir.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(file.string());
    } catch (const c10::Error& e) {
        throw Error(ErrorCode::UnreadableFile, "corrupt checkpoint archive: " + file.string());
    }
    c10::IValue meta_value;
    if (!archive.try_read("satforge_metadata", meta_value)) {
        throw Error(ErrorCode::UnreadableFile, "checkpoint archive lacks metadata");
    }
    const auto meta = nlohmann::json::parse(meta_value.toStringRef());

    TranslatorCheckpoint ckpt;
    ckpt.id = meta.at("id").get<std::string>();
    ckpt.generator_spec = meta.at("generator_spec").get<GeneratorSpec>();
    ckpt.discriminator_spec = meta.at("discriminator_spec").get<DiscriminatorSpec>();
    ckpt.train_config = meta.at("train_config").get<TrainConfig>();
    ckpt.provenance = provenance_from(meta.at("provenance"));
    ckpt.generator = build_generator(ckpt.generator_spec, ckpt.train_config.seed);
    ckpt.generator->load(archive);
    ckpt.generator->eval();

    if (const auto log_path = file.parent_path() / "loss_log.csv"; fs::exists(log_path)) {
        std::ifstream in(log_path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            LossRecord r;
            if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &r.step, &r.d_loss, &r.g_adv, &r.g_fm, &r.g_l1) == 5) {
                ckpt.loss_log.push_back(r);
            }
        }
    }
    return ckpt;
}

Translator::Translator(TranslatorCheckpoint ckpt) : ckpt_(std::move(ckpt)) {
    if (!ckpt_.generator) throw Error(ErrorCode::InvalidSpec, "checkpoint has no generator");
    ckpt_.generator->eval();
}

torch::Tensor Translator::raw_output(const FeatureImage& feature) const {
    const int ts = tile_size();
    if (feature.data.height != ts || feature.data.width != ts || feature.data.channels != 1) {
        throw Error(ErrorCode::DimMismatch, "feature image size differs from the training tile size",
                    {{"expected", ts}, {"height", feature.data.height}, {"width", feature.data.width}});
    }
    if (feature.kind != ckpt_.provenance.feature_kind) {
        throw Error(ErrorCode::CheckpointMismatch, "feature kind differs from the training feature kind");
    }
    std::lock_guard lock(mutex_);
    torch::NoGradGuard no_grad;
    return ckpt_.generator->forward(feature_to_tensor(feature).unsqueeze(0))[0];
}

Tile Translator::translate(const FeatureImage& feature) const {
    const int ts = tile_size();
    Tile t;
    t.pixels = tensor_to_raster(raw_output(feature));
    t.valid = {ts, ts};
    return t;
}

double mean_l1(const Translator& t, const std::vector<TrainingPair>& pairs) {
    double total = 0.0;
    for (const auto& p : pairs) {
        total += torch::l1_loss(t.raw_output(p.feature), raster_to_tensor(p.tile.pixels)).item<double>();
    }
    return pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
}

}  // namespace satforge
