#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <torch/script.h>

#include "satforge/error.hpp"
#include "satforge/forensics.hpp"
#include "satforge/translator.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;
namespace fs = std::filesystem;

namespace satforge {

std::string to_string(DetectorKind k) { return k == DetectorKind::binary_cnn ? "binary_cnn" : "finetune_pretrained"; }
std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "rmsprop"; }

// ---------------------------------------------------------------------------
// Backbones

namespace {

class BuiltinBackbone : public Backbone {
public:
    explicit BuiltinBackbone(std::uint64_t seed) : seed_(seed) {
        const auto lock = seeded_construction(seed);
        net_ = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, 16, 3).stride(2).padding(1)), nn::ReLU(),
                              nn::Conv2d(nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)), nn::ReLU(),
                              nn::Conv2d(nn::Conv2dOptions(32, 64, 3).stride(2).padding(1)), nn::ReLU(),
                              nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({4, 4})), nn::Flatten(),
                              nn::Linear(64 * 16, 1000));
    }
    torch::Tensor logits(const torch::Tensor& images) override { return net_->forward(images); }
    std::vector<torch::Tensor> parameters() override { return net_->parameters(); }
    void set_training(bool on) override { net_->train(on); }
    int num_classes() const override { return 1000; }
    std::string name() const override { return "builtin:" + std::to_string(seed_); }

private:
    std::uint64_t seed_;
    nn::Sequential net_{nullptr};
};

class TorchScriptBackbone : public Backbone {
public:
    explicit TorchScriptBackbone(const fs::path& path) : path_(path) {
        try {
            module_ = torch::jit::load(path.string());
        } catch (const c10::Error& e) {
            throw Error(ErrorCode::BackboneUnavailable, "cannot load TorchScript backbone",
                        {{"path", path.string()}, {"error", e.what_without_backtrace()}});
        }
        torch::NoGradGuard guard;
        module_.eval();
        classes_ = static_cast<int>(module_.forward({torch::zeros({1, 3, 224, 224})}).toTensor().size(1));
    }
    torch::Tensor logits(const torch::Tensor& images) override { return module_.forward({images}).toTensor(); }
    std::vector<torch::Tensor> parameters() override {
        std::vector<torch::Tensor> out;
        for (const auto& p : module_.parameters()) out.push_back(p);
        return out;
    }
    void set_training(bool on) override { on ? module_.train() : module_.eval(); }
    int num_classes() const override { return classes_; }
    std::string name() const override { return path_.string(); }

private:
    fs::path path_;
    torch::jit::script::Module module_;
    int classes_ = 0;
};

}  // namespace

std::shared_ptr<Backbone> load_backbone(const std::string& reference) {
    if (reference == "builtin" || reference.starts_with("builtin:")) {
        const auto colon = reference.find(':');
        const std::uint64_t seed = colon == std::string::npos ? 0 : std::stoull(reference.substr(colon + 1));
        return std::make_shared<BuiltinBackbone>(seed);
    }
    if (!fs::is_regular_file(reference)) {
        throw Error(ErrorCode::BackboneUnavailable, "backbone file not found", {{"path", reference}});
    }
    return std::make_shared<TorchScriptBackbone>(reference);
}

// ---------------------------------------------------------------------------
// Config

DetectorConfig DetectorConfig::defaults(DetectorKind kind) {
    DetectorConfig c;
    c.kind = kind;
    if (kind == DetectorKind::finetune_pretrained) {
        c.optimizer = OptimizerKind::rmsprop;
        c.learning_rate = 1e-4;
    }
    return c;
}

void DetectorConfig::validate() const {
    if (epochs <= 0 || learning_rate <= 0 || input_size < 16 || batch_size <= 0) {
        throw Error(ErrorCode::InvalidParams, "detector hyperparameters must be positive (input_size >= 16)",
                    nlohmann::json(*this));
    }
}

void to_json(nlohmann::json& j, const DetectorConfig& c) {
    j = {{"kind", to_string(c.kind)},
         {"epochs", c.epochs},
         {"learning_rate", c.learning_rate},
         {"optimizer", to_string(c.optimizer)},
         {"input_size", c.input_size},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"backbone", c.backbone}};
    if (c.kind == DetectorKind::binary_cnn) {
        j["architecture"] = "4x(conv3x3+conv3x3/2) 32-64-128-256, dense 128, dense 1";
    }
}

void from_json(const nlohmann::json& j, DetectorConfig& c) {
    const std::string kind = j.value("kind", std::string("binary_cnn"));
    if (kind != "binary_cnn" && kind != "finetune_pretrained") {
        throw Error(ErrorCode::InvalidParams, "unknown detector kind '" + kind + "'");
    }
    c = DetectorConfig::defaults(kind == "binary_cnn" ? DetectorKind::binary_cnn : DetectorKind::finetune_pretrained);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("optimizer")) {
        const auto o = j["optimizer"].get<std::string>();
        if (o != "adam" && o != "rmsprop") throw Error(ErrorCode::InvalidParams, "unknown optimizer '" + o + "'");
        c.optimizer = o == "adam" ? OptimizerKind::adam : OptimizerKind::rmsprop;
    }
    c.input_size = j.value("input_size", c.input_size);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.backbone = j.value("backbone", c.backbone);
    c.validate();
}

// ---------------------------------------------------------------------------
// Networks

BinaryCnnImpl::BinaryCnnImpl(int input_size) {
    features_ = nn::Sequential();
    int in = 3;
    for (int out : {32, 64, 128, 256}) {
        features_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
        features_->push_back(nn::ReLU());
        features_->push_back(nn::Conv2d(nn::Conv2dOptions(out, out, 3).stride(2).padding(1)));
        features_->push_back(nn::ReLU());
        in = out;
    }
    int spatial = input_size;
    for (int i = 0; i < 4; ++i) spatial = (spatial + 1) / 2;
    head_ = nn::Sequential(nn::Flatten(), nn::Linear(256 * spatial * spatial, 128), nn::ReLU(), nn::Linear(128, 1));
    register_module("features", features_);
    register_module("head", head_);
}

torch::Tensor BinaryCnnImpl::forward(const torch::Tensor& x) { return head_->forward(features_->forward(x)).squeeze(1); }

Detector::Detector(DetectorConfig config, std::shared_ptr<Backbone> backbone) : config_(std::move(config)) {
    config_.validate();
    if (config_.kind == DetectorKind::binary_cnn) {
        const auto lock = seeded_construction(config_.seed);
        cnn_ = BinaryCnn(config_.input_size);
        return;
    }
    backbone_ = backbone ? std::move(backbone) : load_backbone(config_.backbone);
    const auto lock = seeded_construction(config_.seed);
    head_ = nn::Linear(backbone_->num_classes(), 1);
}

torch::Tensor Detector::logits(const torch::Tensor& batch) {
    const torch::Tensor x = batch * 2.0 - 1.0;
    if (cnn_) return cnn_->forward(x);
    // Pretrained classifiers expect [0, 1] inputs; the head reads their logits.
    return head_->forward(backbone_->logits(batch)).squeeze(1);
}

std::vector<torch::Tensor> Detector::parameters() {
    if (cnn_) return cnn_->parameters();
    auto p = backbone_->parameters();
    for (const auto& t : head_->parameters()) p.push_back(t);
    return p;
}

void Detector::set_training(bool on) {
    if (cnn_) {
        cnn_->train(on);
    } else {
        backbone_->set_training(on);
        head_->train(on);
    }
}

std::vector<double> Detector::predict(const std::vector<Raster>& images) {
    std::lock_guard lock(mutex_);
    torch::NoGradGuard guard;
    set_training(false);
    std::vector<double> out;
    for (std::size_t start = 0; start < images.size(); start += 16) {
        const std::vector<Raster> part(images.begin() + static_cast<std::ptrdiff_t>(start),
                                       images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), start + 16)));
        const auto p = torch::sigmoid(logits(images_to_batch(part, config_.input_size))).to(torch::kFloat64).contiguous();
        out.insert(out.end(), p.data_ptr<double>(), p.data_ptr<double>() + p.numel());
    }
    return out;
}

torch::Tensor images_to_batch(const std::vector<Raster>& images, int size) {
    std::vector<torch::Tensor> items;
    items.reserve(images.size());
    for (const auto& r : images) {
        if (r.channels != 3) throw Error(ErrorCode::DimMismatch, "detector input must be RGB", {{"channels", r.channels}});
        auto t = torch::from_blob(const_cast<std::uint8_t*>(r.data.data()), {r.height, r.width, 3}, torch::kUInt8)
                     .permute({2, 0, 1})
                     .to(torch::kFloat32)
                     .div(255.0)
                     .unsqueeze(0);
        if (r.height != size || r.width != size) {
            t = F::interpolate(t, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{size, size})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
        }
        items.push_back(t.squeeze(0));
    }
    return torch::stack(items);
}

// ---------------------------------------------------------------------------
// Training

std::shared_ptr<Detector> train_detector(const std::vector<Raster>& images, const std::vector<int>& labels,
                                         const DetectorConfig& config) {
    if (images.size() != labels.size()) throw Error(ErrorCode::InvalidParams, "one label per image expected");
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    const auto negatives = std::count(labels.begin(), labels.end(), 0);
    if (positives == 0 || negatives == 0 || positives + negatives != static_cast<long>(labels.size())) {
        throw Error(ErrorCode::DegenerateManifest, "training needs forged and pristine images",
                    {{"forged", positives}, {"pristine", negatives}});
    }
    auto detector = std::make_shared<Detector>(config);
    const torch::Tensor x = images_to_batch(images, config.input_size);
    const torch::Tensor y = torch::tensor(std::vector<float>(labels.begin(), labels.end()));

    std::unique_ptr<torch::optim::Optimizer> opt;
    if (config.optimizer == OptimizerKind::adam) {
        opt = std::make_unique<torch::optim::Adam>(detector->parameters(), torch::optim::AdamOptions(config.learning_rate));
    } else {
        opt = std::make_unique<torch::optim::RMSprop>(detector->parameters(),
                                                      torch::optim::RMSpropOptions(config.learning_rate));
    }

    std::mt19937_64 rng(config.seed);
    std::vector<std::int64_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    detector->set_training(true);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                                     order.begin() + static_cast<std::ptrdiff_t>(end)));
            const auto xb = x.index_select(0, idx);
            const auto yb = y.index_select(0, idx);
            opt->zero_grad();
            const auto logit = detector->logits(xb);
            const auto loss = F::binary_cross_entropy_with_logits(logit, yb);
            if (!std::isfinite(loss.item<double>())) {
                throw Error(ErrorCode::NonFiniteLoss, "detector loss diverged", {{"epoch", epoch}});
            }
            loss.backward();
            opt->step();
            loss_sum += loss.item<double>() * static_cast<double>(end - start);
            correct += ((logit.detach() > 0).to(torch::kFloat32) == yb).sum().item<std::int64_t>();
        }
        const double n = static_cast<double>(order.size());
        detector->history.push_back({epoch + 1, loss_sum / n, static_cast<double>(correct) / n});
    }
    detector->set_training(false);
    return detector;
}

void load_split(const DatasetManifest& m, Split s, std::vector<Raster>& images, std::vector<int>& labels) {
    for (const auto& e : m.entries) {
        if (e.split != s) continue;
        images.push_back(read_image(m.resolve(e.image_path)));
        labels.push_back(e.label == Label::forged ? 1 : 0);
    }
}

std::shared_ptr<Detector> train_detector(const DatasetManifest& manifest, const DetectorConfig& config) {
    SplitCounts c{};
    for (const auto& e : manifest.entries) {
        if (e.split == Split::train) (e.label == Label::forged ? c.forged : c.pristine) += 1;
    }
    if (c.forged == 0 || c.pristine == 0) {
        throw Error(ErrorCode::DegenerateManifest, "train split needs forged and pristine images",
                    {{"forged", c.forged}, {"pristine", c.pristine}});
    }
    std::vector<Raster> images;
    std::vector<int> labels;
    load_split(manifest, Split::train, images, labels);
    return train_detector(images, labels, config);
}

void save_detector(Detector& d, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<torch::Tensor> params;
    for (const auto& p : d.parameters()) params.push_back(p.detach().clone());
    torch::save(params, (dir / "detector.pt").string());
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : d.history) history.push_back({{"epoch", h.epoch}, {"loss", h.loss}, {"accuracy", h.accuracy}});
    std::ofstream(dir / "detector.json") << nlohmann::json{{"config", d.config()}, {"history", history}}.dump(2) << '\n';
}

std::shared_ptr<Detector> load_detector(const fs::path& dir) {
    std::ifstream in(dir / "detector.json");
    if (!in) throw Error(ErrorCode::UnreadableFile, "missing detector.json", {{"dir", dir.string()}});
    const auto meta = nlohmann::json::parse(in);
    auto d = std::make_shared<Detector>(meta.at("config").get<DetectorConfig>());
    for (const auto& h : meta.value("history", nlohmann::json::array())) {
        d->history.push_back({h.at("epoch").get<int>(), h.at("loss").get<double>(), h.at("accuracy").get<double>()});
    }
    std::vector<torch::Tensor> saved;
    torch::load(saved, (dir / "detector.pt").string());
    auto params = d->parameters();
    if (saved.size() != params.size()) {
        throw Error(ErrorCode::CheckpointMismatch, "detector parameter count differs",
                    {{"saved", saved.size()}, {"expected", params.size()}});
    }
    torch::NoGradGuard guard;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].sizes().equals(saved[i].sizes())) {
            throw Error(ErrorCode::CheckpointMismatch, "detector parameter shape differs", {{"index", i}});
        }
        params[i].copy_(saved[i]);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<DetectorEvaluation> evaluate_detectors(const DatasetManifest& manifest,
                                                   const std::vector<DetectorConfig>& configs) {
    std::vector<Raster> train_images, val_images;
    std::vector<int> train_labels, val_labels;
    load_split(manifest, Split::train, train_images, train_labels);
    load_split(manifest, Split::validation, val_images, val_labels);
    if (val_images.empty()) throw Error(ErrorCode::DegenerateManifest, "manifest has no validation split");

    std::vector<DetectorEvaluation> out;
    for (const auto& cfg : configs) {
        auto d = train_detector(train_images, train_labels, cfg);
        DetectorEvaluation e;
        e.config = cfg;
        e.history = d->history;
        e.validation = roc_curve(d->predict(val_images), val_labels);
        e.training = roc_curve(d->predict(train_images), train_labels);
        out.push_back(std::move(e));
    }
    return out;
}

std::string evaluation_summary(const std::vector<DetectorEvaluation>& evals) {
    std::ostringstream os;
    os << std::left << std::setw(22) << "detector" << std::setw(12) << "train_auc" << std::setw(12) << "val_auc"
       << std::setw(12) << "final_acc" << "epochs\n";
    for (const auto& e : evals) {
        os << std::setw(22) << to_string(e.config.kind) << std::setw(12) << std::fixed << std::setprecision(4)
           << e.training.auc << std::setw(12) << e.validation.auc << std::setw(12)
           << (e.history.empty() ? 0.0 : e.history.back().accuracy) << e.config.epochs << '\n';
    }
    return os.str();
}

}  // namespace satforge
