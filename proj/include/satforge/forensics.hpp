#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "satforge/dataset.hpp"
#include "satforge/features.hpp"
#include "satforge/imaging.hpp"

namespace satforge {

// ---------------------------------------------------------------------------
// Object scoring

struct DetectionScore {
    std::string label;
    double confidence = 0.0;  // percent
    bool operator==(const DetectionScore&) const = default;
};

void to_json(nlohmann::json& j, const DetectionScore& s);
void from_json(const nlohmann::json& j, DetectionScore& s);

class ObjectScorer {
public:
    virtual ~ObjectScorer() = default;
    virtual std::vector<DetectionScore> detect(const Raster& image) = 0;
};

// Offline rule-based scorer. For each annotation polygon it measures the CFI
// edge density inside the polygon: at or above `present_density` the label is
// reported with confidence 90 + 9.9 * min(1, density); any smaller nonzero
// density gives a confidence below 50; no edges at all omit the label.
class StubScorer : public ObjectScorer {
public:
    explicit StubScorer(std::vector<PolygonAnnotation> annotations, CannyParams canny = {},
                        double present_density = 0.02);
    std::vector<DetectionScore> detect(const Raster& image) override;

private:
    std::vector<PolygonAnnotation> annotations_;
    CannyParams canny_;
    double present_density_;
};

// Client for an external detection service. POSTs the image as PNG and expects
// a JSON array of {label, confidence}. Transport failures after the retry
// budget raise ScorerUnavailable.
class HttpScorerClient : public ObjectScorer {
public:
    struct Options {
        std::string url;  // http://host:port/path
        int retries = 3;
        std::chrono::milliseconds min_interval{200};
        std::chrono::seconds timeout{30};
    };
    explicit HttpScorerClient(Options options);
    // URL from SATFORGE_SCORER_URL; ScorerUnavailable when unset.
    static HttpScorerClient from_env();
    std::vector<DetectionScore> detect(const Raster& image) override;

private:
    Options options_;
    std::mutex mutex_;
    std::chrono::steady_clock::time_point last_call_{};
};

// Runs the scorer, clamps confidences to [0, 100], keeps the best score per
// label and sorts by confidence descending (label ascending on ties).
std::vector<DetectionScore> score_objects(const Raster& image, ObjectScorer& scorer);

// Label x feature kind x column (A..D) detection confidences. Missing
// labels are 0.
struct DetectionTable {
    std::vector<std::string> labels;
    std::map<std::string, std::map<FeatureKind, std::array<double, 4>>> scores;

    void record(FeatureKind kind, int column, const std::vector<DetectionScore>& found);
};

std::string detection_table_csv(const DetectionTable& t);
DetectionTable detection_table_from_csv(const std::string& csv);
// Reference confidences reported for the four example scenes.
DetectionTable reference_detection_table();

// ---------------------------------------------------------------------------
// Backbones

// Fixed 1000-class image classifier. Input N x 3 x S x S in [0, 1].
class Backbone {
public:
    virtual ~Backbone() = default;
    virtual torch::Tensor logits(const torch::Tensor& images) = 0;
    virtual std::vector<torch::Tensor> parameters() = 0;
    virtual void set_training(bool on) = 0;
    virtual int num_classes() const = 0;
    virtual std::string name() const = 0;
};

// "builtin[:seed]" selects a seeded randomly initialised CNN stand-in; any
// other reference is a TorchScript file whose forward maps images to logits.
// Missing or unloadable files raise BackboneUnavailable.
std::shared_ptr<Backbone> load_backbone(const std::string& reference);

// ---------------------------------------------------------------------------
// Forged-image detectors

enum class DetectorKind { binary_cnn, finetune_pretrained };
enum class OptimizerKind { adam, rmsprop };

std::string to_string(DetectorKind k);
std::string to_string(OptimizerKind k);

struct DetectorConfig {
    DetectorKind kind = DetectorKind::binary_cnn;
    int epochs = 100;
    double learning_rate = 0.001;
    OptimizerKind optimizer = OptimizerKind::adam;
    int input_size = 256;
    int batch_size = 16;
    std::uint64_t seed = 0;
    std::string backbone = "builtin";  // finetune_pretrained only

    // Per-kind defaults: binary_cnn uses Adam at 1e-3, finetune uses RMSprop at 1e-4.
    static DetectorConfig defaults(DetectorKind kind);
    void validate() const;
};

void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

// 4 x (conv3x3 + stride-2 conv3x3) with 32/64/128/256 channels, dense 128,
// dense 1. Outputs a logit.
class BinaryCnnImpl : public torch::nn::Module {
public:
    explicit BinaryCnnImpl(int input_size);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Sequential features_{nullptr};
    torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(BinaryCnn);

class Detector {
public:
    Detector(DetectorConfig config, std::shared_ptr<Backbone> backbone = nullptr);

    // Forged probability for each image.
    std::vector<double> predict(const std::vector<Raster>& images);
    torch::Tensor logits(const torch::Tensor& batch);
    std::vector<torch::Tensor> parameters();
    void set_training(bool on);

    const DetectorConfig& config() const { return config_; }
    std::vector<EpochRecord> history;

private:
    DetectorConfig config_;
    BinaryCnn cnn_{nullptr};
    std::shared_ptr<Backbone> backbone_;
    torch::nn::Linear head_{nullptr};
    std::mutex mutex_;
};

// Images become N x 3 x S x S in [0, 1] after bilinear resizing.
torch::Tensor images_to_batch(const std::vector<Raster>& images, int size);

std::shared_ptr<Detector> train_detector(const std::vector<Raster>& images, const std::vector<int>& labels,
                                         const DetectorConfig& config);
// Trains on the manifest's train split. DegenerateManifest unless both labels appear.
std::shared_ptr<Detector> train_detector(const DatasetManifest& manifest, const DetectorConfig& config);

// {detector.pt, detector.json}
void save_detector(Detector& d, const std::filesystem::path& dir);
std::shared_ptr<Detector> load_detector(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// ROC

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct ROCReport {
    std::vector<RocPoint> points;  // from (0,0) to (1,1)
    double auc = 0.0;
    int positives = 0;
    int negatives = 0;
};

// Thresholds sweep the unique scores from high to low. AUC is the trapezoid
// area, evaluated in integer counts so it equals the pairwise concordance
// with ties counted half.
ROCReport roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

nlohmann::json to_json(const ROCReport& r);
std::string roc_svg(const std::vector<std::pair<std::string, ROCReport>>& curves);

// ---------------------------------------------------------------------------
// Embedding projection

struct TsneOptions {
    double perplexity = 30.0;
    int iterations = 1000;
    // Zero selects n / (4 * early_exaggeration), which keeps the exaggerated
    // attraction step below one for any sample size.
    double learning_rate = 0.0;
    double early_exaggeration = 12.0;
    int exaggeration_iterations = 250;
};

// Exact t-SNE on row vectors. Perplexity is clamped to the sample size.
std::vector<std::array<double, 2>> tsne(const std::vector<std::vector<double>>& x, std::uint64_t seed,
                                        const TsneOptions& options = {});

struct EmbeddingProjection {
    std::vector<std::vector<double>> features;  // softmax probabilities
    std::vector<std::array<double, 2>> points;
    std::vector<std::string> labels;
    std::uint64_t seed = 0;
    std::string backbone;
};

// TooFewImages below three images.
EmbeddingProjection embed_projection(const std::vector<Raster>& images, Backbone& backbone, std::uint64_t seed,
                                     std::vector<std::string> labels = {}, const TsneOptions& options = {},
                                     int input_size = 224);

nlohmann::json to_json(const EmbeddingProjection& p);
std::string projection_svg(const EmbeddingProjection& p);

// ---------------------------------------------------------------------------
// Evaluation

struct DetectorEvaluation {
    DetectorConfig config;
    ROCReport validation;
    ROCReport training;
    std::vector<EpochRecord> history;
};

// Trains each config on the train split and scores the validation split.
std::vector<DetectorEvaluation> evaluate_detectors(const DatasetManifest& manifest,
                                                   const std::vector<DetectorConfig>& configs);
std::string evaluation_summary(const std::vector<DetectorEvaluation>& evals);

// Loads every entry of a split; labels are 1 for forged.
void load_split(const DatasetManifest& m, Split s, std::vector<Raster>& images, std::vector<int>& labels);

}  // namespace satforge
