#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "satforge/features.hpp"
#include "satforge/imaging.hpp"

namespace satforge {

// ---------------------------------------------------------------------------
// Specs and configuration

enum class GeneratorFamily { unet_skip, coarse_to_fine };
enum class AdversarialLoss { cross_entropy, least_squares };

struct GeneratorSpec {
    GeneratorFamily family = GeneratorFamily::unet_skip;
    int base_channels = 64;
    int depth = 8;                    // unet: encoder layers; coarse_to_fine: global downsamplings
    bool has_local_enhancer = false;  // coarse_to_fine only
    int residual_blocks = 9;          // global network residual blocks (coarse_to_fine)
    int input_channels = 1;
    int output_channels = 3;

    void validate() const;
    // Spatial sizes must be multiples of this.
    int size_multiple() const;
};

struct DiscriminatorSpec {
    int num_scales = 3;
    int n_layers = 3;  // strided 4x4 convolutions per scale
    int base_channels = 64;
    int input_channels = 4;  // feature + RGB, concatenated channel-wise

    void validate() const;
    int patch_receptive_field() const;
};

struct TrainConfig {
    int steps = 2000;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 1;
    AdversarialLoss adversarial_loss = AdversarialLoss::least_squares;
    double feature_matching_weight = 10.0;
    double l1_weight = 10.0;
    std::uint64_t seed = 0;
    int dump_every = 0;  // PNG triplet dumps; 0 disables
    std::filesystem::path dump_dir;

    void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorSpec& s);
void from_json(const nlohmann::json& j, GeneratorSpec& s);
void to_json(nlohmann::json& j, const DiscriminatorSpec& s);
void from_json(const nlohmann::json& j, DiscriminatorSpec& s);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// ---------------------------------------------------------------------------
// Networks

class GeneratorImpl : public torch::nn::Module {
public:
    virtual torch::Tensor forward(const torch::Tensor& feature) = 0;
    const GeneratorSpec& spec() const { return spec_; }

protected:
    explicit GeneratorImpl(GeneratorSpec spec) : spec_(std::move(spec)) {}
    GeneratorSpec spec_;
};

using Generator = std::shared_ptr<GeneratorImpl>;

// Encoder layer i is concatenated onto the decoder input of layer n - i.
class UNetGeneratorImpl : public GeneratorImpl {
public:
    explicit UNetGeneratorImpl(const GeneratorSpec& spec);
    torch::Tensor forward(const torch::Tensor& feature) override;

private:
    std::vector<torch::nn::Conv2d> down_;
    std::vector<torch::nn::ConvTranspose2d> up_;
    std::vector<bool> down_norm_;
};

// Global network (G1) plus optional local enhancer (G2). With the enhancer,
// G1 sees the input downsampled by two and its last feature map is added to
// G2's full-resolution front end.
class CoarseToFineGeneratorImpl : public GeneratorImpl {
public:
    explicit CoarseToFineGeneratorImpl(const GeneratorSpec& spec);
    torch::Tensor forward(const torch::Tensor& feature) override;

    // The tensor G1 consumes for a given generator input.
    torch::Tensor global_input(const torch::Tensor& feature) const;

private:
    torch::nn::Sequential global_{nullptr};
    torch::nn::Sequential global_head_{nullptr};
    torch::nn::Sequential local_front_{nullptr};
    torch::nn::Sequential local_back_{nullptr};
};

Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed = 0);

// Serializes seeded module construction; the torch default generator is global.
std::unique_lock<std::mutex> seeded_construction(std::uint64_t seed);

std::int64_t parameter_count(const torch::nn::Module& m);
// Order-sensitive digest of every parameter value.
std::uint64_t parameter_checksum(const torch::nn::Module& m);

// Per scale: intermediate activations followed by the patch score map.
using DiscriminatorOutputs = std::vector<std::vector<torch::Tensor>>;

class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    PatchDiscriminatorImpl(const DiscriminatorSpec& spec, bool sigmoid_output);
    std::vector<torch::Tensor> forward(const torch::Tensor& pair);

private:
    std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(PatchDiscriminator);

class MultiScaleDiscriminatorImpl : public torch::nn::Module {
public:
    MultiScaleDiscriminatorImpl(const DiscriminatorSpec& spec, AdversarialLoss loss);
    DiscriminatorOutputs forward(const torch::Tensor& pair);

    // Scale k receives the pair downsampled by 2^k (k = 0 is full resolution).
    std::vector<torch::Tensor> pyramid(const torch::Tensor& pair) const;
    const std::vector<PatchDiscriminator>& scales() const { return scales_; }

private:
    std::vector<PatchDiscriminator> scales_;
};
TORCH_MODULE(MultiScaleDiscriminator);

MultiScaleDiscriminator build_discriminators(const DiscriminatorSpec& spec,
                                             AdversarialLoss loss = AdversarialLoss::least_squares,
                                             std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Objective

torch::Tensor adversarial_term(const DiscriminatorOutputs& outputs, bool target_real, AdversarialLoss form);

struct LossTerms {
    torch::Tensor discriminator_loss;
    torch::Tensor d_real;
    torch::Tensor d_fake;
    torch::Tensor generator_loss;
    torch::Tensor g_adv;
    torch::Tensor g_fm;
    torch::Tensor g_l1;
};

torch::Tensor discriminator_loss(const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake,
                                 AdversarialLoss form, torch::Tensor* real_part = nullptr,
                                 torch::Tensor* fake_part = nullptr);

// Adversarial + feature matching (activations of `real` are treated as
// constants) + L1 between generated and target images.
LossTerms generator_loss(const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake,
                         const torch::Tensor& fake_image, const torch::Tensor& real_image, const TrainConfig& cfg);

// Both sides evaluated on the same discriminator outputs.
LossTerms cgan_losses(const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake,
                      const torch::Tensor& fake_image, const torch::Tensor& real_image, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Tensor conversion

torch::Tensor feature_to_tensor(const FeatureImage& f);  // 1 x H x W in [-1, 1]
torch::Tensor raster_to_tensor(const Raster& r);         // C x H x W in [-1, 1]
// Affine map [-1,1] -> [0,255], rounded half to even.
Raster tensor_to_raster(const torch::Tensor& chw);

// ---------------------------------------------------------------------------
// Training and inference

struct TrainingPair {
    FeatureImage feature;
    Tile tile;
};

struct LossRecord {
    int step = 0;
    double d_loss = 0.0;
    double g_adv = 0.0;
    double g_fm = 0.0;
    double g_l1 = 0.0;
};

struct TrainingProvenance {
    std::string scene_id;
    CannyParams canny;
    FeatureKind feature_kind = FeatureKind::CFI;
    int tile_size = kDefaultTileSize;
    int pair_count = 0;
};

struct TranslatorCheckpoint {
    std::string id;
    Generator generator;
    GeneratorSpec generator_spec;
    DiscriminatorSpec discriminator_spec;
    TrainConfig train_config;
    TrainingProvenance provenance;
    std::vector<LossRecord> loss_log;

    nlohmann::json metadata() const;
};

using ProgressFn = std::function<void(int step, int total)>;

// One (CFI, tile) pair per grid tile, row-major.
std::vector<TrainingPair> cfi_training_pairs(const TileGrid& grid, const CannyParams& canny = {});
// One (SFI, tile) pair per grid tile; annotations are in scene coordinates.
std::vector<TrainingPair> sfi_training_pairs(const TileGrid& grid, const std::vector<PolygonAnnotation>& annotations);

TranslatorCheckpoint train_translator(const std::vector<TrainingPair>& pairs, const GeneratorSpec& g_spec,
                                      const DiscriminatorSpec& d_spec, const TrainConfig& config,
                                      const std::string& scene_id = {}, const ProgressFn& progress = {});

std::string loss_log_csv(const std::vector<LossRecord>& log);

// Directory archive: translator.pt (weights with embedded metadata),
// checkpoint.json sidecar and loss_log.csv.
void save_checkpoint(const TranslatorCheckpoint& ckpt, const std::filesystem::path& dir);
TranslatorCheckpoint load_checkpoint(const std::filesystem::path& dir);

// Immutable inference wrapper, callable from several threads.
class Translator {
public:
    explicit Translator(TranslatorCheckpoint ckpt);

    Tile translate(const FeatureImage& feature) const;
    // Generator output before quantization, 3 x H x W in [-1, 1].
    torch::Tensor raw_output(const FeatureImage& feature) const;
    const TranslatorCheckpoint& checkpoint() const { return ckpt_; }
    int tile_size() const { return ckpt_.provenance.tile_size; }

private:
    TranslatorCheckpoint ckpt_;
    mutable std::mutex mutex_;
};

// Mean L1 in [-1,1] units between translations and targets.
double mean_l1(const Translator& t, const std::vector<TrainingPair>& pairs);

}  // namespace satforge
