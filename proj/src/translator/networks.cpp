#include <cstring>
#include <mutex>

#include "satforge/error.hpp"
#include "satforge/translator.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace satforge {

// The default generator is process-global; construction under a fixed seed
// must not interleave with another construction.
std::unique_lock<std::mutex> seeded_construction(std::uint64_t seed) {
    static std::mutex m;
    std::unique_lock lock(m);
    torch::manual_seed(seed);
    return lock;
}

namespace {

void init_weights(nn::Module& m) {
    torch::NoGradGuard guard;
    for (auto& sub : m.modules(/*include_self=*/true)) {
        if (auto* conv = sub->as<nn::Conv2d>()) {
            conv->weight.normal_(0.0, 0.02);
            if (conv->bias.defined()) conv->bias.zero_();
        } else if (auto* deconv = sub->as<nn::ConvTranspose2d>()) {
            deconv->weight.normal_(0.0, 0.02);
            if (deconv->bias.defined()) deconv->bias.zero_();
        }
    }
}

nn::InstanceNorm2d instance_norm(int channels) {
    return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(false).track_running_stats(false));
}

torch::Tensor downsample2(const torch::Tensor& x) {
    return F::avg_pool2d(x, F::AvgPool2dFuncOptions(3).stride(2).padding(1).count_include_pad(false));
}

void check_input(const torch::Tensor& x, const GeneratorSpec& spec) {
    if (x.dim() != 4 || x.size(1) != spec.input_channels) {
        throw Error(ErrorCode::DimMismatch, "generator expects N x C x H x W input",
                    {{"expected_channels", spec.input_channels}});
    }
    const int mult = spec.size_multiple();
    if (x.size(2) % mult != 0 || x.size(3) % mult != 0) {
        throw Error(ErrorCode::DimMismatch, "input spatial size must be a multiple of " + std::to_string(mult),
                    {{"height", x.size(2)}, {"width", x.size(3)}});
    }
}

struct ResidualBlockImpl : nn::Module {
    explicit ResidualBlockImpl(int ch) {
        body = register_module(
            "body", nn::Sequential(nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(ch, ch, 3)), instance_norm(ch),
                                   nn::ReLU(), nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(ch, ch, 3)),
                                   instance_norm(ch)));
    }
    torch::Tensor forward(const torch::Tensor& x) { return x + body->forward(x); }
    nn::Sequential body{nullptr};
};
TORCH_MODULE(ResidualBlock);

}  // namespace

// ---------------------------------------------------------------------------

UNetGeneratorImpl::UNetGeneratorImpl(const GeneratorSpec& spec) : GeneratorImpl(spec) {
    const int d = spec.depth;
    std::vector<int> ch(d);
    for (int i = 0; i < d; ++i) ch[i] = spec.base_channels * (1 << std::min(i, 3));

    for (int i = 0; i < d; ++i) {
        const int in = i == 0 ? spec.input_channels : ch[i - 1];
        down_.push_back(register_module("down" + std::to_string(i),
                                        nn::Conv2d(nn::Conv2dOptions(in, ch[i], 4).stride(2).padding(1))));
        // Outermost and innermost encoder layers carry no normalization.
        down_norm_.push_back(i != 0 && i != d - 1);
    }
    for (int i = 0; i < d; ++i) {
        const int in = i == d - 1 ? ch[i] : ch[i] * 2;
        const int out = i == 0 ? spec.output_channels : ch[i - 1];
        up_.push_back(register_module("up" + std::to_string(i),
                                      nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1))));
    }
}

torch::Tensor UNetGeneratorImpl::forward(const torch::Tensor& feature) {
    check_input(feature, spec_);
    const int d = spec_.depth;
    std::vector<torch::Tensor> skips;
    skips.reserve(d);
    torch::Tensor h = feature;
    for (int i = 0; i < d; ++i) {
        if (i > 0) h = F::leaky_relu(h, F::LeakyReLUFuncOptions().negative_slope(0.2));
        h = down_[i]->forward(h);
        if (down_norm_[i]) h = F::instance_norm(h);
        skips.push_back(h);
    }
    torch::Tensor u = skips.back();
    for (int i = d - 1; i >= 1; --i) {
        u = F::instance_norm(up_[i]->forward(torch::relu(u)));
        u = torch::cat({u, skips[i - 1]}, 1);
    }
    return torch::tanh(up_[0]->forward(torch::relu(u)));
}

// ---------------------------------------------------------------------------

CoarseToFineGeneratorImpl::CoarseToFineGeneratorImpl(const GeneratorSpec& spec) : GeneratorImpl(spec) {
    const bool local = spec.has_local_enhancer;
    const int ngf = local ? spec.base_channels * 2 : spec.base_channels;

    global_ = nn::Sequential();
    global_->push_back(nn::ReflectionPad2d(3));
    global_->push_back(nn::Conv2d(nn::Conv2dOptions(spec.input_channels, ngf, 7)));
    global_->push_back(instance_norm(ngf));
    global_->push_back(nn::ReLU());
    for (int i = 0; i < spec.depth; ++i) {
        const int m = 1 << i;
        global_->push_back(nn::Conv2d(nn::Conv2dOptions(ngf * m, ngf * m * 2, 3).stride(2).padding(1)));
        global_->push_back(instance_norm(ngf * m * 2));
        global_->push_back(nn::ReLU());
    }
    const int bottleneck = ngf * (1 << spec.depth);
    for (int i = 0; i < spec.residual_blocks; ++i) global_->push_back(ResidualBlock(bottleneck));
    for (int i = spec.depth; i > 0; --i) {
        const int m = 1 << i;
        global_->push_back(nn::ConvTranspose2d(
            nn::ConvTranspose2dOptions(ngf * m, ngf * m / 2, 3).stride(2).padding(1).output_padding(1)));
        global_->push_back(instance_norm(ngf * m / 2));
        global_->push_back(nn::ReLU());
    }
    register_module("global", global_);

    if (!local) {
        global_head_ = register_module(
            "global_head", nn::Sequential(nn::ReflectionPad2d(3),
                                          nn::Conv2d(nn::Conv2dOptions(ngf, spec.output_channels, 7)), nn::Tanh()));
        return;
    }

    const int lgf = spec.base_channels;
    local_front_ = register_module(
        "local_front",
        nn::Sequential(nn::ReflectionPad2d(3), nn::Conv2d(nn::Conv2dOptions(spec.input_channels, lgf, 7)),
                       instance_norm(lgf), nn::ReLU(),
                       nn::Conv2d(nn::Conv2dOptions(lgf, lgf * 2, 3).stride(2).padding(1)), instance_norm(lgf * 2),
                       nn::ReLU()));
    local_back_ = nn::Sequential();
    for (int i = 0; i < 3; ++i) local_back_->push_back(ResidualBlock(lgf * 2));
    local_back_->push_back(
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(lgf * 2, lgf, 3).stride(2).padding(1).output_padding(1)));
    local_back_->push_back(instance_norm(lgf));
    local_back_->push_back(nn::ReLU());
    local_back_->push_back(nn::ReflectionPad2d(3));
    local_back_->push_back(nn::Conv2d(nn::Conv2dOptions(lgf, spec.output_channels, 7)));
    local_back_->push_back(nn::Tanh());
    register_module("local_back", local_back_);
}

torch::Tensor CoarseToFineGeneratorImpl::global_input(const torch::Tensor& feature) const {
    return spec_.has_local_enhancer ? downsample2(feature) : feature;
}

torch::Tensor CoarseToFineGeneratorImpl::forward(const torch::Tensor& feature) {
    check_input(feature, spec_);
    const torch::Tensor coarse = global_->forward(global_input(feature));
    if (!spec_.has_local_enhancer) return global_head_->forward(coarse);
    return local_back_->forward(local_front_->forward(feature) + coarse);
}

Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto lock = seeded_construction(seed);
    Generator g;
    if (spec.family == GeneratorFamily::unet_skip) {
        g = std::make_shared<UNetGeneratorImpl>(spec);
    } else {
        g = std::make_shared<CoarseToFineGeneratorImpl>(spec);
    }
    init_weights(*g);
    return g;
}

std::int64_t parameter_count(const nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters()) n += p.numel();
    return n;
}

std::uint64_t parameter_checksum(const nn::Module& m) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& p : m.parameters()) {
        const auto c = p.detach().to(torch::kFloat).contiguous();
        const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
        for (std::size_t i = 0; i < static_cast<std::size_t>(c.numel()) * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorSpec& spec, bool sigmoid_output) {
    constexpr int kw = 4;
    constexpr int pad = 2;
    int nf = spec.base_channels;
    auto add = [this](nn::Sequential s) {
        stages_.push_back(register_module("stage" + std::to_string(stages_.size()), std::move(s)));
    };
    add(nn::Sequential(nn::Conv2d(nn::Conv2dOptions(spec.input_channels, nf, kw).stride(2).padding(pad)),
                       nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2))));
    for (int n = 1; n < spec.n_layers; ++n) {
        const int prev = nf;
        nf = std::min(nf * 2, 512);
        add(nn::Sequential(nn::Conv2d(nn::Conv2dOptions(prev, nf, kw).stride(2).padding(pad)), instance_norm(nf),
                           nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2))));
    }
    const int prev = nf;
    nf = std::min(nf * 2, 512);
    add(nn::Sequential(nn::Conv2d(nn::Conv2dOptions(prev, nf, kw).stride(1).padding(pad)), instance_norm(nf),
                       nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2))));
    nn::Sequential head(nn::Conv2d(nn::Conv2dOptions(nf, 1, kw).stride(1).padding(pad)));
    if (sigmoid_output) head->push_back(nn::Sigmoid());
    add(head);
}

std::vector<torch::Tensor> PatchDiscriminatorImpl::forward(const torch::Tensor& pair) {
    std::vector<torch::Tensor> out;
    out.reserve(stages_.size());
    torch::Tensor h = pair;
    for (auto& s : stages_) {
        h = s->forward(h);
        out.push_back(h);
    }
    return out;
}

MultiScaleDiscriminatorImpl::MultiScaleDiscriminatorImpl(const DiscriminatorSpec& spec, AdversarialLoss loss) {
    spec.validate();
    for (int k = 0; k < spec.num_scales; ++k) {
        scales_.push_back(register_module("scale" + std::to_string(k),
                                          PatchDiscriminator(spec, loss == AdversarialLoss::cross_entropy)));
    }
}

std::vector<torch::Tensor> MultiScaleDiscriminatorImpl::pyramid(const torch::Tensor& pair) const {
    std::vector<torch::Tensor> levels{pair};
    for (std::size_t k = 1; k < scales_.size(); ++k) levels.push_back(downsample2(levels.back()));
    return levels;
}

DiscriminatorOutputs MultiScaleDiscriminatorImpl::forward(const torch::Tensor& pair) {
    const auto levels = pyramid(pair);
    DiscriminatorOutputs out;
    out.reserve(scales_.size());
    for (std::size_t k = 0; k < scales_.size(); ++k) out.push_back(scales_[k]->forward(levels[k]));
    return out;
}

MultiScaleDiscriminator build_discriminators(const DiscriminatorSpec& spec, AdversarialLoss loss, std::uint64_t seed) {
    spec.validate();
    const auto lock = seeded_construction(seed);
    MultiScaleDiscriminator d(spec, loss);
    init_weights(*d);
    return d;
}

}  // namespace satforge
