#include "torch_helpers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace satforge::testing {

namespace {

struct Flat {
    torch::Tensor* tensor;
    std::int64_t offset;
};

std::vector<Flat> pick(std::vector<torch::Tensor>& params, int n, std::mt19937_64& rng) {
    std::vector<Flat> all;
    for (auto& p : params) {
        for (std::int64_t i = 0; i < p.numel(); ++i) all.push_back({&p, i});
    }
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min<std::size_t>(all.size(), n));
    return all;
}

double numeric(const Flat& f, double eps, const std::function<double()>& loss) {
    torch::NoGradGuard guard;
    auto flat = f.tensor->view(-1);
    const double orig = flat[f.offset].item<double>();
    flat[f.offset].fill_(orig + eps);
    const double up = loss();
    flat[f.offset].fill_(orig - eps);
    const double down = loss();
    flat[f.offset].fill_(orig);
    return (up - down) / (2 * eps);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7}); }

}  // namespace

GradCheck cgan_gradcheck(std::uint64_t seed, int samples, double eps) {
    GeneratorSpec gs;
    gs.family = GeneratorFamily::unet_skip;
    gs.base_channels = 4;
    gs.depth = 3;
    DiscriminatorSpec ds;
    ds.num_scales = 2;
    ds.n_layers = 1;
    ds.base_channels = 4;
    TrainConfig cfg;

    auto g = build_generator(gs, seed);
    auto d = build_discriminators(ds, cfg.adversarial_loss, seed + 1);
    g->to(torch::kDouble);
    d->to(torch::kDouble);

    torch::manual_seed(seed);
    const auto feat = (torch::rand({1, 1, 16, 16}, torch::kDouble) > 0.8).to(torch::kDouble) * 2 - 1;
    const auto real = torch::rand({1, 3, 16, 16}, torch::kDouble) * 2 - 1;

    auto g_loss = [&] {
        const auto fake = g->forward(feat);
        return generator_loss(d->forward(torch::cat({feat, real}, 1)), d->forward(torch::cat({feat, fake}, 1)), fake,
                              real, cfg)
            .generator_loss;
    };
    auto l1_loss = [&] {
        const auto fake = g->forward(feat);
        return generator_loss(d->forward(torch::cat({feat, real}, 1)), d->forward(torch::cat({feat, fake}, 1)), fake,
                              real, cfg)
            .g_l1;
    };
    auto d_loss = [&] {
        const auto fake = g->forward(feat).detach();
        return discriminator_loss(d->forward(torch::cat({feat, real}, 1)), d->forward(torch::cat({feat, fake}, 1)),
                                  cfg.adversarial_loss);
    };

    GradCheck out;
    out.parameters = parameter_count(*g) + parameter_count(*d);
    std::mt19937_64 rng(seed);
    auto check = [&](torch::nn::Module& m, const std::function<torch::Tensor()>& loss, double& worst, int& count) {
        auto params = m.parameters();
        g->zero_grad();
        d->zero_grad();
        loss().backward();
        for (const auto& f : pick(params, samples, rng)) {
            const double analytic = f.tensor->grad().view(-1)[f.offset].item<double>();
            const double approx = numeric(f, eps, [&] { return loss().item<double>(); });
            worst = std::max(worst, rel(analytic, approx));
            ++count;
        }
    };
    check(*g, l1_loss, out.l1_max_relative_error, out.l1_checked);
    check(*g, g_loss, out.max_relative_error, out.checked);
    check(*d, d_loss, out.max_relative_error, out.checked);
    return out;
}

TranslatorCheckpoint toy_checkpoint(const TileGrid& grid, int steps, std::uint64_t seed, const CannyParams& canny) {
    GeneratorSpec gs;
    gs.family = GeneratorFamily::unet_skip;
    gs.base_channels = 4;
    gs.depth = 3;
    DiscriminatorSpec ds;
    ds.num_scales = 1;
    ds.n_layers = 1;
    ds.base_channels = 4;
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.seed = seed;
    return train_translator(cfi_training_pairs(grid, canny), gs, ds, cfg, grid.scene_id);
}

}  // namespace satforge::testing
