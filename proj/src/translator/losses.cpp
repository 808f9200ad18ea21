#include "satforge/error.hpp"
#include "satforge/translator.hpp"

namespace satforge {

namespace {

torch::Tensor score_loss(const torch::Tensor& score, bool target_real, AdversarialLoss form) {
    const auto target = target_real ? torch::ones_like(score) : torch::zeros_like(score);
    if (form == AdversarialLoss::least_squares) return torch::mse_loss(score, target);
    return torch::binary_cross_entropy(score, target);
}

void check_outputs(const DiscriminatorOutputs& a, const DiscriminatorOutputs& b) {
    if (a.size() != b.size() || a.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "discriminator outputs disagree in scale count");
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].size() != b[k].size() || a[k].empty()) {
            throw Error(ErrorCode::ShapeMismatch, "discriminator outputs disagree in layer count", {{"scale", k}});
        }
        for (std::size_t l = 0; l < a[k].size(); ++l) {
            if (!a[k][l].sizes().equals(b[k][l].sizes())) {
                throw Error(ErrorCode::ShapeMismatch, "discriminator activations disagree in shape",
                            {{"scale", k}, {"layer", l}});
            }
        }
    }
}

}  // namespace

torch::Tensor adversarial_term(const DiscriminatorOutputs& outputs, bool target_real, AdversarialLoss form) {
    if (outputs.empty()) throw Error(ErrorCode::ShapeMismatch, "no discriminator outputs");
    torch::Tensor total;
    for (const auto& scale : outputs) {
        auto l = score_loss(scale.back(), target_real, form);
        total = total.defined() ? total + l : l;
    }
    return total / static_cast<double>(outputs.size());
}

torch::Tensor discriminator_loss(const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake,
                                 AdversarialLoss form, torch::Tensor* real_part, torch::Tensor* fake_part) {
    check_outputs(real, fake);
    auto r = adversarial_term(real, true, form);
    auto f = adversarial_term(fake, false, form);
    if (real_part) *real_part = r;
    if (fake_part) *fake_part = f;
    return r + f;
}

LossTerms generator_loss(const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake,
                         const torch::Tensor& fake_image, const torch::Tensor& real_image, const TrainConfig& cfg) {
    check_outputs(real, fake);
    if (!fake_image.sizes().equals(real_image.sizes())) {
        throw Error(ErrorCode::ShapeMismatch, "generated and target images differ in shape");
    }
    LossTerms t;
    t.g_adv = adversarial_term(fake, true, cfg.adversarial_loss);

    torch::Tensor fm = torch::zeros({}, fake_image.options());
    for (std::size_t k = 0; k < fake.size(); ++k) {
        const std::size_t layers = fake[k].size() - 1;
        if (layers == 0) continue;
        torch::Tensor per_scale = torch::zeros({}, fake_image.options());
        for (std::size_t l = 0; l < layers; ++l) {
            per_scale = per_scale + torch::l1_loss(fake[k][l], real[k][l].detach());
        }
        fm = fm + per_scale / static_cast<double>(layers);
    }
    t.g_fm = fm / static_cast<double>(fake.size());
    t.g_l1 = torch::l1_loss(fake_image, real_image);
    t.generator_loss = t.g_adv + cfg.feature_matching_weight * t.g_fm + cfg.l1_weight * t.g_l1;
    return t;
}

LossTerms cgan_losses(const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake,
                      const torch::Tensor& fake_image, const torch::Tensor& real_image, const TrainConfig& cfg) {
    LossTerms t = generator_loss(real, fake, fake_image, real_image, cfg);
    t.discriminator_loss = discriminator_loss(real, fake, cfg.adversarial_loss, &t.d_real, &t.d_fake);
    return t;
}

}  // namespace satforge
