#include "satforge/error.hpp"
#include "satforge/translator.hpp"

namespace satforge {

namespace {

std::string family_name(GeneratorFamily f) { return f == GeneratorFamily::unet_skip ? "unet_skip" : "coarse_to_fine"; }

GeneratorFamily family_from(const std::string& s) {
    if (s == "unet_skip") return GeneratorFamily::unet_skip;
    if (s == "coarse_to_fine") return GeneratorFamily::coarse_to_fine;
    throw Error(ErrorCode::InvalidSpec, "unknown generator family '" + s + "'");
}

std::string loss_name(AdversarialLoss l) { return l == AdversarialLoss::least_squares ? "least_squares" : "cross_entropy"; }

AdversarialLoss loss_from(const std::string& s) {
    if (s == "least_squares") return AdversarialLoss::least_squares;
    if (s == "cross_entropy") return AdversarialLoss::cross_entropy;
    throw Error(ErrorCode::InvalidParams, "unknown adversarial loss '" + s + "'");
}

}  // namespace

void GeneratorSpec::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); };
    if (base_channels < 1) fail("base_channels must be positive");
    if (depth < 1) fail("depth must be positive");
    if (input_channels < 1 || output_channels < 1) fail("channel counts must be positive");
    if (family == GeneratorFamily::unet_skip) {
        if (depth < 2) fail("unet_skip needs depth >= 2");
        if (has_local_enhancer) fail("local enhancer only applies to coarse_to_fine");
    } else if (residual_blocks < 0) {
        fail("residual_blocks must be non-negative");
    }
}

int GeneratorSpec::size_multiple() const {
    if (family == GeneratorFamily::unet_skip) return 1 << depth;
    return 1 << (depth + (has_local_enhancer ? 1 : 0));
}

void DiscriminatorSpec::validate() const {
    if (num_scales < 1) throw Error(ErrorCode::InvalidSpec, "num_scales must be >= 1", {{"num_scales", num_scales}});
    if (n_layers < 1) throw Error(ErrorCode::InvalidSpec, "n_layers must be >= 1");
    if (base_channels < 1 || input_channels < 1) throw Error(ErrorCode::InvalidSpec, "channel counts must be positive");
}

int DiscriminatorSpec::patch_receptive_field() const {
    // Two stride-1 4x4 convolutions at the end, n_layers stride-2 ones before.
    int rf = 1 + 3 + 3;
    for (int i = 0; i < n_layers; ++i) rf = rf * 2 + 2;
    return rf;
}

void TrainConfig::validate() const {
    if (steps < 1 || batch_size < 1 || !(learning_rate > 0.0) || feature_matching_weight < 0.0 || l1_weight < 0.0 ||
        !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw Error(ErrorCode::InvalidParams, "train config requires positive counts and rates",
                    nlohmann::json(*this));
    }
}

void to_json(nlohmann::json& j, const GeneratorSpec& s) {
    j = {{"family", family_name(s.family)},
         {"base_channels", s.base_channels},
         {"depth", s.depth},
         {"has_local_enhancer", s.has_local_enhancer},
         {"residual_blocks", s.residual_blocks},
         {"input_channels", s.input_channels},
         {"output_channels", s.output_channels}};
}

void from_json(const nlohmann::json& j, GeneratorSpec& s) {
    GeneratorSpec d;
    s.family = family_from(j.value("family", family_name(d.family)));
    s.base_channels = j.value("base_channels", d.base_channels);
    s.depth = j.value("depth", d.depth);
    s.has_local_enhancer = j.value("has_local_enhancer", d.has_local_enhancer);
    s.residual_blocks = j.value("residual_blocks", d.residual_blocks);
    s.input_channels = j.value("input_channels", d.input_channels);
    s.output_channels = j.value("output_channels", d.output_channels);
}

void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
    j = {{"num_scales", s.num_scales},
         {"n_layers", s.n_layers},
         {"base_channels", s.base_channels},
         {"input_channels", s.input_channels},
         {"patch_receptive_field", s.patch_receptive_field()}};
}

void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
    DiscriminatorSpec d;
    s.num_scales = j.value("num_scales", d.num_scales);
    s.n_layers = j.value("n_layers", d.n_layers);
    s.base_channels = j.value("base_channels", d.base_channels);
    s.input_channels = j.value("input_channels", d.input_channels);
    if (j.contains("patch_receptive_field") && !j.contains("n_layers")) {
        const int want = j.at("patch_receptive_field").get<int>();
        for (int n = 1; n <= 6; ++n) {
            s.n_layers = n;
            if (s.patch_receptive_field() == want) return;
        }
        throw Error(ErrorCode::InvalidSpec, "unsupported patch_receptive_field", {{"value", want}});
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"steps", c.steps},
         {"learning_rate", c.learning_rate},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"batch_size", c.batch_size},
         {"adversarial_loss", loss_name(c.adversarial_loss)},
         {"feature_matching_weight", c.feature_matching_weight},
         {"l1_weight", c.l1_weight},
         {"seed", c.seed},
         {"dump_every", c.dump_every},
         {"dump_dir", c.dump_dir.string()}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.steps = j.value("steps", d.steps);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.adversarial_loss = loss_from(j.value("adversarial_loss", loss_name(d.adversarial_loss)));
    c.feature_matching_weight = j.value("feature_matching_weight", d.feature_matching_weight);
    c.l1_weight = j.value("l1_weight", d.l1_weight);
    c.seed = j.value("seed", d.seed);
    c.dump_every = j.value("dump_every", d.dump_every);
    c.dump_dir = j.value("dump_dir", std::string{});
}

}  // namespace satforge
