#pragma once

#include <cstdint>

#include "satforge/translator.hpp"

namespace satforge::testing {

struct GradCheck {
    std::int64_t parameters = 0;  // generator plus discriminators
    int checked = 0;
    double max_relative_error = 0.0;
    // The L1 reconstruction term alone, on generator weights.
    int l1_checked = 0;
    double l1_max_relative_error = 0.0;
};

// Central differences in double precision on `samples` generator weights
// (L1 term alone), `samples` generator weights
// (generator objective) and `samples` discriminator weights (discriminator
// objective), against autograd.
GradCheck cgan_gradcheck(std::uint64_t seed, int samples = 10, double eps = 1e-6);

// Small U-Net translator trained for a few steps on every tile of `grid`.
TranslatorCheckpoint toy_checkpoint(const TileGrid& grid, int steps = 3, std::uint64_t seed = 0,
                                    const CannyParams& canny = {});

}  // namespace satforge::testing
