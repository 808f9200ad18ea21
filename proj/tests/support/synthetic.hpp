#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "satforge/imaging.hpp"

namespace satforge::testing {

// Smooth low-frequency colour field standing in for terrain.
Raster smooth_background(int height, int width, std::uint32_t seed);

// Terrain plus randomly placed flat-coloured rectangles ("roofs", "lots").
Raster synthetic_scene(int height, int width, std::uint32_t seed, int objects_per_64px_tile = 2);

// Draws a filled axis-aligned box of the given colour.
void paint_box(Raster& r, int x0, int y0, int x1, int y1, std::uint8_t cr, std::uint8_t cg, std::uint8_t cb);

Raster random_raster(int height, int width, int channels, std::mt19937& rng);

}  // namespace satforge::testing
