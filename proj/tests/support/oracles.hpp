#pragma once

#include <cstdint>
#include <vector>

#include "satforge/geometry.hpp"
#include "satforge/imaging.hpp"

// Reference implementations used only by tests. They favour directness over
// speed and share no code with the library.
namespace satforge::oracle {

struct Field {
    int height = 0;
    int width = 0;
    std::vector<double> v;
    double& operator()(int y, int x) { return v[static_cast<std::size_t>(y) * width + x]; }
    double operator()(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

// Mirror with edge repetition by repeated folding.
int fold(int i, int n);

Field luma(const Raster& r);
// Full 2-D Gaussian convolution (not separable), radius ceil(3 sigma), normalized.
Field blur2d(const Field& f, double sigma);
// Direct 3x3 Sobel correlation; returns magnitude, and gx / gy via out params.
Field sobel_magnitude(const Field& f, Field* gx = nullptr, Field* gy = nullptr);
// NMS with angle binning by atan2, then recursive hysteresis.
Raster canny(const Raster& r, double sigma, double low, double high);

// Even-odd crossing test with the ray cast towards -x.
bool crossing_parity(const std::vector<Point>& poly, double px, double py);
// Brute force: test every pixel centre of an h x w tile.
Raster rasterize(const std::vector<Point>& poly, int h, int w);

// (2 * concordant + ties) / (2 * P * N) by exhaustive pairs.
double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean silhouette coefficient with Euclidean distances.
double silhouette(const std::vector<std::vector<double>>& points, const std::vector<int>& labels);

// Mean of squared differences over all samples, on the 0..255 scale.
double mse_255(const Raster& a, const Raster& b);

}  // namespace satforge::oracle
