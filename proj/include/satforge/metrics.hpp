#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "satforge/imaging.hpp"

namespace satforge {

enum class MseConvention {
    unit,       // [0,1] scale
    eight_bit,  // [0,255] scale
    reported,   // eight_bit / 255, the scale under which published MSE/PSNR pairs agree
};

inline constexpr double kPsnrCapDb = 100.0;

double mse(const Raster& a, const Raster& b, MseConvention convention = MseConvention::unit);

// 10 log10(255^2 / mse_eight_bit); identical inputs give kPsnrCapDb.
double psnr(const Raster& a, const Raster& b);

// PSNR implied by a `reported`-convention MSE value.
double psnr_from_reported_mse(double mse_reported);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

// Per-pixel local SSIM on the luma plane scaled to [0,1], Gaussian-weighted
// windows centred on every pixel with mirrored borders.
std::vector<double> ssim_map(const Raster& a, const Raster& b, const SsimOptions& opt = {});
double ssim(const Raster& a, const Raster& b, const SsimOptions& opt = {});

enum class MetricRegion { full_image, tile, masked_region };

std::string to_string(MetricRegion r);

struct RegionSelector {
    MetricRegion kind = MetricRegion::full_image;
    GridCoord tile;
    int tile_size = kDefaultTileSize;
    Raster mask;  // tile_size x tile_size, nonzero = inside; masked_region only

    static RegionSelector full() { return {}; }
    static RegionSelector of_tile(GridCoord c, int tile_size);
    static RegionSelector of_mask(GridCoord c, int tile_size, Raster mask);
};

struct SimilarityReport {
    MetricRegion region = MetricRegion::full_image;
    double mse_unit = 0.0;
    double mse_reported = 0.0;
    double psnr_db = kPsnrCapDb;
    double ssim = 1.0;
    std::size_t pixel_count = 0;
};

nlohmann::json to_json(const SimilarityReport& r);

SimilarityReport degradation_report(const Raster& ground_truth, const Raster& forged, const RegionSelector& region);
SimilarityReport degradation_report(const Scene& ground_truth, const Scene& forged, const RegionSelector& region);

// Metric x {CFI, SFI} x column table, as used for side-by-side comparison runs.
struct ComparisonTable {
    std::vector<std::string> columns;  // e.g. A, B, C, D
    std::map<std::string, SimilarityReport> cfi;
    std::map<std::string, SimilarityReport> sfi;
};

// Rows: MSE/CFI, MSE/SFI, PSNR/CFI, PSNR/SFI, SSIM/CFI, SSIM/SFI. MSE uses the
// reported convention.
std::string comparison_csv(const ComparisonTable& table);

}  // namespace satforge
