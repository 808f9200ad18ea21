#include "satforge/metrics.hpp"

#include <cmath>
#include <sstream>

#include "satforge/error.hpp"

namespace satforge {

namespace {

void require_same_shape(const Raster& a, const Raster& b) {
    if (!a.same_shape(b) || a.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "rasters differ in shape",
                    {{"a", {a.height, a.width, a.channels}}, {"b", {b.height, b.width, b.channels}}});
    }
}

// Squared-difference sum over the selected pixels on the 0-255 scale.
double eight_bit_mse_over(const Raster& a, const Raster& b, const std::vector<std::uint8_t>* select,
                          std::size_t& count) {
    double sum = 0.0;
    count = 0;
    const auto n = static_cast<std::size_t>(a.height) * a.width;
    for (std::size_t p = 0; p < n; ++p) {
        if (select && !(*select)[p]) continue;
        ++count;
        for (int c = 0; c < a.channels; ++c) {
            const double d = double(a.data[p * a.channels + c]) - double(b.data[p * a.channels + c]);
            sum += d * d;
        }
    }
    return count ? sum / (static_cast<double>(count) * a.channels) : 0.0;
}

std::vector<double> unit_luma(const Raster& r) {
    std::vector<double> out(static_cast<std::size_t>(r.height) * r.width);
    for (std::size_t p = 0; p < out.size(); ++p) {
        const auto* px = &r.data[p * r.channels];
        const double y = r.channels >= 3 ? 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2] : px[0];
        out[p] = y / 255.0;
    }
    return out;
}

std::vector<double> blur(const std::vector<double>& in, int h, int w, const std::vector<double>& k) {
    const int radius = static_cast<int>(k.size() / 2);
    std::vector<double> tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in[y * w + reflect_index(x + i, w)];
            tmp[y * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[reflect_index(y + i, h) * w + x];
            out[y * w + x] = acc;
        }
    }
    return out;
}

}  // namespace

double mse(const Raster& a, const Raster& b, MseConvention convention) {
    require_same_shape(a, b);
    std::size_t count = 0;
    const double e8 = eight_bit_mse_over(a, b, nullptr, count);
    switch (convention) {
        case MseConvention::unit: return e8 / (255.0 * 255.0);
        case MseConvention::eight_bit: return e8;
        case MseConvention::reported: return e8 / 255.0;
    }
    return e8;
}

double psnr(const Raster& a, const Raster& b) {
    const double e8 = mse(a, b, MseConvention::eight_bit);
    if (e8 == 0.0) return kPsnrCapDb;
    return 10.0 * std::log10(255.0 * 255.0 / e8);
}

double psnr_from_reported_mse(double mse_reported) {
    if (mse_reported <= 0.0) return kPsnrCapDb;
    return 10.0 * std::log10(255.0 / mse_reported);
}

std::vector<double> ssim_map(const Raster& a, const Raster& b, const SsimOptions& opt) {
    require_same_shape(a, b);
    if (opt.window < 1 || opt.window % 2 == 0 || a.height < opt.window || a.width < opt.window) {
        throw Error(ErrorCode::WindowTooLarge, "SSIM window must be odd and fit inside the image",
                    {{"window", opt.window}, {"height", a.height}, {"width", a.width}});
    }
    const int h = a.height;
    const int w = a.width;
    const int radius = opt.window / 2;
    std::vector<double> k(opt.window);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) ksum += k[i + radius] = std::exp(-(i * i) / (2.0 * opt.sigma * opt.sigma));
    for (double& v : k) v /= ksum;

    const auto la = unit_luma(a);
    const auto lb = unit_luma(b);
    std::vector<double> aa(la.size()), bb(la.size()), ab(la.size());
    for (std::size_t i = 0; i < la.size(); ++i) {
        aa[i] = la[i] * la[i];
        bb[i] = lb[i] * lb[i];
        ab[i] = la[i] * lb[i];
    }
    const auto mu_a = blur(la, h, w, k);
    const auto mu_b = blur(lb, h, w, k);
    const auto e_aa = blur(aa, h, w, k);
    const auto e_bb = blur(bb, h, w, k);
    const auto e_ab = blur(ab, h, w, k);

    std::vector<double> out(la.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
        const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + opt.c1) * (2.0 * cov + opt.c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + opt.c1) * (var_a + var_b + opt.c2);
        out[i] = num / den;
    }
    return out;
}

double ssim(const Raster& a, const Raster& b, const SsimOptions& opt) {
    const auto m = ssim_map(a, b, opt);
    double sum = 0.0;
    for (double v : m) sum += v;
    return sum / static_cast<double>(m.size());
}

std::string to_string(MetricRegion r) {
    switch (r) {
        case MetricRegion::full_image: return "full_image";
        case MetricRegion::tile: return "tile";
        case MetricRegion::masked_region: return "masked_region";
    }
    return "full_image";
}

RegionSelector RegionSelector::of_tile(GridCoord c, int tile_size) {
    RegionSelector r;
    r.kind = MetricRegion::tile;
    r.tile = c;
    r.tile_size = tile_size;
    return r;
}

RegionSelector RegionSelector::of_mask(GridCoord c, int tile_size, Raster mask) {
    RegionSelector r;
    r.kind = MetricRegion::masked_region;
    r.tile = c;
    r.tile_size = tile_size;
    r.mask = std::move(mask);
    return r;
}

nlohmann::json to_json(const SimilarityReport& r) {
    return {{"region", to_string(r.region)}, {"mse_unit", r.mse_unit},   {"mse_reported", r.mse_reported},
            {"psnr_db", r.psnr_db},          {"ssim", r.ssim},           {"pixel_count", r.pixel_count},
            {"ssim_input", "luma"},          {"mse_input", "rgb_channel_mean"}};
}

SimilarityReport degradation_report(const Raster& gt, const Raster& forged, const RegionSelector& region) {
    require_same_shape(gt, forged);
    const auto n = static_cast<std::size_t>(gt.height) * gt.width;
    std::vector<std::uint8_t> select;
    if (region.kind != MetricRegion::full_image) {
        const int ts = region.tile_size;
        const int y0 = region.tile.row * ts;
        const int x0 = region.tile.col * ts;
        if (region.tile.row < 0 || region.tile.col < 0 || y0 >= gt.height || x0 >= gt.width) {
            throw Error(ErrorCode::OutOfBounds, "region tile outside image");
        }
        if (region.kind == MetricRegion::masked_region &&
            (region.mask.height != ts || region.mask.width != ts || region.mask.channels != 1)) {
            throw Error(ErrorCode::ShapeMismatch, "mask must be a single-channel tile-sized raster");
        }
        select.assign(n, 0);
        for (int y = y0; y < std::min(gt.height, y0 + ts); ++y) {
            for (int x = x0; x < std::min(gt.width, x0 + ts); ++x) {
                const bool in = region.kind == MetricRegion::tile || region.mask.at(y - y0, x - x0) != 0;
                if (in) select[static_cast<std::size_t>(y) * gt.width + x] = 1;
            }
        }
    }

    SimilarityReport rep;
    rep.region = region.kind;
    const double e8 = eight_bit_mse_over(gt, forged, select.empty() ? nullptr : &select, rep.pixel_count);
    rep.mse_unit = e8 / (255.0 * 255.0);
    rep.mse_reported = e8 / 255.0;
    rep.psnr_db = e8 == 0.0 ? kPsnrCapDb : 10.0 * std::log10(255.0 * 255.0 / e8);

    if (rep.pixel_count == 0) {
        rep.ssim = 1.0;
        return rep;
    }
    const auto map = ssim_map(gt, forged);
    double sum = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        if (select.empty() || select[p]) sum += map[p];
    }
    rep.ssim = sum / static_cast<double>(rep.pixel_count);
    return rep;
}

SimilarityReport degradation_report(const Scene& gt, const Scene& forged, const RegionSelector& region) {
    return degradation_report(gt.pixels, forged.pixels, region);
}

std::string comparison_csv(const ComparisonTable& t) {
    std::ostringstream os;
    os.precision(6);
    os << "metric,feature";
    for (const auto& c : t.columns) os << ',' << c;
    os << '\n';
    auto row = [&](const char* metric, const char* feature, const std::map<std::string, SimilarityReport>& m,
                   double SimilarityReport::*field) {
        os << metric << ',' << feature;
        for (const auto& c : t.columns) {
            os << ',';
            if (auto it = m.find(c); it != m.end()) os << it->second.*field;
        }
        os << '\n';
    };
    row("MSE", "CFI", t.cfi, &SimilarityReport::mse_reported);
    row("MSE", "SFI", t.sfi, &SimilarityReport::mse_reported);
    row("PSNR", "CFI", t.cfi, &SimilarityReport::psnr_db);
    row("PSNR", "SFI", t.sfi, &SimilarityReport::psnr_db);
    row("SSIM", "CFI", t.cfi, &SimilarityReport::ssim);
    row("SSIM", "SFI", t.sfi, &SimilarityReport::ssim);
    return os.str();
}

}  // namespace satforge
