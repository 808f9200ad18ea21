#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "satforge/error.hpp"
#include "satforge/forensics.hpp"

namespace satforge {

namespace {

using Matrix = std::vector<double>;  // row-major N x N

Matrix squared_distances(const std::vector<std::vector<double>>& x) {
    const std::size_t n = x.size();
    Matrix d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < x[i].size(); ++k) {
                const double t = x[i][k] - x[j][k];
                s += t * t;
            }
            d[i * n + j] = d[j * n + i] = s;
        }
    }
    return d;
}

// Conditional affinities by bisection on the Gaussian precision, then symmetrized.
Matrix input_affinities(const Matrix& d2, std::size_t n, double perplexity) {
    const double target = std::log(perplexity);
    Matrix p(n * n, 0.0);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) dmin = std::min(dmin, d2[i * n + j]);
        }
        for (int iter = 0; iter < 200; ++iter) {
            double sum = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-beta * (d2[i * n + j] - dmin));
                sum += row[j];
                weighted += row[j] * (d2[i * n + j] - dmin);
            }
            const double entropy = std::log(sum) + beta * weighted / sum;
            for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-10) break;
            if (diff > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = row[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = std::max((p[i * n + j] + p[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);
            p[i * n + j] = p[j * n + i] = s;
        }
    }
    return p;
}

}  // namespace

std::vector<std::array<double, 2>> tsne(const std::vector<std::vector<double>>& x, std::uint64_t seed,
                                        const TsneOptions& o) {
    const std::size_t n = x.size();
    if (n < 3) throw Error(ErrorCode::TooFewImages, "projection needs at least 3 samples", {{"count", n}});
    const double perplexity = std::clamp(o.perplexity, 1.0, std::max(1.0, (static_cast<double>(n) - 1.0) / 3.0));
    const Matrix p = input_affinities(squared_distances(x), n, perplexity);

    const double lr = o.learning_rate > 0.0 ? o.learning_rate
                                            : static_cast<double>(n) / (4.0 * std::max(1.0, o.early_exaggeration));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> init(0.0, 1e-4);
    std::vector<std::array<double, 2>> y(n), velocity(n, {0.0, 0.0}), gains(n, {1.0, 1.0});
    for (auto& v : y) v = {init(rng), init(rng)};

    Matrix q(n * n);
    std::vector<std::array<double, 2>> grad(n);
    for (int iter = 0; iter < o.iterations; ++iter) {
        const double exaggeration = iter < o.exaggeration_iterations ? o.early_exaggeration : 1.0;
        const double momentum = iter < o.exaggeration_iterations ? 0.5 : 0.8;
        double qsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            q[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
                const double w = 1.0 / (1.0 + dx * dx + dy * dy);
                q[i * n + j] = q[j * n + i] = w;
                qsum += 2.0 * w;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double w = q[i * n + j];
                const double m = (exaggeration * p[i * n + j] - std::max(w / qsum, 1e-12)) * w;
                gx += m * (y[i][0] - y[j][0]);
                gy += m * (y[i][1] - y[j][1]);
            }
            grad[i] = {4.0 * gx, 4.0 * gy};
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (int d = 0; d < 2; ++d) {
                const bool same_sign = (grad[i][d] > 0) == (velocity[i][d] > 0);
                gains[i][d] = std::max(same_sign ? gains[i][d] * 0.8 : gains[i][d] + 0.2, 0.01);
                velocity[i][d] = momentum * velocity[i][d] - lr * gains[i][d] * grad[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        std::array<double, 2> mean{0.0, 0.0};
        for (const auto& v : y) mean = {mean[0] + v[0], mean[1] + v[1]};
        for (auto& v : y) v = {v[0] - mean[0] / n, v[1] - mean[1] / n};
    }
    return y;
}

EmbeddingProjection embed_projection(const std::vector<Raster>& images, Backbone& backbone, std::uint64_t seed,
                                     std::vector<std::string> labels, const TsneOptions& options, int input_size) {
    if (images.size() < 3) {
        throw Error(ErrorCode::TooFewImages, "projection needs at least 3 images", {{"count", images.size()}});
    }
    if (!labels.empty() && labels.size() != images.size()) {
        throw Error(ErrorCode::InvalidParams, "one label per image expected");
    }
    EmbeddingProjection out;
    out.seed = seed;
    out.backbone = backbone.name();
    out.labels = std::move(labels);
    {
        torch::NoGradGuard guard;
        backbone.set_training(false);
        constexpr std::size_t chunk = 16;
        for (std::size_t start = 0; start < images.size(); start += chunk) {
            const std::vector<Raster> part(images.begin() + static_cast<std::ptrdiff_t>(start),
                                           images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), start + chunk)));
            const auto probs =
                torch::softmax(backbone.logits(images_to_batch(part, input_size)).to(torch::kFloat64), 1).contiguous();
            for (std::int64_t i = 0; i < probs.size(0); ++i) {
                const double* row = probs[i].data_ptr<double>();
                out.features.emplace_back(row, row + probs.size(1));
            }
        }
    }
    out.points = tsne(out.features, seed, options);
    return out;
}

nlohmann::json to_json(const EmbeddingProjection& p) {
    auto pts = nlohmann::json::array();
    for (std::size_t i = 0; i < p.points.size(); ++i) {
        nlohmann::json e = {{"x", p.points[i][0]}, {"y", p.points[i][1]}};
        if (!p.labels.empty()) e["label"] = p.labels[i];
        pts.push_back(std::move(e));
    }
    return {{"seed", p.seed}, {"backbone", p.backbone}, {"feature_dim", p.features.empty() ? 0 : p.features[0].size()},
            {"points", pts}};
}

std::string projection_svg(const EmbeddingProjection& p) {
    constexpr int size = 400, margin = 20;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (!p.points.empty()) {
        x0 = x1 = p.points[0][0];
        y0 = y1 = p.points[0][1];
        for (const auto& v : p.points) {
            x0 = std::min(x0, v[0]), x1 = std::max(x1, v[0]);
            y0 = std::min(y0, v[1]), y1 = std::max(y1, v[1]);
        }
    }
    const double sx = (size - 2 * margin) / std::max(x1 - x0, 1e-12);
    const double sy = (size - 2 * margin) / std::max(y1 - y0, 1e-12);
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < p.points.size(); ++i) {
        const bool forged = !p.labels.empty() && p.labels[i] == "forged";
        os << "<circle cx=\"" << margin + (p.points[i][0] - x0) * sx << "\" cy=\"" << margin + (p.points[i][1] - y0) * sy
           << "\" r=\"3\" fill=\"" << (forged ? "#d62728" : "#1f77b4") << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace satforge
