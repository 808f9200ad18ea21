#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "satforge/error.hpp"
#include "satforge/forensics.hpp"

namespace satforge {

ROCReport roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.size() < 2) {
        throw Error(ErrorCode::InvalidParams, "scores and labels must have equal length >= 2",
                    {{"scores", scores.size()}, {"labels", labels.size()}});
    }
    std::int64_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw Error(ErrorCode::InvalidParams, "non-finite score");
        if (labels[i] != 0 && labels[i] != 1) throw Error(ErrorCode::InvalidParams, "labels must be 0 or 1");
        (labels[i] ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) {
        throw Error(ErrorCode::SingleClass, "ROC needs both classes", {{"positives", pos}, {"negatives", neg}});
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

    ROCReport r;
    r.positives = static_cast<int>(pos);
    r.negatives = static_cast<int>(neg);
    r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::int64_t tp = 0, fp = 0, area2 = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        const std::int64_t tp0 = tp, fp0 = fp;
        for (; i < order.size() && scores[order[i]] == threshold; ++i) (labels[order[i]] ? tp : fp) += 1;
        area2 += (fp - fp0) * (tp + tp0);
        r.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, threshold});
    }
    r.auc = static_cast<double>(area2) / static_cast<double>(2 * pos * neg);
    return r;
}

nlohmann::json to_json(const ROCReport& r) {
    auto pts = nlohmann::json::array();
    for (const auto& p : r.points) {
        pts.push_back({{"fpr", p.fpr},
                       {"tpr", p.tpr},
                       {"threshold", std::isfinite(p.threshold) ? nlohmann::json(p.threshold) : nlohmann::json(nullptr)}});
    }
    return {{"auc", r.auc}, {"positives", r.positives}, {"negatives", r.negatives}, {"points", pts}};
}

std::string roc_svg(const std::vector<std::pair<std::string, ROCReport>>& curves) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    constexpr int size = 400, margin = 40;
    auto sx = [](double v) { return margin + v * (size - 2 * margin); };
    auto sy = [](double v) { return size - margin - v * (size - 2 * margin); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size - 2 * margin << "\" height=\""
       << size - 2 * margin << "\" fill=\"none\" stroke=\"black\"/>\n"
       << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(1) << "\" y2=\"" << sy(1)
       << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n"
       << "<text x=\"" << size / 2 << "\" y=\"" << size - 10 << "\" text-anchor=\"middle\">False positive rate</text>\n"
       << "<text x=\"12\" y=\"" << size / 2 << "\" transform=\"rotate(-90 12 " << size / 2
       << ")\" text-anchor=\"middle\">True positive rate</text>\n";
    for (std::size_t k = 0; k < curves.size(); ++k) {
        const auto& [name, r] = curves[k];
        const char* color = colors[k % 5];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : r.points) os << sx(p.fpr) << ',' << sy(p.tpr) << ' ';
        os << "\"/>\n<text x=\"" << sx(0.45) << "\" y=\"" << sy(0.1) + 16.0 * static_cast<double>(k) << "\" fill=\""
           << color << "\">" << name << " (AUC " << r.auc << ")</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace satforge
