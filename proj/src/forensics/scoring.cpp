#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "satforge/error.hpp"
#include "satforge/forensics.hpp"
#include "satforge/geometry.hpp"

namespace satforge {

void to_json(nlohmann::json& j, const DetectionScore& s) { j = {{"label", s.label}, {"confidence", s.confidence}}; }

void from_json(const nlohmann::json& j, DetectionScore& s) {
    s.label = j.at("label").get<std::string>();
    s.confidence = j.at("confidence").get<double>();
}

namespace {

std::string class_name(int class_id) {
    for (const auto& e : class_palette()) {
        if (e.class_id == class_id) return e.name;
    }
    return "class_" + std::to_string(class_id);
}

}  // namespace

StubScorer::StubScorer(std::vector<PolygonAnnotation> annotations, CannyParams canny, double present_density)
    : annotations_(std::move(annotations)), canny_(canny), present_density_(present_density) {
    canny_.validate();
}

std::vector<DetectionScore> StubScorer::detect(const Raster& image) {
    const FeatureImage cfi = extract_cfi(image, canny_);
    std::vector<DetectionScore> out;
    for (const auto& a : annotations_) {
        const Raster inside = rasterize_polygon(a.vertices, image.height, image.width, 0.0, 0.0);
        long area = 0, edges = 0;
        for (std::size_t i = 0; i < inside.data.size(); ++i) {
            if (!inside.data[i]) continue;
            ++area;
            edges += cfi.data.data[i] ? 1 : 0;
        }
        if (area == 0 || edges == 0) continue;
        const double density = static_cast<double>(edges) / static_cast<double>(area);
        const double confidence = density >= present_density_ ? 90.0 + 9.9 * std::min(1.0, density)
                                                              : 50.0 * density / present_density_;
        out.push_back({class_name(a.class_id), confidence});
    }
    return out;
}

HttpScorerClient::HttpScorerClient(Options options) : options_(std::move(options)) {
    if (options_.url.empty()) throw Error(ErrorCode::ScorerUnavailable, "no scorer URL configured");
}

HttpScorerClient HttpScorerClient::from_env() {
    const char* url = std::getenv("SATFORGE_SCORER_URL");
    if (!url || !*url) throw Error(ErrorCode::ScorerUnavailable, "SATFORGE_SCORER_URL is not set");
    return HttpScorerClient(Options{.url = url});
}

std::vector<DetectionScore> HttpScorerClient::detect(const Raster& image) {
    const auto scheme_end = options_.url.find("://");
    const auto path_start = options_.url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string host = options_.url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : options_.url.substr(path_start);
    const auto png = encode_png(image);
    const std::string body(png.begin(), png.end());

    std::lock_guard lock(mutex_);
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        const auto wait = last_call_ + options_.min_interval - std::chrono::steady_clock::now();
        if (wait.count() > 0) std::this_thread::sleep_for(wait);
        last_call_ = std::chrono::steady_clock::now();

        httplib::Client client(host);
        client.set_connection_timeout(options_.timeout);
        client.set_read_timeout(options_.timeout);
        const auto res = client.Post(path, body, "image/png");
        if (!res) {
            last_error = httplib::to_string(res.error());
        } else if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
        } else if (res->status != 200) {
            throw Error(ErrorCode::ScorerUnavailable, "scorer rejected request",
                        {{"status", res->status}, {"body", res->body}});
        } else {
            try {
                return nlohmann::json::parse(res->body).get<std::vector<DetectionScore>>();
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::ScorerUnavailable, std::string("malformed scorer response: ") + e.what());
            }
        }
        std::this_thread::sleep_for(options_.min_interval * (1 << attempt));
    }
    throw Error(ErrorCode::ScorerUnavailable, "scorer unreachable", {{"url", options_.url}, {"error", last_error}});
}

std::vector<DetectionScore> score_objects(const Raster& image, ObjectScorer& scorer) {
    std::map<std::string, double> best;
    for (auto s : scorer.detect(image)) {
        const double c = std::clamp(s.confidence, 0.0, 100.0);
        auto [it, inserted] = best.emplace(s.label, c);
        if (!inserted) it->second = std::max(it->second, c);
    }
    std::vector<DetectionScore> out;
    for (const auto& [label, c] : best) out.push_back({label, c});
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
    return out;
}

void DetectionTable::record(FeatureKind kind, int column, const std::vector<DetectionScore>& found) {
    if (column < 0 || column > 3) throw Error(ErrorCode::InvalidParams, "column must be 0..3 (A..D)");
    for (const auto& label : labels) {
        double c = 0.0;
        for (const auto& s : found) {
            if (s.label == label) c = std::max(c, s.confidence);
        }
        scores[label][kind][column] = c;
    }
}

std::string detection_table_csv(const DetectionTable& t) {
    std::ostringstream os;
    os << "label,feature,A,B,C,D\n";
    for (const auto& label : t.labels) {
        for (const auto kind : {FeatureKind::CFI, FeatureKind::SFI}) {
            std::array<double, 4> row{};
            if (auto it = t.scores.find(label); it != t.scores.end()) {
                if (auto k = it->second.find(kind); k != it->second.end()) row = k->second;
            }
            os << label << ',' << to_string(kind);
            for (double v : row) os << ',' << v;
            os << '\n';
        }
    }
    return os.str();
}

DetectionTable detection_table_from_csv(const std::string& csv) {
    DetectionTable t;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string label, kind, cell;
        std::getline(row, label, ',');
        std::getline(row, kind, ',');
        const FeatureKind k = kind == "SFI" ? FeatureKind::SFI : FeatureKind::CFI;
        std::array<double, 4> v{};
        for (auto& x : v) {
            if (!std::getline(row, cell, ',')) throw Error(ErrorCode::InvalidParams, "short detection table row");
            x = std::stod(cell);
        }
        if (std::find(t.labels.begin(), t.labels.end(), label) == t.labels.end()) t.labels.push_back(label);
        t.scores[label][k] = v;
    }
    return t;
}

DetectionTable reference_detection_table() {
    DetectionTable t;
    t.labels = {"Airplane", "Aircraft", "Terminal", "Vehicle"};
    const std::array<double, 4> cfi_common{99.3, 99.2, 97.5, 87.8};
    const std::array<double, 4> sfi_common{99.3, 99.2, 97.4, 97.5};
    for (const auto* label : {"Airplane", "Aircraft", "Vehicle"}) {
        t.scores[label][FeatureKind::CFI] = cfi_common;
        t.scores[label][FeatureKind::SFI] = sfi_common;
    }
    t.scores["Terminal"][FeatureKind::CFI] = {0.0, 55.9, 55.1, 0.0};
    t.scores["Terminal"][FeatureKind::SFI] = {55.7, 55.6, 69.2, 56.3};
    return t;
}

}  // namespace satforge
