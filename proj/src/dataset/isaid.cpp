#include <algorithm>
#include <fstream>
#include <iostream>

#include "satforge/dataset.hpp"
#include "satforge/error.hpp"

namespace fs = std::filesystem;

namespace satforge {

void Workspace::create() const {
    for (const auto& d : {images(), forged(), manifests(), checkpoints()}) fs::create_directories(d);
}

namespace {

std::vector<fs::path> annotation_files(const fs::path& root) {
    std::vector<fs::path> out;
    for (const auto& dir : {root, root / "annotations"}) {
        if (!fs::is_directory(dir)) continue;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

AnnotationIndex ingest_isaid(const fs::path& root) {
    if (!fs::is_directory(root) || fs::is_empty(root)) {
        throw Error(ErrorCode::EmptyDirectory, "annotation root is missing or empty", {{"root", root.string()}});
    }
    const auto files = annotation_files(root);
    if (files.empty()) {
        throw Error(ErrorCode::MissingAnnotations, "no instance-segmentation JSON found", {{"root", root.string()}});
    }

    AnnotationIndex index;
    for (const auto& file : files) {
        nlohmann::json doc;
        try {
            std::ifstream(file) >> doc;
        } catch (const nlohmann::json::exception&) {
            ++index.skipped_malformed;
            continue;
        }
        if (!doc.is_object() || !doc.contains("images") || !doc.contains("annotations")) continue;

        for (const auto& c : doc.value("categories", nlohmann::json::array())) {
            if (c.contains("id") && c.contains("name")) index.category_names[c["id"].get<int>()] = c["name"];
        }
        for (const auto& im : doc["images"]) {
            try {
                ImageRecord rec;
                rec.id = im.at("id").get<int>();
                const auto name = im.at("file_name").get<std::string>();
                rec.width = im.value("width", 0);
                rec.height = im.value("height", 0);
                for (const auto& base : {root / "images", root}) {
                    if (fs::is_regular_file(base / name)) {
                        rec.path = base / name;
                        break;
                    }
                }
                if (rec.path.empty()) continue;  // annotations for it are counted as missing below
                index.images[rec.id] = rec;
            } catch (const nlohmann::json::exception&) {
                ++index.skipped_malformed;
            }
        }
        for (const auto& a : doc["annotations"]) {
            try {
                const int image_id = a.at("image_id").get<int>();
                const int class_id = a.at("category_id").get<int>();
                const auto& seg = a.at("segmentation");
                if (class_id < 1 || class_id > kNumClasses || !seg.is_array() || seg.empty()) {
                    ++index.skipped_malformed;
                    continue;
                }
                if (!index.images.contains(image_id)) {
                    ++index.skipped_missing_image;
                    continue;
                }
                bool any = false;
                for (const auto& ring : seg) {
                    if (!ring.is_array() || ring.size() < 6 || ring.size() % 2 != 0) continue;
                    PolygonAnnotation p;
                    p.class_id = class_id;
                    for (std::size_t i = 0; i < ring.size(); i += 2) {
                        p.vertices.push_back({ring[i].get<double>(), ring[i + 1].get<double>()});
                    }
                    index.by_image[image_id].push_back(std::move(p));
                    any = true;
                }
                if (any) {
                    ++index.instances_per_class[class_id];
                } else {
                    ++index.skipped_malformed;
                }
            } catch (const nlohmann::json::exception&) {
                ++index.skipped_malformed;
            }
        }
    }
    if (index.skipped_malformed || index.skipped_missing_image) {
        std::clog << "ingest: skipped " << index.skipped_malformed << " malformed and " << index.skipped_missing_image
                  << " orphaned annotation records\n";
    }
    return index;
}

}  // namespace satforge
