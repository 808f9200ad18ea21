#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "satforge/features.hpp"
#include "satforge/removal.hpp"

namespace satforge {

// ---------------------------------------------------------------------------
// Workspace

// {images/, forged/, manifests/, checkpoints/} under one root.
struct Workspace {
    std::filesystem::path root;

    std::filesystem::path images() const { return root / "images"; }
    std::filesystem::path forged() const { return root / "forged"; }
    std::filesystem::path manifests() const { return root / "manifests"; }
    std::filesystem::path checkpoints() const { return root / "checkpoints"; }
    void create() const;
};

// ---------------------------------------------------------------------------
// Annotation ingestion

struct ImageRecord {
    int id = 0;
    std::filesystem::path path;
    int width = 0;
    int height = 0;
};

struct AnnotationIndex {
    std::map<int, ImageRecord> images;                       // image id -> record
    std::map<int, std::vector<PolygonAnnotation>> by_image;  // image id -> polygons
    std::map<int, int> instances_per_class;                  // class id -> instance count
    std::map<int, std::string> category_names;
    int skipped_malformed = 0;
    int skipped_missing_image = 0;
};

// Reads instance-segmentation JSON (images / annotations / categories with
// polygon lists) from `root` or `root/annotations`, resolving file names
// against `root/images` and then `root`.
AnnotationIndex ingest_isaid(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Manifest

enum class Label { forged, pristine };
enum class Split { train, validation };

std::string to_string(Label l);
std::string to_string(Split s);

struct ManifestEntry {
    std::string image_path;  // relative to the manifest root unless absolute
    Label label = Label::pristine;
    Split split = Split::train;
    std::optional<std::string> provenance;  // ForgedResult directory for forged entries
    std::string source_id;
};

struct SplitCounts {
    int forged = 0;
    int pristine = 0;
    bool operator==(const SplitCounts&) const = default;
};

inline constexpr int kManifestSchemaVersion = 1;

struct DatasetManifest {
    std::string name;
    int schema_version = kManifestSchemaVersion;
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::map<Split, SplitCounts> counts;

    // Recomputes `counts` from the entries.
    void recount();
    std::vector<ManifestEntry> split(Split s) const;
    std::filesystem::path resolve(const std::string& p) const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
std::string manifest_csv(const DatasetManifest& m);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& json_path);
DatasetManifest load_manifest(const std::filesystem::path& json_path);

// Target sizes per split and label. When the available count for a label
// differs from its total target, the split is scaled proportionally.
struct SplitTargets {
    int train_forged = 162;
    int train_pristine = 266;
    int validation_forged = 95;
    int validation_pristine = 114;
};

struct RemovalJobSpec {
    std::string job_id;
    std::string source_image;  // path of the pristine source scene
    RemovalMask mask;
    std::string checkpoint_id;
    CannyParams canny;
};

void to_json(nlohmann::json& j, const RemovalJobSpec& s);
void from_json(const nlohmann::json& j, RemovalJobSpec& s);

// Executes one job and returns the persisted ForgedResult directory.
using JobRunner = std::function<std::filesystem::path(const RemovalJobSpec&)>;

// Runner backed by remove_object: loads the source scene, slices it with the
// checkpoint's tile size and writes the result under workspace.forged()/job_id.
// `resolve_checkpoint` maps checkpoint ids to loaded translators.
JobRunner make_pipeline_runner(const Workspace& workspace,
                               std::function<const Translator&(const std::string&)> resolve_checkpoint);

struct JobFailure {
    std::string job_id;
    std::string code;
    std::string message;
};

struct BuildOutcome {
    DatasetManifest manifest;
    std::vector<JobFailure> failures;
};

struct BuildOptions {
    std::string name = "forged-satellite";
    SplitTargets targets;
    std::uint64_t seed = 0;
    int workers = 1;
};

BuildOutcome build_forged_dataset(const std::vector<RemovalJobSpec>& jobs, const std::vector<std::string>& pristine_pool,
                                  const JobRunner& runner, const std::filesystem::path& root,
                                  const BuildOptions& options = {});

struct Violation {
    std::string kind;  // missing_path, count_mismatch, duplicate_path, unreachable_provenance
    std::string subject;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::size_t count(const std::string& kind) const;
};

ValidationReport validate_manifest(const DatasetManifest& m);
nlohmann::json to_json(const ValidationReport& r);

}  // namespace satforge
