#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "satforge/dataset.hpp"
#include "satforge/error.hpp"

namespace fs = std::filesystem;

namespace satforge {

std::string to_string(Label l) { return l == Label::forged ? "forged" : "pristine"; }
std::string to_string(Split s) { return s == Split::train ? "train" : "validation"; }

namespace {

Label label_from(const std::string& s) {
    if (s == "forged") return Label::forged;
    if (s == "pristine") return Label::pristine;
    throw Error(ErrorCode::InvalidParams, "unknown label '" + s + "'");
}

Split split_from(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    throw Error(ErrorCode::InvalidParams, "unknown split '" + s + "'");
}

nlohmann::json counts_json(const SplitCounts& c) { return {{"forged", c.forged}, {"pristine", c.pristine}}; }

std::string relative_to(const fs::path& p, const fs::path& root) {
    if (root.empty()) return p.string();
    std::error_code ec;
    auto rel = fs::relative(p, root, ec);
    if (ec || rel.empty() || rel.native().starts_with("..")) return fs::absolute(p).string();
    return rel.generic_string();
}

}  // namespace

void DatasetManifest::recount() {
    counts = {{Split::train, {}}, {Split::validation, {}}};
    for (const auto& e : entries) {
        auto& c = counts[e.split];
        (e.label == Label::forged ? c.forged : c.pristine) += 1;
    }
}

std::vector<ManifestEntry> DatasetManifest::split(Split s) const {
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out), [s](const auto& e) { return e.split == s; });
    return out;
}

fs::path DatasetManifest::resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() || root.empty() ? path : root / path;
}

nlohmann::json to_json(const DatasetManifest& m) {
    auto entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json j = {{"image_path", e.image_path},
                            {"label", to_string(e.label)},
                            {"split", to_string(e.split)},
                            {"source_id", e.source_id}};
        j["provenance"] = e.provenance ? nlohmann::json(*e.provenance) : nlohmann::json(nullptr);
        entries.push_back(std::move(j));
    }
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [s, c] : m.counts) counts[to_string(s)] = counts_json(c);
    return {{"name", m.name},       {"schema_version", m.schema_version}, {"root", m.root.string()},
            {"counts", counts},     {"entries", entries}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.name = j.value("name", std::string{});
    m.schema_version = j.value("schema_version", kManifestSchemaVersion);
    m.root = j.value("root", std::string{});
    for (const auto& e : j.at("entries")) {
        ManifestEntry me;
        me.image_path = e.at("image_path").get<std::string>();
        me.label = label_from(e.at("label").get<std::string>());
        me.split = split_from(e.at("split").get<std::string>());
        me.source_id = e.value("source_id", std::string{});
        if (e.contains("provenance") && e["provenance"].is_string()) me.provenance = e["provenance"].get<std::string>();
        m.entries.push_back(std::move(me));
    }
    // Stored counts are kept as written so validation can detect tampering.
    if (j.contains("counts")) {
        for (const auto& [k, v] : j["counts"].items()) {
            m.counts[split_from(k)] = {v.value("forged", 0), v.value("pristine", 0)};
        }
    } else {
        m.recount();
    }
    return m;
}

std::string manifest_csv(const DatasetManifest& m) {
    std::ostringstream os;
    os << "image_path,label,split,provenance,source_id\n";
    for (const auto& e : m.entries) {
        os << e.image_path << ',' << to_string(e.label) << ',' << to_string(e.split) << ','
           << e.provenance.value_or("") << ',' << e.source_id << '\n';
    }
    return os.str();
}

void save_manifest(const DatasetManifest& m, const fs::path& json_path) {
    if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
    std::ofstream(json_path) << to_json(m).dump(2) << '\n';
    auto csv = json_path;
    csv.replace_extension(".csv");
    std::ofstream(csv) << manifest_csv(m);
}

DatasetManifest load_manifest(const fs::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open manifest " + json_path.string());
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::UnreadableFile, std::string("malformed manifest: ") + e.what());
    }
}

void to_json(nlohmann::json& j, const RemovalJobSpec& s) {
    j = {{"job_id", s.job_id},
         {"source_image", s.source_image},
         {"mask", s.mask},
         {"checkpoint_id", s.checkpoint_id},
         {"canny", s.canny}};
}

void from_json(const nlohmann::json& j, RemovalJobSpec& s) {
    s.job_id = j.at("job_id").get<std::string>();
    s.source_image = j.at("source_image").get<std::string>();
    s.mask = j.at("mask").get<RemovalMask>();
    s.checkpoint_id = j.value("checkpoint_id", std::string{});
    s.canny = j.value("canny", CannyParams{});
}

JobRunner make_pipeline_runner(const Workspace& workspace,
                               std::function<const Translator&(const std::string&)> resolve_checkpoint) {
    return [workspace, resolve = std::move(resolve_checkpoint)](const RemovalJobSpec& job) {
        const Translator& translator = resolve(job.checkpoint_id);
        const Scene scene = load_scene(job.source_image);
        const TileGrid grid = slice_tiles(scene, translator.tile_size());
        const ForgedResult r = remove_object(scene, grid, job.mask, translator, job.canny);
        const fs::path dir = workspace.forged() / job.job_id;
        save_forged_result(r, dir);
        return dir;
    };
}

namespace {

// Seeded shuffle of items already sorted by id; the first `train_n` go to train.
template <class T>
void assign_split(std::vector<T>& items, int target_train, int target_validation, std::uint64_t seed,
                  std::vector<Split>& out) {
    const int n = static_cast<int>(items.size());
    const int total = target_train + target_validation;
    int train_n = n;
    if (total > 0) {
        train_n = n == total ? target_train
                             : static_cast<int>(std::lround(static_cast<double>(n) * target_train / total));
    }
    std::mt19937_64 rng(seed);
    std::shuffle(items.begin(), items.end(), rng);
    out.assign(n, Split::validation);
    for (int i = 0; i < std::min(train_n, n); ++i) out[i] = Split::train;
}

}  // namespace

BuildOutcome build_forged_dataset(const std::vector<RemovalJobSpec>& jobs, const std::vector<std::string>& pristine_pool,
                                  const JobRunner& runner, const fs::path& root, const BuildOptions& options) {
    if (pristine_pool.empty()) throw Error(ErrorCode::DegenerateManifest, "pristine pool is empty");

    struct Done {
        std::string job_id;
        fs::path dir;
    };
    std::vector<Done> done;
    std::vector<JobFailure> failures;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& job = jobs[i];
            try {
                fs::path dir = runner(job);
                std::lock_guard lock(mu);
                done.push_back({job.job_id, std::move(dir)});
            } catch (const Error& e) {
                std::lock_guard lock(mu);
                failures.push_back({job.job_id, std::string(to_string(e.code())), e.what()});
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                failures.push_back({job.job_id, std::string(to_string(ErrorCode::JobFailed)), e.what()});
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (int w = 1; w < std::max(1, options.workers); ++w) pool.emplace_back(work);
        work();
    }

    // Scheduling order must not leak into the manifest.
    std::sort(done.begin(), done.end(), [](const auto& a, const auto& b) { return a.job_id < b.job_id; });
    std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) { return a.job_id < b.job_id; });
    std::vector<std::string> pristine = pristine_pool;
    std::sort(pristine.begin(), pristine.end());
    pristine.erase(std::unique(pristine.begin(), pristine.end()), pristine.end());

    BuildOutcome out;
    out.failures = std::move(failures);
    DatasetManifest& m = out.manifest;
    m.name = options.name;
    m.root = root;

    const auto& t = options.targets;
    std::vector<Split> forged_split, pristine_split;
    assign_split(done, t.train_forged, t.validation_forged, options.seed, forged_split);
    assign_split(pristine, t.train_pristine, t.validation_pristine, options.seed ^ 0x9e3779b97f4a7c15ull,
                 pristine_split);

    for (std::size_t i = 0; i < done.size(); ++i) {
        ManifestEntry e;
        e.image_path = relative_to(done[i].dir / "forged.png", root);
        e.label = Label::forged;
        e.split = forged_split[i];
        e.provenance = relative_to(done[i].dir, root);
        e.source_id = done[i].job_id;
        m.entries.push_back(std::move(e));
    }
    for (std::size_t i = 0; i < pristine.size(); ++i) {
        ManifestEntry e;
        e.image_path = relative_to(pristine[i], root);
        e.label = Label::pristine;
        e.split = pristine_split[i];
        e.source_id = fs::path(pristine[i]).stem().string();
        m.entries.push_back(std::move(e));
    }
    std::stable_sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) {
        return std::tie(a.split, a.label, a.image_path) < std::tie(b.split, b.label, b.image_path);
    });
    m.recount();
    return out;
}

std::size_t ValidationReport::count(const std::string& kind) const {
    return static_cast<std::size_t>(
        std::count_if(violations.begin(), violations.end(), [&kind](const auto& v) { return v.kind == kind; }));
}

ValidationReport validate_manifest(const DatasetManifest& m) {
    ValidationReport r;
    std::set<std::string> seen;
    std::map<Split, SplitCounts> tally = {{Split::train, {}}, {Split::validation, {}}};
    for (const auto& e : m.entries) {
        const auto resolved = m.resolve(e.image_path).lexically_normal().string();
        if (!seen.insert(resolved).second) {
            r.violations.push_back({"duplicate_path", e.image_path, "path listed more than once"});
        }
        if (!fs::is_regular_file(m.resolve(e.image_path))) {
            r.violations.push_back({"missing_path", e.image_path, "image file does not exist"});
        }
        if (e.label == Label::forged) {
            if (!e.provenance || !fs::is_regular_file(m.resolve(*e.provenance) / "meta.json")) {
                r.violations.push_back({"unreachable_provenance", e.image_path,
                                        "forged entry does not reference a persisted removal result"});
            }
        }
        auto& c = tally[e.split];
        (e.label == Label::forged ? c.forged : c.pristine) += 1;
    }
    for (const auto s : {Split::train, Split::validation}) {
        const auto it = m.counts.find(s);
        const SplitCounts stored = it == m.counts.end() ? SplitCounts{} : it->second;
        if (!(stored == tally[s])) {
            r.violations.push_back({"count_mismatch", to_string(s), "stored counts disagree with entries"});
        }
    }
    return r;
}

nlohmann::json to_json(const ValidationReport& r) {
    auto v = nlohmann::json::array();
    for (const auto& x : r.violations) v.push_back({{"kind", x.kind}, {"subject", x.subject}, {"message", x.message}});
    return {{"ok", r.ok()}, {"violations", v}};
}

}  // namespace satforge
