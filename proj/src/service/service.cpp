#include "satforge/service.hpp"

#include <cstdlib>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <httplib.h>

#include "satforge/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace satforge {

// ---------------------------------------------------------------------------
// Configuration

std::map<std::string, std::string> parse_flat_config(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::UsageError, "config line is not key = value", {{"line", number}});
        }
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out[trim(line.substr(0, eq))] = value;
    }
    return out;
}

void ServiceConfig::apply(const std::map<std::string, std::string>& kv) {
    try {
        for (const auto& [k, v] : kv) {
            if (k == "host") host = v;
            else if (k == "port") port = std::stoi(v);
            else if (k == "workspace") workspace = v;
            else if (k == "ui_dir") ui_dir = v;
            else if (k == "checkpoint_cache") checkpoint_cache = std::stoi(v);
            else if (k == "tile_size") tile_size = std::stoi(v);
            else throw Error(ErrorCode::UsageError, "unknown config key '" + k + "'");
        }
    } catch (const std::logic_error& e) {
        throw Error(ErrorCode::UsageError, std::string("bad config value: ") + e.what());
    }
    if (checkpoint_cache < 1 || port < 0 || tile_size < kMinTileSize) {
        throw Error(ErrorCode::UsageError, "config values out of range");
    }
}

ServiceConfig ServiceConfig::load(const std::optional<fs::path>& file) {
    ServiceConfig c;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw Error(ErrorCode::UnreadableFile, "cannot read config " + file->string());
        std::stringstream ss;
        ss << in.rdbuf();
        c.apply(parse_flat_config(ss.str()));
    }
    std::map<std::string, std::string> env;
    for (const auto* key : {"host", "port", "workspace", "ui_dir", "checkpoint_cache", "tile_size"}) {
        std::string name = "SATFORGE_";
        for (const char* p = key; *p; ++p) name += static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
        if (const char* v = std::getenv(name.c_str())) env[key] = v;
    }
    c.apply(env);
    return c;
}

// ---------------------------------------------------------------------------
// Jobs

std::string to_string(JobKind k) {
    switch (k) {
        case JobKind::train: return "train";
        case JobKind::removal: return "removal";
        case JobKind::dataset_build: return "dataset_build";
        case JobKind::evaluate: return "evaluate";
    }
    return "unknown";
}

std::string to_string(JobState s) {
    switch (s) {
        case JobState::queued: return "queued";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
    }
    return "unknown";
}

json to_json(const JobStatus& s) {
    return {{"job_id", s.id},           {"kind", to_string(s.kind)}, {"state", to_string(s.state)},
            {"progress", s.progress},   {"message", s.message},      {"result", s.result}};
}

JobQueue::JobQueue() {
    worker_ = std::thread([this] {
        for (;;) {
            std::function<void()> fn;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
                if (queue_.empty()) return;
                fn = std::move(queue_.front());
                queue_.pop_front();
            }
            fn();
        }
    });
}

JobQueue::~JobQueue() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

void JobQueue::push(std::function<void()> fn) {
    {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(fn));
    }
    cv_.notify_one();
}

// ---------------------------------------------------------------------------
// Checkpoint cache

CheckpointCache::CheckpointCache(fs::path root, int capacity) : root_(std::move(root)), capacity_(capacity) {}

bool CheckpointCache::exists(const std::string& id) const {
    return !id.empty() && id.find('/') == std::string::npos && id != ".." &&
           fs::is_regular_file(root_ / id / "checkpoint.json");
}

bool CheckpointCache::resident(const std::string& id) const {
    std::lock_guard lock(mutex_);
    for (const auto& [k, _] : entries_) {
        if (k == id) return true;
    }
    return false;
}

void CheckpointCache::put(const std::string& id, std::shared_ptr<const Translator> t) {
    std::lock_guard lock(mutex_);
    entries_.remove_if([&](const auto& e) { return e.first == id; });
    entries_.emplace_front(id, std::move(t));
    while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_back();
}

std::shared_ptr<const Translator> CheckpointCache::get(const std::string& id) {
    {
        std::lock_guard lock(mutex_);
        for (auto it = entries_.begin(); it != entries_.end(); ++it) {
            if (it->first == id) {
                entries_.splice(entries_.begin(), entries_, it);
                return entries_.front().second;
            }
        }
    }
    if (!exists(id)) throw Error(ErrorCode::NotFound, "unknown checkpoint", {{"checkpoint_id", id}});
    auto t = std::make_shared<const Translator>(load_checkpoint(root_ / id));
    put(id, t);
    return t;
}

std::vector<std::string> CheckpointCache::list() const {
    std::vector<std::string> out;
    if (!fs::is_directory(root_)) return out;
    for (const auto& e : fs::directory_iterator(root_)) {
        if (fs::is_regular_file(e.path() / "checkpoint.json")) out.push_back(e.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Helpers

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotFound: return 404;
        case ErrorCode::Conflict: return 409;
        case ErrorCode::CheckpointMismatch:
        case ErrorCode::InconsistentGrid:
        case ErrorCode::WrongFeatureKind: return 422;
        case ErrorCode::UsageError:
        case ErrorCode::InvalidParams:
        case ErrorCode::MaskOutOfBounds:
        case ErrorCode::DegeneratePolygon:
        case ErrorCode::UnsupportedFormat:
        case ErrorCode::UnreadableFile:
        case ErrorCode::DimMismatch:
        case ErrorCode::InvalidTileSize:
        case ErrorCode::InvalidSpec:
        case ErrorCode::OutOfBounds: return 400;
        default: return 500;
    }
}

json removal_mask_schema() {
    const json pair = {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 2}, {"maxItems", 2}};
    return {
        {"$schema", "https://json-schema.org/draft/2020-12/schema"},
        {"title", "RemovalMask"},
        {"type", "object"},
        {"required", {"shape", "geometry", "tile"}},
        {"properties",
         {{"shape", {{"enum", {"rectangle", "polygon"}}}},
          {"tile", {{"type", "array"}, {"items", {{"type", "integer"}, {"minimum", 0}}}, {"minItems", 2}, {"maxItems", 2}}},
          {"geometry",
           {{"oneOf",
             {{{"description", "rectangle: inclusive [x0, y0, x1, y1] in tile pixels"},
               {"type", "array"},
               {"items", {{"type", "integer"}}},
               {"minItems", 4},
               {"maxItems", 4}},
              {{"description", "polygon: [[x, y], ...] in tile pixels, even-odd rule at pixel centres"},
               {"type", "array"},
               {"items", pair},
               {"minItems", 3}}}}}}}},
        {"additionalProperties", false}};
}

namespace {

std::string random_id() {
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32)};
    std::lock_guard lock(m);
    std::ostringstream os;
    os << std::hex;
    for (int i = 0; i < 2; ++i) os << std::setw(16) << std::setfill('0') << rng();
    return os.str();
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_png(httplib::Response& res, const Raster& r) {
    const auto bytes = encode_png(r);
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
}

json parse_body(const httplib::Request& req) {
    try {
        return req.body.empty() ? json::object() : json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidParams, std::string("request body is not JSON: ") + e.what());
    }
}

template <class T>
T field(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidParams, std::string("bad field '") + key + "': " + e.what());
    }
}

int path_int(const httplib::Request& req, int i) {
    try {
        return std::stoi(req.matches[i].str());
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidParams, "path index is not an integer");
    }
}

CannyParams canny_from_query(const httplib::Request& req) {
    CannyParams p;
    if (req.has_param("sigma")) p.gaussian_sigma = std::stod(req.get_param_value("sigma"));
    if (req.has_param("low")) p.low_threshold = std::stod(req.get_param_value("low"));
    if (req.has_param("high")) p.high_threshold = std::stod(req.get_param_value("high"));
    p.validate();
    return p;
}

json session_json(const SessionState& s) {
    return {{"session_id", s.session_id},
            {"scene_id", s.session_id},
            {"content_id", s.scene_id},
            {"rows", s.grid.rows},
            {"cols", s.grid.cols},
            {"tile_size", s.grid.tile_size},
            {"grid", grid_metadata(s.grid)},
            {"active_checkpoint", s.active_checkpoint},
            {"removals", s.removals},
            {"created_at", s.created_at},
            {"updated_at", s.updated_at}};
}

json removal_json(const RemovalRecord& r) {
    json j = {{"removal_id", r.id}, {"session_id", r.session_id}, {"state", to_string(r.state)}};
    if (!r.job_id.empty()) j["job_id"] = r.job_id;
    if (!r.message.empty()) j["message"] = r.message;
    if (r.result) j["meta"] = forged_result_meta(*r.result);
    return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Service

Service::Service(ServiceConfig config)
    : config_(std::move(config)),
      server_(std::make_unique<httplib::Server>()),
      cache_(config_.workspace / "checkpoints", config_.checkpoint_cache) {
    fs::create_directories(config_.workspace / "checkpoints");
    fs::create_directories(config_.workspace / "removals");
    routes();
}

Service::~Service() { stop(); }

void Service::listen() {
    std::clog << "serving on http://" << config_.host << ':' << config_.port << '\n';
    if (!server_->listen(config_.host, config_.port)) {
        throw Error(ErrorCode::UsageError, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
}

int Service::start_background() {
    const int port = server_->bind_to_any_port(config_.host);
    if (port < 0) throw Error(ErrorCode::UsageError, "cannot bind an ephemeral port");
    server_thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
}

void Service::stop() {
    if (server_) server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
}

std::string Service::new_job(JobKind kind) {
    JobStatus s;
    s.id = random_id();
    s.kind = kind;
    std::lock_guard lock(mutex_);
    jobs_[s.id] = s;
    return s.id;
}

void Service::update_job(const std::string& id, const std::function<void(JobStatus&)>& fn) {
    std::lock_guard lock(mutex_);
    fn(jobs_.at(id));
}

JobStatus Service::job(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error(ErrorCode::NotFound, "unknown job", {{"job_id", id}});
    return it->second;
}

std::shared_ptr<SessionState> Service::session(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "unknown scene", {{"scene_id", id}});
    return it->second;
}

void Service::run_removal(const std::string& removal_id, const std::shared_ptr<SessionState>& s,
                          const RemovalMask& mask, const std::string& checkpoint_id, const CannyParams& canny,
                          std::shared_ptr<const Translator> translator) {
    const std::string tile_key =
        s->session_id + "/" + std::to_string(mask.tile.row) + "/" + std::to_string(mask.tile.col);
    try {
        if (!translator) translator = cache_.get(checkpoint_id);
        if (before_removal) before_removal(removal_id);
        ForgedResult r = remove_object(s->scene, s->grid, mask, *translator, canny);
        save_forged_result(r, config_.workspace / "removals" / removal_id);
        std::lock_guard lock(mutex_);
        auto& rec = removals_.at(removal_id);
        rec.state = JobState::done;
        rec.result = std::move(r);
        busy_tiles_.erase(tile_key);
    } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        auto& rec = removals_.at(removal_id);
        rec.state = JobState::failed;
        rec.message = e.what();
        busy_tiles_.erase(tile_key);
        throw;
    }
}

void Service::routes() {
    auto& srv = *server_;

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_json(res, e.to_json(), http_status(e.code()));
        } catch (const std::exception& e) {
            send_json(res, {{"code", "Internal"}, {"message", e.what()}, {"details", json::object()}}, 500);
        }
    });

    srv.Get("/palette", [](const httplib::Request&, httplib::Response& res) { send_json(res, palette_json()); });
    srv.Get("/schemas/removal_mask.json",
            [](const httplib::Request&, httplib::Response& res) { send_json(res, removal_mask_schema()); });

    srv.Post("/scenes", [this](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_file("image")) throw Error(ErrorCode::InvalidParams, "multipart field 'image' is required");
        const auto file = req.get_file_value("image");
        int tile_size = config_.tile_size;
        if (req.has_file("tile_size")) {
            try {
                tile_size = std::stoi(req.get_file_value("tile_size").content);
            } catch (const std::exception&) {
                throw Error(ErrorCode::InvalidParams, "tile_size must be an integer");
            }
        }
        const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(file.content.data()),
                                                  file.content.size());
        auto s = std::make_shared<SessionState>();
        s->scene = scene_from_raster(decode_image(bytes), file.filename);
        s->grid = slice_tiles(s->scene, tile_size);
        s->scene_id = s->scene.id;
        s->session_id = random_id();
        s->created_at = s->updated_at = utc_timestamp();
        if (req.has_file("checkpoint_id")) s->active_checkpoint = req.get_file_value("checkpoint_id").content;
        {
            std::lock_guard lock(mutex_);
            sessions_[s->session_id] = s;
        }
        send_json(res, session_json(*s), 201);
    });

    srv.Get(R"(/scenes/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto s = session(req.matches[1]);
        std::lock_guard lock(mutex_);
        send_json(res, session_json(*s));
    });

    srv.Get(R"(/scenes/([0-9a-f]+)/tiles/(-?\d+)/(-?\d+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto s = session(req.matches[1]);
        const GridCoord c{path_int(req, 2), path_int(req, 3)};
        if (!s->grid.contains(c)) throw Error(ErrorCode::NotFound, "tile outside the grid");
        send_png(res, s->grid.at(c).pixels);
    });

    srv.Get(R"(/scenes/([0-9a-f]+)/tiles/(-?\d+)/(-?\d+)/cfi)",
            [this](const httplib::Request& req, httplib::Response& res) {
                const auto s = session(req.matches[1]);
                const GridCoord c{path_int(req, 2), path_int(req, 3)};
                if (!s->grid.contains(c)) throw Error(ErrorCode::NotFound, "tile outside the grid");
                send_png(res, extract_cfi(s->grid.at(c), canny_from_query(req)).data);
            });

    srv.Get("/checkpoints", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& id : cache_.list()) {
            json meta;
            std::ifstream(cache_.root() / id / "checkpoint.json") >> meta;
            out.push_back({{"checkpoint_id", id}, {"resident", cache_.resident(id)}, {"metadata", meta}});
        }
        send_json(res, out);
    });

    srv.Post("/checkpoints/train", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        const auto s = session(field<std::string>(body, "scene_id", ""));
        GeneratorSpec g;
        g.family = GeneratorFamily::coarse_to_fine;
        g.base_channels = 16;
        g.depth = 3;
        g.residual_blocks = 3;
        DiscriminatorSpec d;
        d.base_channels = 16;
        TrainConfig cfg;
        try {
            if (body.contains("generator")) g = body["generator"].get<GeneratorSpec>();
            if (body.contains("discriminator")) d = body["discriminator"].get<DiscriminatorSpec>();
            if (body.contains("train")) cfg = body["train"].get<TrainConfig>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidParams, std::string("bad training spec: ") + e.what());
        }
        const CannyParams canny = field<CannyParams>(body, "canny", CannyParams{});
        const std::string kind = field<std::string>(body, "feature_kind", "CFI");
        std::vector<PolygonAnnotation> annotations;
        if (kind == "SFI") {
            annotations = field<std::vector<PolygonAnnotation>>(body, "annotations", {});
            if (annotations.empty()) throw Error(ErrorCode::InvalidParams, "SFI training needs annotations");
        } else if (kind != "CFI") {
            throw Error(ErrorCode::InvalidParams, "feature_kind must be CFI or SFI");
        }
        g.validate();
        d.validate();
        cfg.validate();
        canny.validate();

        const std::string job_id = new_job(JobKind::train);
        train_queue_.push([this, job_id, s, g, d, cfg, canny, annotations, kind] {
            update_job(job_id, [](JobStatus& j) { j.state = JobState::running; });
            try {
                const auto pairs = kind == "SFI" ? sfi_training_pairs(s->grid, annotations)
                                                 : cfi_training_pairs(s->grid, canny);
                auto ckpt = train_translator(pairs, g, d, cfg, s->scene_id, [&](int step, int total) {
                    update_job(job_id, [&](JobStatus& j) { j.progress = static_cast<double>(step) / total; });
                });
                save_checkpoint(ckpt, cache_.root() / ckpt.id);
                const std::string id = ckpt.id;
                cache_.put(id, std::make_shared<const Translator>(std::move(ckpt)));
                {
                    std::lock_guard lock(mutex_);
                    s->active_checkpoint = id;
                    s->updated_at = utc_timestamp();
                }
                update_job(job_id, [&](JobStatus& j) {
                    j.state = JobState::done;
                    j.progress = 1.0;
                    j.result = {{"checkpoint_id", id}};
                });
            } catch (const Error& e) {
                update_job(job_id, [&](JobStatus& j) {
                    j.state = JobState::failed;
                    j.message = e.what();
                    j.result = e.to_json();
                });
            } catch (const std::exception& e) {
                update_job(job_id, [&](JobStatus& j) {
                    j.state = JobState::failed;
                    j.message = e.what();
                });
            }
        });
        send_json(res, to_json(job(job_id)), 202);
    });

    srv.Post(R"(/scenes/([0-9a-f]+)/removals)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto s = session(req.matches[1]);
        const json body = parse_body(req);
        if (!body.contains("mask")) throw Error(ErrorCode::InvalidParams, "field 'mask' is required");
        const RemovalMask mask = body["mask"].get<RemovalMask>();
        std::string checkpoint_id = field<std::string>(body, "checkpoint_id", "");
        if (checkpoint_id.empty()) {
            std::lock_guard lock(mutex_);
            checkpoint_id = s->active_checkpoint;
        }
        const CannyParams canny = field<CannyParams>(body, "canny", CannyParams{});
        canny.validate();
        if (!s->grid.contains(mask.tile)) {
            throw Error(ErrorCode::MaskOutOfBounds, "mask tile outside the grid",
                        {{"tile", {mask.tile.row, mask.tile.col}}, {"rows", s->grid.rows}, {"cols", s->grid.cols}});
        }
        mask.validate(s->grid.tile_size);
        if (!cache_.exists(checkpoint_id) && !cache_.resident(checkpoint_id)) {
            throw Error(ErrorCode::NotFound, "unknown checkpoint", {{"checkpoint_id", checkpoint_id}});
        }

        const std::string key = req.get_header_value("Idempotency-Key");
        const std::string tile_key =
            s->session_id + "/" + std::to_string(mask.tile.row) + "/" + std::to_string(mask.tile.col);
        std::string removal_id;
        {
            std::lock_guard lock(mutex_);
            if (!key.empty()) {
                if (const auto it = idempotency_.find(s->session_id + "/" + key); it != idempotency_.end()) {
                    send_json(res, removal_json(removals_.at(it->second)), 200);
                    return;
                }
            }
            if (busy_tiles_.contains(tile_key)) {
                throw Error(ErrorCode::Conflict, "a removal is already running on this tile",
                            {{"tile", {mask.tile.row, mask.tile.col}}});
            }
            busy_tiles_.insert(tile_key);
            removal_id = random_id();
            if (!key.empty()) idempotency_[s->session_id + "/" + key] = removal_id;
            removals_[removal_id] = RemovalRecord{removal_id, s->session_id};
            s->removals.push_back(removal_id);
            s->updated_at = utc_timestamp();
        }

        if (cache_.resident(checkpoint_id)) {
            std::shared_ptr<const Translator> t;
            try {
                t = cache_.get(checkpoint_id);
            } catch (...) {
                std::lock_guard lock(mutex_);
                busy_tiles_.erase(tile_key);
                throw;
            }
            {
                std::lock_guard lock(mutex_);
                removals_.at(removal_id).state = JobState::running;
            }
            run_removal(removal_id, s, mask, checkpoint_id, canny, t);
            std::lock_guard lock(mutex_);
            send_json(res, removal_json(removals_.at(removal_id)), 201);
            return;
        }

        const std::string job_id = new_job(JobKind::removal);
        {
            std::lock_guard lock(mutex_);
            removals_.at(removal_id).job_id = job_id;
        }
        work_queue_.push([this, job_id, removal_id, s, mask, checkpoint_id, canny] {
            update_job(job_id, [](JobStatus& j) { j.state = JobState::running; });
            {
                std::lock_guard lock(mutex_);
                removals_.at(removal_id).state = JobState::running;
            }
            try {
                run_removal(removal_id, s, mask, checkpoint_id, canny, nullptr);
                update_job(job_id, [&](JobStatus& j) {
                    j.state = JobState::done;
                    j.progress = 1.0;
                    j.result = {{"removal_id", removal_id}};
                });
            } catch (const std::exception& e) {
                update_job(job_id, [&](JobStatus& j) {
                    j.state = JobState::failed;
                    j.message = e.what();
                });
            }
        });
        std::lock_guard lock(mutex_);
        send_json(res, removal_json(removals_.at(removal_id)), 202);
    });

    auto removal_record = [this](const std::string& id) {
        std::lock_guard lock(mutex_);
        const auto it = removals_.find(id);
        if (it == removals_.end()) throw Error(ErrorCode::NotFound, "unknown removal", {{"removal_id", id}});
        if (it->second.state != JobState::done) {
            throw Error(ErrorCode::Conflict, "removal not finished",
                        {{"removal_id", id}, {"state", to_string(it->second.state)}});
        }
        return it->second;
    };

    srv.Get(R"(/removals/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mutex_);
        const auto it = removals_.find(req.matches[1]);
        if (it == removals_.end()) throw Error(ErrorCode::NotFound, "unknown removal");
        send_json(res, removal_json(it->second));
    });

    srv.Get(R"(/removals/([0-9a-f]+)/result)", [removal_record](const httplib::Request& req, httplib::Response& res) {
        const auto rec = removal_record(req.matches[1]);
        const std::string which = req.has_param("which") ? req.get_param_value("which") : "tile";
        if (which == "tile") send_png(res, rec.result->output_tile.pixels);
        else if (which == "scene") send_png(res, rec.result->forged_scene.pixels);
        else if (which == "cfi") send_png(res, rec.result->edited_cfi.data);
        else if (which == "source_cfi") send_png(res, rec.result->source_cfi.data);
        else throw Error(ErrorCode::InvalidParams, "which must be tile, scene, cfi or source_cfi");
    });

    srv.Get(R"(/removals/([0-9a-f]+)/metrics)",
            [this, removal_record](const httplib::Request& req, httplib::Response& res) {
                const auto rec = removal_record(req.matches[1]);
                const auto s = session(rec.session_id);
                const auto& r = *rec.result;
                const std::string region = req.has_param("region") ? req.get_param_value("region") : "tile";
                RegionSelector sel;
                if (region == "tile") sel = RegionSelector::of_tile(r.mask.tile, s->grid.tile_size);
                else if (region == "full") sel = RegionSelector::full();
                else if (region == "mask")
                    sel = RegionSelector::of_mask(r.mask.tile, s->grid.tile_size, r.mask.rasterize(s->grid.tile_size));
                else throw Error(ErrorCode::InvalidParams, "region must be tile, full or mask");
                send_json(res, to_json(degradation_report(s->scene, r.forged_scene, sel)));
            });

    srv.Get(R"(/jobs/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(job(req.matches[1])));
    });

    if (!config_.ui_dir.empty()) {
        if (!srv.set_mount_point("/ui", config_.ui_dir.string())) {
            throw Error(ErrorCode::UsageError, "ui_dir is not a directory", {{"ui_dir", config_.ui_dir.string()}});
        }
    } else {
        srv.Get("/ui", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("<!doctype html><title>satforge</title><p>No UI bundle configured (set ui_dir).</p>",
                            "text/html");
        });
    }
}

}  // namespace satforge
