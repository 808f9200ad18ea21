#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include <json.hpp>

#include "satforge/error.hpp"
#include "satforge/imaging.hpp"
#include "satforge/metrics.hpp"
#include "satforge/removal.hpp"
#include "satforge/translator.hpp"

namespace httplib {
class Server;
}

namespace satforge {

// key = value lines; '#' starts a comment; values may be double-quoted.
std::map<std::string, std::string> parse_flat_config(const std::string& text);

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path workspace = "satforge-work";
    std::filesystem::path ui_dir;  // static bundle served under /ui when set
    int checkpoint_cache = 1;      // resident translators
    int tile_size = kDefaultTileSize;

    // Precedence: SATFORGE_* environment variables, then the file, then defaults.
    static ServiceConfig load(const std::optional<std::filesystem::path>& file = std::nullopt);
    void apply(const std::map<std::string, std::string>& kv);
};

enum class JobKind { train, removal, dataset_build, evaluate };
enum class JobState { queued, running, done, failed };

std::string to_string(JobKind k);
std::string to_string(JobState s);

struct JobStatus {
    std::string id;
    JobKind kind = JobKind::train;
    JobState state = JobState::queued;
    double progress = 0.0;
    std::string message;
    nlohmann::json result = nlohmann::json::object();
};

nlohmann::json to_json(const JobStatus& s);

// Single worker thread, FIFO.
class JobQueue {
public:
    JobQueue();
    ~JobQueue();
    void push(std::function<void()> fn);

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> queue_;
    bool stopping_ = false;
    std::thread worker_;
};

// Least-recently-used set of loaded translators backed by a checkpoint directory.
class CheckpointCache {
public:
    CheckpointCache(std::filesystem::path root, int capacity);
    std::shared_ptr<const Translator> get(const std::string& id);  // NotFound when absent on disk
    void put(const std::string& id, std::shared_ptr<const Translator> t);
    bool resident(const std::string& id) const;
    bool exists(const std::string& id) const;
    std::vector<std::string> list() const;
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    int capacity_;
    mutable std::mutex mutex_;
    std::list<std::pair<std::string, std::shared_ptr<const Translator>>> entries_;
};

struct SessionState {
    std::string session_id;
    std::string scene_id;  // content id of the uploaded pixels
    Scene scene;
    TileGrid grid;
    std::string active_checkpoint;
    std::vector<std::string> removals;
    std::string created_at;
    std::string updated_at;
};

struct RemovalRecord {
    std::string id;
    std::string session_id;
    JobState state = JobState::queued;
    std::string job_id;
    std::string message;
    std::optional<ForgedResult> result;
};

// HTTP front end for interactive sessions. Routes:
//   POST /scenes, GET /scenes/{id}, GET /scenes/{id}/tiles/{r}/{c}[/cfi],
//   POST /checkpoints/train, GET /checkpoints, POST /scenes/{id}/removals,
//   GET /removals/{id}, GET /removals/{id}/result, GET /removals/{id}/metrics,
//   GET /jobs/{id}, GET /palette, GET /schemas/removal_mask.json, /ui.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();

    // Blocks serving on the configured host/port.
    void listen();
    // Serves on an ephemeral port from a background thread; returns the port.
    int start_background();
    void stop();

    // Called with the tile lock held, before a removal runs. Tests use it to
    // hold a removal open.
    std::function<void(const std::string& removal_id)> before_removal;

    const ServiceConfig& config() const { return config_; }

private:
    void routes();
    std::string new_job(JobKind kind);
    void update_job(const std::string& id, const std::function<void(JobStatus&)>& fn);
    JobStatus job(const std::string& id);
    std::shared_ptr<SessionState> session(const std::string& id);
    void run_removal(const std::string& removal_id, const std::shared_ptr<SessionState>& s, const RemovalMask& mask,
                     const std::string& checkpoint_id, const CannyParams& canny,
                     std::shared_ptr<const Translator> translator);

    ServiceConfig config_;
    std::unique_ptr<httplib::Server> server_;
    CheckpointCache cache_;
    JobQueue train_queue_;
    JobQueue work_queue_;
    std::thread server_thread_;

    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<SessionState>> sessions_;
    std::map<std::string, JobStatus> jobs_;
    std::map<std::string, RemovalRecord> removals_;
    std::map<std::string, std::string> idempotency_;  // session + key -> removal id
    std::set<std::string> busy_tiles_;                // session/row/col
};

// Maps an error code to an HTTP status.
int http_status(ErrorCode code);

// Published JSON schema of RemovalMask.
nlohmann::json removal_mask_schema();

}  // namespace satforge
