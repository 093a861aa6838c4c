#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "cinerender/assets.hpp"
#include "cinerender/film.hpp"

namespace cinerender {

struct ServiceOptions {
    std::filesystem::path asset_dir;
    int pass_spp = 1;                    ///< samples per pixel per pass / frame message
    std::uint64_t max_spp = 1u << 16;    ///< sessions idle once their buffer holds this many
    int render_threads = 1;              ///< workers per session pass
    std::uint64_t default_seed = 0;
};

enum class FrameEncoding { png8, pfm };

FrameEncoding parse_encoding(const std::string &name);
const char *encoding_name(FrameEncoding e);

/// One progressive frame as published after a pass.
struct FrameMessage {
    bool close = false;
    std::uint64_t revision = 0;
    std::uint64_t count = 0;
    int width = 0;
    int height = 0;
    double exposure_ev = 0;
    std::shared_ptr<const FloatImage> image;
};

/// Encoded header + payload as sent on the frame channel. The header is one
/// line of JSON terminated by '\n':
///   {"type":"frame"|"close","revision","count","width","height","encoding","byte_length"}
std::string encode_frame_message(const FrameMessage &msg, FrameEncoding encoding);

/// Incremental parser for a frame channel byte stream.
class FrameStreamParser {
public:
    struct Message {
        nlohmann::json header;
        std::string payload;
    };

    void feed(const char *data, std::size_t size);
    bool next(Message &out);

private:
    std::string buffer_;
};

/// Per-connection queue of frame messages. Old frames are dropped when the
/// consumer lags; the relative order of delivered frames is preserved.
class FrameSubscription {
public:
    explicit FrameSubscription(std::size_t capacity = 4) : capacity_(capacity) {}

    void push(FrameMessage msg);
    void drop_older_than(std::uint64_t revision);
    /// False on timeout.
    bool pop(FrameMessage &out, std::chrono::milliseconds timeout);

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<FrameMessage> queue_;
    std::size_t capacity_;
};

struct Snapshot {
    std::uint64_t revision = 0;
    std::uint64_t count = 0;
    std::string bytes;
};

class Session;

/// Session registry and render loops. HTTP is layered on top by HttpServer;
/// every operation here is also usable in-process.
class RenderService {
public:
    explicit RenderService(ServiceOptions options);
    ~RenderService();

    RenderService(const RenderService &) = delete;
    RenderService &operator=(const RenderService &) = delete;

    const AssetRegistry &assets() const { return assets_; }
    const ServiceOptions &options() const { return options_; }

    nlohmann::json list_assets() const;

    /// Request: {volume_id, tf_id, env_id, width, height, overlay_id?, seed?,
    /// camera?, cfg?, exposure?, max_spp?}. Returns the session id.
    std::string create_session(const nlohmann::json &request);

    /// Patch: {camera?, tf? (object or id), exposure?, cfg?, paused?}.
    /// Returns the new revision.
    std::uint64_t update_state(const std::string &id, const nlohmann::json &patch);

    nlohmann::json session_state(const std::string &id) const;
    Snapshot snapshot(const std::string &id, FrameEncoding encoding) const;
    std::shared_ptr<FrameSubscription> subscribe(const std::string &id);
    void close_session(const std::string &id);
    std::size_t session_count() const;

    /// Blocks until the session's buffer reaches `count` samples at `revision`
    /// (or a later revision appears). False on timeout.
    bool wait_for_count(const std::string &id, std::uint64_t revision, std::uint64_t count,
                        std::chrono::milliseconds timeout) const;

private:
    std::shared_ptr<Session> find(const std::string &id) const;

    ServiceOptions options_;
    AssetRegistry assets_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

/// HTTP front end:
///   GET /assets, POST /sessions, GET|PATCH|DELETE /sessions/{id},
///   GET /sessions/{id}/snapshot?fmt=png8|pfm, GET /sessions/{id}/frames?encoding=png8|pfm
class HttpServer {
public:
    explicit HttpServer(RenderService &service);
    ~HttpServer();

    /// Binds to `port` (0 picks a free port) and returns the bound port.
    int bind(const std::string &host, int port);
    /// Serves on the calling thread until stop().
    void listen();
    /// Serves on a background thread.
    void start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cinerender
