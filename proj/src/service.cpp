#include "cinerender/service.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include <httplib.h>

#include "cinerender/error.hpp"

namespace cinerender {

FrameEncoding parse_encoding(const std::string &name) {
    if (name == "png8")
        return FrameEncoding::png8;
    if (name == "pfm")
        return FrameEncoding::pfm;
    throw Error("invalid_encoding", "encoding must be png8 or pfm, got '" + name + "'");
}

const char *encoding_name(FrameEncoding e) { return e == FrameEncoding::png8 ? "png8" : "pfm"; }

namespace {

std::string encode_image(const FloatImage &img, double exposure_ev, FrameEncoding encoding) {
    if (encoding == FrameEncoding::pfm)
        return encode_pfm(img);
    return encode_png(tone_map(img, exposure_ev));
}

}  // namespace

std::string encode_frame_message(const FrameMessage &msg, FrameEncoding encoding) {
    std::string payload;
    if (!msg.close && msg.image)
        payload = encode_image(*msg.image, msg.exposure_ev, encoding);
    const json header = {{"type", msg.close ? "close" : "frame"},
                         {"revision", msg.revision},
                         {"count", msg.count},
                         {"width", msg.width},
                         {"height", msg.height},
                         {"encoding", encoding_name(encoding)},
                         {"byte_length", payload.size()}};
    std::string out = header.dump();
    out += '\n';
    out += payload;
    return out;
}

void FrameStreamParser::feed(const char *data, std::size_t size) { buffer_.append(data, size); }

bool FrameStreamParser::next(Message &out) {
    const std::size_t eol = buffer_.find('\n');
    if (eol == std::string::npos)
        return false;
    json header;
    try {
        header = json::parse(buffer_.substr(0, eol));
    } catch (const json::exception &e) {
        throw Error("malformed_frame", e.what());
    }
    const std::size_t length = header.value("byte_length", std::size_t{0});
    if (buffer_.size() < eol + 1 + length)
        return false;
    out.header = std::move(header);
    out.payload = buffer_.substr(eol + 1, length);
    buffer_.erase(0, eol + 1 + length);
    return true;
}

void FrameSubscription::push(FrameMessage msg) {
    {
        std::lock_guard lk(mutex_);
        if (!msg.close) {
            while (queue_.size() >= capacity_) {
                auto it = std::find_if(queue_.begin(), queue_.end(),
                                       [](const FrameMessage &m) { return !m.close; });
                if (it == queue_.end())
                    break;
                queue_.erase(it);
            }
        }
        queue_.push_back(std::move(msg));
    }
    cv_.notify_all();
}

void FrameSubscription::drop_older_than(std::uint64_t revision) {
    std::lock_guard lk(mutex_);
    std::erase_if(queue_,
                  [&](const FrameMessage &m) { return !m.close && m.revision < revision; });
}

bool FrameSubscription::pop(FrameMessage &out, std::chrono::milliseconds timeout) {
    std::unique_lock lk(mutex_);
    if (!cv_.wait_for(lk, timeout, [&] { return !queue_.empty(); }))
        return false;
    out = std::move(queue_.front());
    queue_.pop_front();
    return true;
}

class Session {
public:
    Session(std::string id, const ServiceOptions &options, std::shared_ptr<const Scene> scene,
            Camera camera, PathTracerConfig cfg, int width, int height, std::uint64_t seed,
            std::uint64_t max_spp, Integrator integrator)
        : id_(std::move(id)), pass_spp_(options.pass_spp), threads_(options.render_threads),
          width_(width), height_(height), seed_(seed), max_spp_(max_spp),
          integrator_(integrator), scene_(std::move(scene)), camera_(camera), cfg_(cfg),
          buffer_(width, height) {}

    ~Session() { close(); }

    void start() {
        worker_ = std::thread([this] { run(); });
    }

    std::string volume_id, env_id, tf_id;
    std::optional<std::string> overlay_id;

    std::uint64_t apply(const json &patch, const AssetRegistry &assets) {
        if (!patch.is_object())
            throw Error("malformed_patch", "patch must be a JSON object");
        for (const auto &[key, _] : patch.items()) {
            if (key != "camera" && key != "tf" && key != "exposure" && key != "cfg" &&
                key != "paused")
                throw Error("malformed_patch", "unknown patch field '" + key + "'");
        }

        std::lock_guard serial(patch_mutex_);
        std::unique_lock lk(mutex_);
        Camera camera = camera_;
        PathTracerConfig cfg = cfg_;
        bool paused = paused_;
        std::string tf_id = this->tf_id;
        std::shared_ptr<const Scene> scene = scene_;
        lk.unlock();

        if (patch.contains("camera"))
            camera = camera_from_json(patch["camera"], camera);
        if (patch.contains("exposure")) {
            if (!patch["exposure"].is_number())
                throw Error("malformed_patch", "exposure must be a number");
            camera.exposure_ev = patch["exposure"].get<double>();
            camera.validate();
        }
        if (patch.contains("cfg"))
            cfg = config_from_json(patch["cfg"], cfg);
        if (patch.contains("paused")) {
            if (!patch["paused"].is_boolean())
                throw Error("malformed_patch", "paused must be a boolean");
            paused = patch["paused"].get<bool>();
        }
        if (patch.contains("tf")) {
            const json &t = patch["tf"];
            TransferFunction tf = t.is_string() ? assets.tf(t.get<std::string>()) : tf_from_json(t);
            tf_id = t.is_string() ? t.get<std::string>() : std::string{};
            scene = std::make_shared<const Scene>(scene->volume_ptr(), std::move(tf),
                                                  scene->env_ptr(), scene->overlay(),
                                                  scene->density_scale());
        }

        lk.lock();
        if (closed_)
            throw Error("session_not_found", "session " + id_ + " is closed");
        camera_ = camera;
        cfg_ = cfg;
        paused_ = paused;
        this->tf_id = tf_id;
        scene_ = std::move(scene);
        ++revision_;
        buffer_.reset();
        latest_.reset();
        prune_subscribers();
        for (auto &w : subscribers_)
            if (auto s = w.lock())
                s->drop_older_than(revision_);
        cv_.notify_all();
        return revision_;
    }

    json state() const {
        std::lock_guard lk(mutex_);
        json j = {{"id", id_},
                  {"revision", revision_},
                  {"count", buffer_.count()},
                  {"width", width_},
                  {"height", height_},
                  {"paused", paused_},
                  {"seed", seed_},
                  {"max_spp", max_spp_},
                  {"pass_spp", pass_spp_},
                  {"integrator", integrator_ == Integrator::raycast ? "raycast" : "pathtrace"},
                  {"volume_id", volume_id},
                  {"env_id", env_id},
                  {"camera", camera_to_json(camera_)},
                  {"exposure", camera_.exposure_ev},
                  {"tf", tf_to_json(scene_->tf())},
                  {"cfg", config_to_json(cfg_)}};
        if (!tf_id.empty())
            j["tf_id"] = tf_id;
        if (overlay_id)
            j["overlay_id"] = *overlay_id;
        if (!error_.empty())
            j["error"] = error_;
        return j;
    }

    Snapshot snapshot(FrameEncoding encoding) const {
        std::unique_lock lk(mutex_);
        Snapshot s;
        s.revision = revision_;
        s.count = buffer_.count();
        const FloatImage img = to_float_image(buffer_);
        const double ev = camera_.exposure_ev;
        lk.unlock();
        s.bytes = encode_image(img, ev, encoding);
        return s;
    }

    std::shared_ptr<FrameSubscription> subscribe() {
        auto sub = std::make_shared<FrameSubscription>();
        std::lock_guard lk(mutex_);
        if (closed_) {
            sub->push(close_message());
        } else {
            if (latest_)
                sub->push(frame_message(latest_));
            prune_subscribers();
            subscribers_.push_back(sub);
        }
        return sub;
    }

    bool wait_for(std::uint64_t revision, std::uint64_t count, std::chrono::milliseconds timeout) {
        std::unique_lock lk(mutex_);
        return cv_.wait_for(lk, timeout, [&] {
            return closed_ || revision_ > revision ||
                   (revision_ == revision && buffer_.count() >= count);
        }) && !closed_;
    }

    void close() {
        {
            std::lock_guard lk(mutex_);
            if (!closed_) {
                closed_ = true;
                for (auto &w : subscribers_)
                    if (auto s = w.lock())
                        s->push(close_message());
                subscribers_.clear();
            }
        }
        cv_.notify_all();
        if (worker_.joinable() && worker_.get_id() != std::this_thread::get_id())
            worker_.join();
    }

private:
    FrameMessage frame_message(std::shared_ptr<const FloatImage> img) const {
        return {false, revision_, buffer_.count(), width_, height_, camera_.exposure_ev,
                std::move(img)};
    }

    FrameMessage close_message() const {
        return {true, revision_, buffer_.count(), width_, height_, camera_.exposure_ev, nullptr};
    }

    void prune_subscribers() {
        std::erase_if(subscribers_, [](const auto &w) { return w.expired(); });
    }

    void run() {
        std::unique_lock lk(mutex_);
        while (true) {
            cv_.wait(lk, [&] {
                return closed_ || (!paused_ && error_.empty() && buffer_.count() < max_spp_);
            });
            if (closed_)
                return;

            const std::shared_ptr<const Scene> scene = scene_;
            const Camera camera = camera_;
            const PathTracerConfig cfg = cfg_;
            const std::uint64_t revision = revision_;
            RenderSettings settings;
            settings.width = width_;
            settings.height = height_;
            settings.spp = static_cast<int>(
                std::min<std::uint64_t>(pass_spp_, max_spp_ - buffer_.count()));
            settings.seed = seed_;
            settings.frame_index = revision;
            settings.sample_offset = buffer_.count();
            settings.threads = threads_;
            settings.integrator = integrator_;
            lk.unlock();

            FramePass pass;
            std::string failure;
            try {
                pass = render_pass(*scene, camera, cfg, settings);
            } catch (const std::exception &e) {
                failure = e.what();
            }

            lk.lock();
            if (closed_)
                return;
            if (revision != revision_)
                continue;
            if (!failure.empty()) {
                error_ = failure;
                continue;
            }
            buffer_.accumulate(pass);
            latest_ = std::make_shared<const FloatImage>(to_float_image(buffer_));
            prune_subscribers();
            for (auto &w : subscribers_)
                if (auto s = w.lock())
                    s->push(frame_message(latest_));
            cv_.notify_all();
        }
    }

    const std::string id_;
    const int pass_spp_;
    const int threads_;
    const int width_;
    const int height_;
    const std::uint64_t seed_;
    const std::uint64_t max_spp_;
    const Integrator integrator_;

    std::mutex patch_mutex_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::shared_ptr<const Scene> scene_;
    Camera camera_;
    PathTracerConfig cfg_;
    std::uint64_t revision_ = 1;
    bool paused_ = false;
    bool closed_ = false;
    std::string error_;
    AccumulationBuffer buffer_;
    std::shared_ptr<const FloatImage> latest_;
    std::vector<std::weak_ptr<FrameSubscription>> subscribers_;
    std::thread worker_;
};

RenderService::RenderService(ServiceOptions options)
    : options_(std::move(options)), assets_(options_.asset_dir) {
    if (options_.pass_spp < 1)
        throw Error("invalid_options", "pass_spp must be >= 1");
    if (options_.render_threads < 0)
        throw Error("invalid_options", "render_threads must be >= 0");
}

RenderService::~RenderService() {
    std::map<std::string, std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lk(mutex_);
        sessions.swap(sessions_);
    }
    for (auto &[_, s] : sessions)
        s->close();
}

json RenderService::list_assets() const {
    return {{"volumes", assets_.volume_ids()},   {"tfs", assets_.tf_ids()},
            {"envs", assets_.env_ids()},         {"overlays", assets_.overlay_ids()},
            {"cameras", assets_.camera_ids()}};
}

namespace {

template <typename T>
T field(const json &j, const char *key, T fallback) {
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &) {
        throw Error("malformed_request", std::string("field '") + key + "' has the wrong type");
    }
}

std::string required_id(const json &j, const char *key) {
    if (!j.contains(key) || !j.at(key).is_string())
        throw Error("malformed_request", std::string("missing string field '") + key + "'");
    return j.at(key).get<std::string>();
}

}  // namespace

std::string RenderService::create_session(const json &req) {
    if (!req.is_object())
        throw Error("malformed_request", "session request must be a JSON object");
    static const char *known[] = {"volume_id", "tf_id",   "env_id",   "width",   "height",
                                  "overlay_id", "seed",   "camera",   "cfg",     "exposure",
                                  "max_spp",    "integrator", "density_scale"};
    for (const auto &[key, _] : req.items())
        if (std::find_if(std::begin(known), std::end(known),
                         [&](const char *k) { return key == k; }) == std::end(known))
            throw Error("malformed_request", "unknown session field '" + key + "'");

    const std::string volume_id = required_id(req, "volume_id");
    const std::string tf_id = required_id(req, "tf_id");
    const std::string env_id = required_id(req, "env_id");
    const int width = field(req, "width", 512);
    const int height = field(req, "height", 512);
    if (width < 1 || height < 1 || width > 8192 || height > 8192)
        throw Error("invalid_dimensions", "width and height must lie in [1, 8192]");
    const std::uint64_t seed = field(req, "seed", options_.default_seed);
    const std::uint64_t max_spp = field(req, "max_spp", options_.max_spp);
    if (max_spp < 1)
        throw Error("invalid_max_spp", "max_spp must be >= 1");
    const double density_scale = field(req, "density_scale", 1.0);
    const std::string integrator_name = field<std::string>(req, "integrator", "pathtrace");
    if (integrator_name != "pathtrace" && integrator_name != "raycast")
        throw Error("invalid_integrator", "integrator must be pathtrace or raycast");

    std::optional<std::string> overlay_id;
    std::optional<EmissionOverlay> overlay;
    if (req.contains("overlay_id")) {
        overlay_id = required_id(req, "overlay_id");
        overlay = assets_.overlay(*overlay_id);
    }
    auto volume = assets_.volume(volume_id);
    auto scene = std::make_shared<const Scene>(volume, assets_.tf(tf_id), assets_.env(env_id),
                                               overlay, density_scale);

    Camera camera = default_camera_for(*volume);
    if (req.contains("camera"))
        camera = camera_from_json(req["camera"], camera);
    if (req.contains("exposure")) {
        camera.exposure_ev = field(req, "exposure", 0.0);
        camera.validate();
    }
    const PathTracerConfig cfg =
        req.contains("cfg") ? config_from_json(req["cfg"]) : PathTracerConfig{};

    std::lock_guard lk(mutex_);
    const std::string id = "s" + std::to_string(next_id_++);
    auto session = std::make_shared<Session>(
        id, options_, std::move(scene), camera, cfg, width, height, seed, max_spp,
        integrator_name == "raycast" ? Integrator::raycast : Integrator::pathtrace);
    session->volume_id = volume_id;
    session->env_id = env_id;
    session->tf_id = tf_id;
    session->overlay_id = overlay_id;
    session->start();
    sessions_.emplace(id, session);
    return id;
}

std::shared_ptr<Session> RenderService::find(const std::string &id) const {
    std::lock_guard lk(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end())
        throw Error("session_not_found", "no session '" + id + "'");
    return it->second;
}

std::uint64_t RenderService::update_state(const std::string &id, const json &patch) {
    return find(id)->apply(patch, assets_);
}

json RenderService::session_state(const std::string &id) const { return find(id)->state(); }

Snapshot RenderService::snapshot(const std::string &id, FrameEncoding encoding) const {
    return find(id)->snapshot(encoding);
}

std::shared_ptr<FrameSubscription> RenderService::subscribe(const std::string &id) {
    return find(id)->subscribe();
}

void RenderService::close_session(const std::string &id) {
    std::shared_ptr<Session> s;
    {
        std::lock_guard lk(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end())
            throw Error("session_not_found", "no session '" + id + "'");
        s = it->second;
        sessions_.erase(it);
    }
    s->close();
}

std::size_t RenderService::session_count() const {
    std::lock_guard lk(mutex_);
    return sessions_.size();
}

bool RenderService::wait_for_count(const std::string &id, std::uint64_t revision,
                                   std::uint64_t count, std::chrono::milliseconds timeout) const {
    return find(id)->wait_for(revision, count, timeout);
}

struct HttpServer::Impl {
    RenderService &service;
    httplib::Server server;
    std::thread thread;
    std::atomic<bool> stopping{false};

    explicit Impl(RenderService &s) : service(s) {}
};

namespace {

int status_for(const std::string &code) {
    if (code == "asset_not_found" || code == "session_not_found")
        return 404;
    if (code.starts_with("invalid_") || code.starts_with("malformed_") ||
        code.starts_with("unsupported_"))
        return 400;
    return 500;
}

void send_json(httplib::Response &res, const json &body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response &res, const std::string &code, const std::string &message) {
    send_json(res, {{"error", code}, {"message", message}}, status_for(code));
}

template <typename F>
auto guarded(F &&handler) {
    return [handler = std::forward<F>(handler)](const httplib::Request &req,
                                                httplib::Response &res) {
        try {
            handler(req, res);
        } catch (const Error &e) {
            send_error(res, e.code(), e.what());
        } catch (const json::exception &e) {
            send_error(res, "malformed_json", e.what());
        } catch (const std::exception &e) {
            send_error(res, "internal_error", e.what());
        }
    };
}

json parse_body(const httplib::Request &req) {
    if (req.body.empty())
        return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception &e) {
        throw Error("malformed_json", e.what());
    }
}

}  // namespace

HttpServer::HttpServer(RenderService &service) : impl_(std::make_unique<Impl>(service)) {
    auto &svr = impl_->server;
    RenderService &svc = service;
    Impl *impl = impl_.get();

    svr.Get("/assets", guarded([&svc](const httplib::Request &, httplib::Response &res) {
                send_json(res, svc.list_assets());
            }));

    svr.Post("/sessions", guarded([&svc](const httplib::Request &req, httplib::Response &res) {
                 const std::string id = svc.create_session(parse_body(req));
                 send_json(res, {{"id", id}, {"revision", svc.session_state(id)["revision"]}},
                           201);
             }));

    svr.Get(R"(/sessions/([^/]+))",
            guarded([&svc](const httplib::Request &req, httplib::Response &res) {
                send_json(res, svc.session_state(req.matches[1]));
            }));

    svr.Patch(R"(/sessions/([^/]+))",
              guarded([&svc](const httplib::Request &req, httplib::Response &res) {
                  const std::uint64_t rev = svc.update_state(req.matches[1], parse_body(req));
                  send_json(res, {{"revision", rev}});
              }));

    svr.Delete(R"(/sessions/([^/]+))",
               guarded([&svc](const httplib::Request &req, httplib::Response &res) {
                   svc.close_session(req.matches[1]);
                   send_json(res, {{"closed", true}});
               }));

    svr.Get(R"(/sessions/([^/]+)/snapshot)",
            guarded([&svc](const httplib::Request &req, httplib::Response &res) {
                const FrameEncoding enc =
                    parse_encoding(req.has_param("fmt") ? req.get_param_value("fmt") : "png8");
                Snapshot s = svc.snapshot(req.matches[1], enc);
                res.set_header("X-Revision", std::to_string(s.revision));
                res.set_header("X-Count", std::to_string(s.count));
                res.set_content(std::move(s.bytes),
                                enc == FrameEncoding::png8 ? "image/png"
                                                           : "application/octet-stream");
            }));

    svr.Get(R"(/sessions/([^/]+)/frames)",
            guarded([&svc, impl](const httplib::Request &req, httplib::Response &res) {
                const FrameEncoding enc = parse_encoding(
                    req.has_param("encoding") ? req.get_param_value("encoding") : "png8");
                std::shared_ptr<FrameSubscription> sub = svc.subscribe(req.matches[1]);
                res.set_chunked_content_provider(
                    "application/octet-stream",
                    [sub, enc, impl](std::size_t, httplib::DataSink &sink) {
                        if (impl->stopping)
                            return false;
                        FrameMessage msg;
                        if (!sub->pop(msg, std::chrono::milliseconds(100)))
                            return true;
                        const std::string bytes = encode_frame_message(msg, enc);
                        if (!sink.write(bytes.data(), bytes.size()))
                            return false;
                        if (msg.close)
                            sink.done();
                        return true;
                    });
            }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string &host, int port) {
    if (port == 0)
        port = impl_->server.bind_to_any_port(host);
    else if (!impl_->server.bind_to_port(host, port))
        port = -1;
    if (port < 0)
        throw Error("bind_failed", "could not bind " + host);
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void HttpServer::stop() {
    impl_->stopping = true;
    impl_->server.stop();
    if (impl_->thread.joinable())
        impl_->thread.join();
}

}  // namespace cinerender
