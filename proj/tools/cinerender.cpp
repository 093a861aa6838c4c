// cinerender command line: render, animate, bench, make-fixtures, serve.

#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cinerender/assets.hpp"
#include "cinerender/error.hpp"
#include "cinerender/film.hpp"
#include "cinerender/service.hpp"

namespace fs = std::filesystem;
using namespace cinerender;

namespace {

struct SceneFlags {
    std::string volume, tf, env, overlay;
    double density_scale = 1.0;
};

struct ConfigFlags {
    int max_bounces = PathTracerConfig{}.max_bounces;
    int rr_start = PathTracerConfig{}.rr_start_bounce;
    double rr_min = PathTracerConfig{}.rr_min_survival;
    bool no_nee = false;
    int steps = PathTracerConfig{}.step_count_raycast;
    bool no_shading = false;

    PathTracerConfig build() const {
        PathTracerConfig c;
        c.max_bounces = max_bounces;
        c.rr_start_bounce = rr_start;
        c.rr_min_survival = rr_min;
        c.use_nee = !no_nee;
        c.step_count_raycast = steps;
        c.raycast_shading = !no_shading;
        c.validate();
        return c;
    }
};

struct ImageFlags {
    int width = 256;
    int height = 256;
    int spp = 16;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string integrator = "pathtrace";
};

void add_scene_flags(CLI::App *cmd, SceneFlags &f, bool required) {
    cmd->add_option("--volume", f.volume, "Volume descriptor (.json)")->required(required);
    cmd->add_option("--tf", f.tf, "Transfer function (.json)")->required(required);
    cmd->add_option("--env", f.env, "Environment map (.pfm)")->required(required);
    cmd->add_option("--overlay", f.overlay, "Emission overlay (.json)");
    cmd->add_option("--density-scale", f.density_scale, "Multiplier on sigma_s and sigma_a");
}

void add_config_flags(CLI::App *cmd, ConfigFlags &f) {
    cmd->add_option("--max-bounces", f.max_bounces);
    cmd->add_option("--rr-start", f.rr_start, "Bounce at which Russian roulette starts");
    cmd->add_option("--rr-min", f.rr_min, "Minimum Russian roulette survival probability");
    cmd->add_flag("--no-nee", f.no_nee, "Disable environment next-event estimation");
    cmd->add_option("--steps", f.steps, "Ray-caster step count");
    cmd->add_flag("--no-shading", f.no_shading, "Disable ray-caster local illumination");
}

void add_image_flags(CLI::App *cmd, ImageFlags &f) {
    cmd->add_option("--width", f.width);
    cmd->add_option("--height", f.height);
    cmd->add_option("--spp", f.spp, "Samples per pixel");
    cmd->add_option("--seed", f.seed);
    cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
    cmd->add_option("--integrator", f.integrator)
        ->check(CLI::IsMember({"pathtrace", "raycast"}));
}

Integrator parse_integrator(const std::string &s) {
    return s == "raycast" ? Integrator::raycast : Integrator::pathtrace;
}

Scene load_scene(const SceneFlags &f, const std::optional<std::string> &tf_override = {},
                 const std::optional<std::string> &env_override = {}) {
    const fs::path tf_path =
        tf_override ? fs::path(f.tf).parent_path() / (*tf_override + ".json") : fs::path(f.tf);
    const fs::path env_path =
        env_override ? fs::path(f.env).parent_path() / (*env_override + ".pfm") : fs::path(f.env);
    std::optional<EmissionOverlay> overlay;
    if (!f.overlay.empty())
        overlay = load_overlay(f.overlay);
    return Scene(std::make_shared<const ScalarVolume>(load_volume(f.volume)),
                 load_transfer_function(tf_path),
                 std::make_shared<const EnvironmentLight>(load_env(env_path)), std::move(overlay),
                 f.density_scale);
}

void write_image(const AccumulationBuffer &buf, double exposure_ev, const fs::path &out) {
    const std::string ext = out.extension().string();
    if (ext == ".pfm")
        write_pfm(to_float_image(buf), out);
    else if (ext == ".png")
        write_png(tone_map(buf, exposure_ev), out);
    else
        throw Error("invalid_output", "output must end in .pfm or .png: " + out.string());
}

RenderSettings settings_from(const ImageFlags &f, std::uint64_t frame_index) {
    RenderSettings s;
    s.width = f.width;
    s.height = f.height;
    s.spp = f.spp;
    s.seed = f.seed;
    s.frame_index = frame_index;
    s.threads = f.threads;
    s.integrator = parse_integrator(f.integrator);
    return s;
}

std::string frame_name(std::size_t index, const std::string &ext) {
    std::ostringstream os;
    os << "frame_" << std::setw(5) << std::setfill('0') << index << ext;
    return os.str();
}

int serve(const std::string &host, int port, std::string asset_dir, int pass_spp, int threads) {
    if (asset_dir.empty()) {
        const char *env = std::getenv("RENDER_ASSET_DIR");
        if (!env || !*env)
            throw Error("invalid_asset_dir", "set RENDER_ASSET_DIR or pass --asset-dir");
        asset_dir = env;
    }
    if (!fs::is_directory(asset_dir))
        throw Error("invalid_asset_dir", "not a directory: " + asset_dir);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    ServiceOptions options;
    options.asset_dir = asset_dir;
    options.pass_spp = pass_spp;
    options.render_threads = threads;
    RenderService service(options);
    HttpServer server(service);
    const int bound = server.bind(host, port);
    std::cout << "listening on http://" << host << ":" << bound << std::endl;

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.listen();
    // listen() also returns when the socket fails; wake the waiter either way.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Progressive Monte Carlo volume renderer"};
    app.require_subcommand(1);

    SceneFlags scene_flags;
    ConfigFlags cfg_flags;
    ImageFlags image_flags;

    auto *render = app.add_subcommand("render", "Render one frame");
    std::string camera_path, out_path;
    std::uint64_t frame_index = 0;
    std::optional<double> exposure;
    add_scene_flags(render, scene_flags, true);
    add_config_flags(render, cfg_flags);
    add_image_flags(render, image_flags);
    render->add_option("--camera", camera_path, "Camera (.json); default frames the volume");
    render->add_option("--out", out_path, "Output image (.pfm or .png)")->required();
    render->add_option("--frame", frame_index, "Frame index mixed into the sample stream");
    render->add_option("--exposure", exposure, "Override the camera exposure (EV)");

    auto *animate = app.add_subcommand("animate", "Render a keyframed camera track");
    std::string track_path, out_dir, format = "pfm", seed_policy = "frame";
    double fps = 24;
    add_scene_flags(animate, scene_flags, true);
    add_config_flags(animate, cfg_flags);
    add_image_flags(animate, image_flags);
    animate->add_option("--track", track_path, "Keyframe track (.json)")->required();
    animate->add_option("--fps", fps)->check(CLI::PositiveNumber);
    animate->add_option("--out-dir", out_dir)->required();
    animate->add_option("--format", format)->check(CLI::IsMember({"pfm", "png"}));
    animate
        ->add_option("--seed-policy", seed_policy,
                     "frame: frame index decorrelates frames; fixed: every frame uses index 0")
        ->check(CLI::IsMember({"frame", "fixed"}));

    auto *bench = app.add_subcommand("bench", "Time a built-in fixture scene");
    std::string bench_scene;
    int bench_passes = 4;
    ImageFlags bench_flags;
    bench_flags.width = 64;
    bench_flags.height = 64;
    bench_flags.spp = 16;
    bench->add_option("--scene", bench_scene, "Fixture scene name")->required();
    bench->add_option("--passes", bench_passes, "Number of timed passes")
        ->check(CLI::PositiveNumber);
    add_image_flags(bench, bench_flags);

    auto *fixtures = app.add_subcommand("make-fixtures", "Write the canonical test assets");
    std::string fixture_dir;
    fixtures->add_option("out_dir", fixture_dir)->required();

    auto *serve_cmd = app.add_subcommand("serve", "Run the HTTP render service");
    std::string host = "127.0.0.1", asset_dir;
    int port = 8080, pass_spp = 1, serve_threads = 0;
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--port", port);
    serve_cmd->add_option("--asset-dir", asset_dir, "Asset directory (default $RENDER_ASSET_DIR)");
    serve_cmd->add_option("--pass-spp", pass_spp, "Samples per pixel per streamed pass");
    serve_cmd->add_option("--threads", serve_threads, "Render threads per session");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*render) {
            const Scene scene = load_scene(scene_flags);
            Camera cam = camera_path.empty() ? default_camera_for(scene.volume())
                                             : load_camera(camera_path);
            if (exposure) {
                cam.exposure_ev = *exposure;
                cam.validate();
            }
            const AccumulationBuffer buf = render_frame(scene, cam, cfg_flags.build(),
                                                        settings_from(image_flags, frame_index));
            write_image(buf, cam.exposure_ev, out_path);
        } else if (*animate) {
            const AnimationTrack track = load_track(track_path);
            const PathTracerConfig cfg = cfg_flags.build();
            fs::create_directories(out_dir);
            const double duration = track.end_time() - track.start_time();
            const auto frames = static_cast<std::size_t>(std::floor(duration * fps + 1e-9)) + 1;
            for (std::size_t k = 0; k < frames; ++k) {
                const double t = track.start_time() + static_cast<double>(k) / fps;
                const TrackSample sample = interpolate_track(track, t);
                const Scene scene = load_scene(scene_flags, sample.tf_id, sample.env_id);
                const Camera &cam = sample.camera;
                CameraMotion motion{&track, t, 1.0 / fps};
                const bool blur = cam.shutter_close > cam.shutter_open;
                const AccumulationBuffer buf =
                    render_frame(scene, cam, cfg,
                                 settings_from(image_flags, seed_policy == "fixed" ? 0 : k),
                                 blur ? &motion : nullptr);
                write_image(buf, cam.exposure_ev, fs::path(out_dir) / frame_name(k, "." + format));
            }
            std::cout << json{{"frames", frames}, {"out_dir", out_dir}}.dump() << "\n";
        } else if (*bench) {
            Camera cam;
            const Scene scene = build_fixture_scene(bench_scene, &cam);
            RenderSettings s = settings_from(bench_flags, 0);
            AccumulationBuffer buf(s.width, s.height);
            json pass_seconds = json::array();
            const int per_pass = std::max(1, bench_flags.spp / bench_passes);
            std::uint64_t done = 0;
            double total = 0;
            while (done < static_cast<std::uint64_t>(bench_flags.spp)) {
                s.spp = static_cast<int>(
                    std::min<std::uint64_t>(per_pass, bench_flags.spp - done));
                s.sample_offset = done;
                const auto t0 = std::chrono::steady_clock::now();
                buf.accumulate(render_pass(scene, cam, PathTracerConfig{}, s));
                const double dt =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                pass_seconds.push_back(dt);
                total += dt;
                done += s.spp;
            }
            const double samples = static_cast<double>(done) * s.width * s.height;
            std::ostringstream hash;
            hash << std::hex << std::setw(16) << std::setfill('0')
                 << fnv1a64(encode_pfm(to_float_image(buf)));
            std::cout << json{{"scene", bench_scene},
                              {"spp", done},
                              {"threads", bench_flags.threads},
                              {"width", s.width},
                              {"height", s.height},
                              {"samples_per_second", samples / std::max(total, 1e-9)},
                              {"pass_seconds", pass_seconds},
                              {"image_hash", hash.str()}}
                             .dump(2)
                      << "\n";
        } else if (*fixtures) {
            write_fixtures(fixture_dir);
        } else if (*serve_cmd) {
            return serve(host, port, asset_dir, pass_spp, serve_threads);
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
