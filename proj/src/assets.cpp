#include "cinerender/assets.hpp"

#include <fstream>

#include "cinerender/error.hpp"
#include "cinerender/image_io.hpp"

namespace cinerender {

namespace fs = std::filesystem;

namespace {

Vec3 vec_from(const json &j, const char *what) {
    if (!j.is_array() || j.size() != 3)
        throw Error("malformed_json", std::string(what) + " must be a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Rgb rgb_from(const json &j, const char *what) {
    const Vec3 v = vec_from(j, what);
    return {v.x, v.y, v.z};
}

json to_json(const Vec3 &v) { return json::array({v.x, v.y, v.z}); }
json to_json(const Rgb &c) { return json::array({c.r, c.g, c.b}); }

/// Runs `fn`, converting nlohmann type/key errors into Error(code).
template <typename F>
auto guarded(const char *code, F &&fn) {
    try {
        return fn();
    } catch (const json::exception &e) {
        throw Error(code, e.what());
    }
}

}  // namespace

json read_json_file(const fs::path &path) {
    const std::string text = read_binary_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception &e) {
        throw Error("malformed_json", path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path &path, const json &j) {
    write_binary_file(path, j.dump(2) + "\n");
}

TransferFunction tf_from_json(const json &j) {
    return guarded("malformed_transfer_function", [&] {
        std::vector<ControlPoint> points;
        for (const json &p : j.at("points")) {
            ControlPoint cp;
            cp.value = p.at("v").get<double>();
            cp.props.sigma_s = p.value("sigma_s", 0.0);
            cp.props.sigma_a = p.value("sigma_a", 0.0);
            if (p.contains("albedo"))
                cp.props.albedo = rgb_from(p["albedo"], "albedo");
            cp.props.g = p.value("g", 0.0);
            if (p.contains("q_e"))
                cp.props.q_e = rgb_from(p["q_e"], "q_e");
            points.push_back(cp);
        }
        return TransferFunction(std::move(points), j.value("surface_gradient_threshold", 0.0),
                                j.value("surface_roughness", 1.0));
    });
}

json tf_to_json(const TransferFunction &tf) {
    json points = json::array();
    for (const auto &p : tf.points())
        points.push_back({{"v", p.value},
                          {"sigma_s", p.props.sigma_s},
                          {"sigma_a", p.props.sigma_a},
                          {"albedo", to_json(p.props.albedo)},
                          {"g", p.props.g},
                          {"q_e", to_json(p.props.q_e)}});
    return {{"points", points},
            {"surface_gradient_threshold", tf.surface_gradient_threshold()},
            {"surface_roughness", tf.surface_roughness()}};
}

TransferFunction load_transfer_function(const fs::path &path) {
    return tf_from_json(read_json_file(path));
}

Camera camera_from_json(const json &j, const Camera &base) {
    return guarded("malformed_camera", [&] {
        if (!j.is_object())
            throw Error("malformed_camera", "camera must be a JSON object");
        Camera c = base;
        if (j.contains("position")) c.position = vec_from(j["position"], "position");
        if (j.contains("target")) c.target = vec_from(j["target"], "target");
        if (j.contains("up")) c.up = vec_from(j["up"], "up");
        c.vfov_deg = j.value("vfov_deg", c.vfov_deg);
        c.aperture_radius = j.value("aperture_radius", c.aperture_radius);
        c.focal_distance = j.value("focal_distance", c.focal_distance);
        c.exposure_ev = j.value("exposure_ev", c.exposure_ev);
        if (j.contains("shutter")) {
            const json &s = j["shutter"];
            if (!s.is_array() || s.size() != 2)
                throw Error("malformed_camera", "shutter must be [open, close]");
            c.shutter_open = s[0].get<double>();
            c.shutter_close = s[1].get<double>();
        }
        c.validate();
        return c;
    });
}

json camera_to_json(const Camera &c) {
    return {{"position", to_json(c.position)},
            {"target", to_json(c.target)},
            {"up", to_json(c.up)},
            {"vfov_deg", c.vfov_deg},
            {"aperture_radius", c.aperture_radius},
            {"focal_distance", c.focal_distance},
            {"exposure_ev", c.exposure_ev},
            {"shutter", json::array({c.shutter_open, c.shutter_close})}};
}

Camera load_camera(const fs::path &path) { return camera_from_json(read_json_file(path)); }

AnimationTrack track_from_json(const json &j) {
    return guarded("malformed_track", [&] {
        std::vector<Keyframe> keys;
        for (const json &k : j.at("keyframes")) {
            Keyframe kf;
            kf.time = k.at("time").get<double>();
            kf.camera = camera_from_json(k.at("camera"));
            if (k.contains("tf_id"))
                kf.tf_id = k["tf_id"].get<std::string>();
            if (k.contains("env_id"))
                kf.env_id = k["env_id"].get<std::string>();
            keys.push_back(std::move(kf));
        }
        return AnimationTrack(std::move(keys));
    });
}

json track_to_json(const AnimationTrack &track) {
    json keys = json::array();
    for (const auto &k : track.keyframes()) {
        json e = {{"time", k.time}, {"camera", camera_to_json(k.camera)}};
        if (k.tf_id)
            e["tf_id"] = *k.tf_id;
        if (k.env_id)
            e["env_id"] = *k.env_id;
        keys.push_back(std::move(e));
    }
    return {{"keyframes", keys}};
}

AnimationTrack load_track(const fs::path &path) { return track_from_json(read_json_file(path)); }

PathTracerConfig config_from_json(const json &j, const PathTracerConfig &base) {
    return guarded("malformed_config", [&] {
        if (!j.is_object())
            throw Error("malformed_config", "config must be a JSON object");
        PathTracerConfig c = base;
        c.max_bounces = j.value("max_bounces", c.max_bounces);
        c.rr_start_bounce = j.value("rr_start_bounce", c.rr_start_bounce);
        c.rr_min_survival = j.value("rr_min_survival", c.rr_min_survival);
        c.use_nee = j.value("use_nee", c.use_nee);
        c.step_count_raycast = j.value("step_count_raycast", c.step_count_raycast);
        c.raycast_shading = j.value("raycast_shading", c.raycast_shading);
        c.validate();
        return c;
    });
}

json config_to_json(const PathTracerConfig &c) {
    return {{"max_bounces", c.max_bounces},           {"rr_start_bounce", c.rr_start_bounce},
            {"rr_min_survival", c.rr_min_survival},   {"use_nee", c.use_nee},
            {"step_count_raycast", c.step_count_raycast}, {"raycast_shading", c.raycast_shading}};
}

namespace {

std::vector<ColormapPoint> colormap_from_json(const json &j) {
    std::vector<ColormapPoint> out;
    for (const json &p : j)
        out.push_back({p.at("v").get<double>(), rgb_from(p.at("rgb"), "rgb")});
    return out;
}

json colormap_to_json(const std::vector<ColormapPoint> &cm) {
    json out = json::array();
    for (const auto &p : cm)
        out.push_back({{"v", p.value}, {"rgb", to_json(p.rgb)}});
    return out;
}

}  // namespace

EmissionOverlay load_overlay(const fs::path &path) {
    const json j = read_json_file(path);
    return guarded("malformed_overlay", [&] {
        auto volume = std::make_shared<const ScalarVolume>(
            load_volume(path.parent_path() / j.at("volume").get<std::string>()));
        return EmissionOverlay(std::move(volume), colormap_from_json(j.at("colormap")),
                               j.value("strength", 1.0));
    });
}

// ---------------------------------------------------------------------------
// Fixtures

namespace {

OpticalProperties props(double sigma_s, double sigma_a, Rgb albedo = Rgb(1.0), double g = 0.0,
                        Rgb q_e = {}) {
    OpticalProperties p;
    p.sigma_s = sigma_s;
    p.sigma_a = sigma_a;
    p.albedo = albedo;
    p.g = g;
    p.q_e = q_e;
    return p;
}

const std::vector<std::string> kVolumeIds = {"slab", "sphere", "shell", "two_spheres", "ramp"};
const std::vector<std::string> kTfIds = {"vacuum", "absorber", "emissive", "tissue",
                                         "white_scatter", "glow"};
const std::vector<std::string> kEnvIds = {"constant", "black", "three_point", "sun_sky"};
const std::vector<std::string> kCameraIds = {"slab_top", "sphere_front", "sphere_dof",
                                             "shell_front"};
const std::vector<std::string> kSceneIds = {"emissive_slab", "absorber_slab", "vacuum", "sphere",
                                            "glow", "shell"};

constexpr double kSlabHalfWidth = 100.0;
constexpr double kSlabThickness = 1.0;

/// The slab is stored as constant raw data; its optics come from constant
/// transfer functions, so the normalized value (0) does not matter.
std::vector<double> slab_raw() { return std::vector<double>(8, 255.0); }

ScalarVolume fixture_volume(const std::string &id) {
    if (id == "slab") {
        const auto raw = slab_raw();
        return ScalarVolume::from_raw({2, 2, 2}, {2 * kSlabHalfWidth, 2 * kSlabHalfWidth, kSlabThickness},
                                      {-kSlabHalfWidth, -kSlabHalfWidth, 0.0}, raw);
    }
    const Vec3 spacing{1, 1, 1};
    if (id == "sphere")
        return make_synthetic_volume(SyntheticKind::sphere, {32, 32, 32}, spacing, {-15.5, -15.5, -15.5});
    if (id == "shell")
        return make_synthetic_volume(SyntheticKind::shell, {40, 40, 40}, spacing, {-19.5, -19.5, -19.5});
    if (id == "two_spheres")
        return make_synthetic_volume(SyntheticKind::two_spheres, {40, 32, 32}, spacing,
                                     {-19.5, -15.5, -15.5});
    if (id == "ramp")
        return make_synthetic_volume(SyntheticKind::ramp, {16, 16, 16}, spacing, {-7.5, -7.5, -7.5});
    throw Error("asset_not_found", "unknown fixture volume '" + id + "'");
}

TransferFunction fixture_tf(const std::string &id) {
    if (id == "vacuum")
        return TransferFunction::constant(props(0, 0));
    if (id == "absorber")
        return TransferFunction::constant(props(0, 1.0));
    if (id == "emissive")
        return TransferFunction::constant(props(0, 1.0, Rgb(1.0), 0.0, Rgb(1.0)));
    if (id == "tissue")
        return TransferFunction({{0.0, props(0, 0)},
                                 {0.25, props(0, 0)},
                                 {0.6, props(0.8, 0.05, {0.95, 0.7, 0.6}, 0.2)},
                                 {1.0, props(1.5, 0.08, {0.98, 0.9, 0.85}, 0.4)}},
                                0.2, 0.5);
    if (id == "white_scatter")
        return TransferFunction({{0.0, props(0, 0)}, {1.0, props(2.0, 0.0, Rgb(1.0), 0.6)}}, 0.25,
                                0.3);
    if (id == "glow")
        return TransferFunction(
            {{0.0, props(0, 0)}, {1.0, props(0, 0.3, Rgb(1.0), 0.0, {0.6, 0.3, 0.1})}});
    throw Error("asset_not_found", "unknown fixture transfer function '" + id + "'");
}

EnvironmentLight fixture_env(const std::string &id) {
    if (id == "constant")
        return make_constant_env(Rgb(1.0), 64, 32);
    if (id == "black")
        return make_constant_env(Rgb(0.0), 8, 4);
    if (id == "three_point")
        return make_three_point_env(128, 64);
    if (id == "sun_sky")
        return make_sun_sky_env(SunSkyParams{}, 128, 64);
    throw Error("asset_not_found", "unknown fixture environment '" + id + "'");
}

Camera fixture_camera(const std::string &id) {
    if (id == "slab_top") {
        Camera c;
        c.position = {0, 0, 1000};
        c.target = {0, 0, 0};
        c.up = {0, 1, 0};
        c.vfov_deg = 2.0;
        c.focal_distance = 1000;
        return c;
    }
    if (id == "sphere_front")
        return default_camera_for(fixture_volume("sphere"));
    if (id == "sphere_dof") {
        Camera c = default_camera_for(fixture_volume("sphere"));
        c.aperture_radius = 2.0;
        return c;
    }
    if (id == "shell_front")
        return default_camera_for(fixture_volume("shell"));
    throw Error("asset_not_found", "unknown fixture camera '" + id + "'");
}

Camera orbit_camera(const Camera &front, double angle_rad) {
    Camera c = front;
    const Vec3 offset = front.position - front.target;
    const double cs = std::cos(angle_rad), sn = std::sin(angle_rad);
    c.position = front.target + Vec3{cs * offset.x - sn * offset.y, sn * offset.x + cs * offset.y,
                                     offset.z};
    return c;
}

AnimationTrack fixture_track(const std::string &id) {
    const Camera front = fixture_camera("sphere_front");
    if (id == "orbit")
        return AnimationTrack({{0.0, front, {}, {}}, {1.0, orbit_camera(front, kPi / 2), {}, {}}});
    if (id == "orbit_blur") {
        Camera a = front;
        a.shutter_close = 0.5;
        Camera b = orbit_camera(front, kPi / 2);
        b.shutter_close = 0.5;
        return AnimationTrack({{0.0, a, {}, {}}, {1.0, b, {}, {}}});
    }
    if (id == "static")
        return AnimationTrack({{0.0, front, {}, {}}, {1.0, front, {}, {}}});
    throw Error("asset_not_found", "unknown fixture track '" + id + "'");
}

}  // namespace

std::vector<std::string> fixture_scene_names() { return kSceneIds; }

FixtureScene fixture_scene_info(const std::string &name) {
    FixtureScene s;
    s.name = name;
    if (name == "emissive_slab") {
        s.volume_id = "slab", s.tf_id = "emissive", s.env_id = "black";
        s.camera = fixture_camera("slab_top");
        s.analytic = 1.0 - std::exp(-1.0);
    } else if (name == "absorber_slab") {
        s.volume_id = "slab", s.tf_id = "absorber", s.env_id = "constant";
        s.camera = fixture_camera("slab_top");
        s.analytic = std::exp(-1.0);
    } else if (name == "vacuum") {
        s.volume_id = "sphere", s.tf_id = "vacuum", s.env_id = "constant";
        s.camera = fixture_camera("sphere_front");
        s.analytic = 1.0;
    } else if (name == "sphere") {
        s.volume_id = "sphere", s.tf_id = "tissue", s.env_id = "three_point";
        s.camera = fixture_camera("sphere_front");
    } else if (name == "glow") {
        s.volume_id = "two_spheres", s.tf_id = "glow", s.env_id = "sun_sky";
        s.overlay_id = "hotspot";
        s.camera = default_camera_for(fixture_volume("two_spheres"));
    } else if (name == "shell") {
        s.volume_id = "shell", s.tf_id = "white_scatter", s.env_id = "sun_sky";
        s.camera = fixture_camera("shell_front");
    } else {
        throw Error("asset_not_found", "unknown fixture scene '" + name + "'");
    }
    return s;
}

namespace {

const std::vector<ColormapPoint> kHotspotColormap = {
    {0.0, {0, 0, 0}}, {0.4, {0, 0, 0}}, {1.0, {1.0, 0.8, 0.1}}};
constexpr double kHotspotStrength = 0.5;
constexpr const char *kHotspotVolume = "two_spheres";

}  // namespace

Scene build_fixture_scene(const std::string &name, Camera *camera_out) {
    const FixtureScene info = fixture_scene_info(name);
    std::optional<EmissionOverlay> overlay;
    if (info.overlay_id)
        overlay.emplace(std::make_shared<const ScalarVolume>(fixture_volume(kHotspotVolume)),
                        kHotspotColormap, kHotspotStrength);
    if (camera_out)
        *camera_out = info.camera;
    return Scene(std::make_shared<const ScalarVolume>(fixture_volume(info.volume_id)),
                 fixture_tf(info.tf_id),
                 std::make_shared<const EnvironmentLight>(fixture_env(info.env_id)),
                 std::move(overlay));
}

void write_fixtures(const fs::path &out) {
    for (const char *sub : {"volumes", "tf", "env", "overlays", "cameras", "tracks", "scenes"})
        fs::create_directories(out / sub);

    for (const auto &id : kVolumeIds) {
        const fs::path desc = out / "volumes" / (id + ".json");
        if (id == "slab") {
            const auto raw = slab_raw();
            save_raw_volume(desc, {2, 2, 2}, {2 * kSlabHalfWidth, 2 * kSlabHalfWidth, kSlabThickness},
                            {-kSlabHalfWidth, -kSlabHalfWidth, 0.0}, SampleType::u8, raw);
        } else {
            save_volume(fixture_volume(id), desc);
        }
    }
    for (const auto &id : kTfIds)
        write_json_file(out / "tf" / (id + ".json"), tf_to_json(fixture_tf(id)));
    for (const auto &id : kEnvIds)
        save_env(fixture_env(id), out / "env" / (id + ".pfm"));
    write_json_file(out / "overlays" / "hotspot.json",
                    {{"volume", std::string("../volumes/") + kHotspotVolume + ".json"},
                     {"colormap", colormap_to_json(kHotspotColormap)},
                     {"strength", kHotspotStrength}});
    for (const auto &id : kCameraIds)
        write_json_file(out / "cameras" / (id + ".json"), camera_to_json(fixture_camera(id)));
    for (const char *id : {"orbit", "orbit_blur", "static"})
        write_json_file(out / "tracks" / (std::string(id) + ".json"), track_to_json(fixture_track(id)));
    for (const auto &name : kSceneIds) {
        const FixtureScene s = fixture_scene_info(name);
        json j = {{"volume", s.volume_id}, {"tf", s.tf_id}, {"env", s.env_id},
                  {"camera", camera_to_json(s.camera)}};
        if (s.overlay_id)
            j["overlay"] = *s.overlay_id;
        if (s.analytic)
            j["analytic"] = *s.analytic;
        write_json_file(out / "scenes" / (name + ".json"), j);
    }
}

// ---------------------------------------------------------------------------
// Registry

AssetRegistry::AssetRegistry(fs::path root) : root_(std::move(root)) {
    if (!fs::is_directory(root_))
        throw Error("asset_dir_missing", "asset directory '" + root_.string() + "' does not exist");
}

namespace {

std::vector<std::string> list_ids(const fs::path &dir, const std::string &ext) {
    std::vector<std::string> ids;
    if (!fs::is_directory(dir))
        return ids;
    for (const auto &e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext)
            ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

fs::path asset_path(const fs::path &root, const char *sub, const std::string &id,
                    const std::string &ext) {
    // Ids are bare file stems; anything path-like is rejected.
    if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..")
        throw Error("asset_not_found", "invalid asset id '" + id + "'");
    fs::path p = root / sub / (id + ext);
    if (!fs::is_regular_file(p))
        throw Error("asset_not_found", std::string(sub) + " asset '" + id + "' not found");
    return p;
}

}  // namespace

std::vector<std::string> AssetRegistry::volume_ids() const { return list_ids(root_ / "volumes", ".json"); }
std::vector<std::string> AssetRegistry::tf_ids() const { return list_ids(root_ / "tf", ".json"); }
std::vector<std::string> AssetRegistry::env_ids() const { return list_ids(root_ / "env", ".pfm"); }
std::vector<std::string> AssetRegistry::overlay_ids() const { return list_ids(root_ / "overlays", ".json"); }
std::vector<std::string> AssetRegistry::camera_ids() const { return list_ids(root_ / "cameras", ".json"); }

std::shared_ptr<const ScalarVolume> AssetRegistry::volume(const std::string &id) const {
    const fs::path p = asset_path(root_, "volumes", id, ".json");
    std::lock_guard lock(mutex_);
    auto &slot = volumes_[id];
    if (!slot)
        slot = std::make_shared<const ScalarVolume>(load_volume(p));
    return slot;
}

TransferFunction AssetRegistry::tf(const std::string &id) const {
    return load_transfer_function(asset_path(root_, "tf", id, ".json"));
}

std::shared_ptr<const EnvironmentLight> AssetRegistry::env(const std::string &id) const {
    const fs::path p = asset_path(root_, "env", id, ".pfm");
    std::lock_guard lock(mutex_);
    auto &slot = envs_[id];
    if (!slot)
        slot = std::make_shared<const EnvironmentLight>(load_env(p));
    return slot;
}

EmissionOverlay AssetRegistry::overlay(const std::string &id) const {
    return load_overlay(asset_path(root_, "overlays", id, ".json"));
}

Camera AssetRegistry::camera(const std::string &id) const {
    return load_camera(asset_path(root_, "cameras", id, ".json"));
}

Scene AssetRegistry::scene(const std::string &name, Camera *camera_out) const {
    const json j = read_json_file(asset_path(root_, "scenes", name, ".json"));
    return guarded("malformed_scene", [&] {
        std::optional<EmissionOverlay> overlay;
        if (j.contains("overlay"))
            overlay.emplace(this->overlay(j["overlay"].get<std::string>()));
        if (camera_out)
            *camera_out = camera_from_json(j.at("camera"));
        return Scene(volume(j.at("volume").get<std::string>()), tf(j.at("tf").get<std::string>()),
                     env(j.at("env").get<std::string>()), std::move(overlay),
                     j.value("density_scale", 1.0));
    });
}

}  // namespace cinerender
