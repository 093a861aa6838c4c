#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cinerender/film.hpp"
#include "cinerender/integrate.hpp"
#include "cinerender/lighting.hpp"
#include "cinerender/optics.hpp"
#include "cinerender/volume.hpp"

namespace cinerender {

using json = nlohmann::json;

// JSON schemas. Parsers throw Error with a "malformed_*" or "invalid_*" code.

TransferFunction tf_from_json(const json &j);
json tf_to_json(const TransferFunction &tf);
TransferFunction load_transfer_function(const std::filesystem::path &path);

Camera camera_from_json(const json &j, const Camera &base = Camera{});
json camera_to_json(const Camera &cam);
Camera load_camera(const std::filesystem::path &path);

AnimationTrack track_from_json(const json &j);
json track_to_json(const AnimationTrack &track);
AnimationTrack load_track(const std::filesystem::path &path);

/// Applies the fields present in `j` on top of `base`.
PathTracerConfig config_from_json(const json &j, const PathTracerConfig &base = {});
json config_to_json(const PathTracerConfig &cfg);

/// Overlay file: {volume: descriptor path relative to the overlay file, colormap, strength}.
EmissionOverlay load_overlay(const std::filesystem::path &path);

json read_json_file(const std::filesystem::path &path);
void write_json_file(const std::filesystem::path &path, const json &j);

/// A named, self-contained test scene built in memory.
struct FixtureScene {
    std::string name;
    std::string volume_id, tf_id, env_id;
    std::optional<std::string> overlay_id;
    Camera camera;
    std::optional<double> analytic;  ///< closed-form pixel value where one exists
};

std::vector<std::string> fixture_scene_names();
FixtureScene fixture_scene_info(const std::string &name);

/// Writes the canonical fixture set. Layout:
///   volumes/<id>.json + .raw, tf/<id>.json, env/<id>.pfm, overlays/<id>.json,
///   cameras/<id>.json, tracks/<id>.json, scenes/<id>.json
void write_fixtures(const std::filesystem::path &out_dir);

/// Read-only view over an asset directory laid out as by write_fixtures.
/// Loaded volumes and environments are cached and shared.
class AssetRegistry {
public:
    explicit AssetRegistry(std::filesystem::path root);

    const std::filesystem::path &root() const { return root_; }

    std::vector<std::string> volume_ids() const;
    std::vector<std::string> tf_ids() const;
    std::vector<std::string> env_ids() const;
    std::vector<std::string> overlay_ids() const;
    std::vector<std::string> camera_ids() const;

    /// Throw Error("asset_not_found") for unknown ids.
    std::shared_ptr<const ScalarVolume> volume(const std::string &id) const;
    TransferFunction tf(const std::string &id) const;
    std::shared_ptr<const EnvironmentLight> env(const std::string &id) const;
    EmissionOverlay overlay(const std::string &id) const;
    Camera camera(const std::string &id) const;

    /// Scene assembled from a fixture manifest (scenes/<name>.json).
    Scene scene(const std::string &name, Camera *camera_out = nullptr) const;

private:
    std::filesystem::path root_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::shared_ptr<const ScalarVolume>> volumes_;
    mutable std::map<std::string, std::shared_ptr<const EnvironmentLight>> envs_;
};

/// Same scene as AssetRegistry::scene but built without touching disk.
Scene build_fixture_scene(const std::string &name, Camera *camera_out = nullptr);

}  // namespace cinerender
