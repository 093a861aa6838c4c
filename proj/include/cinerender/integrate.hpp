#pragma once

#include <memory>
#include <optional>

#include "cinerender/lighting.hpp"
#include "cinerender/optics.hpp"
#include "cinerender/rng.hpp"
#include "cinerender/volume.hpp"

namespace cinerender {

struct PathTracerConfig {
    int max_bounces = 64;
    int rr_start_bounce = 4;
    double rr_min_survival = 0.05;
    bool use_nee = true;  ///< environment next-event estimation with MIS
    int step_count_raycast = 256;
    bool raycast_shading = true;  ///< key-light local illumination in the ray caster

    void validate() const;
    bool operator==(const PathTracerConfig &) const = default;
};

/// Everything one frame needs. Immutable once built; the majorant bounds
/// density_scale * sigma_t over the whole volume.
class Scene {
public:
    Scene(std::shared_ptr<const ScalarVolume> volume, TransferFunction tf,
          std::shared_ptr<const EnvironmentLight> env,
          std::optional<EmissionOverlay> overlay = std::nullopt, double density_scale = 1.0,
          std::optional<double> majorant = std::nullopt);

    const ScalarVolume &volume() const { return *volume_; }
    const TransferFunction &tf() const { return tf_; }
    const EnvironmentLight &env() const { return *env_; }
    const std::optional<EmissionOverlay> &overlay() const { return overlay_; }
    double density_scale() const { return density_scale_; }
    double majorant() const { return majorant_; }

    std::shared_ptr<const ScalarVolume> volume_ptr() const { return volume_; }
    std::shared_ptr<const EnvironmentLight> env_ptr() const { return env_; }

    /// Classified properties with coefficients scaled by density_scale.
    OpticalProperties properties_at(const WorldPoint &p) const;
    /// q_e plus overlay emission at p.
    Rgb emission_at(const WorldPoint &p, const OpticalProperties &props) const;

    /// Brightest environment texel, used by the ray caster's shading term.
    const Vec3 &key_light_dir() const { return key_dir_; }
    const Rgb &key_light_radiance() const { return key_radiance_; }

private:
    std::shared_ptr<const ScalarVolume> volume_;
    TransferFunction tf_;
    std::shared_ptr<const EnvironmentLight> env_;
    std::optional<EmissionOverlay> overlay_;
    double density_scale_;
    double majorant_;
    Vec3 key_dir_{0, 0, 1};
    Rgb key_radiance_{};
};

/// density_scale * max sigma_t over the classifications reachable by
/// trilinear reconstruction: data extremes plus control points inside the
/// data range.
double estimate_majorant(const ScalarVolume &volume, const TransferFunction &tf,
                         double density_scale);

inline double transmittance_analytic(double sigma_t, double d) { return std::exp(-sigma_t * d); }

/// Front-to-back Riemann sum of the emission-absorption integral.
Rgb ray_cast(const Scene &scene, const Ray &ray, const PathTracerConfig &cfg);

struct FreeFlight {
    bool collided = false;
    double t = 0;
    WorldPoint position;
    OpticalProperties props;
};

/// Delta tracking against the scene majorant over [0, t_max] inside the volume.
FreeFlight sample_free_flight(const Scene &scene, const Ray &ray, double t_max, Rng &rng);

/// Unbiased transmittance estimate by ratio tracking; always in [0, 1].
double estimate_transmittance(const Scene &scene, const Ray &ray, double t_max, Rng &rng);

struct PathStats {
    int bounces = 0;
    double max_throughput = 0;  ///< largest throughput channel seen along the path
};

/// One radiance sample of the volumetric rendering equation with restored emission.
Rgb path_trace_sample(const Scene &scene, const Ray &ray, const PathTracerConfig &cfg, Rng &rng,
                      PathStats *stats = nullptr);

}  // namespace cinerender
