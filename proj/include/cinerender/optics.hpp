#pragma once

#include <memory>
#include <vector>

#include "cinerender/math.hpp"
#include "cinerender/volume.hpp"

namespace cinerender {

/// Optical coefficients of one classified sample. Coefficients are per mm.
struct OpticalProperties {
    double sigma_s = 0;  ///< scattering
    double sigma_a = 0;  ///< absorption
    Rgb albedo{1, 1, 1}; ///< chromatic modulation applied at scattering events
    double g = 0;        ///< Henyey-Greenstein anisotropy
    Rgb q_e{};           ///< emitted radiance per unit length

    double sigma_t() const { return sigma_s + sigma_a; }
    bool operator==(const OpticalProperties &) const = default;
};

struct ControlPoint {
    double value = 0;
    OpticalProperties props;
};

/// Piecewise-linear map from normalized scalar value to optical properties.
class TransferFunction {
public:
    TransferFunction(std::vector<ControlPoint> points, double surface_gradient_threshold = 0.0,
                     double surface_roughness = 1.0);

    /// Two identical control points at 0 and 1.
    static TransferFunction constant(const OpticalProperties &props,
                                     double surface_gradient_threshold = 0.0,
                                     double surface_roughness = 1.0);

    OpticalProperties classify(double s) const;

    const std::vector<ControlPoint> &points() const { return points_; }
    double surface_gradient_threshold() const { return surface_gradient_threshold_; }
    double surface_roughness() const { return surface_roughness_; }

    /// Probability that a collision with local gradient magnitude
    /// `grad_mag` (per mm) is shaded as a surface rather than by the phase
    /// function. A zero threshold disables surface shading.
    double surface_probability(double grad_mag) const;

private:
    std::vector<ControlPoint> points_;
    double surface_gradient_threshold_;
    double surface_roughness_;
};

inline OpticalProperties classify(const TransferFunction &tf, double s) { return tf.classify(s); }

double hg_phase(double g, double cos_theta);

struct DirectionSample {
    Vec3 dir;
    double pdf = 0;
};

/// Inverse-CDF sample of the HG lobe around the propagation direction
/// `incoming`. u1 drives cos(theta), u2 the azimuth.
DirectionSample sample_hg(double g, const Vec3 &incoming, double u1, double u2);

/// Lambertian plus normalized-Phong glossy lobe. The glossy weight is
/// (1 - roughness); roughness 1 is pure Lambertian. `wi` and `wo` both point
/// away from the surface.
Rgb eval_brdf(const Vec3 &normal, const Vec3 &wi, const Vec3 &wo, const Rgb &albedo,
              double roughness);

/// Density (per steradian) of `sample_brdf` producing `wi` given `wo`.
double brdf_pdf(const Vec3 &normal, const Vec3 &wi, const Vec3 &wo, double roughness);

/// Samples `wi` given `wo`. u0 selects the lobe, (u1, u2) place the direction.
/// The pdf is zero when the direction falls below the surface.
DirectionSample sample_brdf(const Vec3 &normal, const Vec3 &wo, double roughness, double u0,
                            double u1, double u2);

struct ColormapPoint {
    double value = 0;
    Rgb rgb{};
};

/// Co-registered functional volume rendered as light emission.
class EmissionOverlay {
public:
    EmissionOverlay(std::shared_ptr<const ScalarVolume> volume, std::vector<ColormapPoint> colormap,
                    double strength);

    const ScalarVolume &volume() const { return *volume_; }
    std::shared_ptr<const ScalarVolume> volume_ptr() const { return volume_; }
    const std::vector<ColormapPoint> &colormap() const { return colormap_; }
    double strength() const { return strength_; }

    Rgb colormap_at(double s) const;

private:
    std::shared_ptr<const ScalarVolume> volume_;
    std::vector<ColormapPoint> colormap_;
    double strength_;
};

Rgb emission_at(const EmissionOverlay &overlay, const WorldPoint &p);

}  // namespace cinerender
