#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "cinerender/math.hpp"

namespace cinerender {

/// Lat-long HDR environment. Row 0 is the zenith (+z), theta = acos(dir.z);
/// column 0 starts at phi = 0 with phi = atan2(dir.y, dir.x) wrapped to [0, 2pi).
class EnvironmentLight {
public:
    /// `radiance` holds width*height RGB float triples, row-major.
    EnvironmentLight(int width, int height, std::vector<float> radiance);

    int width() const { return width_; }
    int height() const { return height_; }
    std::span<const float> radiance_data() const { return radiance_; }
    double total_weight() const { return total_weight_; }
    std::span<const double> marginal_cdf() const { return marginal_cdf_; }
    /// Conditional CDF of row `row` (width entries, last one 1).
    std::span<const double> conditional_cdf(int row) const {
        return std::span<const double>(conditional_cdf_).subspan(
            static_cast<std::size_t>(row) * width_, width_);
    }

    Rgb texel(int col, int row) const;
    void texel_of(const Vec3 &dir, int &col, int &row) const;
    double texel_solid_angle(int row) const;
    /// Discrete probability of choosing a texel.
    double texel_probability(int col, int row) const;

    Rgb max_radiance() const { return max_radiance_; }

private:
    int width_;
    int height_;
    std::vector<float> radiance_;
    std::vector<double> marginal_cdf_;
    std::vector<double> conditional_cdf_;
    std::vector<double> row_weight_;
    double total_weight_ = 0;
    Rgb max_radiance_{};
};

Rgb env_eval(const EnvironmentLight &env, const Vec3 &dir);

/// Solid-angle density with which `env_sample` produces `dir`.
double env_pdf(const EnvironmentLight &env, const Vec3 &dir);

struct EnvSample {
    Vec3 dir;
    Rgb radiance;
    double pdf = 0;
};

/// Throws when the map is identically zero.
EnvSample env_sample(const EnvironmentLight &env, double u1, double u2);

struct Lobe {
    Vec3 dir;        ///< unit direction of the lobe center
    Rgb intensity;   ///< peak radiance
    double sharpness = 50;  ///< spherical Gaussian exponent
};

struct SunSkyParams {
    Vec3 sun_dir = normalize(Vec3{0.3, 0.2, 0.8});
    double sun_intensity = 50.0;
    double sun_sharpness = 2000.0;
    Rgb zenith{0.25, 0.45, 0.9};
    Rgb horizon{0.9, 0.9, 1.0};
    Rgb ground{0.2, 0.18, 0.15};
};

EnvironmentLight make_constant_env(const Rgb &value, int width = 64, int height = 32);
EnvironmentLight make_three_point_env(std::span<const Lobe> lobes, int width = 128,
                                      int height = 64);
/// Key, fill and rim lobes of a studio setup.
EnvironmentLight make_three_point_env(int width = 128, int height = 64);
EnvironmentLight make_sun_sky_env(const SunSkyParams &params, int width = 128, int height = 64);

/// Dispatch by name: "constant", "three-point", "sun-sky" with default parameters
/// and `intensity` scaling the constant map.
EnvironmentLight make_synthetic_env(std::string_view kind, int width, int height,
                                    double intensity = 1.0);

EnvironmentLight load_env(const std::filesystem::path &path);
void save_env(const EnvironmentLight &env, const std::filesystem::path &path);

}  // namespace cinerender
