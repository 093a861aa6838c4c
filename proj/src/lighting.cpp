#include "cinerender/lighting.hpp"

#include <array>
#include <string>

#include "cinerender/error.hpp"
#include "cinerender/image_io.hpp"

namespace cinerender {

EnvironmentLight::EnvironmentLight(int width, int height, std::vector<float> radiance)
    : width_(width), height_(height), radiance_(std::move(radiance)) {
    if (width_ < 1 || height_ < 1)
        throw Error("invalid_params", "environment map needs positive dimensions");
    const std::size_t n = static_cast<std::size_t>(width_) * height_;
    if (radiance_.size() != n * 3)
        throw Error("size_mismatch", "environment radiance length does not match dimensions");
    for (float v : radiance_) {
        if (!std::isfinite(v))
            throw Error("invalid_radiance", "environment radiance must be finite");
        if (v < 0)
            throw Error("negative_radiance", "environment radiance must be non-negative");
    }

    row_weight_.assign(height_, 0.0);
    conditional_cdf_.assign(n, 0.0);
    marginal_cdf_.assign(height_, 0.0);
    for (int row = 0; row < height_; ++row) {
        const double sin_theta = std::sin((row + 0.5) * kPi / height_);
        double acc = 0;
        for (int col = 0; col < width_; ++col) {
            const Rgb c = texel(col, row);
            max_radiance_ = {std::max(max_radiance_.r, c.r), std::max(max_radiance_.g, c.g),
                             std::max(max_radiance_.b, c.b)};
            acc += luminance(c) * sin_theta;
            conditional_cdf_[static_cast<std::size_t>(row) * width_ + col] = acc;
        }
        row_weight_[row] = acc;
        for (int col = 0; col < width_; ++col) {
            double &v = conditional_cdf_[static_cast<std::size_t>(row) * width_ + col];
            v = acc > 0 ? v / acc : static_cast<double>(col + 1) / width_;
        }
        conditional_cdf_[static_cast<std::size_t>(row) * width_ + width_ - 1] = 1.0;
        total_weight_ += acc;
        marginal_cdf_[row] = total_weight_;
    }
    for (int row = 0; row < height_; ++row)
        marginal_cdf_[row] = total_weight_ > 0 ? marginal_cdf_[row] / total_weight_
                                               : static_cast<double>(row + 1) / height_;
    marginal_cdf_.back() = 1.0;
}

Rgb EnvironmentLight::texel(int col, int row) const {
    const float *p = radiance_.data() + (static_cast<std::size_t>(row) * width_ + col) * 3;
    return {p[0], p[1], p[2]};
}

void EnvironmentLight::texel_of(const Vec3 &dir, int &col, int &row) const {
    const double theta = std::acos(std::clamp(dir.z, -1.0, 1.0));
    double phi = std::atan2(dir.y, dir.x);
    if (phi < 0)
        phi += 2 * kPi;
    row = std::min(static_cast<int>(theta / kPi * height_), height_ - 1);
    col = std::min(static_cast<int>(phi / (2 * kPi) * width_), width_ - 1);
}

double EnvironmentLight::texel_solid_angle(int row) const {
    const double theta0 = row * kPi / height_;
    const double theta1 = (row + 1) * kPi / height_;
    return (2 * kPi / width_) * (std::cos(theta0) - std::cos(theta1));
}

double EnvironmentLight::texel_probability(int col, int row) const {
    if (total_weight_ <= 0)
        return 0;
    const double sin_theta = std::sin((row + 0.5) * kPi / height_);
    return luminance(texel(col, row)) * sin_theta / total_weight_;
}

Rgb env_eval(const EnvironmentLight &env, const Vec3 &dir) {
    int col, row;
    env.texel_of(dir, col, row);
    return env.texel(col, row);
}

double env_pdf(const EnvironmentLight &env, const Vec3 &dir) {
    int col, row;
    env.texel_of(dir, col, row);
    return env.texel_probability(col, row) / env.texel_solid_angle(row);
}

namespace {

/// First index whose CDF value exceeds u; `u_remapped` is u's position inside that bin.
std::size_t sample_cdf(std::span<const double> cdf, double u, double &u_remapped) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t i = std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
    const double lo = i == 0 ? 0.0 : cdf[i - 1];
    const double width = cdf[i] - lo;
    u_remapped = width > 0 ? (u - lo) / width : 0.5;
    // Keep the sample strictly inside its texel so eval/pdf lookups agree with the bin.
    u_remapped = std::clamp(u_remapped, 1e-9, 1.0 - 1e-9);
    return i;
}

}  // namespace

EnvSample env_sample(const EnvironmentLight &env, double u1, double u2) {
    if (!(env.total_weight() > 0))
        throw Error("zero_environment", "cannot importance-sample an all-zero environment");
    double v_row, v_col;
    const int row = static_cast<int>(sample_cdf(env.marginal_cdf(), u1, v_row));
    const int col = static_cast<int>(sample_cdf(env.conditional_cdf(row), u2, v_col));

    const double cos0 = std::cos(row * kPi / env.height());
    const double cos1 = std::cos((row + 1) * kPi / env.height());
    const double cos_theta = cos0 - v_row * (cos0 - cos1);
    const double sin_theta = std::sqrt(std::max(0.0, 1 - cos_theta * cos_theta));
    const double phi = (col + v_col) * 2 * kPi / env.width();
    const Vec3 dir{sin_theta * std::cos(phi), sin_theta * std::sin(phi), cos_theta};
    return {dir, env_eval(env, dir), env_pdf(env, dir)};
}

namespace {

Vec3 texel_center_dir(int col, int row, int width, int height) {
    const double theta = (row + 0.5) * kPi / height;
    const double phi = (col + 0.5) * 2 * kPi / width;
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

template <typename F>
EnvironmentLight tabulate(int width, int height, F &&radiance_at) {
    if (width < 1 || height < 1)
        throw Error("invalid_params", "environment map needs positive dimensions");
    std::vector<float> data(static_cast<std::size_t>(width) * height * 3);
    for (int row = 0; row < height; ++row)
        for (int col = 0; col < width; ++col) {
            const Rgb c = radiance_at(texel_center_dir(col, row, width, height));
            float *p = data.data() + (static_cast<std::size_t>(row) * width + col) * 3;
            p[0] = static_cast<float>(c.r);
            p[1] = static_cast<float>(c.g);
            p[2] = static_cast<float>(c.b);
        }
    return EnvironmentLight(width, height, std::move(data));
}

void check_intensity(const Rgb &c) {
    for (int i = 0; i < 3; ++i)
        if (!(c[i] >= 0) || !std::isfinite(c[i]))
            throw Error("invalid_params", "light intensities must be finite and non-negative");
}

}  // namespace

EnvironmentLight make_constant_env(const Rgb &value, int width, int height) {
    check_intensity(value);
    return tabulate(width, height, [&](const Vec3 &) { return value; });
}

EnvironmentLight make_three_point_env(std::span<const Lobe> lobes, int width, int height) {
    if (lobes.size() != 3)
        throw Error("invalid_params", "three-point lighting takes exactly three lobes");
    std::vector<Lobe> unit(lobes.begin(), lobes.end());
    for (auto &l : unit) {
        check_intensity(l.intensity);
        if (!(l.sharpness > 0) || !(length(l.dir) > 0))
            throw Error("invalid_params", "lobes need a direction and positive sharpness");
        l.dir = normalize(l.dir);
    }
    return tabulate(width, height, [&](const Vec3 &d) {
        Rgb sum;
        for (const auto &l : unit)
            sum += l.intensity * std::exp(l.sharpness * (dot(d, l.dir) - 1.0));
        return sum;
    });
}

namespace {

std::array<Lobe, 3> studio_lobes(double intensity) {
    std::array<Lobe, 3> lobes = {{
        {normalize(Vec3{1.0, -1.0, 1.0}), Rgb{8.0, 7.5, 6.8}, 30.0},   // key
        {normalize(Vec3{-1.0, -0.8, 0.3}), Rgb{1.2, 1.4, 1.8}, 8.0},   // fill
        {normalize(Vec3{-0.2, 1.0, 0.5}), Rgb{5.0, 5.0, 5.0}, 60.0},   // rim
    }};
    for (auto &l : lobes)
        l.intensity *= intensity;
    return lobes;
}

}  // namespace

EnvironmentLight make_three_point_env(int width, int height) {
    return make_three_point_env(studio_lobes(1.0), width, height);
}

EnvironmentLight make_sun_sky_env(const SunSkyParams &p, int width, int height) {
    check_intensity(p.zenith);
    check_intensity(p.horizon);
    check_intensity(p.ground);
    if (!(p.sun_intensity >= 0) || !(p.sun_sharpness > 0) || !(length(p.sun_dir) > 0))
        throw Error("invalid_params", "invalid sun parameters");
    const Vec3 sun = normalize(p.sun_dir);
    return tabulate(width, height, [&](const Vec3 &d) {
        Rgb c = d.z >= 0 ? lerp(p.horizon, p.zenith, std::sqrt(d.z)) : p.ground;
        if (p.sun_intensity > 0)
            c += Rgb(p.sun_intensity * std::exp(p.sun_sharpness * (dot(d, sun) - 1.0)));
        return c;
    });
}

EnvironmentLight make_synthetic_env(std::string_view kind, int width, int height,
                                    double intensity) {
    if (!(intensity >= 0) || !std::isfinite(intensity))
        throw Error("invalid_params", "intensity must be finite and non-negative");
    if (kind == "constant")
        return make_constant_env(Rgb(intensity), width, height);
    if (kind == "three-point" || kind == "three_point")
        return make_three_point_env(studio_lobes(intensity), width, height);
    if (kind == "sun-sky" || kind == "sun_sky") {
        SunSkyParams p;
        p.sun_intensity *= intensity;
        p.zenith *= intensity;
        p.horizon *= intensity;
        p.ground *= intensity;
        return make_sun_sky_env(p, width, height);
    }
    throw Error("unknown_kind", "unknown environment kind '" + std::string(kind) + "'");
}

EnvironmentLight load_env(const std::filesystem::path &path) {
    FloatImage img = read_pfm(path);
    return EnvironmentLight(img.width, img.height, std::move(img.rgb));
}

void save_env(const EnvironmentLight &env, const std::filesystem::path &path) {
    const auto data = env.radiance_data();
    write_pfm(FloatImage{env.width(), env.height(), {data.begin(), data.end()}}, path);
}

}  // namespace cinerender
