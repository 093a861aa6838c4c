#include "cinerender/optics.hpp"

#include <string>

#include "cinerender/error.hpp"

namespace cinerender {

namespace {

constexpr double kMaxAnisotropy = 1.0 - 1e-6;

void validate_props(const OpticalProperties &p) {
    if (!(p.sigma_s >= 0) || !(p.sigma_a >= 0) || !std::isfinite(p.sigma_s) ||
        !std::isfinite(p.sigma_a))
        throw Error("invalid_transfer_function", "coefficients must be finite and non-negative");
    if (!(p.g > -1 && p.g < 1))
        throw Error("invalid_transfer_function", "anisotropy g must lie in (-1, 1)");
    for (int c = 0; c < 3; ++c) {
        if (!(p.albedo[c] >= 0 && p.albedo[c] <= 1))
            throw Error("invalid_transfer_function", "albedo channels must lie in [0, 1]");
        if (!(p.q_e[c] >= 0) || !std::isfinite(p.q_e[c]))
            throw Error("invalid_transfer_function", "emission must be finite and non-negative");
    }
}

template <typename Point>
std::size_t bracket(const std::vector<Point> &pts, double s) {
    // Index i such that pts[i].value <= s <= pts[i+1].value.
    std::size_t lo = 0, hi = pts.size() - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (pts[mid].value <= s)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

template <typename Point>
void validate_knots(const std::vector<Point> &pts, const char *code) {
    if (pts.size() < 2)
        throw Error(code, "at least two control points are required");
    if (pts.front().value != 0.0 || pts.back().value != 1.0)
        throw Error(code, "control points must start at 0 and end at 1");
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (!(pts[i].value > pts[i - 1].value))
            throw Error(code, "control point values must be strictly increasing");
}

}  // namespace

TransferFunction::TransferFunction(std::vector<ControlPoint> points,
                                   double surface_gradient_threshold, double surface_roughness)
    : points_(std::move(points)), surface_gradient_threshold_(surface_gradient_threshold),
      surface_roughness_(surface_roughness) {
    validate_knots(points_, "invalid_transfer_function");
    for (const auto &p : points_)
        validate_props(p.props);
    if (!(surface_gradient_threshold_ >= 0) || !std::isfinite(surface_gradient_threshold_))
        throw Error("invalid_transfer_function", "surface_gradient_threshold must be >= 0");
    if (!(surface_roughness_ > 0 && surface_roughness_ <= 1))
        throw Error("invalid_transfer_function", "surface_roughness must lie in (0, 1]");
}

TransferFunction TransferFunction::constant(const OpticalProperties &props,
                                            double surface_gradient_threshold,
                                            double surface_roughness) {
    return TransferFunction({{0.0, props}, {1.0, props}}, surface_gradient_threshold,
                            surface_roughness);
}

OpticalProperties TransferFunction::classify(double s) const {
    s = std::clamp(s, 0.0, 1.0);
    const std::size_t i = bracket(points_, s);
    const ControlPoint &a = points_[i];
    const ControlPoint &b = points_[i + 1];
    if (s == a.value)
        return a.props;
    if (s == b.value)
        return b.props;
    const double t = (s - a.value) / (b.value - a.value);
    OpticalProperties out;
    out.sigma_s = lerp(a.props.sigma_s, b.props.sigma_s, t);
    out.sigma_a = lerp(a.props.sigma_a, b.props.sigma_a, t);
    out.albedo = lerp(a.props.albedo, b.props.albedo, t);
    out.g = std::clamp(lerp(a.props.g, b.props.g, t), -kMaxAnisotropy, kMaxAnisotropy);
    out.q_e = lerp(a.props.q_e, b.props.q_e, t);
    return out;
}

double TransferFunction::surface_probability(double grad_mag) const {
    if (surface_gradient_threshold_ <= 0)
        return 0.0;
    return std::min(1.0, grad_mag / surface_gradient_threshold_);
}

double hg_phase(double g, double cos_theta) {
    const double denom = 1 + g * g - 2 * g * cos_theta;
    return kInv4Pi * (1 - g * g) / (denom * std::sqrt(denom));
}

DirectionSample sample_hg(double g, const Vec3 &incoming, double u1, double u2) {
    double cos_theta;
    if (std::abs(g) < 1e-3) {
        cos_theta = 1 - 2 * u1;
    } else {
        const double sqr = (1 - g * g) / (1 + g - 2 * g * u1);
        cos_theta = (1 + g * g - sqr * sqr) / (2 * g);
    }
    cos_theta = std::clamp(cos_theta, -1.0, 1.0);
    const double sin_theta = std::sqrt(std::max(0.0, 1 - cos_theta * cos_theta));
    const double phi = 2 * kPi * u2;
    const Frame frame(incoming);
    const Vec3 local{sin_theta * std::cos(phi), sin_theta * std::sin(phi), cos_theta};
    return {normalize(frame.to_world(local)), hg_phase(g, cos_theta)};
}

namespace {

double glossy_exponent(double roughness) { return 2.0 / (roughness * roughness) - 2.0; }

Vec3 reflect(const Vec3 &w, const Vec3 &n) { return n * (2 * dot(n, w)) - w; }

}  // namespace

Rgb eval_brdf(const Vec3 &normal, const Vec3 &wi, const Vec3 &wo, const Rgb &albedo,
              double roughness) {
    if (dot(normal, wi) <= 0 || dot(normal, wo) <= 0)
        return {};
    const double ks = 1.0 - roughness;
    double value = (1.0 - ks) * kInvPi;
    if (ks > 0) {
        const double exponent = glossy_exponent(roughness);
        const double cos_alpha = dot(reflect(wo, normal), wi);
        if (cos_alpha > 0)
            value += ks * (exponent + 1) / (2 * kPi) * std::pow(cos_alpha, exponent);
    }
    return albedo * value;
}

double brdf_pdf(const Vec3 &normal, const Vec3 &wi, const Vec3 &wo, double roughness) {
    const double ks = 1.0 - roughness;
    double pdf = (1.0 - ks) * std::max(0.0, dot(normal, wi)) * kInvPi;
    if (ks > 0) {
        const double exponent = glossy_exponent(roughness);
        const double cos_alpha = dot(reflect(wo, normal), wi);
        if (cos_alpha > 0)
            pdf += ks * (exponent + 1) / (2 * kPi) * std::pow(cos_alpha, exponent);
    }
    return pdf;
}

DirectionSample sample_brdf(const Vec3 &normal, const Vec3 &wo, double roughness, double u0,
                            double u1, double u2) {
    const double ks = 1.0 - roughness;
    Vec3 wi;
    if (u0 < ks) {
        const double exponent = glossy_exponent(roughness);
        const double cos_alpha = std::pow(1 - u1, 1.0 / (exponent + 1));
        const double sin_alpha = std::sqrt(std::max(0.0, 1 - cos_alpha * cos_alpha));
        const double phi = 2 * kPi * u2;
        const Frame frame(reflect(wo, normal));
        wi = frame.to_world({sin_alpha * std::cos(phi), sin_alpha * std::sin(phi), cos_alpha});
    } else {
        double dx, dy;
        square_to_disk(u1, u2, dx, dy);
        const double z = std::sqrt(std::max(0.0, 1 - dx * dx - dy * dy));
        wi = Frame(normal).to_world({dx, dy, z});
    }
    wi = normalize(wi);
    if (dot(normal, wi) <= 0)
        return {wi, 0.0};
    return {wi, brdf_pdf(normal, wi, wo, roughness)};
}

EmissionOverlay::EmissionOverlay(std::shared_ptr<const ScalarVolume> volume,
                                 std::vector<ColormapPoint> colormap, double strength)
    : volume_(std::move(volume)), colormap_(std::move(colormap)), strength_(strength) {
    if (!volume_)
        throw Error("invalid_overlay", "overlay needs a volume");
    validate_knots(colormap_, "invalid_overlay");
    for (const auto &p : colormap_)
        for (int c = 0; c < 3; ++c)
            if (!(p.rgb[c] >= 0) || !std::isfinite(p.rgb[c]))
                throw Error("invalid_overlay", "colormap emission must be finite and >= 0");
    if (!(strength_ >= 0) || !std::isfinite(strength_))
        throw Error("invalid_overlay", "overlay strength must be >= 0");
}

Rgb EmissionOverlay::colormap_at(double s) const {
    s = std::clamp(s, 0.0, 1.0);
    const std::size_t i = bracket(colormap_, s);
    const ColormapPoint &a = colormap_[i];
    const ColormapPoint &b = colormap_[i + 1];
    return lerp(a.rgb, b.rgb, (s - a.value) / (b.value - a.value));
}

Rgb emission_at(const EmissionOverlay &overlay, const WorldPoint &p) {
    if (!overlay.volume().contains(p))
        return {};
    return overlay.colormap_at(sample_trilinear(overlay.volume(), p)) * overlay.strength();
}

}  // namespace cinerender
