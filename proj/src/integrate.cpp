#include "cinerender/integrate.hpp"

#include <limits>
#include <string>

#include "cinerender/error.hpp"

namespace cinerender {

void PathTracerConfig::validate() const {
    if (max_bounces < 1)
        throw Error("invalid_config", "max_bounces must be >= 1");
    if (rr_start_bounce < 1 || rr_start_bounce > max_bounces)
        throw Error("invalid_config", "rr_start_bounce must lie in [1, max_bounces]");
    if (!(rr_min_survival > 0 && rr_min_survival <= 1))
        throw Error("invalid_config", "rr_min_survival must lie in (0, 1]");
    if (step_count_raycast < 16)
        throw Error("invalid_config", "step_count_raycast must be >= 16");
}

double estimate_majorant(const ScalarVolume &volume, const TransferFunction &tf,
                         double density_scale) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    double best = 0;
    for (float s : volume.data()) {
        lo = std::min(lo, static_cast<double>(s));
        hi = std::max(hi, static_cast<double>(s));
        best = std::max(best, tf.classify(s).sigma_t());
    }
    for (const auto &p : tf.points())
        if (p.value >= lo && p.value <= hi)
            best = std::max(best, p.props.sigma_t());
    return density_scale * best;
}

Scene::Scene(std::shared_ptr<const ScalarVolume> volume, TransferFunction tf,
             std::shared_ptr<const EnvironmentLight> env, std::optional<EmissionOverlay> overlay,
             double density_scale, std::optional<double> majorant)
    : volume_(std::move(volume)), tf_(std::move(tf)), env_(std::move(env)),
      overlay_(std::move(overlay)), density_scale_(density_scale) {
    if (!volume_ || !env_)
        throw Error("invalid_scene", "scene needs a volume and an environment");
    if (!(density_scale_ > 0) || !std::isfinite(density_scale_))
        throw Error("invalid_scene", "density_scale must be positive");
    const double bound = estimate_majorant(*volume_, tf_, density_scale_);
    if (majorant) {
        if (!(*majorant >= bound) || !std::isfinite(*majorant))
            throw Error("invalid_majorant", "majorant " + std::to_string(*majorant) +
                                                " is below the extinction bound " +
                                                std::to_string(bound));
        majorant_ = *majorant;
    } else {
        majorant_ = bound;
    }

    double best = -1;
    for (int row = 0; row < env_->height(); ++row)
        for (int col = 0; col < env_->width(); ++col) {
            const Rgb c = env_->texel(col, row);
            if (luminance(c) > best) {
                best = luminance(c);
                key_radiance_ = c;
                const double theta = (row + 0.5) * kPi / env_->height();
                const double phi = (col + 0.5) * 2 * kPi / env_->width();
                key_dir_ = {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                            std::cos(theta)};
            }
        }
}

OpticalProperties Scene::properties_at(const WorldPoint &p) const {
    OpticalProperties props = tf_.classify(sample_trilinear(*volume_, p));
    props.sigma_s *= density_scale_;
    props.sigma_a *= density_scale_;
    return props;
}

Rgb Scene::emission_at(const WorldPoint &p, const OpticalProperties &props) const {
    if (!overlay_)
        return props.q_e;
    return props.q_e + cinerender::emission_at(*overlay_, p);
}

namespace {

Vec3 face_forward(const Vec3 &n, const Vec3 &w) { return dot(n, w) < 0 ? -n : n; }

}  // namespace

Rgb ray_cast(const Scene &scene, const Ray &ray, const PathTracerConfig &cfg) {
    double t0, t1;
    if (!scene.volume().intersect(ray, t0, t1) || t1 <= t0)
        return env_eval(scene.env(), ray.dir);

    const int steps = cfg.step_count_raycast;
    const double dt = (t1 - t0) / steps;
    const Vec3 wo = -ray.dir;
    const Vec3 light = scene.key_light_dir();
    const Vec3 half = normalize(light + wo);
    const bool shade = cfg.raycast_shading && !scene.key_light_radiance().is_black();

    Rgb radiance;
    double transmittance = 1.0;
    for (int i = 0; i < steps; ++i) {
        const WorldPoint p = ray.at(t0 + (i + 0.5) * dt);
        const OpticalProperties props = scene.properties_at(p);
        Rgb source = scene.emission_at(p, props);
        if (shade && props.sigma_s > 0) {
            const Vec3 grad = gradient(scene.volume(), p);
            const double mag = length(grad);
            double lit = kInv4Pi;
            if (mag > 1e-8) {
                const Vec3 n = face_forward(grad / mag, wo);
                lit = 0.8 * std::max(0.0, dot(n, light)) +
                      0.2 * std::pow(std::max(0.0, dot(n, half)), 32.0);
            }
            source += props.albedo * scene.key_light_radiance() * (props.sigma_s * lit);
        }
        radiance += source * (transmittance * dt);
        transmittance *= std::exp(-props.sigma_a * dt);
    }
    return radiance + env_eval(scene.env(), ray.dir) * transmittance;
}

FreeFlight sample_free_flight(const Scene &scene, const Ray &ray, double t_max, Rng &rng) {
    FreeFlight out;
    const double majorant = scene.majorant();
    double t0, t1;
    if (majorant <= 0 || !scene.volume().intersect(ray, t0, t1))
        return out;
    t1 = std::min(t1, t_max);
    double t = t0;
    while (true) {
        t -= std::log(1.0 - rng.next()) / majorant;
        if (t >= t1)
            return out;
        const WorldPoint p = ray.at(t);
        const OpticalProperties props = scene.properties_at(p);
        if (rng.next() * majorant < props.sigma_t()) {
            out.collided = true;
            out.t = t;
            out.position = p;
            out.props = props;
            return out;
        }
    }
}

double estimate_transmittance(const Scene &scene, const Ray &ray, double t_max, Rng &rng) {
    const double majorant = scene.majorant();
    double t0, t1;
    if (majorant <= 0 || !scene.volume().intersect(ray, t0, t1))
        return 1.0;
    t1 = std::min(t1, t_max);
    double t = t0, tr = 1.0;
    while (true) {
        t -= std::log(1.0 - rng.next()) / majorant;
        if (t >= t1)
            return tr;
        tr *= 1.0 - scene.properties_at(ray.at(t)).sigma_t() / majorant;
        if (tr <= 0)
            return 0.0;
    }
}

Rgb path_trace_sample(const Scene &scene, const Ray &camera_ray, const PathTracerConfig &cfg,
                      Rng &rng, PathStats *stats) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const EnvironmentLight &env = scene.env();
    const bool nee = cfg.use_nee && env.total_weight() > 0;
    const double roughness = scene.tf().surface_roughness();

    Rgb radiance, throughput(1.0);
    Ray ray = camera_ray;
    double last_dir_pdf = 0;  // density of the lobe that produced `ray`; 0 for camera rays
    int bounce = 0;
    if (stats)
        *stats = PathStats{0, 1.0};

    while (true) {
        const FreeFlight ff = sample_free_flight(scene, ray, kInf, rng);
        if (!ff.collided) {
            double weight = 1.0;
            if (nee && last_dir_pdf > 0) {
                const double light_pdf = env_pdf(env, ray.dir);
                weight = last_dir_pdf / (last_dir_pdf + light_pdf);
            }
            radiance += throughput * env_eval(env, ray.dir) * weight;
            break;
        }

        const OpticalProperties &props = ff.props;
        const double sigma_t = props.sigma_t();
        const Rgb emitted = scene.emission_at(ff.position, props);
        if (!emitted.is_black())
            radiance += throughput * emitted / sigma_t;

        if (rng.next() * sigma_t >= props.sigma_s)
            break;  // absorbed
        if (++bounce > cfg.max_bounces)
            break;
        throughput *= props.albedo;

        const Vec3 wo = -ray.dir;
        bool surface = false;
        Vec3 normal;
        if (scene.tf().surface_gradient_threshold() > 0) {
            const Vec3 grad = gradient(scene.volume(), ff.position);
            const double grad_mag = length(grad);
            surface = grad_mag > 0 && rng.next() < scene.tf().surface_probability(grad_mag);
            if (surface)
                normal = face_forward(grad / grad_mag, wo);
        }

        if (nee) {
            const EnvSample ls = env_sample(env, rng.next(), rng.next());
            double f = 0, lobe_pdf = 0;
            if (surface) {
                f = eval_brdf(normal, ls.dir, wo, Rgb(1.0), roughness).r * dot(normal, ls.dir);
                lobe_pdf = brdf_pdf(normal, ls.dir, wo, roughness);
            } else {
                f = lobe_pdf = hg_phase(props.g, dot(ray.dir, ls.dir));
            }
            if (f > 0 && ls.pdf > 0) {
                const double tr = estimate_transmittance(scene, Ray{ff.position, ls.dir}, kInf, rng);
                const double weight = ls.pdf / (ls.pdf + lobe_pdf);
                radiance += throughput * ls.radiance * (f * tr * weight / ls.pdf);
            }
        }

        DirectionSample ds;
        if (surface) {
            const double u0 = rng.next(), u1 = rng.next(), u2 = rng.next();
            ds = sample_brdf(normal, wo, roughness, u0, u1, u2);
            if (ds.pdf <= 0)
                break;
            const double f = eval_brdf(normal, ds.dir, wo, Rgb(1.0), roughness).r *
                             dot(normal, ds.dir);
            throughput *= f / ds.pdf;
        } else {
            const double u1 = rng.next(), u2 = rng.next();
            ds = sample_hg(props.g, ray.dir, u1, u2);
        }
        last_dir_pdf = ds.pdf;
        ray = Ray{ff.position, ds.dir};

        if (bounce >= cfg.rr_start_bounce) {
            // Survival by the largest channel keeps throughput <= 1 for chromatic albedo.
            const double q = std::min(1.0, std::max(cfg.rr_min_survival, throughput.max_component()));
            if (rng.next() >= q)
                break;
            throughput = throughput / q;
        }
        if (stats) {
            stats->bounces = bounce;
            stats->max_throughput = std::max(stats->max_throughput, throughput.max_component());
        }
    }
    return radiance;
}

}  // namespace cinerender
