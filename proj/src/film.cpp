#include "cinerender/film.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <Eigen/Geometry>

#include "cinerender/error.hpp"

namespace cinerender {

void Camera::validate() const {
    if (!is_finite(position) || !is_finite(target) || !is_finite(up))
        throw Error("invalid_camera", "camera vectors must be finite");
    if (position == target)
        throw Error("invalid_camera", "camera position and target coincide");
    if (!(vfov_deg > 0 && vfov_deg < 180))
        throw Error("invalid_camera", "vfov_deg must lie in (0, 180)");
    if (!(aperture_radius >= 0))
        throw Error("invalid_camera", "aperture_radius must be >= 0");
    if (!(focal_distance > 0))
        throw Error("invalid_camera", "focal_distance must be > 0");
    if (!std::isfinite(exposure_ev))
        throw Error("invalid_camera", "exposure_ev must be finite");
    if (!(shutter_open >= 0 && shutter_open <= shutter_close && shutter_close <= 1))
        throw Error("invalid_camera", "shutter must satisfy 0 <= open <= close <= 1");
    if (length(cross(target - position, up)) <= 0)
        throw Error("invalid_camera", "up vector is parallel to the view direction");
}

Camera default_camera_for(const ScalarVolume &volume, double vfov_deg) {
    const Vec3 center = volume.center();
    const double radius = 0.5 * length(volume.extent());
    const double distance = 1.1 * radius / std::sin(0.5 * vfov_deg * kPi / 180);
    Camera cam;
    cam.target = center;
    cam.position = center - Vec3{0, distance, 0};
    cam.up = {0, 0, 1};
    cam.vfov_deg = vfov_deg;
    cam.focal_distance = distance;
    return cam;
}

namespace {

struct CameraBasis {
    Vec3 forward, right, up;
};

CameraBasis basis_of(const Camera &cam) {
    CameraBasis b;
    b.forward = normalize(cam.target - cam.position);
    b.right = normalize(cross(b.forward, cam.up));
    b.up = cross(b.right, b.forward);
    return b;
}

}  // namespace

CameraSample generate_ray(const Camera &cam, int width, int height, int px, int py, double lens_u1,
                          double lens_u2, double u_time, double jitter_u1, double jitter_u2) {
    const CameraBasis b = basis_of(cam);
    const double tan_half = std::tan(0.5 * cam.vfov_deg * kPi / 180);
    const double aspect = static_cast<double>(width) / height;
    const double sx = (2 * (px + jitter_u1) / width - 1) * tan_half * aspect;
    const double sy = (1 - 2 * (py + jitter_u2) / height) * tan_half;
    const Vec3 pinhole_dir = normalize(b.forward + b.right * sx + b.up * sy);

    CameraSample out;
    out.time = cam.shutter_open + u_time * (cam.shutter_close - cam.shutter_open);
    if (cam.aperture_radius <= 0) {
        out.ray = {cam.position, pinhole_dir};
        return out;
    }
    const WorldPoint focus =
        cam.position + pinhole_dir * (cam.focal_distance / dot(pinhole_dir, b.forward));
    double dx, dy;
    square_to_disk(lens_u1, lens_u2, dx, dy);
    const WorldPoint lens =
        cam.position + (b.right * dx + b.up * dy) * cam.aperture_radius;
    out.ray = {lens, normalize(focus - lens)};
    return out;
}

AccumulationBuffer::AccumulationBuffer(int width, int height)
    : width_(width), height_(height),
      mean_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0)) {
    if (width < 1 || height < 1)
        throw Error("invalid_dimensions", "image dimensions must be positive");
}

void AccumulationBuffer::accumulate(const FramePass &pass) {
    if (pass.width != width_ || pass.height != height_ || pass.mean.size() != mean_.size())
        throw Error("dimension_mismatch", "pass dimensions do not match the accumulation buffer");
    if (pass.spp == 0)
        return;
    const std::uint64_t total = count_ + pass.spp;
    const double w = static_cast<double>(pass.spp) / static_cast<double>(total);
    for (std::size_t i = 0; i < mean_.size(); ++i)
        mean_[i] += (pass.mean[i] - mean_[i]) * w;
    count_ = total;
}

void AccumulationBuffer::reset() {
    std::fill(mean_.begin(), mean_.end(), Rgb{});
    count_ = 0;
}

std::uint8_t tone_map_value(double linear, double exposure_ev) {
    double v = linear * std::exp2(exposure_ev);
    v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
    const double s = v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
    return static_cast<std::uint8_t>(std::min(255.0, std::floor(s * 255.0 + 0.5)));
}

Image8 tone_map(const FloatImage &img, double exposure_ev) {
    Image8 out{img.width, img.height, {}};
    out.rgb.reserve(img.rgb.size());
    for (float v : img.rgb)
        out.rgb.push_back(tone_map_value(v, exposure_ev));
    return out;
}

Image8 tone_map(const AccumulationBuffer &buf, double exposure_ev) {
    return tone_map(to_float_image(buf), exposure_ev);
}

FloatImage to_float_image(const AccumulationBuffer &buf) {
    FloatImage img{buf.width(), buf.height(), {}};
    img.rgb.reserve(buf.mean().size() * 3);
    for (const Rgb &c : buf.mean())
        for (int ch = 0; ch < 3; ++ch)
            img.rgb.push_back(static_cast<float>(c[ch]));
    return img;
}

AnimationTrack::AnimationTrack(std::vector<Keyframe> keyframes) : keyframes_(std::move(keyframes)) {
    if (keyframes_.empty())
        throw Error("invalid_track", "a track needs at least one keyframe");
    for (std::size_t i = 0; i < keyframes_.size(); ++i) {
        if (!(keyframes_[i].time >= 0) || !std::isfinite(keyframes_[i].time))
            throw Error("invalid_track", "keyframe times must be finite and >= 0");
        if (i > 0 && !(keyframes_[i].time > keyframes_[i - 1].time))
            throw Error("invalid_track", "keyframe times must be strictly increasing");
        keyframes_[i].camera.validate();
    }
}

namespace {

Eigen::Quaterniond orientation_of(const Camera &cam) {
    const CameraBasis b = basis_of(cam);
    Eigen::Matrix3d m;
    m.col(0) = Eigen::Vector3d(b.right.x, b.right.y, b.right.z);
    m.col(1) = Eigen::Vector3d(b.up.x, b.up.y, b.up.z);
    m.col(2) = Eigen::Vector3d(-b.forward.x, -b.forward.y, -b.forward.z);
    return Eigen::Quaterniond(m).normalized();
}

TrackSample sample_of(const Keyframe &k) { return {k.camera, k.tf_id, k.env_id}; }

}  // namespace

TrackSample interpolate_track(const AnimationTrack &track, double t) {
    const auto &keys = track.keyframes();
    if (!(t > keys.front().time))
        return sample_of(keys.front());
    if (!(t < keys.back().time))
        return sample_of(keys.back());

    const auto next = std::upper_bound(keys.begin(), keys.end(), t,
                                       [](double v, const Keyframe &k) { return v < k.time; });
    const Keyframe &b = *next;
    const Keyframe &a = *(next - 1);
    if (t == a.time || a.camera == b.camera) {
        TrackSample s = sample_of(a);
        return s;
    }
    const double alpha = (t - a.time) / (b.time - a.time);
    const Camera &ca = a.camera;
    const Camera &cb = b.camera;

    const Eigen::Matrix3d rot =
        orientation_of(ca).slerp(alpha, orientation_of(cb)).toRotationMatrix();
    const Vec3 up{rot(0, 1), rot(1, 1), rot(2, 1)};
    const Vec3 forward{-rot(0, 2), -rot(1, 2), -rot(2, 2)};

    TrackSample out;
    out.tf_id = a.tf_id;
    out.env_id = a.env_id;
    Camera &c = out.camera;
    c.position = lerp(ca.position, cb.position, alpha);
    const double distance =
        lerp(length(ca.target - ca.position), length(cb.target - cb.position), alpha);
    c.target = c.position + forward * distance;
    c.up = up;
    c.vfov_deg = lerp(ca.vfov_deg, cb.vfov_deg, alpha);
    c.aperture_radius = lerp(ca.aperture_radius, cb.aperture_radius, alpha);
    c.focal_distance = lerp(ca.focal_distance, cb.focal_distance, alpha);
    c.exposure_ev = lerp(ca.exposure_ev, cb.exposure_ev, alpha);
    c.shutter_open = lerp(ca.shutter_open, cb.shutter_open, alpha);
    c.shutter_close = lerp(ca.shutter_close, cb.shutter_close, alpha);
    return out;
}

namespace {

Rgb pairwise_sum(std::span<const Rgb> v) {
    if (v.size() <= 8) {
        Rgb s;
        for (const Rgb &c : v)
            s += c;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace

FramePass render_pass(const Scene &scene, const Camera &cam, const PathTracerConfig &cfg,
                      const RenderSettings &s, const CameraMotion *motion) {
    if (s.width < 1 || s.height < 1)
        throw Error("invalid_dimensions", "image dimensions must be positive");
    if (s.spp < 1)
        throw Error("invalid_spp", "spp must be >= 1");
    cam.validate();
    cfg.validate();

    FramePass pass{s.width, s.height, static_cast<std::uint64_t>(s.spp),
                   std::vector<Rgb>(static_cast<std::size_t>(s.width) * s.height)};
    std::atomic<int> next_row{0};

    auto worker = [&]() {
        std::vector<Rgb> samples(s.spp);
        for (int y = next_row++; y < s.height; y = next_row++) {
            for (int x = 0; x < s.width; ++x) {
                const std::uint64_t pixel = static_cast<std::uint64_t>(y) * s.width + x;
                for (int i = 0; i < s.spp; ++i) {
                    Rng rng(s.seed, s.frame_index, pixel, s.sample_offset + i);
                    const double jx = rng.next(), jy = rng.next();
                    const double l1 = rng.next(), l2 = rng.next();
                    const double ut = rng.next();
                    CameraSample cs = generate_ray(cam, s.width, s.height, x, y, l1, l2, ut, jx, jy);
                    if (motion && motion->track) {
                        const Camera moved =
                            interpolate_track(*motion->track,
                                              motion->frame_time + cs.time * motion->frame_duration)
                                .camera;
                        cs = generate_ray(moved, s.width, s.height, x, y, l1, l2, ut, jx, jy);
                    }
                    samples[i] = s.integrator == Integrator::raycast
                                     ? ray_cast(scene, cs.ray, cfg)
                                     : path_trace_sample(scene, cs.ray, cfg, rng);
                }
                pass.mean[pixel] = pairwise_sum(samples) / static_cast<double>(s.spp);
            }
        }
    };

    int threads = s.threads > 0 ? s.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, s.height);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < threads; ++i)
            pool.emplace_back(worker);
    }
    return pass;
}

AccumulationBuffer render_frame(const Scene &scene, const Camera &cam, const PathTracerConfig &cfg,
                                const RenderSettings &settings, const CameraMotion *motion) {
    AccumulationBuffer buf(settings.width, settings.height);
    buf.accumulate(render_pass(scene, cam, cfg, settings, motion));
    return buf;
}

}  // namespace cinerender
