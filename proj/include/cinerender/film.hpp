#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cinerender/image_io.hpp"
#include "cinerender/integrate.hpp"
#include "cinerender/math.hpp"

namespace cinerender {

/// Thin-lens camera. Distances in mm; shutter in normalized frame time.
struct Camera {
    WorldPoint position{0, -100, 0};
    WorldPoint target{0, 0, 0};
    Vec3 up{0, 0, 1};
    double vfov_deg = 40;
    double aperture_radius = 0;
    double focal_distance = 100;
    double exposure_ev = 0;
    double shutter_open = 0;
    double shutter_close = 0;

    void validate() const;
    bool operator==(const Camera &) const = default;
};

/// Camera framing the volume's bounding box from -y, z up.
Camera default_camera_for(const ScalarVolume &volume, double vfov_deg = 40);

struct CameraSample {
    Ray ray;
    double time = 0;  ///< normalized frame time in [shutter_open, shutter_close]
};

/// Jittered pinhole ray through pixel (px, py) refocused on the focal plane
/// (depth focal_distance along the view axis) from a disk-sampled lens point.
CameraSample generate_ray(const Camera &cam, int width, int height, int px, int py, double lens_u1,
                          double lens_u2, double u_time, double jitter_u1, double jitter_u2);

/// Per-pixel mean of one rendering pass.
struct FramePass {
    int width = 0;
    int height = 0;
    std::uint64_t spp = 0;
    std::vector<Rgb> mean;
};

/// Progressive image: per-pixel running mean over `count` samples.
class AccumulationBuffer {
public:
    AccumulationBuffer() = default;
    AccumulationBuffer(int width, int height);

    int width() const { return width_; }
    int height() const { return height_; }
    std::uint64_t count() const { return count_; }
    std::span<const Rgb> mean() const { return mean_; }
    const Rgb &pixel(int x, int y) const { return mean_[static_cast<std::size_t>(y) * width_ + x]; }

    void accumulate(const FramePass &pass);
    void reset();

    bool operator==(const AccumulationBuffer &) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::uint64_t count_ = 0;
    std::vector<Rgb> mean_;
};

inline void accumulate(AccumulationBuffer &buf, const FramePass &pass) { buf.accumulate(pass); }

/// Scale by 2^exposure_ev, clamp, sRGB encode, round half up. The buffer
/// overload maps the float image written to PFM, so a PNG always equals the
/// tone-mapped PFM of the same buffer.
Image8 tone_map(const FloatImage &img, double exposure_ev);
Image8 tone_map(const AccumulationBuffer &buf, double exposure_ev);
std::uint8_t tone_map_value(double linear, double exposure_ev);

FloatImage to_float_image(const AccumulationBuffer &buf);

struct Keyframe {
    double time = 0;  ///< seconds
    Camera camera;
    std::optional<std::string> tf_id;
    std::optional<std::string> env_id;
};

class AnimationTrack {
public:
    explicit AnimationTrack(std::vector<Keyframe> keyframes);

    const std::vector<Keyframe> &keyframes() const { return keyframes_; }
    double start_time() const { return keyframes_.front().time; }
    double end_time() const { return keyframes_.back().time; }

private:
    std::vector<Keyframe> keyframes_;
};

struct TrackSample {
    Camera camera;
    std::optional<std::string> tf_id;
    std::optional<std::string> env_id;
};

/// Keyframes reproduced exactly; position and scalars interpolate linearly,
/// orientation by quaternion slerp; clamped outside the track's time range.
/// Scene-state references hold the most recent keyframe's values.
TrackSample interpolate_track(const AnimationTrack &track, double t);

enum class Integrator { pathtrace, raycast };

struct RenderSettings {
    int width = 64;
    int height = 64;
    int spp = 1;
    std::uint64_t seed = 0;
    std::uint64_t frame_index = 0;
    std::uint64_t sample_offset = 0;  ///< first sample index; passes of one frame use disjoint ranges
    int threads = 0;                  ///< 0 = hardware concurrency
    Integrator integrator = Integrator::pathtrace;
};

/// Attach to sample the camera along a track for motion blur: the camera at
/// sample time s is interpolate_track(track, frame_time + s * frame_duration).
struct CameraMotion {
    const AnimationTrack *track = nullptr;
    double frame_time = 0;
    double frame_duration = 0;
};

FramePass render_pass(const Scene &scene, const Camera &cam, const PathTracerConfig &cfg,
                      const RenderSettings &settings, const CameraMotion *motion = nullptr);

AccumulationBuffer render_frame(const Scene &scene, const Camera &cam, const PathTracerConfig &cfg,
                                const RenderSettings &settings,
                                const CameraMotion *motion = nullptr);

}  // namespace cinerender
