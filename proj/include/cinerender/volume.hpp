#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "cinerender/math.hpp"

namespace cinerender {

using Dims = std::array<int, 3>;

/// Dense scalar voxel grid, normalized to [0,1], stored x-fastest.
///
/// Voxel (i,j,k) has its center at origin + (i,j,k) * spacing. The bounding
/// box spans the voxel centers, so the extent along axis a is
/// (dims[a] - 1) * spacing[a].
class ScalarVolume {
public:
    ScalarVolume() = default;

    /// Takes already-normalized samples. Throws if an invariant is violated.
    ScalarVolume(Dims dims, Vec3 spacing, Vec3 origin, std::vector<float> data,
                 std::pair<double, double> value_range = {0.0, 1.0});

    /// Normalizes raw samples by their min/max (constant input maps to 0).
    static ScalarVolume from_raw(Dims dims, Vec3 spacing, Vec3 origin, std::span<const double> raw);

    const Dims &dims() const { return dims_; }
    const Vec3 &spacing() const { return spacing_; }
    const Vec3 &origin() const { return origin_; }
    std::span<const float> data() const { return data_; }
    std::pair<double, double> value_range() const { return value_range_; }

    Vec3 extent() const {
        return {(dims_[0] - 1) * spacing_.x, (dims_[1] - 1) * spacing_.y, (dims_[2] - 1) * spacing_.z};
    }
    Vec3 bounds_min() const { return origin_; }
    Vec3 bounds_max() const { return origin_ + extent(); }
    Vec3 center() const { return origin_ + extent() * 0.5; }

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims_[0]) * (static_cast<std::size_t>(j) +
                                                     static_cast<std::size_t>(dims_[1]) * k);
    }
    float at(int i, int j, int k) const { return data_[index(i, j, k)]; }

    bool contains(const WorldPoint &p) const;

    /// Ray parameter interval [t0, t1] inside the bounding box; false on miss.
    bool intersect(const Ray &ray, double &t0, double &t1) const;

private:
    Dims dims_{0, 0, 0};
    Vec3 spacing_{1, 1, 1};
    Vec3 origin_{};
    std::vector<float> data_;
    std::pair<double, double> value_range_{0.0, 1.0};
};

enum class SampleType { u8, u16, f32 };

ScalarVolume load_volume(const std::filesystem::path &descriptor);

/// Writes a descriptor plus an f32 raw file (`<stem>.raw`) next to it.
void save_volume(const ScalarVolume &volume, const std::filesystem::path &descriptor);

/// Writes raw samples of the given type; used to author fixtures.
void save_raw_volume(const std::filesystem::path &descriptor, Dims dims, Vec3 spacing, Vec3 origin,
                     SampleType type, std::span<const double> raw);

/// Trilinear reconstruction; zero outside the bounding box.
double sample_trilinear(const ScalarVolume &v, const WorldPoint &p);

/// Central differences with half-spacing steps, per mm; zero outside bounds.
Vec3 gradient(const ScalarVolume &v, const WorldPoint &p);

enum class SyntheticKind { sphere, ramp, shell, two_spheres };

SyntheticKind parse_synthetic_kind(std::string_view name);

ScalarVolume make_synthetic_volume(SyntheticKind kind, Dims dims, Vec3 spacing,
                                   Vec3 origin = {0, 0, 0});

}  // namespace cinerender
