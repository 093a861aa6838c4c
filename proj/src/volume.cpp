#include "cinerender/volume.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cinerender/error.hpp"

namespace cinerender {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "raw volume I/O assumes a little-endian host");

ScalarVolume::ScalarVolume(Dims dims, Vec3 spacing, Vec3 origin, std::vector<float> data,
                           std::pair<double, double> value_range)
    : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)),
      value_range_(value_range) {
    for (int a = 0; a < 3; ++a) {
        if (dims_[a] < 2)
            throw Error("invalid_dims", "volume needs at least 2 voxels per axis");
        if (!(spacing_[a] > 0) || !std::isfinite(spacing_[a]))
            throw Error("invalid_spacing", "volume spacing must be positive");
    }
    if (!is_finite(origin_))
        throw Error("invalid_origin", "volume origin must be finite");
    const std::size_t n = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    if (data_.size() != n)
        throw Error("size_mismatch", "volume data length " + std::to_string(data_.size()) +
                                         " does not match dims (" + std::to_string(n) + ")");
    for (float s : data_)
        if (!(s >= 0.0f && s <= 1.0f))
            throw Error("invalid_data", "normalized volume samples must lie in [0,1]");
}

ScalarVolume ScalarVolume::from_raw(Dims dims, Vec3 spacing, Vec3 origin,
                                    std::span<const double> raw) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double r : raw) {
        if (!std::isfinite(r))
            throw Error("invalid_data", "raw volume contains non-finite samples");
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    if (raw.empty())
        lo = hi = 0;
    std::vector<float> data(raw.size(), 0.0f);
    if (hi > lo) {
        const double scale = hi - lo;
        for (std::size_t i = 0; i < raw.size(); ++i)
            data[i] = static_cast<float>((raw[i] - lo) / scale);
    }
    return ScalarVolume(dims, spacing, origin, std::move(data), {lo, hi});
}

bool ScalarVolume::contains(const WorldPoint &p) const {
    const Vec3 hi = bounds_max();
    for (int a = 0; a < 3; ++a)
        if (!(p[a] >= origin_[a] && p[a] <= hi[a]))
            return false;
    return true;
}

bool ScalarVolume::intersect(const Ray &ray, double &t0, double &t1) const {
    const Vec3 lo = bounds_min(), hi = bounds_max();
    double near = 0.0, far = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a], d = ray.dir[a];
        if (d == 0.0) {
            if (o < lo[a] || o > hi[a])
                return false;
            continue;
        }
        double ta = (lo[a] - o) / d, tb = (hi[a] - o) / d;
        if (ta > tb)
            std::swap(ta, tb);
        near = std::max(near, ta);
        far = std::min(far, tb);
        if (near > far)
            return false;
    }
    t0 = near;
    t1 = far;
    return true;
}

namespace {

int bytes_per_sample(SampleType t) {
    switch (t) {
    case SampleType::u8: return 1;
    case SampleType::u16: return 2;
    case SampleType::f32: return 4;
    }
    return 0;
}

SampleType parse_dtype(const std::string &s) {
    if (s == "u8") return SampleType::u8;
    if (s == "u16") return SampleType::u16;
    if (s == "f32") return SampleType::f32;
    throw Error("unsupported_dtype", "unsupported sample type '" + s + "'");
}

const char *dtype_name(SampleType t) {
    switch (t) {
    case SampleType::u8: return "u8";
    case SampleType::u16: return "u16";
    case SampleType::f32: return "f32";
    }
    return "?";
}

template <typename T, std::size_t N>
std::array<T, N> read_array(const json &j, const char *key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != N)
        throw Error("malformed_descriptor", std::string("descriptor field '") + key +
                                                "' must be an array of " + std::to_string(N));
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i)
        out[i] = j[key][i].get<T>();
    return out;
}

Vec3 to_vec(const std::array<double, 3> &a) { return {a[0], a[1], a[2]}; }

std::vector<char> read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("file_not_found", "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_descriptor(const fs::path &descriptor, Dims dims, Vec3 spacing, Vec3 origin,
                      SampleType type, const std::string &data_file, const json &extra) {
    json j = {
        {"dims", {dims[0], dims[1], dims[2]}},
        {"spacing_mm", {spacing.x, spacing.y, spacing.z}},
        {"origin_mm", {origin.x, origin.y, origin.z}},
        {"dtype", dtype_name(type)},
        {"endianness", "little"},
        {"data_file", data_file},
    };
    for (auto it = extra.begin(); it != extra.end(); ++it)
        j[it.key()] = it.value();
    std::ofstream out(descriptor);
    if (!out)
        throw Error("io_error", "cannot write '" + descriptor.string() + "'");
    out << j.dump(2) << '\n';
}

void write_bytes(const fs::path &path, const void *bytes, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("io_error", "cannot write '" + path.string() + "'");
    out.write(static_cast<const char *>(bytes), static_cast<std::streamsize>(n));
}

}  // namespace

ScalarVolume load_volume(const fs::path &descriptor) {
    const std::vector<char> text = read_file(descriptor);
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::exception &e) {
        throw Error("malformed_descriptor", std::string("volume descriptor: ") + e.what());
    }
    Dims dims;
    Vec3 spacing, origin;
    SampleType type;
    fs::path data_path;
    try {
        dims = read_array<int, 3>(j, "dims");
        spacing = to_vec(read_array<double, 3>(j, "spacing_mm"));
        origin = j.contains("origin_mm") ? to_vec(read_array<double, 3>(j, "origin_mm")) : Vec3{};
        type = parse_dtype(j.at("dtype").get<std::string>());
        if (j.value("endianness", std::string("little")) != "little")
            throw Error("unsupported_endianness", "only little-endian raw data is supported");
        data_path = descriptor.parent_path() / j.at("data_file").get<std::string>();
    } catch (const json::exception &e) {
        throw Error("malformed_descriptor", std::string("volume descriptor: ") + e.what());
    }
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2)
            throw Error("invalid_dims", "volume needs at least 2 voxels per axis");
        if (!(spacing[a] > 0))
            throw Error("invalid_spacing", "volume spacing must be positive");
    }

    const std::vector<char> bytes = read_file(data_path);
    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    const std::size_t bps = bytes_per_sample(type);
    if (bytes.size() != n * bps)
        throw Error("size_mismatch", "data file holds " + std::to_string(bytes.size() / bps) +
                                         " samples, descriptor expects " + std::to_string(n));

    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        const char *p = bytes.data() + i * bps;
        switch (type) {
        case SampleType::u8: raw[i] = static_cast<unsigned char>(*p); break;
        case SampleType::u16: {
            std::uint16_t v;
            std::memcpy(&v, p, 2);
            raw[i] = v;
            break;
        }
        case SampleType::f32: {
            float v;
            std::memcpy(&v, p, 4);
            raw[i] = v;
            break;
        }
        }
    }
    if (!j.contains("source_value_range"))
        return ScalarVolume::from_raw(dims, spacing, origin, raw);

    // Already normalized by save_volume; the range records the original units.
    if (type != SampleType::f32)
        throw Error("malformed_descriptor", "normalized volumes must be stored as f32");
    std::pair<double, double> range;
    try {
        const auto r = read_array<double, 2>(j, "source_value_range");
        range = {r[0], r[1]};
    } catch (const json::exception &e) {
        throw Error("malformed_descriptor", std::string("volume descriptor: ") + e.what());
    }
    std::vector<float> data(raw.begin(), raw.end());
    return ScalarVolume(dims, spacing, origin, std::move(data), range);
}

void save_volume(const ScalarVolume &volume, const fs::path &descriptor) {
    const fs::path raw_name = descriptor.stem().string() + ".raw";
    const auto data = volume.data();
    write_bytes(descriptor.parent_path() / raw_name, data.data(), data.size_bytes());
    const auto [lo, hi] = volume.value_range();
    write_descriptor(descriptor, volume.dims(), volume.spacing(), volume.origin(), SampleType::f32,
                     raw_name.string(), json{{"source_value_range", {lo, hi}}});
}

void save_raw_volume(const fs::path &descriptor, Dims dims, Vec3 spacing, Vec3 origin,
                     SampleType type, std::span<const double> raw) {
    const std::size_t bps = bytes_per_sample(type);
    std::vector<char> bytes(raw.size() * bps);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        char *p = bytes.data() + i * bps;
        switch (type) {
        case SampleType::u8: *p = static_cast<char>(static_cast<unsigned char>(raw[i])); break;
        case SampleType::u16: {
            const auto v = static_cast<std::uint16_t>(raw[i]);
            std::memcpy(p, &v, 2);
            break;
        }
        case SampleType::f32: {
            const auto v = static_cast<float>(raw[i]);
            std::memcpy(p, &v, 4);
            break;
        }
        }
    }
    const fs::path raw_name = descriptor.stem().string() + ".raw";
    write_bytes(descriptor.parent_path() / raw_name, bytes.data(), bytes.size());
    write_descriptor(descriptor, dims, spacing, origin, type, raw_name.string(), json::object());
}

double sample_trilinear(const ScalarVolume &v, const WorldPoint &p) {
    const Dims &d = v.dims();
    double g[3];
    int i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        g[a] = (p[a] - v.origin()[a]) / v.spacing()[a];
        if (!(g[a] >= 0.0 && g[a] <= d[a] - 1))
            return 0.0;
        i0[a] = std::min(static_cast<int>(g[a]), d[a] - 2);
        f[a] = g[a] - i0[a];
    }
    const int x = i0[0], y = i0[1], z = i0[2];
    auto l = [](double a, double b, double t) { return a + t * (b - a); };
    const double c00 = l(v.at(x, y, z), v.at(x + 1, y, z), f[0]);
    const double c10 = l(v.at(x, y + 1, z), v.at(x + 1, y + 1, z), f[0]);
    const double c01 = l(v.at(x, y, z + 1), v.at(x + 1, y, z + 1), f[0]);
    const double c11 = l(v.at(x, y + 1, z + 1), v.at(x + 1, y + 1, z + 1), f[0]);
    return l(l(c00, c10, f[1]), l(c01, c11, f[1]), f[2]);
}

Vec3 gradient(const ScalarVolume &v, const WorldPoint &p) {
    if (!v.contains(p))
        return {};
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
        // One-sided near the faces so the zero outside never leaks in.
        const double h = 0.5 * v.spacing()[a];
        const double first = v.origin()[a], last = first + v.extent()[a];
        Vec3 lo = p, hi = p;
        lo[a] = std::max(first, p[a] - h);
        hi[a] = std::min(last, p[a] + h);
        out[a] = (sample_trilinear(v, hi) - sample_trilinear(v, lo)) / (hi[a] - lo[a]);
    }
    return out;
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
    if (name == "sphere") return SyntheticKind::sphere;
    if (name == "ramp") return SyntheticKind::ramp;
    if (name == "shell") return SyntheticKind::shell;
    if (name == "two-spheres" || name == "two_spheres") return SyntheticKind::two_spheres;
    throw Error("unknown_kind", "unknown synthetic volume kind '" + std::string(name) + "'");
}

ScalarVolume make_synthetic_volume(SyntheticKind kind, Dims dims, Vec3 spacing, Vec3 origin) {
    for (int a = 0; a < 3; ++a)
        if (dims[a] < 2)
            throw Error("invalid_dims", "volume needs at least 2 voxels per axis");

    const Vec3 extent{(dims[0] - 1) * spacing.x, (dims[1] - 1) * spacing.y,
                      (dims[2] - 1) * spacing.z};
    const Vec3 center = origin + extent * 0.5;
    const double half_min = 0.5 * std::min({extent.x, extent.y, extent.z});
    const double band = 2.0 * std::min({spacing.x, spacing.y, spacing.z});
    // 1 deep inside, 0 outside, linear over a 2-voxel band inside the boundary.
    auto falloff = [band](double signed_dist) { return std::clamp(-signed_dist / band, 0.0, 1.0); };

    std::vector<float> data(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    std::size_t idx = 0;
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i, ++idx) {
                const Vec3 p = origin + Vec3{i * spacing.x, j * spacing.y, k * spacing.z};
                double value = 0.0;
                switch (kind) {
                case SyntheticKind::sphere:
                    value = falloff(length(p - center) - 0.8 * half_min);
                    break;
                case SyntheticKind::ramp:
                    value = static_cast<double>(i) / (dims[0] - 1);
                    break;
                case SyntheticKind::shell: {
                    const double outer = 0.8 * half_min;
                    const double half_thickness = std::max(0.075 * half_min, band);
                    value = falloff(std::abs(length(p - center) - (outer - half_thickness)) -
                                    half_thickness);
                    break;
                }
                case SyntheticKind::two_spheres: {
                    const Vec3 offset{0.45 * half_min, 0, 0};
                    const double radius = 0.4 * half_min;
                    value = std::max(falloff(length(p - (center - offset)) - radius),
                                     0.5 * falloff(length(p - (center + offset)) - radius));
                    break;
                }
                }
                data[idx] = static_cast<float>(value);
            }
    return ScalarVolume(dims, spacing, origin, std::move(data), {0.0, 1.0});
}

}  // namespace cinerender
