#include <doctest.h>

#include <cstring>

#include "cinerender/error.hpp"
#include "cinerender/integrate.hpp"
#include "test_support.hpp"

using namespace cinerender;
using cinerender::testing::down_ray;
using cinerender::testing::homogeneous_slab;
using cinerender::testing::RunningStats;

namespace {

OpticalProperties absorber() { return {0.0, 1.0, Rgb(1.0), 0.0, {}}; }
OpticalProperties emitter() { return {0.0, 1.0, Rgb(1.0), 0.0, Rgb(1.0)}; }

PathTracerConfig unshaded(int steps) {
    PathTracerConfig cfg;
    cfg.step_count_raycast = steps;
    cfg.raycast_shading = false;
    return cfg;
}

double escape_fraction(const Scene &scene, int n, std::uint64_t seed) {
    int escaped = 0;
    for (int i = 0; i < n; ++i) {
        Rng rng(seed, 0, 0, i);
        escaped += !sample_free_flight(scene, down_ray(), 1e9, rng).collided;
    }
    return static_cast<double>(escaped) / n;
}

}  // namespace

TEST_CASE("analytic transmittance") {
    CHECK(transmittance_analytic(0.5, 2.0) == doctest::Approx(0.367879).epsilon(1e-6));
    CHECK(transmittance_analytic(3.0, 0.0) == 1.0);
    CHECK(transmittance_analytic(0.0, 123.0) == 1.0);
}

TEST_CASE("majorant estimation") {
    const Scene vacuum = homogeneous_slab({}, Rgb(1.0));
    CHECK(vacuum.majorant() == 0.0);

    auto vol = std::make_shared<const ScalarVolume>(Dims{2, 2, 2}, Vec3{1, 1, 1}, Vec3{0, 0, 0},
                                                    std::vector<float>(8, 0.3f));
    const TransferFunction tf({{0.0, {0, 0}}, {1.0, {2.0, 1.0}}});
    CHECK(estimate_majorant(*vol, tf, 1.5) == doctest::Approx(1.5 * tf.classify(0.3f).sigma_t()));

    std::vector<float> data(8, 0.0f);
    data[5] = 1.0f;
    const ScalarVolume two(Dims{2, 2, 2}, {1, 1, 1}, {0, 0, 0}, data);
    const TransferFunction step({{0.0, {0, 0}}, {1.0, {0, 2.0}}});
    CHECK(estimate_majorant(two, step, 1.0) == 2.0);

    // A peak control point inside the data range bounds the trilinear field.
    std::vector<float> ends(8, 0.0f);
    ends[7] = 1.0f;
    const ScalarVolume span(Dims{2, 2, 2}, {1, 1, 1}, {0, 0, 0}, ends);
    const TransferFunction peak({{0.0, {0, 0}}, {0.5, {0, 4.0}}, {1.0, {0, 0}}});
    CHECK(estimate_majorant(span, peak, 1.0) == 4.0);
}

TEST_CASE("scene rejects a majorant below the extinction bound") {
    try {
        homogeneous_slab(absorber(), Rgb(1.0), 1.0, 0.5);
        FAIL("accepted a low majorant");
    } catch (const Error &e) {
        CHECK(e.code() == "invalid_majorant");
    }
    CHECK_NOTHROW(homogeneous_slab(absorber(), Rgb(1.0), 1.0, 4.0));
}

TEST_CASE("ray caster closed form on the emissive slab") {
    const Scene scene = homogeneous_slab(emitter(), Rgb(0.0));
    const double exact = 1 - std::exp(-1.0);
    const double at256 = ray_cast(scene, down_ray(), unshaded(256)).r;
    CHECK(std::abs(at256 - exact) / exact < 0.01);

    double previous = std::abs(ray_cast(scene, down_ray(), unshaded(64)).r - exact);
    for (int steps : {128, 256, 512}) {
        const double err = std::abs(ray_cast(scene, down_ray(), unshaded(steps)).r - exact);
        INFO("steps " << steps << " error " << err << " previous " << previous);
        CHECK(err < previous);
        // First order: doubling the step count halves the error.
        CHECK(previous / err == doctest::Approx(2.0).epsilon(0.1));
        previous = err;
    }
}

TEST_CASE("ray caster returns the environment through vacuum") {
    const Scene scene = homogeneous_slab({}, Rgb{0.25, 0.5, 2.0});
    CHECK(ray_cast(scene, down_ray(3, -2), unshaded(64)) == Rgb{0.25, 0.5, 2.0});
    CHECK(ray_cast(scene, Ray{{500, 0, 0}, {1, 0, 0}}, unshaded(64)) == Rgb{0.25, 0.5, 2.0});
}

TEST_CASE("free flights in vacuum always escape") {
    const Scene scene = homogeneous_slab({}, Rgb(1.0));
    CHECK(escape_fraction(scene, 10000, 1) == 1.0);
}

TEST_CASE("free-flight escape fraction and null-collision invariance") {
    constexpr int kN = 1000000;
    const double p = std::exp(-1.0);
    const double tol = 4 * std::sqrt(p * (1 - p) / kN);
    for (double majorant : {1.0, 2.0, 4.0}) {
        const Scene scene = homogeneous_slab(absorber(), Rgb(1.0), 1.0, majorant);
        const double f = escape_fraction(scene, kN, 7 + static_cast<std::uint64_t>(majorant));
        INFO("majorant " << majorant << " escape fraction " << f);
        CHECK(std::abs(f - p) <= tol);
    }
}

TEST_CASE("ratio-tracking transmittance is bounded and unbiased") {
    const Scene scene = homogeneous_slab(absorber(), Rgb(1.0), 1.0, 3.0);
    RunningStats stats;
    for (int i = 0; i < 200000; ++i) {
        Rng rng(3, 0, 0, i);
        const double t = estimate_transmittance(scene, down_ray(), 1e9, rng);
        CHECK(t >= 0.0);
        CHECK(t <= 1.0);
        stats.add(t);
    }
    CHECK(std::abs(stats.mean - std::exp(-1.0)) <= 4 * stats.std_error());
}

TEST_CASE("path tracer returns the environment through vacuum") {
    const Scene scene = homogeneous_slab({}, Rgb{0.25, 0.625, 3.0});
    PathTracerConfig cfg;
    for (int i = 0; i < 100; ++i) {
        Rng rng(0, 0, 0, i);
        CHECK(path_trace_sample(scene, down_ray(i * 0.1, 0), cfg, rng) == Rgb{0.25, 0.625, 3.0});
    }
}

TEST_CASE("path tracer matches Beer-Lambert and the emission closed form") {
    constexpr int kN = 1000000;
    PathTracerConfig cfg;
    SUBCASE("pure absorber, constant environment") {
        const Scene scene = homogeneous_slab(absorber(), Rgb(1.0));
        RunningStats stats;
        for (int i = 0; i < kN; ++i) {
            Rng rng(11, 0, 0, i);
            stats.add(path_trace_sample(scene, down_ray(), cfg, rng).r);
        }
        CHECK(std::abs(stats.mean - std::exp(-1.0)) <= 4 * stats.std_error());
    }
    SUBCASE("scatter-free emitter, black environment") {
        const Scene scene = homogeneous_slab(emitter(), Rgb(0.0));
        RunningStats stats;
        for (int i = 0; i < kN; ++i) {
            Rng rng(12, 0, 0, i);
            stats.add(path_trace_sample(scene, down_ray(), cfg, rng).r);
        }
        CHECK(std::abs(stats.mean - (1 - std::exp(-1.0))) <= 4 * stats.std_error());
    }
}

TEST_CASE("radiance samples are deterministic per stream key") {
    Camera cam;
    const Scene scene = build_fixture_scene("sphere", &cam);
    PathTracerConfig cfg;
    const Ray ray{cam.position, normalize(cam.target - cam.position + Vec3{1, 0, 2})};
    for (int i = 0; i < 200; ++i) {
        Rng a(5, 2, 77, i), b(5, 2, 77, i);
        const Rgb x = path_trace_sample(scene, ray, cfg, a);
        const Rgb y = path_trace_sample(scene, ray, cfg, b);
        CHECK(std::memcmp(&x, &y, sizeof(Rgb)) == 0);
    }
}

TEST_CASE("NEE on and off agree on a thin single-scattering shell") {
    Camera cam;
    const Scene scene = build_fixture_scene("shell", &cam);
    PathTracerConfig with, without;
    without.use_nee = false;
    const Vec3 forward = normalize(cam.target - cam.position);
    // Rays grazing the shell wall, through the hollow center, and through both walls.
    for (const Vec3 &offset : {Vec3{14.5, 0, 0}, Vec3{0, 0, 0}, Vec3{0, 0, -9}}) {
        const Ray ray{cam.position, normalize(forward * length(cam.target - cam.position) + offset)};
        RunningStats a, b;
        for (int i = 0; i < 40000; ++i) {
            Rng r1(21, 0, 0, i), r2(22, 0, 0, i);
            a.add(luminance(path_trace_sample(scene, ray, with, r1)));
            b.add(luminance(path_trace_sample(scene, ray, without, r2)));
        }
        const double se = std::sqrt(a.std_error() * a.std_error() + b.std_error() * b.std_error());
        INFO("nee " << a.mean << " +- " << a.std_error() << ", no nee " << b.mean << " +- "
                    << b.std_error());
        CHECK(std::abs(a.mean - b.mean) <= 4 * se);
    }
}

TEST_CASE("albedo-one paths never exceed the maximum environment radiance") {
    Camera cam;
    const Scene scene = build_fixture_scene("shell", &cam);
    PathTracerConfig cfg;
    cfg.use_nee = false;
    const Rgb bound = scene.env().max_radiance();
    const Vec3 forward = normalize(cam.target - cam.position);
    int violations = 0;
    double max_throughput = 0;
    for (int i = 0; i < 100000; ++i) {
        Rng rng(31, 0, 0, i);
        const double x = rng.next() * 40 - 20, z = rng.next() * 40 - 20;
        const Ray ray{cam.position,
                      normalize(forward * length(cam.target - cam.position) + Vec3{x, 0, z})};
        PathStats stats;
        const Rgb L = path_trace_sample(scene, ray, cfg, rng, &stats);
        max_throughput = std::max(max_throughput, stats.max_throughput);
        for (int c = 0; c < 3; ++c)
            violations += L[c] > bound[c];
    }
    CHECK(violations == 0);
    // Roulette divides by the largest channel, so 1 is reached up to rounding.
    CHECK(max_throughput <= 1.0 + 1e-12);
}

TEST_CASE("config validation") {
    PathTracerConfig cfg;
    cfg.max_bounces = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.rr_min_survival = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.step_count_raycast = 4;
    CHECK_THROWS_AS(cfg.validate(), Error);
}
