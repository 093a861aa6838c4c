#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cinerender/assets.hpp"
#include "cinerender/error.hpp"
#include "cinerender/film.hpp"
#include "cinerender/service.hpp"

namespace py = pybind11;
using namespace cinerender;

namespace {

json to_json(const py::object &obj) {
    if (obj.is_none())
        return json::object();
    return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json(const json &j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

py::array_t<float> to_array(const AccumulationBuffer &buf) {
    const FloatImage img = to_float_image(buf);
    py::array_t<float> out({img.height, img.width, 3});
    std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
    return out;
}

FloatImage from_array(const py::array_t<float, py::array::c_style | py::array::forcecast> &a) {
    if (a.ndim() != 3 || a.shape(2) != 3)
        throw Error("invalid_dimensions", "expected an array of shape (height, width, 3)");
    FloatImage img{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), {}};
    img.rgb.assign(a.data(), a.data() + a.size());
    return img;
}

RenderSettings make_settings(int width, int height, int spp, std::uint64_t seed,
                             std::uint64_t frame, int threads, const std::string &integrator) {
    if (integrator != "pathtrace" && integrator != "raycast")
        throw Error("invalid_integrator", "integrator must be pathtrace or raycast");
    RenderSettings s;
    s.width = width;
    s.height = height;
    s.spp = spp;
    s.seed = seed;
    s.frame_index = frame;
    s.threads = threads;
    s.integrator = integrator == "raycast" ? Integrator::raycast : Integrator::pathtrace;
    return s;
}

py::array_t<float> render_scene(const Scene &scene, const Camera &cam, const py::object &cfg,
                                const RenderSettings &s) {
    const PathTracerConfig c = config_from_json(to_json(cfg));
    AccumulationBuffer buf;
    {
        py::gil_scoped_release release;
        buf = render_frame(scene, cam, c, s);
    }
    return to_array(buf);
}

}  // namespace

PYBIND11_MODULE(_cinerender, m) {
    m.doc() = "Progressive Monte Carlo volume renderer";

    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p)
                std::rethrow_exception(p);
        } catch (const Error &e) {
            PyErr_SetString(error.ptr(), (e.code() + ": " + e.what()).c_str());
        }
    });

    m.def("write_fixtures", [](const std::filesystem::path &dir) { write_fixtures(dir); },
          py::arg("out_dir"));
    m.def("fixture_scene_names", &fixture_scene_names);
    m.def("fixture_analytic", [](const std::string &name) { return fixture_scene_info(name).analytic; });

    m.def(
        "render_fixture",
        [](const std::string &name, int width, int height, int spp, std::uint64_t seed,
           std::uint64_t frame, int threads, const std::string &integrator, const py::object &cfg) {
            Camera cam;
            const Scene scene = build_fixture_scene(name, &cam);
            return render_scene(scene, cam, cfg,
                                make_settings(width, height, spp, seed, frame, threads, integrator));
        },
        py::arg("name"), py::arg("width") = 32, py::arg("height") = 32, py::arg("spp") = 4,
        py::arg("seed") = 0, py::arg("frame") = 0, py::arg("threads") = 0,
        py::arg("integrator") = "pathtrace", py::arg("cfg") = py::none(),
        "Render a built-in fixture scene; returns a float32 (height, width, 3) array.");

    m.def(
        "render",
        [](const std::filesystem::path &volume, const std::filesystem::path &tf,
           const std::filesystem::path &env, const py::object &camera, int width, int height,
           int spp, std::uint64_t seed, std::uint64_t frame, int threads,
           const std::string &integrator, const py::object &cfg,
           const std::optional<std::filesystem::path> &overlay, double density_scale) {
            std::optional<EmissionOverlay> ov;
            if (overlay)
                ov = load_overlay(*overlay);
            const Scene scene(std::make_shared<const ScalarVolume>(load_volume(volume)),
                              load_transfer_function(tf),
                              std::make_shared<const EnvironmentLight>(load_env(env)), ov,
                              density_scale);
            const Camera cam = camera.is_none() ? default_camera_for(scene.volume())
                                                : camera_from_json(to_json(camera));
            return render_scene(scene, cam, cfg,
                                make_settings(width, height, spp, seed, frame, threads, integrator));
        },
        py::arg("volume"), py::arg("tf"), py::arg("env"), py::arg("camera") = py::none(),
        py::arg("width") = 64, py::arg("height") = 64, py::arg("spp") = 4, py::arg("seed") = 0,
        py::arg("frame") = 0, py::arg("threads") = 0, py::arg("integrator") = "pathtrace",
        py::arg("cfg") = py::none(), py::arg("overlay") = py::none(),
        py::arg("density_scale") = 1.0);

    m.def(
        "tone_map",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast> &a, double ev) {
            const Image8 img = tone_map(from_array(a), ev);
            py::array_t<std::uint8_t> out({img.height, img.width, 3});
            std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
            return out;
        },
        py::arg("image"), py::arg("exposure_ev") = 0.0);

    m.def("encode_pfm", [](const py::array_t<float, py::array::c_style | py::array::forcecast> &a) {
        return py::bytes(encode_pfm(from_array(a)));
    });
    m.def("decode_pfm", [](const py::bytes &b) {
        const FloatImage img = decode_pfm(std::string(b));
        py::array_t<float> out({img.height, img.width, 3});
        std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
        return out;
    });

    m.def("hg_phase", &hg_phase, py::arg("g"), py::arg("cos_theta"));
    m.def("transmittance_analytic", &transmittance_analytic, py::arg("sigma_t"), py::arg("d"));
    m.def(
        "interpolate_track",
        [](const py::object &track, double t) {
            return from_json(camera_to_json(interpolate_track(track_from_json(to_json(track)), t).camera));
        },
        py::arg("track"), py::arg("t"));

    py::class_<RenderService>(m, "RenderService")
        .def(py::init([](const std::filesystem::path &asset_dir, int pass_spp, int threads,
                         std::uint64_t max_spp) {
                 ServiceOptions o;
                 o.asset_dir = asset_dir;
                 o.pass_spp = pass_spp;
                 o.render_threads = threads;
                 o.max_spp = max_spp;
                 return std::make_unique<RenderService>(o);
             }),
             py::arg("asset_dir"), py::arg("pass_spp") = 1, py::arg("threads") = 1,
             py::arg("max_spp") = 1u << 16)
        .def("list_assets", [](const RenderService &s) { return from_json(s.list_assets()); })
        .def("create_session",
             [](RenderService &s, const py::object &req) { return s.create_session(to_json(req)); })
        .def("update_state",
             [](RenderService &s, const std::string &id, const py::object &patch) {
                 return s.update_state(id, to_json(patch));
             })
        .def("session_state",
             [](const RenderService &s, const std::string &id) {
                 return from_json(s.session_state(id));
             })
        .def("snapshot",
             [](const RenderService &s, const std::string &id, const std::string &fmt) {
                 Snapshot snap = s.snapshot(id, parse_encoding(fmt));
                 return py::make_tuple(snap.revision, snap.count, py::bytes(snap.bytes));
             },
             py::arg("id"), py::arg("fmt") = "pfm")
        .def("wait_for_count",
             [](const RenderService &s, const std::string &id, std::uint64_t rev,
                std::uint64_t count, double timeout_s) {
                 py::gil_scoped_release release;
                 return s.wait_for_count(id, rev, count,
                                         std::chrono::milliseconds(
                                             static_cast<std::int64_t>(timeout_s * 1000)));
             },
             py::arg("id"), py::arg("revision"), py::arg("count"), py::arg("timeout") = 10.0)
        .def("close_session", [](RenderService &s, const std::string &id) {
            py::gil_scoped_release release;
            s.close_session(id);
        })
        .def("session_count", &RenderService::session_count);
}
