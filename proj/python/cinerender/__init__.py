"""Python bindings for the cinerender volume path tracer."""

from ._cinerender import (
    Error,
    RenderService,
    decode_pfm,
    encode_pfm,
    fixture_analytic,
    fixture_scene_names,
    hg_phase,
    interpolate_track,
    render,
    render_fixture,
    tone_map,
    transmittance_analytic,
    write_fixtures,
)

__all__ = [
    "Error",
    "RenderService",
    "decode_pfm",
    "encode_pfm",
    "fixture_analytic",
    "fixture_scene_names",
    "hg_phase",
    "interpolate_track",
    "render",
    "render_fixture",
    "tone_map",
    "transmittance_analytic",
    "write_fixtures",
]
