"""Capture-setting sweeps over skim milk, whole milk and cream."""

import speckle_viscometry.registry as registry
from speckle_viscometry.models import (
    CaptureArtifactConfig,
    ClassSpec,
    Criterion,
    CriterionKind,
    OpticsConfig,
    ScenarioSpec,
    Variant,
)
from speckle_viscometry.scenarios.milk import CREAM, SKIM, WHOLE

ORDER = ["skim", "whole", "cream"]
BASE_PIXELS_PER_METER = 5e6
LUX_TO_COUNTS = 0.3
LUX_LEVELS = [5, 32, 95, 150, 500]
DISTANCES_CM = [5, 10, 15, 20]
SURFACES = {"glass": 1.0, "opaque_plastic": 1.0, "foil": 0.85, "tin": 0.8, "mirror": 0.7}


def _lighting(**fields) -> CaptureArtifactConfig:
    """Capture with only the lighting stage enabled."""
    return CaptureArtifactConfig(flicker=False, bars=False, skew=False, **fields)


def _sweep(name: str, description: str, variants: list[Variant], threshold: float, **fields) -> ScenarioSpec:
    """Three dairy classes under every variant, checked for V order."""
    fields.setdefault("optics", OpticsConfig(width=128, height=128, frames=12))
    return ScenarioSpec(
        name=name,
        description=description,
        classes=[
            ClassSpec(name=n, label=i, liquid=liquid)
            for i, (n, liquid) in enumerate(zip(ORDER, [SKIM, WHOLE, CREAM], strict=True))
        ],
        replicates=3,
        seed=20,
        variants=variants,
        criteria=[
            Criterion(name=f"{name}_order", kind=CriterionKind.order_preserved, threshold=threshold, order=ORDER)
        ],
        **fields,
    )


@registry.register_scenario(registry.NAMES["shutter"])
def benchmark_shutter() -> ScenarioSpec:
    """Shutter 1/30 s and 1/60 s at 30 fps, with rolling-shutter artifacts."""
    return _sweep(
        "benchmark_shutter",
        "Exposure time under flicker and rolling shutter",
        [
            Variant(name="shutter_1_30", optics={"shutter_s": 1 / 30, "exposure_samples": 4}),
            Variant(name="shutter_1_60", optics={"shutter_s": 1 / 60, "exposure_samples": 4}),
        ],
        1.0,
        optics=OpticsConfig(width=128, height=128, frames=240),
        capture=CaptureArtifactConfig(),
    )


@registry.register_scenario(registry.NAMES["zoom"])
def benchmark_zoom() -> ScenarioSpec:
    """2x zoom integrates 4x4 speckle samples per pixel; 8x resolves them."""
    return _sweep(
        "benchmark_zoom",
        "Camera zoom",
        [
            Variant(name="zoom_2x", optics={"pixels_per_meter": BASE_PIXELS_PER_METER / 4, "supersample": 4}),
            Variant(name="zoom_8x", optics={"pixels_per_meter": BASE_PIXELS_PER_METER}),
        ],
        0.5,
    )


@registry.register_scenario(registry.NAMES["light"])
def benchmark_light() -> ScenarioSpec:
    """Ambient light from 5 to 500 lux as an additive offset that saturates at the top."""
    return _sweep(
        "benchmark_light",
        "Background light",
        [
            Variant(name=f"lux_{lux}", capture=_lighting(background_lux_offset=min(255.0, lux * LUX_TO_COUNTS)))
            for lux in LUX_LEVELS
        ],
        0.8,
    )


@registry.register_scenario(registry.NAMES["distance"])
def benchmark_distance() -> ScenarioSpec:
    """Sample distance 5 to 20 cm; signal falls with the square of distance."""
    return _sweep(
        "benchmark_distance",
        "Sample distance",
        [
            Variant(name=f"distance_{cm}cm", capture=_lighting(attenuation=(DISTANCES_CM[0] / cm) ** 2))
            for cm in DISTANCES_CM
        ],
        0.25,
    )


@registry.register_scenario(registry.NAMES["surface"])
def benchmark_surface() -> ScenarioSpec:
    """Reflective surfaces return less light through the liquid than glass or plastic."""
    return _sweep(
        "benchmark_surface",
        "Surface material",
        [Variant(name=name, opacity_scale=scale) for name, scale in SURFACES.items()],
        0.6,
    )
