"""Whole milk diluted with water, calibrated against simulated Ostwald readings."""

import speckle_viscometry.registry as registry
from speckle_viscometry.models import (
    ClassSpec,
    Criterion,
    CriterionKind,
    LiquidSpec,
    OpticsConfig,
    ScenarioSpec,
)
from speckle_viscometry.rheocal import mixture_viscosity

MILK_VISCOSITY = 2.5e-3
WATER_VISCOSITY = 1.0e-3
MILK_DENSITY = 1.03
WATER_DENSITY = 0.997
LEVELS = 8


@registry.register_scenario(registry.NAMES["dilution"])
def dilution() -> ScenarioSpec:
    """One part whole milk with 0..7 parts water.

    Replicate 0 of every level is the calibration series; replicates 1-3
    are fresh series scored against ground truth.

    Returns:
        The scenario.

    """
    classes = []
    for parts in range(LEVELS):
        fraction = 1.0 / (1.0 + parts)
        classes.append(
            ClassSpec(
                name=f"water_{parts}",
                label=parts,
                liquid=LiquidSpec(
                    viscosity_pa_s=mixture_viscosity(MILK_VISCOSITY, WATER_VISCOSITY, parts),
                    particle_radius_m=3e-6,
                ),
                density_g_ml=fraction * MILK_DENSITY + (1.0 - fraction) * WATER_DENSITY,
            )
        )
    return ScenarioSpec(
        name="dilution",
        description="Cubic calibration of V on a milk dilution series",
        classes=classes,
        replicates=4,
        train_replicates=1,
        seed=8,
        optics=OpticsConfig(width=64, height=64, frames=10, particle_count=4000),
        calibrate=True,
        criteria=[Criterion(name="calibration_linear", kind=CriterionKind.calibration_linearity, threshold=0.99)],
    )
