"""Viscosity grids for monotonicity, decorrelation-time and stabilizer checks."""

import speckle_viscometry.registry as registry
from speckle_viscometry.models import (
    CaptureArtifactConfig,
    ClassSpec,
    Criterion,
    CriterionKind,
    LiquidSpec,
    OpticsConfig,
    ScenarioSpec,
)

GRID = [1e-3, 2e-3, 4e-3, 1e-2, 1e-1]


def _grid_classes() -> list[ClassSpec]:
    """One class per grid viscosity, default scatterers."""
    return [
        ClassSpec(name=f"eta_{eta:g}", label=i, liquid=LiquidSpec(viscosity_pa_s=eta)) for i, eta in enumerate(GRID)
    ]


@registry.register_scenario(registry.NAMES["grid"])
def viscosity_grid() -> ScenarioSpec:
    """Clean captures over the grid, three seeds each, default optics."""
    return ScenarioSpec(
        name="viscosity_grid",
        description="Mean V and tau_c against viscosity on clean captures",
        classes=_grid_classes(),
        replicates=3,
        seed=1,
        criteria=[
            Criterion(name="v_monotonic", kind=CriterionKind.v_spearman, threshold=1.0),
            Criterion(name="tau_c_linear", kind=CriterionKind.tau_linearity, threshold=0.9),
        ],
    )


@registry.register_scenario(registry.NAMES["stabilizer"])
def stabilizer_grid() -> ScenarioSpec:
    """The grid captured with default flicker, bars and skew.

    Returns:
        The scenario; its criterion compares stabilized and first-frame V
        against the undistorted capture.

    """
    return ScenarioSpec(
        name="stabilizer_grid",
        description="Stabilized vs unstabilized V against the clean capture",
        classes=_grid_classes(),
        replicates=3,
        seed=3,
        optics=OpticsConfig(width=128, height=128, frames=240),
        capture=CaptureArtifactConfig(),
        criteria=[Criterion(name="stabilizer_gain", kind=CriterionKind.stabilizer_gain, threshold=0.05)],
    )
