"""Ten household liquids spanning four decades of viscosity."""

import speckle_viscometry.registry as registry
from speckle_viscometry.models import (
    ClassSpec,
    Criterion,
    CriterionKind,
    LiquidSpec,
    OpticsConfig,
    ScenarioSpec,
)

# name: (viscosity Pa s, particle radius m, opacity, group)
LIQUIDS = {
    "water": (1.0e-3, 0.6e-6, 0.7, "less_viscous"),
    "sparkling_water": (1.0e-3, 0.8e-6, 0.85, "less_viscous"),
    "vinegar": (1.2e-3, 1.2e-6, 0.9, "less_viscous"),
    "coffee": (1.5e-3, 1.5e-6, 0.95, "less_viscous"),
    "soft_drink": (2.0e-3, 1.8e-6, 0.9, "less_viscous"),
    "whole_milk": (3.0e-3, 2.0e-6, 1.0, "less_viscous"),
    "olive_oil": (0.08, 0.12e-6, 1.0, "viscous"),
    "dish_soap": (0.3, 0.05e-6, 1.0, "viscous"),
    "maple_syrup": (0.15, 0.15e-6, 1.0, "viscous"),
    "corn_syrup": (8.0, 0.01e-6, 1.0, "viscous"),
}


@registry.register_scenario(registry.NAMES["ten"])
def ten_liquids() -> ScenarioSpec:
    """Ten-class classification with a viscous / less-viscous regrouping.

    One volume of each liquid trains the classifier and three fresh volumes
    test it.

    Returns:
        The scenario.

    """
    return ScenarioSpec(
        name="ten_liquids",
        description="Ten liquids, multi-class and binary viscous classification",
        classes=[
            ClassSpec(
                name=name,
                label=i,
                liquid=LiquidSpec(viscosity_pa_s=eta, particle_radius_m=radius, opacity=opacity),
                group=group,
            )
            for i, (name, (eta, radius, opacity, group)) in enumerate(LIQUIDS.items())
        ],
        replicates=4,
        train_replicates=1,
        seed=10,
        optics=OpticsConfig(width=128, height=128, frames=12),
        classify=True,
        criteria=[
            Criterion(name="ten_class_accuracy", kind=CriterionKind.accuracy, threshold=0.90),
            Criterion(name="viscous_binary_accuracy", kind=CriterionKind.binary_accuracy, threshold=0.98),
        ],
    )
