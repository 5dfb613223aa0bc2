"""Dairy scenarios: fat content and adulteration."""

import speckle_viscometry.registry as registry
from speckle_viscometry.models import (
    ClassSpec,
    Criterion,
    CriterionKind,
    LiquidSpec,
    OpticsConfig,
    ScenarioSpec,
)

SKIM = LiquidSpec(viscosity_pa_s=1.6e-3, particle_radius_m=1.0e-6, opacity=0.9)
ONE_PERCENT = LiquidSpec(viscosity_pa_s=1.9e-3, particle_radius_m=1.2e-6)
TWO_PERCENT = LiquidSpec(viscosity_pa_s=2.2e-3, particle_radius_m=1.5e-6)
WHOLE = LiquidSpec(viscosity_pa_s=2.8e-3, particle_radius_m=2.0e-6)
CREAM = LiquidSpec(viscosity_pa_s=2.0e-2, particle_radius_m=3.0e-6)


@registry.register_scenario(registry.NAMES["milk"])
def milk_fat() -> ScenarioSpec:
    """Skim, 1 %, 2 %, whole milk and cream; V must rise with fat content.

    Two replicates per grade train the classifier; the other three are
    classified by fat grade.

    Returns:
        The scenario.

    """
    order = ["skim", "one_percent", "two_percent", "whole", "cream"]
    liquids = [SKIM, ONE_PERCENT, TWO_PERCENT, WHOLE, CREAM]
    return ScenarioSpec(
        name="milk_fat",
        description="Milk fat grades ordered by viscosity",
        classes=[
            ClassSpec(name=name, label=i, liquid=liquid, density_g_ml=1.035 - 0.002 * i)
            for i, (name, liquid) in enumerate(zip(order, liquids, strict=True))
        ],
        replicates=5,
        train_replicates=2,
        seed=42,
        optics=OpticsConfig(width=128, height=128, frames=12),
        classify=True,
        criteria=[
            Criterion(name="fat_order", kind=CriterionKind.v_order, order=order),
            Criterion(name="fat_class_accuracy", kind=CriterionKind.accuracy, threshold=0.90),
        ],
    )


@registry.register_scenario(registry.NAMES["adulteration"])
def milk_adulteration() -> ScenarioSpec:
    """Whole milk against five household adulterants.

    Thickeners (1.25 g cornstarch or xanthan gum in 20 ml) raise viscosity,
    xanthan the most. Water and detergent (2 ml in 20 ml) thin the milk and
    make it more transparent; salt thins it less. Every adulterant must move
    V clear of the range spanned by the milk control.

    Returns:
        The scenario.

    """
    presets = {
        "milk": WHOLE,
        "detergent": LiquidSpec(viscosity_pa_s=1.6e-3, particle_radius_m=2.0e-6, opacity=0.8),
        "salt": LiquidSpec(viscosity_pa_s=2.0e-3, particle_radius_m=2.0e-6, opacity=0.95),
        "cornstarch": LiquidSpec(viscosity_pa_s=6.0e-3, particle_radius_m=2.0e-6),
        "water": LiquidSpec(viscosity_pa_s=1.4e-3, particle_radius_m=2.0e-6, opacity=0.75),
        "xanthan_gum": LiquidSpec(viscosity_pa_s=3.0e-2, particle_radius_m=2.0e-6),
    }
    return ScenarioSpec(
        name="milk_adulteration",
        description="Whole milk control and adulterated samples",
        classes=[ClassSpec(name=name, label=i, liquid=liquid) for i, (name, liquid) in enumerate(presets.items())],
        replicates=3,
        seed=7,
        optics=OpticsConfig(width=128, height=128, frames=12, particle_count=2000),
        criteria=[
            Criterion(
                name="thickeners_more_viscous",
                kind=CriterionKind.v_order,
                order=["milk", "cornstarch", "xanthan_gum"],
            ),
            Criterion(name="control_disjoint", kind=CriterionKind.v_separation, order=list(presets)),
        ],
    )
