"""Blood coagulation scenario."""

import speckle_viscometry.registry as registry
from speckle_viscometry.models import (
    ClassSpec,
    Criterion,
    CriterionKind,
    LiquidSpec,
    OpticsConfig,
    ScenarioSpec,
)


@registry.register_scenario(registry.NAMES["blood"])
def blood() -> ScenarioSpec:
    """Uncoagulated versus coagulated blood.

    Whole blood sits near 4 mPa s; a clot behaves as a near-solid. Cells are
    modelled as large scatterers, and every replicate draws its viscosity
    from a log-normal spread around the class value. 18 replicates per class
    train the binary classifier and 6 test it.

    Returns:
        The scenario.

    """
    return ScenarioSpec(
        name="blood",
        description="Uncoagulated vs coagulated blood, binary classification",
        classes=[
            ClassSpec(
                name="uncoagulated",
                label=0,
                liquid=LiquidSpec(viscosity_pa_s=4e-3, particle_radius_m=3.5e-6),
                viscosity_jitter=0.2,
                density_g_ml=1.06,
            ),
            ClassSpec(
                name="coagulated",
                label=1,
                liquid=LiquidSpec(viscosity_pa_s=10.0, particle_radius_m=3.5e-6),
                viscosity_jitter=0.2,
                density_g_ml=1.08,
            ),
        ],
        replicates=24,
        train_replicates=18,
        seed=2021,
        optics=OpticsConfig(width=128, height=128, frames=12, particle_count=300),
        classify=True,
        criteria=[
            Criterion(name="coagulation_accuracy", kind=CriterionKind.accuracy, threshold=0.95),
            Criterion(name="v_clusters_disjoint", kind=CriterionKind.v_separation, threshold=0.0),
        ],
    )
