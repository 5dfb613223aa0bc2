"""Built-in scenarios: one module per experiment family."""

from speckle_viscometry.scenarios import (  # noqa: F401
    benchmarks,
    blood,
    dilution,
    milk,
    ten_liquids,
    viscosity_grid,
)
