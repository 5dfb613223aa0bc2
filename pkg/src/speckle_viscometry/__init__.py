"""Speckle-viscometry: liquid viscosity from laser speckle video.

Simulates dynamic speckle from Brownian scatterers, reproduces smartphone
capture artifacts, selects usable frames, and turns inter-frame correlation
into a viscosity coefficient that can be calibrated to cP or classified.
Built-in scenarios regenerate complete synthetic experiments.
"""

__version__ = "0.1.0"

from speckle_viscometry.experiment import gen_corpus, run_benchmark, run_experiment  # noqa: F401
from speckle_viscometry.pipeline import analyze_sequence  # noqa: F401
from speckle_viscometry.registry import get_scenario  # noqa: F401
from speckle_viscometry.specklesim import simulate  # noqa: F401
from speckle_viscometry.stabilizer import stabilize  # noqa: F401
