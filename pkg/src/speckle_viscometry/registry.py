"""Artifact store setup and the scenario registry."""

import logging
import os
from collections.abc import Callable

from speckle_viscometry.errors import InvalidArgumentError
from speckle_viscometry.models import ScenarioSpec
from speckle_viscometry.stores import ArtifactStore, FileStore, MemoryStore
from speckle_viscometry.utils import SpeckleMessage, load_model

# --- Backend setup ---------------------------------------------------

STORE_DIR = "store"

store_type = os.getenv("SPECKLE_STORE", "file").lower()
STORE_ROOT = os.getenv("SPECKLE_STORE_ROOT")

STORE: ArtifactStore | None
if store_type == "file":  # pragma: no cover
    STORE = None
    if STORE_ROOT:
        logging.info(
            SpeckleMessage(
                stage="FileStore", target="system", message=f"Initializing file store at {STORE_ROOT}"
            ).to_json()
        )
        STORE = FileStore(STORE_ROOT)
elif store_type == "memory":  # pragma: no cover
    logging.info(
        SpeckleMessage(stage="MemoryStore", target="system", message="Initializing in-memory store").to_json()
    )
    STORE = MemoryStore()
else:  # pragma: no cover
    raise ValueError(f"Unknown SPECKLE_STORE: {store_type}")


def resolve_store(out_dir: str | None = None) -> ArtifactStore:
    """The configured store, or a file store inside a run's output directory.

    Args:
        out_dir: Output directory of the run; its store/ subdirectory holds
            the tables when no SPECKLE_STORE_ROOT is set.

    Raises:
        InvalidArgumentError: No store is configured and there is no output
            directory to root one in.

    """
    if STORE is not None:
        return STORE
    if out_dir is None:
        raise InvalidArgumentError("No artifact store configured; set SPECKLE_STORE_ROOT")
    return FileStore(os.path.join(out_dir, STORE_DIR))


# --- Scenario registry and names -------------------------------------

NAMES = {
    "blood": "blood",
    "milk": "milk_fat",
    "adulteration": "milk_adulteration",
    "ten": "ten_liquids",
    "grid": "viscosity_grid",
    "dilution": "dilution",
    "shutter": "benchmark_shutter",
    "zoom": "benchmark_zoom",
    "light": "benchmark_light",
    "distance": "benchmark_distance",
    "surface": "benchmark_surface",
    "stabilizer": "stabilizer_grid",
}

SCENARIO_REGISTRY: dict[str, Callable[[], ScenarioSpec]] = {}


def register_scenario(name: str):
    """Register scenario builder with registry."""

    def decorator(func):
        """Register function in scenario registry."""
        SCENARIO_REGISTRY[name] = func
        return func

    return decorator


def get_scenario(name_or_path: str) -> ScenarioSpec:
    """Resolve a built-in scenario name, a short alias, or a ScenarioSpec JSON file.

    Args:
        name_or_path: Registered name (e.g. "milk_fat"), alias from NAMES
            (e.g. "milk"), or path to a JSON file.

    Returns:
        The validated ScenarioSpec.

    Raises:
        InvalidArgumentError: Unknown name or invalid JSON document.

    """
    import speckle_viscometry.scenarios  # noqa: F401

    name = NAMES.get(name_or_path, name_or_path)
    if name in SCENARIO_REGISTRY:
        return SCENARIO_REGISTRY[name]()
    if os.path.isfile(name_or_path):
        with open(name_or_path, encoding="utf-8") as f:
            return load_model(ScenarioSpec, f.read())
    raise InvalidArgumentError(
        f"Unknown scenario '{name_or_path}'; choose one of {sorted(SCENARIO_REGISTRY)} or pass a JSON file"
    )
