"""Utility functions for speckle-viscometry package."""

import logging
import os

import numpy as np
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from speckle_viscometry.errors import InvalidArgumentError


class SpeckleMessage(BaseModel):
    """Structured logging message for speckle-viscometry operations."""

    stage: str
    target: str
    message: str

    def to_json(self) -> str:
        """Convert message to JSON string."""
        return self.model_dump_json()


def setup_logging():
    """Configure logging for speckle-viscometry package.

    Sets up INFO level logging with timestamp format.
    Safe to call multiple times - uses force=True to reconfigure.
    """
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s", force=True)


def frame_filename(index: int, extension: str = "pgm") -> str:
    """Build the on-disk name of a frame.

    Args:
        index: Zero-based frame index.
        extension: File extension without the dot ("pgm" or "ppm").

    Returns:
        Filename of the form frame_000042.pgm

    """
    return f"frame_{index:06d}.{extension}"


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Return a counter-based random stream for (seed, key...).

    Streams for distinct keys are statistically independent, so per-frame work
    can run in any order and still be bit-reproducible.
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *key: int) -> int:
    """Derive a 64-bit child seed from a parent seed and an integer key path."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def resolve_threads(threads: int | None = None) -> int | None:
    """Resolve a worker count from an explicit value or SPECKLE_THREADS.

    Returns None when neither is set, letting the executor pick its default.
    """
    if threads is not None:
        if threads < 1:
            raise InvalidArgumentError(f"threads must be >= 1, got {threads}")
        return threads
    env_value = os.getenv("SPECKLE_THREADS")
    if env_value:
        return max(1, int(env_value))
    return None


def load_model(model_cls, data):
    """Validate a dict (or JSON string) into a pydantic model.

    Pydantic validation failures are re-raised as InvalidArgumentError so the
    command line maps them to the validation exit code.
    """
    try:
        if isinstance(data, str | bytes):
            return model_cls.model_validate_json(data)
        return model_cls.model_validate(data)
    except PydanticValidationError as e:
        raise InvalidArgumentError(f"Invalid {model_cls.__name__}: {e}") from e
