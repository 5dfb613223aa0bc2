"""Dynamic laser-speckle simulation from Brownian scatterers.

Scatterers diffuse in the plane of the illuminated spot with the Stokes-Einstein
coefficient of the liquid. Each pixel sums one unit phasor per scatterer over the
round-trip path length, and the resulting intensity is blended with a static
substrate speckle weighted by (1 - opacity).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from speckle_viscometry.errors import InvalidArgumentError, InvariantViolationError
from speckle_viscometry.frames import FrameSequence
from speckle_viscometry.models import Channel, LiquidSpec, OpticsConfig
from speckle_viscometry.utils import SpeckleMessage, resolve_threads, rng_stream

BOLTZMANN = 1.380649e-23

# Stream keys under the simulation seed
BROWNIAN_STREAM = 0
EXPOSURE_STREAM = 1
SUBSTRATE_STREAM = 2
INITIAL_STREAM = 3

NORMALIZE_PERCENTILE = 99.5
PIXEL_CHUNK = 1024


@dataclass(frozen=True)
class ScattererField:
    """Positions of the scatterers inside the illuminated spot.

    Attributes:
        positions: float64 array of shape (K, 2), metres from the spot center.
        diffusion_coeff_m2_s: Diffusion coefficient D.
        spot_radius_m: Radius of the illuminated spot.

    """

    positions: np.ndarray
    diffusion_coeff_m2_s: float
    spot_radius_m: float

    def __post_init__(self) -> None:
        """Check the field invariants."""
        if self.diffusion_coeff_m2_s <= 0:
            raise InvariantViolationError("diffusion_coeff_m2_s must be positive")
        if self.spot_radius_m <= 0:
            raise InvariantViolationError("spot_radius_m must be positive")
        positions = np.asarray(self.positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise InvariantViolationError(f"positions must have shape (K, 2), got {positions.shape}")
        if positions.size and np.hypot(positions[:, 0], positions[:, 1]).max() > self.spot_radius_m * (1 + 1e-12):
            raise InvariantViolationError("all scatterers must lie within the spot")
        object.__setattr__(self, "positions", positions)

    def __len__(self) -> int:
        """Number of scatterers."""
        return int(self.positions.shape[0])


def stokes_einstein(liquid: LiquidSpec) -> float:
    """Diffusion coefficient of a sphere in a liquid.

    Args:
        liquid: Liquid viscosity, particle radius and temperature.

    Returns:
        D = kB * T / (6 * pi * eta * r) in m^2/s.

    Raises:
        InvalidArgumentError: Any of eta, r or T is not positive.

    """
    for name in ("viscosity_pa_s", "particle_radius_m", "temperature_k"):
        if not getattr(liquid, name) > 0:
            raise InvalidArgumentError(f"{name} must be positive, got {getattr(liquid, name)}")
    return BOLTZMANN * liquid.temperature_k / (6.0 * np.pi * liquid.viscosity_pa_s * liquid.particle_radius_m)


def _uniform_disk(rng: np.random.Generator, count: int, radius: float) -> np.ndarray:
    """Draw points uniformly inside a disk."""
    r = radius * np.sqrt(rng.random(count))
    theta = 2.0 * np.pi * rng.random(count)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def initial_field(liquid: LiquidSpec, optics: OpticsConfig, rng: np.random.Generator | None = None) -> ScattererField:
    """Scatterers placed uniformly in the spot, seeded from the optics seed."""
    if rng is None:
        rng = rng_stream(optics.seed, INITIAL_STREAM)
    return ScattererField(
        positions=_uniform_disk(rng, optics.particle_count, optics.spot_radius_m),
        diffusion_coeff_m2_s=stokes_einstein(liquid),
        spot_radius_m=optics.spot_radius_m,
    )


def step_brownian(field: ScattererField, dt: float, rng: np.random.Generator) -> ScattererField:
    """Advance every scatterer by one Brownian step.

    Per-axis displacements are Gaussian with variance 2 * D * dt. Scatterers
    that leave the spot are re-injected uniformly inside it, so the count is
    constant.

    Args:
        field: Current scatterer field.
        dt: Time step in seconds.
        rng: Random stream for this step.

    Returns:
        The new field.

    Raises:
        InvalidArgumentError: dt is not positive.

    """
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    sigma = np.sqrt(2.0 * field.diffusion_coeff_m2_s * dt)
    moved = field.positions + rng.normal(0.0, sigma, size=field.positions.shape)
    outside = np.hypot(moved[:, 0], moved[:, 1]) > field.spot_radius_m
    n_outside = int(outside.sum())
    if n_outside:
        moved[outside] = _uniform_disk(rng, n_outside, field.spot_radius_m)
    return ScattererField(moved, field.diffusion_coeff_m2_s, field.spot_radius_m)


@lru_cache(maxsize=16)
def _pixel_positions(width: int, height: int, pixels_per_meter: float, supersample: int) -> np.ndarray:
    """Sample positions (metres) of every sub-pixel, row-major, centered on the spot."""
    step = 1.0 / (pixels_per_meter * supersample)
    xs = (np.arange(width * supersample) - width * supersample / 2.0 + 0.5) * step
    ys = (np.arange(height * supersample) - height * supersample / 2.0 + 0.5) * step
    grid_x, grid_y = np.meshgrid(xs, ys)
    positions = np.column_stack((grid_x.ravel(), grid_y.ravel()))
    positions.setflags(write=False)
    return positions


def _phasor_intensity(pixels: np.ndarray, positions: np.ndarray, cycles_per_m: float) -> np.ndarray:
    """|sum_k exp(i * 2 * pi * cycles_per_m * |p - x_k|)|^2 for a block of sample positions.

    The path length is reduced to a fractional cycle in float64 before the
    trigonometry, so float32 cos/sin stay accurate to ~1e-6 rad.
    """
    cycles = np.subtract.outer(pixels[:, 0], positions[:, 0])
    dy = np.subtract.outer(pixels[:, 1], positions[:, 1])
    np.multiply(cycles, cycles, out=cycles)
    np.multiply(dy, dy, out=dy)
    np.add(cycles, dy, out=cycles)
    np.sqrt(cycles, out=cycles)
    np.multiply(cycles, cycles_per_m, out=cycles)
    np.subtract(cycles, np.rint(cycles, out=dy), out=cycles)
    phase = np.multiply(cycles, 2.0 * np.pi).astype(np.float32)
    real = np.cos(phase).sum(axis=1, dtype=np.float64)
    imag = np.sin(phase).sum(axis=1, dtype=np.float64)
    return real * real + imag * imag


def _intensity(positions: np.ndarray, optics: OpticsConfig) -> np.ndarray:
    """Raw speckle intensity |A|^2 per pixel, averaged over sub-pixels."""
    pixels = _pixel_positions(optics.width, optics.height, optics.pixels_per_meter, optics.supersample)
    # round trip: two path lengths per wavelength cycle
    cycles_per_m = 2.0 / optics.wavelength_m
    intensity = np.empty(pixels.shape[0], dtype=np.float64)
    for start in range(0, pixels.shape[0], PIXEL_CHUNK):
        intensity[start : start + PIXEL_CHUNK] = _phasor_intensity(
            pixels[start : start + PIXEL_CHUNK], positions, cycles_per_m
        )
    s = optics.supersample
    return intensity.reshape(optics.height, s, optics.width, s).mean(axis=(1, 3))


@lru_cache(maxsize=8)
def _substrate_intensity(optics: OpticsConfig) -> np.ndarray:
    """Static substrate speckle for these optics, from its own seed stream."""
    rng = rng_stream(optics.seed, SUBSTRATE_STREAM)
    intensity = _intensity(_uniform_disk(rng, optics.particle_count, optics.spot_radius_m), optics)
    intensity.setflags(write=False)
    return intensity


def render_exposure(field: ScattererField, optics: OpticsConfig, frame_index: int = 0) -> np.ndarray:
    """Raw intensity integrated over the shutter time.

    With exposure_samples > 1 the field keeps diffusing during the exposure and
    the intensities of the sub-positions are averaged.
    """
    intensity = _intensity(field.positions, optics)
    if optics.exposure_samples > 1:
        rng = rng_stream(optics.seed, EXPOSURE_STREAM, frame_index)
        sub_dt = optics.effective_shutter_s / optics.exposure_samples
        sub_field = field
        for _ in range(optics.exposure_samples - 1):
            sub_field = step_brownian(sub_field, sub_dt, rng)
            intensity = intensity + _intensity(sub_field.positions, optics)
        intensity = intensity / optics.exposure_samples
    return intensity


def quantize(intensity: np.ndarray) -> np.ndarray:
    """Map the 99.5th-percentile intensity to 255 and round to 8 bits."""
    scale = float(np.percentile(intensity, NORMALIZE_PERCENTILE))
    if scale <= 0:
        return np.zeros(intensity.shape, dtype=np.uint8)
    return np.clip(np.rint(intensity * (255.0 / scale)), 0, 255).astype(np.uint8)


def render_frame(
    field: ScattererField, optics: OpticsConfig, liquid: LiquidSpec, frame_index: int = 0
) -> np.ndarray:
    """Render one 8-bit speckle frame.

    Args:
        field: Scatterer positions at the start of the exposure.
        optics: Imaging geometry and timing.
        liquid: Provides the opacity used for the substrate blend.
        frame_index: Index of the frame, keys the exposure random stream.

    Returns:
        uint8 array of shape (height, width).

    """
    intensity = render_exposure(field, optics, frame_index)
    if liquid.opacity < 1.0:
        intensity = liquid.opacity * intensity + (1.0 - liquid.opacity) * _substrate_intensity(optics)
    return quantize(intensity)


def simulate(liquid: LiquidSpec, optics: OpticsConfig, threads: int | None = None) -> FrameSequence:
    """Simulate a dynamic speckle video.

    Frame i shows the field after i Brownian steps of dt = 1 / fps. Steps use
    the stream (seed, BROWNIAN_STREAM, i) so the trajectory depends only on the
    seed; frames are then rendered concurrently.

    Args:
        liquid: The liquid under the spot.
        optics: Imaging geometry, frame count, rate and seed.
        threads: Worker threads for rendering; defaults to SPECKLE_THREADS.

    Returns:
        The simulated gray FrameSequence.

    """
    logging.info(
        SpeckleMessage(
            stage="simulate",
            target=f"seed={optics.seed}",
            message=f"Simulating {optics.frames} frames at eta={liquid.viscosity_pa_s:g} Pa*s",
        ).to_json()
    )
    dt = 1.0 / optics.fps
    fields = [initial_field(liquid, optics)]
    for i in range(1, optics.frames):
        fields.append(step_brownian(fields[-1], dt, rng_stream(optics.seed, BROWNIAN_STREAM, i)))

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        frames = list(executor.map(lambda item: render_frame(item[1], optics, liquid, item[0]), enumerate(fields)))

    return FrameSequence(
        frames=np.stack(frames), fps=optics.fps, shutter_s=optics.effective_shutter_s, channel=Channel.gray
    )
