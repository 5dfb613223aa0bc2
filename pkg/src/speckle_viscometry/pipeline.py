"""Correlation analysis of speckle frames.

Crops to the dynamic speckle, correlates the anchor frame with each later
selected frame, reads the viscosity coefficient V off the second point of the
curve and fits an exponential decorrelation time.
"""

import logging

import numpy as np
import pandas as pd
from scipy import optimize, stats

from speckle_viscometry.errors import DegenerateFrameError, InvalidArgumentError
from speckle_viscometry.frames import FrameSequence
from speckle_viscometry.models import CorrelationCurve, CropRegion, FrameSelection
from speckle_viscometry.stabilizer import consecutive_selection
from speckle_viscometry.utils import SpeckleMessage

BRIGHT_THRESHOLD = 200
MAX_CROP_SIZE = 1000
CENTER_EXCLUSION = 4
CURVE_POINTS = 10
NO_DECAY_LEVEL = 0.999
MIN_FIT_POINTS = 3
TAU_GRID = np.geomspace(1e-2, 1e4, 121)


def _box_sum(integral: np.ndarray, y0: int, y1: int, x0: int, x1: int) -> int:
    """Number of mask pixels in rows [y0, y1) and columns [x0, x1)."""
    return int(integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0])


def crop_dynamic(
    frame: np.ndarray, bright_threshold: int = BRIGHT_THRESHOLD, max_size: int = MAX_CROP_SIZE
) -> CropRegion:
    """Grow a centered box until it would touch a bright static-speckle pixel.

    Pixels above bright_threshold form the mask, except those within the 9x9
    zone around the image center (the dynamic spot itself). The box starts at
    2x2 and grows by one pixel per step, alternating width and height. Growth
    stops before the first step that would include a mask pixel; a dimension
    that reaches min(max_size, image size) stops while the other continues.

    Args:
        frame: 2-D uint8 frame.
        bright_threshold: Mask level.
        max_size: Largest box side.

    Returns:
        The final region.

    """
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise InvalidArgumentError(f"crop_dynamic needs a 2-D frame, got shape {frame.shape}")
    height, width = frame.shape
    cx, cy = width // 2, height // 2
    mask = frame > bright_threshold
    mask[
        max(0, cy - CENTER_EXCLUSION) : cy + CENTER_EXCLUSION + 1,
        max(0, cx - CENTER_EXCLUSION) : cx + CENTER_EXCLUSION + 1,
    ] = False
    integral = np.zeros((height + 1, width + 1), dtype=np.int64)
    integral[1:, 1:] = mask.cumsum(axis=0).cumsum(axis=1)

    cap_w = min(max_size, width)
    cap_h = min(max_size, height)
    w = min(2, cap_w)
    h = min(2, cap_h)
    grow_width = True
    while w < cap_w or h < cap_h:
        if (grow_width and w < cap_w) or h >= cap_h:
            next_w, next_h = w + 1, h
        else:
            next_w, next_h = w, h + 1
        x0, y0 = cx - next_w // 2, cy - next_h // 2
        if _box_sum(integral, y0, y0 + next_h, x0, x0 + next_w) > 0:
            break
        w, h = next_w, next_h
        grow_width = not grow_width
    return CropRegion(cx=cx, cy=cy, width=w, height=h)


def _region_pixels(frame: np.ndarray, region: CropRegion) -> np.ndarray:
    """Region pixels as float64."""
    if not region.fits(frame.shape[0], frame.shape[1]):
        raise InvalidArgumentError(f"Region {region.model_dump()} exceeds frame {frame.shape}")
    rows, cols = region.slices()
    return frame[rows, cols].astype(np.float64)


def _centered(pixels: np.ndarray, frame_index: int | None = None) -> tuple[np.ndarray, float]:
    """Mean-removed pixels and their L2 norm."""
    centered = pixels - pixels.mean()
    norm = float(np.sqrt(np.sum(centered * centered)))
    if norm == 0.0:
        raise DegenerateFrameError("Region has zero variance", frame_index)
    return centered, norm


def frame_correlation(a: np.ndarray, b: np.ndarray, region: CropRegion) -> float:
    """Pearson correlation of two frames over a region.

    Raises:
        DegenerateFrameError: Either region has zero variance.

    """
    ca, na = _centered(_region_pixels(a, region))
    cb, nb = _centered(_region_pixels(b, region))
    return float(np.clip(np.sum(ca * cb) / (na * nb), -1.0, 1.0))


def correlation_curve(
    seq: FrameSequence, selection: FrameSelection, region: CropRegion, tau: int = 1
) -> CorrelationCurve:
    """Correlate the first selected frame with every tau-th later selected frame.

    Point k compares selection.indices[0] with selection.indices[k * tau], for
    up to ten points. Point 0 is exactly 1 and V is point 1.

    Raises:
        InvalidArgumentError: tau < 1, fewer than two points, or an index
            outside the sequence.
        DegenerateFrameError: A selected frame is flat over the region; carries
            the frame index.

    """
    if tau < 1:
        raise InvalidArgumentError(f"tau must be >= 1, got {tau}")
    points = min(CURVE_POINTS, (len(selection.indices) - 1) // tau + 1)
    if points < 2:
        raise InvalidArgumentError(f"Selection of {len(selection.indices)} frames gives no lag at tau={tau}")
    chosen = [selection.indices[k * tau] for k in range(points)]
    if chosen[-1] >= len(seq):
        raise InvalidArgumentError(f"Selected frame {chosen[-1]} is outside a {len(seq)}-frame sequence")

    anchor, anchor_norm = _centered(_region_pixels(seq.frames[chosen[0]], region), chosen[0])
    coefficients = [1.0]
    for index in chosen[1:]:
        centered, norm = _centered(_region_pixels(seq.frames[index], region), index)
        coefficients.append(float(np.clip(np.sum(anchor * centered) / (anchor_norm * norm), -1.0, 1.0)))
    return CorrelationCurve(
        lags=[k * tau for k in range(points)],
        coefficients=coefficients,
        viscosity_coefficient=coefficients[1],
        crop=region,
        frame_indices=chosen,
    )


def _fit_error(log_tau: float, k: np.ndarray, c: np.ndarray, b: float) -> float:
    """Squared error of b + (1 - b) * exp(-k / tau_c) against the curve."""
    model = b + (1.0 - b) * np.exp(-k / np.exp(log_tau))
    return float(np.sum((c - model) ** 2))


def fit_tau_c(curve: CorrelationCurve) -> float | None:
    """Fit the decorrelation time, in curve steps, of c(k) = b + (1 - b) exp(-k / tau_c).

    The plateau b is held at the last coefficient, c(9) on a full curve, and
    the squared error is summed over the points before it. A coarse
    log-spaced scan brackets the minimum; golden-section search refines it to
    a relative tolerance of 1e-4.

    Returns:
        tau_c, or None when the curve does not decay (c[1] >= 0.999) or has
        fewer than three points.

    """
    c = np.asarray(curve.coefficients, dtype=np.float64)
    if c[1] >= NO_DECAY_LEVEL or c.size < MIN_FIT_POINTS:
        return None
    b = float(c[-1])
    k = np.arange(c.size - 1, dtype=np.float64)
    c = c[:-1]
    log_grid = np.log(TAU_GRID)
    errors = np.array([_fit_error(u, k, c, b) for u in log_grid])
    best = int(np.argmin(errors))
    if best == 0 or best == log_grid.size - 1:
        return float(TAU_GRID[best])
    try:
        log_tau = optimize.golden(
            _fit_error, args=(k, c, b), brack=(log_grid[best - 1], log_grid[best], log_grid[best + 1]), tol=1e-4
        )
    except (ValueError, RuntimeError):
        return float(TAU_GRID[best])
    return float(np.exp(log_tau))


def speckle_contrast(frame: np.ndarray, region: CropRegion) -> float:
    """Spatial speckle contrast K = population std / mean over the region.

    Raises:
        DegenerateFrameError: The region mean is zero.

    """
    pixels = _region_pixels(np.asarray(frame), region)
    mean = float(pixels.mean())
    if mean == 0.0:
        raise DegenerateFrameError("Region mean is zero")
    return float(pixels.std() / mean)


def analyze_sequence(
    seq: FrameSequence,
    selection: FrameSelection | None = None,
    region: CropRegion | str = "auto",
    tau: int = 1,
    bright_threshold: int = BRIGHT_THRESHOLD,
    max_size: int = MAX_CROP_SIZE,
) -> CorrelationCurve:
    """Full analysis of one sequence.

    Args:
        seq: Gray sequence.
        selection: Frames to use; defaults to the first 9 * tau + 1 frames.
        region: A CropRegion, "auto" (crop_dynamic on the first selected
            frame) or "full".
        tau: Spacing of curve points in selected frames.
        bright_threshold: Mask level for the auto crop.
        max_size: Largest auto crop side.

    Returns:
        The correlation curve with tau_c and the first-frame contrast.

    """
    if selection is None:
        selection = consecutive_selection(0, min(len(seq), (CURVE_POINTS - 1) * tau + 1))
    anchor = seq.frames[selection.indices[0]] if selection.indices[0] < len(seq) else None
    if anchor is None:
        raise InvalidArgumentError(f"Selected frame {selection.indices[0]} is outside a {len(seq)}-frame sequence")
    if isinstance(region, str):
        if region == "auto":
            region = crop_dynamic(anchor, bright_threshold, max_size)
        elif region == "full":
            region = CropRegion.full_frame(seq.height, seq.width)
        else:
            raise InvalidArgumentError(f"Unknown crop mode '{region}'")
    curve = correlation_curve(seq, selection, region, tau)
    tau_c = fit_tau_c(curve)
    if tau_c is None:
        logging.info(
            SpeckleMessage(
                stage="analyze",
                target=f"frame {selection.indices[0]}",
                message="Curve does not decay or is too short; no tau_c",
            ).to_json()
        )
    return curve.model_copy(update={"tau_c": tau_c, "contrast_first_frame": speckle_contrast(anchor, region)})


def lag_separability(curves_by_label: dict[int, list[CorrelationCurve]]) -> pd.DataFrame:
    """One-way ANOVA of the coefficient at each lag across labelled groups.

    Returns:
        DataFrame with columns lag, f_statistic, p_value, one row per lag
        after the anchor, over lags that every curve shares.

    Raises:
        InvalidArgumentError: Fewer than two groups or a group with fewer
            than two curves.

    """
    groups = {label: curves for label, curves in curves_by_label.items() if curves}
    if len(groups) < 2 or any(len(curves) < 2 for curves in groups.values()):
        raise InvalidArgumentError("lag_separability needs at least two groups of two curves")
    points = min(len(curve.coefficients) for curves in groups.values() for curve in curves)
    lags = next(iter(groups.values()))[0].lags
    rows = []
    for k in range(1, points):
        samples = [[curve.coefficients[k] for curve in curves] for curves in groups.values()]
        result = stats.f_oneway(*samples)
        rows.append({"lag": lags[k], "f_statistic": float(result.statistic), "p_value": float(result.pvalue)})
    return pd.DataFrame(rows, columns=["lag", "f_statistic", "p_value"])
