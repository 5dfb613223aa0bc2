"""Smartphone capture distortions: PWM flicker, rolling-shutter bars and skew, lighting.

The corpus generator composes them in a fixed order: flicker, bars, skew, lighting.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from speckle_viscometry.frames import FrameSequence
from speckle_viscometry.models import CaptureArtifactConfig
from speckle_viscometry.utils import SpeckleMessage, rng_stream

NOISE_FLOOR = 2
DARK_RESIDUAL = 0.05
SKEW_STREAM = 10


@dataclass
class ArtifactLog:
    """Frame indices touched by each distortion."""

    dark_frames: list[int] = field(default_factory=list)
    bar_frames: dict[int, tuple[int, int]] = field(default_factory=dict)
    skewed_frames: list[int] = field(default_factory=list)


def flicker_on_frames(cfg: CaptureArtifactConfig) -> int:
    """Number of ON frames at the start of each flicker period (at least one)."""
    return max(1, int(np.floor(cfg.flicker_duty * cfg.flicker_period_frames + 1e-9)))


def flicker_schedule(cfg: CaptureArtifactConfig, frame_count: int) -> np.ndarray:
    """Boolean mask of ON frames; each period starts ON."""
    return (np.arange(frame_count) % cfg.flicker_period_frames) < flicker_on_frames(cfg)


def bar_rows(cfg: CaptureArtifactConfig, frame_index: int, height: int) -> tuple[int, int] | None:
    """Row span [start, stop) obscured by the bar in a frame, or None.

    A bar event starts every bar_period_frames and lasts bar_sweep_frames; the
    band moves down evenly from the top edge to the bottom edge of the frame.
    """
    phase = frame_index % cfg.bar_period_frames
    if phase >= cfg.bar_sweep_frames:
        return None
    band = min(height, max(1, int(round(cfg.bar_width_frac * height))))
    travel = height - band
    offset = int(round(phase * travel / max(1, cfg.bar_sweep_frames - 1)))
    return offset, offset + band


def apply_flicker(seq: FrameSequence, cfg: CaptureArtifactConfig, log: ArtifactLog | None = None) -> FrameSequence:
    """Replace OFF-phase frames with dark frames.

    Dark pixels keep 5% of the speckle content on top of the noise floor.
    """
    on = flicker_schedule(cfg, len(seq))
    frames = seq.frames.copy()
    off = np.flatnonzero(~on)
    if off.size:
        dark = np.rint(DARK_RESIDUAL * seq.frames[off].astype(np.float64) + NOISE_FLOOR)
        frames[off] = np.clip(dark, 0, 255).astype(np.uint8)
    if log is not None:
        log.dark_frames.extend(int(i) for i in off)
    return seq.with_frames(frames)


def apply_bars(seq: FrameSequence, cfg: CaptureArtifactConfig, log: ArtifactLog | None = None) -> FrameSequence:
    """Sweep a horizontal dark band down the frame at every bar event."""
    frames = seq.frames.copy()
    for i in range(len(seq)):
        span = bar_rows(cfg, i, seq.height)
        if span is None:
            continue
        frames[i, span[0] : span[1], :] = NOISE_FLOOR
        if log is not None:
            log.bar_frames[i] = span
    return seq.with_frames(frames)


def skew_frame(frame: np.ndarray, shift_px: int) -> np.ndarray:
    """Shear a frame: row r moves right by round(shift_px * r / H); vacated pixels at the noise floor."""
    height, width = frame.shape
    out = np.full_like(frame, NOISE_FLOOR)
    for r in range(height):
        shift = int(np.floor(shift_px * r / height + 0.5))
        if shift >= width:
            continue
        out[r, shift:] = frame[r, : width - shift]
    return out


def apply_skew(
    seq: FrameSequence,
    cfg: CaptureArtifactConfig,
    rng: np.random.Generator | None = None,
    log: ArtifactLog | None = None,
) -> FrameSequence:
    """Shear randomly chosen frames.

    Each frame is skewed with probability skew_event_prob. The event draw uses
    the (seed, SKEW_STREAM) stream unless an explicit generator is passed.
    """
    if cfg.skew_event_prob == 0 or cfg.skew_max_px == 0:
        return seq.with_frames(seq.frames.copy())
    if rng is None:
        rng = rng_stream(cfg.seed, SKEW_STREAM)
    events = rng.random(len(seq)) < cfg.skew_event_prob
    frames = seq.frames.copy()
    for i in np.flatnonzero(events):
        frames[i] = skew_frame(seq.frames[i], cfg.skew_max_px)
    if log is not None:
        log.skewed_frames.extend(int(i) for i in np.flatnonzero(events))
    return seq.with_frames(frames)


def apply_lighting(seq: FrameSequence, cfg: CaptureArtifactConfig) -> FrameSequence:
    """Apply distance attenuation and background light: clamp(a * p + offset)."""
    if cfg.attenuation == 1.0 and cfg.background_lux_offset == 0:
        return seq.with_frames(seq.frames.copy())
    lit = np.rint(cfg.attenuation * seq.frames.astype(np.float64) + cfg.background_lux_offset)
    return seq.with_frames(np.clip(lit, 0, 255).astype(np.uint8))


def distort(seq: FrameSequence, cfg: CaptureArtifactConfig, log: ArtifactLog | None = None) -> FrameSequence:
    """Apply the enabled distortions in the order flicker, bars, skew, lighting.

    Args:
        seq: Clean sequence.
        cfg: Distortion parameters and switches.
        log: Optional event log filled with the touched frame indices.

    Returns:
        The distorted sequence; frame count and size are unchanged.

    """
    out = seq
    if cfg.flicker:
        out = apply_flicker(out, cfg, log)
    if cfg.bars:
        out = apply_bars(out, cfg, log)
    if cfg.skew:
        out = apply_skew(out, cfg, log=log)
    out = apply_lighting(out, cfg)
    logging.info(
        SpeckleMessage(
            stage="distort",
            target=f"seed={cfg.seed}",
            message=f"Distorted {len(seq)} frames (flicker={cfg.flicker}, bars={cfg.bars}, skew={cfg.skew})",
        ).to_json()
    )
    return out
