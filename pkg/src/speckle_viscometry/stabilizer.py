"""Selection of usable speckle frames from a distorted capture.

The per-frame mean intensity trace shows the flicker as a high-frequency comb
and the rolling-shutter bars as low-frequency nulls. Peaks of the comb that
clear an amplitude threshold are candidates; the window of n consecutive
candidates with the smallest spread of trace values is selected.
"""

import logging
from dataclasses import dataclass

import numpy as np

from speckle_viscometry.errors import DegenerateTraceError, InsufficientPeaksError, InvalidArgumentError
from speckle_viscometry.frames import FrameSequence
from speckle_viscometry.models import FrameSelection
from speckle_viscometry.utils import SpeckleMessage

N_SELECT = 10
DEFAULT_THRESHOLD = 0.85


@dataclass(frozen=True)
class IntensityTrace:
    """Per-frame mean intensity and its min-max normalization."""

    values: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_values(cls, values) -> "IntensityTrace":
        """Build a trace from raw values.

        Raises:
            DegenerateTraceError: All values are equal.

        """
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise DegenerateTraceError("Trace is empty")
        low, high = float(values.min()), float(values.max())
        if not high > low:
            raise DegenerateTraceError("Trace is constant; normalization is undefined")
        return cls(values=values, normalized=(values - low) / (high - low))

    def __len__(self) -> int:
        """Number of frames in the trace."""
        return int(self.values.size)


def compute_trace(seq: FrameSequence) -> IntensityTrace:
    """Mean pixel value of every full frame."""
    return IntensityTrace.from_values(seq.frames.mean(axis=(1, 2), dtype=np.float64))


def find_peaks(trace: IntensityTrace) -> list[int]:
    """Interior local maxima of the trace.

    A sample is a peak when it is >= both neighbours. A plateau contributes its
    first index only, and a plateau that starts at index 0 is an endpoint.
    """
    values = trace.values
    peaks: list[int] = []
    n = values.size
    i = 1
    while i < n - 1:
        if values[i] > values[i - 1]:
            j = i
            while j + 1 < n and values[j + 1] == values[i]:
                j += 1
            if j == n - 1 or values[j + 1] < values[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def filter_threshold(peaks: list[int], trace: IntensityTrace, threshold: float = DEFAULT_THRESHOLD) -> list[int]:
    """Keep peaks whose normalized value is at least threshold."""
    return [p for p in peaks if trace.normalized[p] >= threshold]


def select_window(peaks: list[int], trace: IntensityTrace, n: int = N_SELECT) -> FrameSelection:
    """Window of n consecutive peaks with the smallest max - min of normalized values.

    Ties go to the earliest window.

    Raises:
        InvalidArgumentError: n < 1.
        InsufficientPeaksError: Fewer than n peaks.

    """
    if n < 1:
        raise InvalidArgumentError(f"window size must be >= 1, got {n}")
    if len(peaks) < n:
        raise InsufficientPeaksError(len(peaks), n)
    heights = trace.normalized[np.asarray(peaks)]
    windows = np.lib.stride_tricks.sliding_window_view(heights, n)
    spread = windows.max(axis=1) - windows.min(axis=1)
    start = int(np.argmin(spread))
    return FrameSelection(indices=[int(p) for p in peaks[start : start + n]], range_score=float(spread[start]))


def consecutive_selection(start: int = 0, n: int = N_SELECT) -> FrameSelection:
    """The frames start .. start + n - 1, used when no stabilization is needed."""
    return FrameSelection(indices=list(range(start, start + n)), range_score=0.0)


def stabilize(seq: FrameSequence, threshold: float = DEFAULT_THRESHOLD, n: int = N_SELECT) -> FrameSelection:
    """Run trace, peak detection, thresholding and window selection on a sequence.

    Args:
        seq: Distorted capture.
        threshold: Minimum normalized peak height.
        n: Number of frames to select.

    Returns:
        The selected frames.

    Raises:
        DegenerateTraceError: The sequence has constant brightness.
        InsufficientPeaksError: Fewer than n peaks clear the threshold.

    """
    trace = compute_trace(seq)
    peaks = find_peaks(trace)
    kept = filter_threshold(peaks, trace, threshold)
    if len(kept) < n:
        logging.warning(
            SpeckleMessage(
                stage="stabilize",
                target=f"{len(seq)} frames",
                message=f"Only {len(kept)} of {len(peaks)} peaks clear threshold {threshold}",
            ).to_json()
        )
    selection = select_window(kept, trace, n)
    logging.info(
        SpeckleMessage(
            stage="stabilize",
            target=f"{len(seq)} frames",
            message=f"Selected frames {selection.indices[0]}..{selection.indices[-1]} "
            f"(range {selection.range_score:.4f})",
        ).to_json()
    )
    return selection
