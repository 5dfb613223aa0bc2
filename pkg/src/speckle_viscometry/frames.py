"""In-memory frame sequences."""

from dataclasses import dataclass

import numpy as np

from speckle_viscometry.errors import EmptySequenceError, InvariantViolationError
from speckle_viscometry.models import Channel, SequenceManifest


@dataclass
class FrameSequence:
    """Ordered single-channel 8-bit frames plus capture timing.

    Attributes:
        frames: uint8 array of shape (N, H, W).
        fps: Capture frame rate.
        shutter_s: Exposure time of each frame.
        channel: Channel the frames were taken from.

    """

    frames: np.ndarray
    fps: float
    shutter_s: float
    channel: Channel = Channel.gray

    def __post_init__(self) -> None:
        """Check shape and dtype."""
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 3:
            raise InvariantViolationError(f"frames must have shape (N, H, W), got {self.frames.shape}")
        if self.frames.shape[0] == 0:
            raise EmptySequenceError("Sequence holds no frames")
        if self.frames.dtype != np.uint8:
            raise InvariantViolationError(f"frames must be uint8, got {self.frames.dtype}")
        if self.fps <= 0 or self.shutter_s <= 0:
            raise InvariantViolationError("fps and shutter_s must be positive")
        self.channel = Channel(self.channel)

    def __len__(self) -> int:
        """Number of frames."""
        return int(self.frames.shape[0])

    @property
    def height(self) -> int:
        """Frame height in pixels."""
        return int(self.frames.shape[1])

    @property
    def width(self) -> int:
        """Frame width in pixels."""
        return int(self.frames.shape[2])

    def manifest(self) -> SequenceManifest:
        """Metadata describing this sequence on disk."""
        return SequenceManifest(
            fps=self.fps,
            shutter_s=self.shutter_s,
            width=self.width,
            height=self.height,
            channel=self.channel,
            frame_count=len(self),
        )

    def with_frames(self, frames: np.ndarray) -> "FrameSequence":
        """Copy timing and channel onto a new frame stack."""
        return FrameSequence(frames=frames, fps=self.fps, shutter_s=self.shutter_s, channel=self.channel)


@dataclass
class RgbSequence:
    """Ordered 8-bit RGB frames of shape (N, H, W, 3)."""

    frames: np.ndarray
    fps: float
    shutter_s: float

    def __post_init__(self) -> None:
        """Check shape and dtype."""
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise InvariantViolationError(f"RGB frames must have shape (N, H, W, 3), got {self.frames.shape}")
        if self.frames.shape[0] == 0:
            raise EmptySequenceError("Sequence holds no frames")
        if self.frames.dtype != np.uint8:
            raise InvariantViolationError(f"frames must be uint8, got {self.frames.dtype}")

    def __len__(self) -> int:
        """Number of frames."""
        return int(self.frames.shape[0])

    def manifest(self) -> SequenceManifest:
        """Metadata describing this sequence on disk."""
        return SequenceManifest(
            fps=self.fps,
            shutter_s=self.shutter_s,
            width=int(self.frames.shape[2]),
            height=int(self.frames.shape[1]),
            channel=Channel.rgb,
            frame_count=len(self),
        )
