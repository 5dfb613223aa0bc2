"""On-disk frame sequences (binary PGM/PPM plus metadata.json), channel extraction and trimming."""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from speckle_viscometry.errors import (
    EmptySequenceError,
    FrameStoreError,
    InvalidArgumentError,
    InvariantViolationError,
    MalformedFrameError,
    MissingFrameError,
    MissingMetadataError,
    SequenceTooShortError,
)
from speckle_viscometry.frames import FrameSequence, RgbSequence
from speckle_viscometry.models import Channel, SequenceManifest
from speckle_viscometry.utils import SpeckleMessage, frame_filename, load_model, resolve_threads

METADATA_FILE = "metadata.json"
MAXVAL = 255
N_SELECT = 10
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def encode_pnm(image: np.ndarray) -> bytes:
    """Encode a uint8 (H, W) image as P5 or an (H, W, 3) image as P6."""
    if image.dtype != np.uint8:
        raise InvariantViolationError(f"frames must be uint8, got {image.dtype}")
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise InvariantViolationError(f"cannot encode image of shape {image.shape}")
    height, width = image.shape[:2]
    header = magic + b"\n%d %d\n%d\n" % (width, height, MAXVAL)
    return header + np.ascontiguousarray(image).tobytes()


def _header_tokens(data: bytes, path: str) -> tuple[list[bytes], int]:
    """Read the four header tokens, skipping comments; return them and the raster offset."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise MalformedFrameError(path, "truncated header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise MalformedFrameError(path, "truncated header")
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # one whitespace byte separates maxval from the raster
    if pos >= len(data):
        raise MalformedFrameError(path, "missing raster")
    return tokens, pos + 1


def decode_pnm(data: bytes, path: str = "<bytes>") -> np.ndarray:
    """Decode binary P5/P6 bytes with maxval 255.

    Raises:
        MalformedFrameError: Unknown magic, bad dimensions, maxval other than 255,
            or a raster of the wrong length.

    """
    tokens, offset = _header_tokens(data, path)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise MalformedFrameError(path, f"unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise MalformedFrameError(path, "non-numeric header field") from e
    if width < 1 or height < 1:
        raise MalformedFrameError(path, f"invalid size {width}x{height}")
    if maxval != MAXVAL:
        raise MalformedFrameError(path, f"maxval {maxval} is not 255")
    planes = 1 if magic == b"P5" else 3
    expected = width * height * planes
    raster = data[offset:]
    if len(raster) != expected:
        raise MalformedFrameError(path, f"raster has {len(raster)} bytes, expected {expected}")
    image = np.frombuffer(raster, dtype=np.uint8)
    if planes == 1:
        return image.reshape(height, width).copy()
    return image.reshape(height, width, 3).copy()


def _write_frames(frames: np.ndarray, manifest: SequenceManifest, directory: str, extension: str) -> SequenceManifest:
    """Write frame files and metadata.json."""
    try:
        os.makedirs(directory, exist_ok=True)
        for i, frame in enumerate(frames):
            with open(os.path.join(directory, frame_filename(i, extension)), "wb") as f:
                f.write(encode_pnm(frame))
        with open(os.path.join(directory, METADATA_FILE), "w", encoding="utf-8") as f:
            f.write(manifest.model_dump_json(indent=2))
    except OSError as e:
        raise FrameStoreError(f"Cannot write sequence to {directory}: {e}") from e
    logging.info(
        SpeckleMessage(stage="framestore", target=directory, message=f"Wrote {len(frames)} frames").to_json()
    )
    return manifest


def write_sequence(
    seq: FrameSequence | list[np.ndarray], directory: str, fps: float = 30.0, shutter_s: float | None = None
) -> SequenceManifest:
    """Write a gray sequence as frame_%06d.pgm files plus metadata.json.

    Args:
        seq: A FrameSequence, or a list of 2-D uint8 frames (timing from fps/shutter_s).
        directory: Target directory, created if missing.
        fps: Frame rate used when seq is a plain list.
        shutter_s: Shutter time used when seq is a plain list; defaults to 1 / fps.

    Returns:
        The manifest written to metadata.json.

    Raises:
        InvariantViolationError: Frames of mixed size or a non-uint8 frame.
        EmptySequenceError: No frames.
        FrameStoreError: The directory is not writable.

    """
    if not isinstance(seq, FrameSequence):
        frames = list(seq)
        if not frames:
            raise EmptySequenceError("Cannot write an empty sequence")
        if len({np.asarray(f).shape for f in frames}) != 1:
            raise InvariantViolationError("All frames must have the same dimensions")
        seq = FrameSequence(np.stack(frames), fps=fps, shutter_s=shutter_s or 1.0 / fps)
    return _write_frames(seq.frames, seq.manifest(), directory, "pgm")


def write_rgb_sequence(seq: RgbSequence, directory: str) -> SequenceManifest:
    """Write an RGB sequence as frame_%06d.ppm files plus metadata.json."""
    return _write_frames(seq.frames, seq.manifest(), directory, "ppm")


def read_manifest(directory: str) -> SequenceManifest:
    """Read and validate metadata.json of a sequence directory."""
    path = os.path.join(directory, METADATA_FILE)
    if not os.path.isfile(path):
        raise MissingMetadataError(f"No {METADATA_FILE} in {directory}")
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise MissingMetadataError(f"Unreadable {path}: {e}") from e
    try:
        return load_model(SequenceManifest, document)
    except InvalidArgumentError as e:
        raise MissingMetadataError(f"Invalid {path}: {e}") from e


def _read_frames(directory: str, manifest: SequenceManifest, extension: str, threads: int | None) -> np.ndarray:
    """Read all frames named by a manifest, checking presence first."""
    if manifest.frame_count == 0:
        raise EmptySequenceError(f"Sequence in {directory} has frame_count 0")
    paths = [os.path.join(directory, frame_filename(i, extension)) for i in range(manifest.frame_count)]
    for i, path in enumerate(paths):
        if not os.path.isfile(path):
            raise MissingFrameError(i, path)

    def read_one(path: str) -> np.ndarray:
        """Decode one file and check its size against the manifest."""
        with open(path, "rb") as f:
            image = decode_pnm(f.read(), path)
        if image.shape[0] != manifest.height or image.shape[1] != manifest.width:
            raise MalformedFrameError(
                path, f"size {image.shape[1]}x{image.shape[0]} differs from metadata {manifest.width}x{manifest.height}"
            )
        return image

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        images = list(executor.map(read_one, paths))
    return np.stack(images)


def read_sequence(directory: str, threads: int | None = None) -> FrameSequence:
    """Read a gray PGM sequence.

    Raises:
        MissingMetadataError: metadata.json absent or invalid.
        EmptySequenceError: frame_count is 0.
        MissingFrameError: A frame file is absent; names the first missing index.
        MalformedFrameError: A file is not a valid 8-bit P5 of the stated size.

    """
    manifest = read_manifest(directory)
    if manifest.channel == Channel.rgb:
        raise InvalidArgumentError(f"{directory} holds an RGB sequence; use read_rgb_sequence or preprocess")
    frames = _read_frames(directory, manifest, "pgm", threads)
    if frames.ndim != 3:
        raise MalformedFrameError(directory, "expected single-channel P5 frames")
    return FrameSequence(frames=frames, fps=manifest.fps, shutter_s=manifest.shutter_s, channel=manifest.channel)


def read_rgb_sequence(directory: str, threads: int | None = None) -> RgbSequence:
    """Read an RGB PPM sequence written by write_rgb_sequence."""
    manifest = read_manifest(directory)
    if manifest.channel != Channel.rgb:
        raise InvalidArgumentError(f"{directory} holds a {manifest.channel.value} sequence, not rgb")
    frames = _read_frames(directory, manifest, "ppm", threads)
    if frames.ndim != 4:
        raise MalformedFrameError(directory, "expected three-channel P6 frames")
    return RgbSequence(frames=frames, fps=manifest.fps, shutter_s=manifest.shutter_s)


def extract_channel(seq: RgbSequence, channel: Channel | str = Channel.blue) -> FrameSequence:
    """Select one plane of an RGB sequence; gray is the rounded BT.601 luma."""
    channel = Channel(channel)
    if channel == Channel.rgb:
        raise InvalidArgumentError("extract_channel needs a single channel")
    if channel == Channel.gray:
        luma = np.tensordot(seq.frames.astype(np.float64), np.array(LUMA_WEIGHTS), axes=([3], [0]))
        planes = np.clip(np.rint(luma), 0, 255).astype(np.uint8)
    else:
        index = {Channel.red: 0, Channel.green: 1, Channel.blue: 2}[channel]
        planes = np.ascontiguousarray(seq.frames[..., index])
    return FrameSequence(frames=planes, fps=seq.fps, shutter_s=seq.shutter_s, channel=channel)


def trim_transient(
    seq: FrameSequence, leading_s: float = 5.0, trailing_s: float = 5.0, min_frames: int = N_SELECT
) -> FrameSequence:
    """Drop round(leading_s * fps) leading and round(trailing_s * fps) trailing frames.

    Raises:
        InvalidArgumentError: Negative durations.
        SequenceTooShortError: Fewer than min_frames frames would remain.

    """
    if leading_s < 0 or trailing_s < 0:
        raise InvalidArgumentError("trim durations must be non-negative")
    lead = int(round(leading_s * seq.fps))
    trail = int(round(trailing_s * seq.fps))
    remaining = len(seq) - lead - trail
    if remaining < min_frames:
        raise SequenceTooShortError(max(remaining, 0), min_frames)
    if lead == 0 and trail == 0:
        return seq
    return seq.with_frames(seq.frames[lead : len(seq) - trail].copy())


def preprocess(
    directory: str,
    leading_s: float = 5.0,
    trailing_s: float = 5.0,
    channel: Channel | str = Channel.blue,
    threads: int | None = None,
) -> FrameSequence:
    """Read a sequence, keep one channel and discard the start/stop transients.

    RGB directories go through extract_channel; gray directories are used as is.
    """
    manifest = read_manifest(directory)
    if manifest.channel == Channel.rgb:
        seq = extract_channel(read_rgb_sequence(directory, threads), channel)
    else:
        seq = read_sequence(directory, threads)
    return trim_transient(seq, leading_s, trailing_s)
