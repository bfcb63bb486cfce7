"""Frame-wise embedding tracks, VAD masks, and per-meeting normalization.

A track is a (T, E) matrix of frame-wise speaker embeddings with a fixed
frame hop. Before clustering, tracks are normalized to zero mean (over
voiced frames) and unit length per frame.

Tracks are serialized in the FWE binary format (little-endian):

    magic "FWE1" | u32 T | u32 E | f32 hop_seconds | u8 flags |
    T*E f32 embeddings (row-major) | T f32 energies in dB (if flags bit0)

A whitespace text variant with header line "T E hop has_energy" followed
by one row per frame (E values, plus energy if has_energy) is accepted
as well.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

FWE_MAGIC = b"FWE1"

# Frames whose norm after mean subtraction falls below this are flagged
# as degenerate and excluded from clustering.
ZERO_NORM_EPS = 1e-9


@dataclass
class FrameEmbeddingTrack:
    """T frame-wise embeddings of dimension E at a fixed hop.

    ``zero_frames`` is populated by :func:`normalize_track` and marks
    frames that collapsed to zero after mean subtraction.
    """

    frames: np.ndarray
    hop_seconds: float
    energy_db: np.ndarray | None = None
    meeting_id: str = "meeting"
    zero_frames: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise DataError(f"frames must be 2-D, got shape {self.frames.shape}")
        t, e = self.frames.shape
        if t < 1 or e < 2:
            raise DataError(f"need T >= 1 and E >= 2, got T={t}, E={e}")
        if not np.all(np.isfinite(self.frames)):
            raise DataError("frames contain non-finite values")
        if not self.hop_seconds > 0:
            raise DataError(f"hop_seconds must be > 0, got {self.hop_seconds}")
        if self.energy_db is not None:
            self.energy_db = np.asarray(self.energy_db, dtype=np.float64)
            if self.energy_db.shape != (t,):
                raise DataError(
                    f"energy_db length {self.energy_db.shape} does not match T={t}"
                )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.num_frames * self.hop_seconds


@dataclass
class VadMask:
    """Boolean speech/silence decision per frame."""

    voiced: np.ndarray
    hop_seconds: float

    def __post_init__(self) -> None:
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.voiced.ndim != 1:
            raise DataError("voiced mask must be 1-D")
        if not self.hop_seconds > 0:
            raise DataError(f"hop_seconds must be > 0, got {self.hop_seconds}")

    def __len__(self) -> int:
        return len(self.voiced)


def all_voiced_mask(track: FrameEmbeddingTrack) -> VadMask:
    return VadMask(np.ones(track.num_frames, dtype=bool), track.hop_seconds)


def normalize_track(track: FrameEmbeddingTrack, mask: VadMask) -> FrameEmbeddingTrack:
    """Subtract the voiced-frame mean, then scale every frame to unit norm.

    The mean is estimated over voiced frames only (silence embeddings are
    out-of-distribution and never clustered) but subtracted from all
    frames. Frames whose centered norm falls below ``ZERO_NORM_EPS`` are
    returned as zero vectors and marked in ``zero_frames`` instead of
    raising, so degenerate inputs do not abort a run.
    """
    if len(mask) != track.num_frames:
        raise DataError(
            f"mask length {len(mask)} does not match track length {track.num_frames}"
        )
    n_voiced = int(mask.voiced.sum())
    if n_voiced < 2:
        raise DataError(f"need at least 2 voiced frames to normalize, got {n_voiced}")

    mean = track.frames[mask.voiced].mean(axis=0)
    centered = track.frames - mean
    norms = np.linalg.norm(centered, axis=1)
    zero = norms < ZERO_NORM_EPS
    safe = np.where(zero, 1.0, norms)
    out = centered / safe[:, None]
    out[zero] = 0.0
    return FrameEmbeddingTrack(
        frames=out,
        hop_seconds=track.hop_seconds,
        energy_db=None if track.energy_db is None else track.energy_db.copy(),
        meeting_id=track.meeting_id,
        zero_frames=zero,
    )


# ---------------------------------------------------------------------------
# FWE serialization
# ---------------------------------------------------------------------------

def write_fwe(track: FrameEmbeddingTrack, path: str | Path) -> None:
    """Write a track in the FWE binary format."""
    path = Path(path)
    t, e = track.frames.shape
    flags = 1 if track.energy_db is not None else 0
    with open(path, "wb") as fh:
        fh.write(FWE_MAGIC)
        fh.write(struct.pack("<IIfB", t, e, float(track.hop_seconds), flags))
        fh.write(track.frames.astype("<f4").tobytes(order="C"))
        if track.energy_db is not None:
            fh.write(track.energy_db.astype("<f4").tobytes())


def write_fwe_text(track: FrameEmbeddingTrack, path: str | Path) -> None:
    """Write a track in the whitespace text variant (test convenience)."""
    path = Path(path)
    t, e = track.frames.shape
    has_energy = int(track.energy_db is not None)
    with open(path, "w") as fh:
        fh.write(f"{t} {e} {track.hop_seconds!r} {has_energy}\n")
        for i in range(t):
            row = " ".join(repr(float(v)) for v in track.frames[i])
            if has_energy:
                row += f" {float(track.energy_db[i])!r}"
            fh.write(row + "\n")


def read_fwe(path: str | Path) -> FrameEmbeddingTrack:
    """Read a track from an FWE file, auto-detecting binary vs text."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == FWE_MAGIC:
            return _read_fwe_binary(fh, path)
    return _read_fwe_text(path)


def _read_fwe_binary(fh, path: Path) -> FrameEmbeddingTrack:
    header = fh.read(13)
    if len(header) != 13:
        raise DataError(f"{path}: truncated FWE header")
    t, e, hop, flags = struct.unpack("<IIfB", header)
    n = t * e
    payload = fh.read(4 * n)
    if len(payload) != 4 * n:
        raise DataError(f"{path}: truncated FWE payload")
    frames = np.frombuffer(payload, dtype="<f4", count=n).reshape(t, e).astype(np.float64)
    energy = None
    if flags & 1:
        block = fh.read(4 * t)
        if len(block) != 4 * t:
            raise DataError(f"{path}: truncated FWE energy block")
        energy = np.frombuffer(block, dtype="<f4", count=t).astype(np.float64)
    return FrameEmbeddingTrack(frames, float(hop), energy, meeting_id=path.stem)


def _read_fwe_text(path: Path) -> FrameEmbeddingTrack:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty FWE text file")
    head = lines[0].split()
    if len(head) != 4:
        raise DataError(f"{path}: bad FWE text header {lines[0]!r}")
    try:
        t, e, hop, has_energy = int(head[0]), int(head[1]), float(head[2]), int(head[3])
    except ValueError as exc:
        raise DataError(f"{path}: bad FWE text header {lines[0]!r}") from exc
    if len(lines) - 1 != t:
        raise DataError(f"{path}: expected {t} rows, found {len(lines) - 1}")
    want = e + (1 if has_energy else 0)
    rows = np.empty((t, want))
    for i, ln in enumerate(lines[1:]):
        vals = ln.split()
        if len(vals) != want:
            raise DataError(f"{path}: row {i} has {len(vals)} values, expected {want}")
        rows[i] = [float(v) for v in vals]
    energy = rows[:, e] if has_energy else None
    return FrameEmbeddingTrack(rows[:, :e].copy(), hop, energy, meeting_id=path.stem)
