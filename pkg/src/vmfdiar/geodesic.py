"""Geodesic interpolation targets between two speaker anchors.

For a frame with two active speakers, the target embedding is the point
on the chord between the anchor embeddings that is closest to the frame
estimate, pushed back onto the sphere and rescaled to the mean anchor
length. The overall objective sums squared distances to these targets on
overlap frames and to the plain anchors elsewhere.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DegenerateAnchorsError, DegenerateMidpointError
from .geometry import FrameEmbeddingTrack


class FrameKind(enum.Enum):
    SPK1 = "spk1"
    SPK2 = "spk2"
    OVERLAP = "overlap"


@dataclass
class SpeakerAnchorPair:
    """The two single-speaker anchor embeddings of an overlap region."""

    d1: np.ndarray
    d2: np.ndarray

    def __post_init__(self) -> None:
        self.d1 = np.asarray(self.d1, dtype=np.float64)
        self.d2 = np.asarray(self.d2, dtype=np.float64)
        if self.d1.shape != self.d2.shape or self.d1.ndim != 1:
            raise DataError(
                f"anchors must be 1-D and equally sized, got {self.d1.shape} / {self.d2.shape}"
            )
        if not (np.all(np.isfinite(self.d1)) and np.all(np.isfinite(self.d2))):
            raise DataError("anchors contain non-finite values")
        if np.linalg.norm(self.d1) == 0.0 or np.linalg.norm(self.d2) == 0.0:
            raise DataError("anchors must have nonzero norm")


def optimal_alpha(anchors: SpeakerAnchorPair, d_hat: np.ndarray) -> float:
    """Interpolation weight in [0, 1] minimizing ||a*d1 + (1-a)*d2 - d_hat||^2.

    The objective is a 1-D convex quadratic, so the constrained minimizer
    is the orthogonal projection clamped to [0, 1].
    """
    d_hat = np.asarray(d_hat, dtype=np.float64)
    diff = anchors.d1 - anchors.d2
    if np.all(np.abs(diff) <= 1e-12):
        raise DegenerateAnchorsError("d1 == d2: every interpolation weight is optimal")
    alpha = float(np.dot(d_hat - anchors.d2, diff) / np.dot(diff, diff))
    return min(1.0, max(0.0, alpha))


def geodesic_target(anchors: SpeakerAnchorPair, alpha: float) -> np.ndarray:
    """Chord point at ``alpha`` renormalized to the mean anchor length."""
    d = alpha * anchors.d1 + (1.0 - alpha) * anchors.d2
    norm = float(np.linalg.norm(d))
    if norm < 1e-9:
        raise DegenerateMidpointError(
            f"interpolation at alpha={alpha} has norm {norm:.3e} (antipodal anchors?)"
        )
    r = 0.5 * (np.linalg.norm(anchors.d1) + np.linalg.norm(anchors.d2))
    return (r / norm) * d


def geodesic_loss(
    track: FrameEmbeddingTrack,
    labels: Sequence[FrameKind],
    anchors: SpeakerAnchorPair,
) -> float:
    """Sum of per-frame squared errors under the three-way frame labeling.

    Overlap frames are compared against their rescaled geodesic target;
    single-speaker frames against the corresponding anchor. Summation is
    in ascending frame order so the result is deterministic.
    """
    if len(labels) != track.num_frames:
        raise DataError(
            f"labels length {len(labels)} does not match track length {track.num_frames}"
        )
    total = 0.0
    for t in range(track.num_frames):
        d_hat = track.frames[t]
        kind = labels[t]
        if kind is FrameKind.OVERLAP:
            target = geodesic_target(anchors, optimal_alpha(anchors, d_hat))
        elif kind is FrameKind.SPK1:
            target = anchors.d1
        elif kind is FrameKind.SPK2:
            target = anchors.d2
        else:
            raise DataError(f"unknown frame label {kind!r} at frame {t}")
        total += float(np.sum((target - d_hat) ** 2))
    return total
