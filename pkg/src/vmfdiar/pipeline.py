"""End-to-end diarization of a frame-wise embedding track.

VAD -> per-meeting normalization -> clustering of voiced frames ->
activity decisions (hard labels for k-Means, thresholded posteriors for
the mixture model) -> morphological smoothing -> optional refinement
inside externally detected overlap regions -> RTTM segments.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .clustering import PosteriorMatrix, fit_vmfmm, spherical_kmeans
from .errors import DataError
from .geometry import FrameEmbeddingTrack, VadMask, normalize_track
from .scoring import ReferenceAnnotation

METHODS = ("kmeans", "vmfmm")
INITS = ("random", "overinit", "kmeans")
VAD_SOURCES = ("energy", "external", "none")


@dataclass
class ActivityMatrix:
    """Binary per-frame, per-speaker activity decisions."""

    active: np.ndarray  # (T, K) bool
    hop_seconds: float
    speaker_names: list[str]

    def __post_init__(self) -> None:
        self.active = np.asarray(self.active, dtype=bool)
        if self.active.ndim != 2:
            raise DataError("active must be a (T, K) boolean matrix")
        if len(self.speaker_names) != self.active.shape[1]:
            raise DataError("speaker_names length does not match K")
        if not self.hop_seconds > 0:
            raise DataError(f"hop_seconds must be > 0, got {self.hop_seconds}")

    @property
    def num_frames(self) -> int:
        return self.active.shape[0]

    @property
    def num_speakers(self) -> int:
        return self.active.shape[1]


@dataclass
class OverlapRegions:
    """Canonicalized (sorted, merged) externally detected overlap intervals."""

    intervals: list[tuple[float, float]]

    def __post_init__(self) -> None:
        cleaned = []
        for onset, offset in self.intervals:
            onset, offset = float(onset), float(offset)
            if not onset < offset:
                raise DataError(f"overlap region ({onset}, {offset}) has onset >= offset")
            if onset < 0:
                raise DataError(f"overlap region ({onset}, {offset}) has negative onset")
            cleaned.append((onset, offset))
        cleaned.sort()
        merged: list[tuple[float, float]] = []
        for a, b in cleaned:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        self.intervals = merged

    def __len__(self) -> int:
        return len(self.intervals)

    def frame_mask(self, num_frames: int, hop_seconds: float) -> np.ndarray:
        """Frames whose center falls inside any region."""
        centers = (np.arange(num_frames) + 0.5) * hop_seconds
        mask = np.zeros(num_frames, dtype=bool)
        for onset, offset in self.intervals:
            mask |= (centers >= onset) & (centers < offset)
        return mask


@dataclass
class DiarizeConfig:
    """All pipeline knobs; defaults follow the reference configuration
    (threshold 0.3, kappa_max 25, 50 EM iterations, 1.3 s / 1.0 s filters)."""

    num_speakers: int
    method: str = "vmfmm"
    init: str = "kmeans"
    em_iters: int = 50
    kappa_max: float = 25.0
    kappa_init: float = 10.0
    fuse_at: int = 20
    threshold: float = 0.3
    max_filter_seconds: float = 1.3
    min_filter_seconds: float = 1.0
    vad: str = "energy"
    vad_window_seconds: float = 2.0
    vad_offset_db: float = 10.0
    vad_mask: np.ndarray | None = None
    overlap_regions: OverlapRegions | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_speakers < 1:
            raise DataError(f"num_speakers must be >= 1, got {self.num_speakers}")
        if self.method not in METHODS:
            raise DataError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.init not in INITS:
            raise DataError(f"init must be one of {INITS}, got {self.init!r}")
        if self.vad not in VAD_SOURCES:
            raise DataError(f"vad must be one of {VAD_SOURCES}, got {self.vad!r}")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def energy_vad(
    energy_db: np.ndarray,
    hop: float,
    window_seconds: float = 2.0,
    offset_db: float = 10.0,
) -> VadMask:
    """Minimum-statistics energy VAD.

    The noise floor at frame t is the minimum energy over the trailing
    window; a frame is voiced iff its energy exceeds the floor by
    ``offset_db``. Deliberately conservative: it can only fire where the
    energy rises clear of the local minimum.
    """
    energy_db = np.asarray(energy_db, dtype=np.float64)
    if energy_db.ndim != 1 or energy_db.size < 1:
        raise DataError("energy_db must be a nonempty vector")
    if not np.all(np.isfinite(energy_db)):
        raise DataError("energy_db contains non-finite values")
    w = int(np.ceil(window_seconds / hop))
    w = max(w, 1)
    if w >= energy_db.size:
        floor = np.minimum.accumulate(energy_db)
    else:
        # trailing window [t-w+1, t]; 'nearest' padding reduces to the
        # clipped window minimum at the left edge
        origin = w // 2 - w + 1
        floor = minimum_filter1d(energy_db, size=w, mode="nearest", origin=origin)
    return VadMask(energy_db > floor + offset_db, hop)


def default_speaker_names(k: int) -> list[str]:
    return [f"spk{i}" for i in range(k)]


def labels_to_activity(
    labels: np.ndarray,
    voiced: np.ndarray,
    k: int,
    hop_seconds: float,
    speaker_names: list[str] | None = None,
) -> ActivityMatrix:
    """One-hot activity from hard cluster labels of the voiced frames."""
    voiced = np.asarray(voiced, dtype=bool)
    active = np.zeros((voiced.size, k), dtype=bool)
    active[np.flatnonzero(voiced), labels] = True
    return ActivityMatrix(active, hop_seconds, speaker_names or default_speaker_names(k))


def threshold_posteriors(
    gamma: PosteriorMatrix,
    theta: float = 0.3,
    hop_seconds: float = 0.01,
    speaker_names: list[str] | None = None,
) -> ActivityMatrix:
    """Speaker k is active where its affiliation reaches ``theta``; the
    argmax class is always active so no voiced frame is speaker-less.
    Unvoiced frames have no active class."""
    if not 0.0 < theta < 1.0:
        raise DataError(f"theta must lie in (0, 1), got {theta}")
    active = gamma.gamma >= theta
    argmax = gamma.gamma.argmax(axis=1)
    active[np.arange(active.shape[0]), argmax] = True
    active[~gamma.voiced] = False
    k = gamma.num_components
    return ActivityMatrix(active, hop_seconds, speaker_names or default_speaker_names(k))


def morph_filter(
    activity: ActivityMatrix,
    max_seconds: float = 1.3,
    min_seconds: float = 1.0,
) -> ActivityMatrix:
    """Centered sliding maximum then minimum per speaker channel.

    Fills activity gaps shorter than the max window and removes islands
    the min window erodes away; both filters zero-pad at the track
    boundaries. With max_seconds > min_seconds every surviving run also
    grows by (w1 - w2) / 2 frames per side.
    """
    hop = activity.hop_seconds
    w1 = int(round(max_seconds / hop))
    w2 = int(round(min_seconds / hop))
    if w1 < 1 or w2 < 1:
        raise DataError("filter windows must be at least one hop long")
    x = activity.active.astype(np.uint8)
    x = maximum_filter1d(x, size=w1, axis=0, mode="constant", cval=0)
    x = minimum_filter1d(x, size=w2, axis=0, mode="constant", cval=0)
    return ActivityMatrix(x.astype(bool), hop, list(activity.speaker_names))


def refine_with_overlap(
    activity: ActivityMatrix,
    gamma: PosteriorMatrix,
    regions: OverlapRegions,
) -> ActivityMatrix:
    """Inside every overlap region, exactly the two most likely classes
    of each voiced frame are set active; frames outside are unchanged."""
    if activity.num_speakers < 2:
        raise DataError("overlap refinement needs at least 2 speakers")
    if gamma.gamma.shape != (activity.num_frames, activity.num_speakers):
        raise DataError("posterior shape does not match activity matrix")
    span = activity.num_frames * activity.hop_seconds
    for onset, offset in regions.intervals:
        if offset > span + activity.hop_seconds:
            raise DataError(
                f"overlap region ({onset}, {offset}) extends past recording end {span:.3f}"
            )
    out = activity.active.copy()
    in_region = regions.frame_mask(activity.num_frames, activity.hop_seconds)
    rows = np.flatnonzero(in_region & gamma.voiced)
    if rows.size:
        top2 = np.argsort(gamma.gamma[rows], axis=1)[:, -2:]
        out[rows] = False
        out[rows[:, None], top2] = True
    return ActivityMatrix(out, activity.hop_seconds, list(activity.speaker_names))


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def diarize(
    track: FrameEmbeddingTrack, config: DiarizeConfig
) -> tuple[ActivityMatrix, PosteriorMatrix | None, dict]:
    """Run the full pipeline on one track.

    Returns the smoothed (and optionally overlap-refined) activity, the
    full-length posterior matrix for the mixture model (None for
    k-Means), and a diagnostics dict (voiced fraction, per-component
    kappa, log-likelihood trace, ...).
    """
    k = config.num_speakers
    mask = _resolve_vad(track, config)
    voiced = mask.voiced.copy()
    if int(voiced.sum()) < k:
        raise DataError(
            f"only {int(voiced.sum())} voiced frames for {k} speakers"
        )
    normalized = normalize_track(track, VadMask(voiced, track.hop_seconds))
    effective = voiced & ~normalized.zero_frames
    if int(effective.sum()) < k:
        raise DataError(
            f"only {int(effective.sum())} usable voiced frames for {k} speakers"
        )
    data = normalized.frames[effective]
    names = default_speaker_names(k)
    diagnostics: dict = {
        "meeting_id": track.meeting_id,
        "method": config.method,
        "voiced_fraction": float(voiced.mean()),
        "degenerate_frames": int((voiced & normalized.zero_frames).sum()),
    }

    posterior: PosteriorMatrix | None = None
    if config.method == "kmeans":
        result = spherical_kmeans(data, k, seed=config.seed)
        activity = labels_to_activity(
            result.labels, effective, k, track.hop_seconds, names
        )
        diagnostics["inertia"] = result.inertia
        diagnostics["kmeans_iterations"] = len(result.inertia_trace)
    else:
        params, post, trace = fit_vmfmm(
            data,
            k,
            init=config.init,
            em_iters=config.em_iters,
            kappa_max=config.kappa_max,
            kappa_init=config.kappa_init,
            fuse_at=config.fuse_at,
            fuse_threshold=config.threshold,
            seed=config.seed,
        )
        gamma_full = np.zeros((track.num_frames, k))
        gamma_full[effective] = post.gamma
        posterior = PosteriorMatrix(gamma_full, effective)
        activity = threshold_posteriors(
            posterior, config.threshold, track.hop_seconds, names
        )
        diagnostics["kappas"] = [float(v) for v in params.kappas]
        diagnostics["weights"] = [float(v) for v in params.weights]
        diagnostics["loglik_trace"] = [float(v) for v in trace]
        diagnostics["reseeded_components"] = list(params.reseeded)
        if params.fused_pair is not None:
            diagnostics["fused_pair"] = list(params.fused_pair)

    activity = morph_filter(
        activity, config.max_filter_seconds, config.min_filter_seconds
    )
    if config.overlap_regions is not None and len(config.overlap_regions):
        if posterior is None:
            raise DataError(
                "overlap refinement requires posterior affiliations (method=vmfmm)"
            )
        activity = refine_with_overlap(activity, posterior, config.overlap_regions)
    return activity, posterior, diagnostics


def _resolve_vad(track: FrameEmbeddingTrack, config: DiarizeConfig) -> VadMask:
    if config.vad == "energy":
        if track.energy_db is None:
            raise DataError("energy VAD requested but track has no energy")
        return energy_vad(
            track.energy_db,
            track.hop_seconds,
            window_seconds=config.vad_window_seconds,
            offset_db=config.vad_offset_db,
        )
    if config.vad == "external":
        if config.vad_mask is None:
            raise DataError("external VAD requested but no mask provided")
        mask = np.asarray(config.vad_mask, dtype=bool)
        if mask.shape != (track.num_frames,):
            raise DataError(
                f"external VAD mask length {mask.shape} does not match T={track.num_frames}"
            )
        return VadMask(mask, track.hop_seconds)
    return VadMask(np.ones(track.num_frames, dtype=bool), track.hop_seconds)


# ---------------------------------------------------------------------------
# Segment conversion / external files
# ---------------------------------------------------------------------------

def activity_to_annotation(activity: ActivityMatrix, meeting_id: str) -> ReferenceAnnotation:
    """Merge contiguous active frames into speaker segments."""
    hop = activity.hop_seconds
    segments = []
    for k, name in enumerate(activity.speaker_names):
        channel = activity.active[:, k]
        if not channel.any():
            continue
        padded = np.concatenate(([False], channel, [False]))
        flips = np.flatnonzero(padded[1:] != padded[:-1])
        for start, stop in zip(flips[::2], flips[1::2]):
            segments.append((name, start * hop, stop * hop))
    return ReferenceAnnotation(segments, meeting_id=meeting_id)


def read_vad_mask_file(path: str | Path, hop_seconds: float) -> VadMask:
    """External VAD mask: one 0/1 per line."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: expected 0 or 1, got {line!r}")
            values.append(line == "1")
    if not values:
        raise DataError(f"{path}: empty VAD mask file")
    return VadMask(np.array(values, dtype=bool), hop_seconds)


def read_overlap_regions_file(path: str | Path) -> OverlapRegions:
    """Overlap regions from 'onset offset' lines or RTTM SPEAKER records."""
    path = Path(path)
    intervals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";;"):
                continue
            fields = line.split()
            if fields[0] == "SPEAKER":
                if len(fields) < 5:
                    raise DataError(f"{path}:{lineno}: malformed RTTM line {line!r}")
                onset, duration = float(fields[3]), float(fields[4])
                intervals.append((onset, onset + duration))
            elif len(fields) == 2:
                intervals.append((float(fields[0]), float(fields[1])))
            else:
                raise DataError(
                    f"{path}:{lineno}: expected 'onset offset' or RTTM line, got {line!r}"
                )
    return OverlapRegions(intervals)
