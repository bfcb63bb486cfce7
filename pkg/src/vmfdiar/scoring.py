"""Diarization error rate with collar and region-restricted scoring.

The scorer partitions the time axis on the union of all reference and
hypothesis segment boundaries (plus collar edges), maps hypothesis
speakers to reference speakers once per meeting by maximizing the total
time of correct attribution, and accumulates missed speech, false alarm,
and confusion per the time-weighted multi-speaker convention:

    missed    += dur * max(0, n_ref - n_hyp)
    falsealarm+= dur * max(0, n_hyp - n_ref)
    confusion += dur * (min(n_ref, n_hyp) - n_correct)

where n_correct counts hypothesis speakers whose mapped reference
speaker is active in the cell. Scored speech is reference speaker time.

Region restriction selects scoring cells by reference speaker count:
"overlap" keeps cells with >= 2 active reference speakers, "single"
keeps the rest (<= 1, including reference silence, so that the single
and overlap error components sum exactly to the overall errors).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError

REGIONS = ("all", "single", "overlap")


@dataclass
class ReferenceAnnotation:
    """Speaker segments (possibly overlapping in time) of one meeting."""

    segments: list[tuple[str, float, float]]
    meeting_id: str = "meeting"

    def __post_init__(self) -> None:
        cleaned = []
        for spk, onset, offset in self.segments:
            onset, offset = float(onset), float(offset)
            if not onset < offset:
                raise DataError(f"segment ({spk}, {onset}, {offset}) has onset >= offset")
            if onset < 0:
                raise DataError(f"segment ({spk}, {onset}, {offset}) has negative onset")
            cleaned.append((str(spk), onset, offset))
        self.segments = sorted(cleaned, key=lambda s: (s[1], s[2], s[0]))

    @property
    def speakers(self) -> list[str]:
        return sorted({s[0] for s in self.segments})

    @property
    def end_time(self) -> float:
        return max((s[2] for s in self.segments), default=0.0)

    def total_speech(self) -> float:
        return sum(s[2] - s[1] for s in self.segments)


@dataclass
class DerReport:
    missed: float
    false_alarm: float
    confusion: float
    scored_speech: float
    der: float = field(init=False)

    def __post_init__(self) -> None:
        if self.scored_speech <= 0:
            raise DataError("scored speech time is zero; DER undefined")
        self.der = (self.missed + self.false_alarm + self.confusion) / self.scored_speech


def _merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _speaker_membership(
    ann: ReferenceAnnotation, speakers: Sequence[str], edges: np.ndarray
) -> np.ndarray:
    """(num_speakers, num_cells) activity booleans on the cell lattice."""
    index = {s: i for i, s in enumerate(speakers)}
    member = np.zeros((len(speakers), len(edges) - 1), dtype=bool)
    for spk, onset, offset in ann.segments:
        lo = np.searchsorted(edges, onset)
        hi = np.searchsorted(edges, offset)
        member[index[spk], lo:hi] = True
    return member


def compute_der(
    ref: ReferenceAnnotation,
    hyp: ReferenceAnnotation,
    collar_seconds: float = 0.0,
    region: str = "all",
) -> DerReport:
    """DER of ``hyp`` against ``ref`` on the selected region class.

    ``collar_seconds`` removes +-collar around every reference segment
    boundary from scoring. The speaker mapping is derived once on the
    full (region="all") scored lattice and reused for the single/overlap
    decomposition so the three region scores are consistent.
    """
    if region not in REGIONS:
        raise DataError(f"region must be one of {REGIONS}, got {region!r}")
    if collar_seconds < 0:
        raise DataError(f"collar must be >= 0, got {collar_seconds}")
    if not ref.segments:
        raise DataError("reference annotation is empty; DER undefined")

    boundaries = {0.0}
    for ann in (ref, hyp):
        for _, onset, offset in ann.segments:
            boundaries.add(onset)
            boundaries.add(offset)
    collar_zones: list[tuple[float, float]] = []
    if collar_seconds > 0:
        for _, onset, offset in ref.segments:
            for b in (onset, offset):
                collar_zones.append((max(0.0, b - collar_seconds), b + collar_seconds))
        collar_zones = _merge_intervals(collar_zones)
        for a, b in collar_zones:
            boundaries.add(a)
            boundaries.add(b)
    edges = np.array(sorted(boundaries))
    if len(edges) < 2:
        raise DataError("reference annotation is empty; DER undefined")
    dur = np.diff(edges)

    scored = np.ones(len(dur), dtype=bool)
    for a, b in collar_zones:
        lo = np.searchsorted(edges, a)
        hi = np.searchsorted(edges, b)
        scored[lo:hi] = False

    ref_spk = ref.speakers
    hyp_spk = hyp.speakers
    r = _speaker_membership(ref, ref_spk, edges)
    h = _speaker_membership(hyp, hyp_spk, edges)
    n_ref = r.sum(axis=0)
    n_hyp = h.sum(axis=0)

    # One global mapping maximizing correctly attributed time on the
    # collar-excluded, unrestricted lattice.
    mapped = np.zeros(len(dur), dtype=np.float64)
    if ref_spk and hyp_spk:
        w = dur * scored
        overlap_time = (r[:, None, :] & h[None, :, :]) @ w
        rows, cols = linear_sum_assignment(overlap_time, maximize=True)
        pairs = list(zip(rows, cols))
        for ri, hj in pairs:
            mapped += (r[ri] & h[hj]) * 1.0

    if region == "single":
        cells = scored & (n_ref <= 1)
    elif region == "overlap":
        cells = scored & (n_ref >= 2)
    else:
        cells = scored

    d = dur[cells]
    nr = n_ref[cells]
    nh = n_hyp[cells]
    ncorr = mapped[cells]
    missed = float(np.sum(d * np.maximum(0, nr - nh)))
    false_alarm = float(np.sum(d * np.maximum(0, nh - nr)))
    confusion = float(np.sum(d * (np.minimum(nr, nh) - ncorr)))
    scored_speech = float(np.sum(d * nr))
    return DerReport(missed, false_alarm, confusion, scored_speech)


def reference_overlap_regions(ann: ReferenceAnnotation) -> list[tuple[float, float]]:
    """Intervals where the annotation has >= 2 distinct active speakers."""
    edges = sorted({t for _, onset, offset in ann.segments for t in (onset, offset)})
    if len(edges) < 2:
        return []
    member = _speaker_membership(ann, ann.speakers, np.array(edges))
    counts = member.sum(axis=0)
    raw = [
        (edges[i], edges[i + 1]) for i in range(len(counts)) if counts[i] >= 2
    ]
    return _merge_intervals(raw)


# ---------------------------------------------------------------------------
# RTTM I/O
# ---------------------------------------------------------------------------

def parse_rttm(path: str | Path) -> ReferenceAnnotation:
    """Parse SPEAKER records from an RTTM file; other record types are
    ignored. Raises with the offending line number on malformed input."""
    path = Path(path)
    segments = []
    meeting_id = path.stem
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";;"):
                continue
            fields = line.split()
            if fields[0] != "SPEAKER":
                continue
            if len(fields) < 8:
                raise DataError(f"{path}:{lineno}: malformed RTTM line {line!r}")
            try:
                onset = float(fields[3])
                duration = float(fields[4])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed RTTM line {line!r}") from exc
            if duration <= 0:
                raise DataError(f"{path}:{lineno}: non-positive duration {duration}")
            meeting_id = fields[1]
            segments.append((fields[7], onset, onset + duration))
    return ReferenceAnnotation(segments, meeting_id=meeting_id)


def rttm_lines(ann: ReferenceAnnotation) -> list[str]:
    return [
        f"SPEAKER {ann.meeting_id} 1 {onset:.3f} {offset - onset:.3f} "
        f"<NA> <NA> {spk} <NA> <NA>"
        for spk, onset, offset in ann.segments
    ]


def write_rttm(ann: ReferenceAnnotation, path: str | Path) -> None:
    with open(path, "w") as fh:
        for line in rttm_lines(ann):
            fh.write(line + "\n")


def format_der_report(report: DerReport, label: str = "") -> str:
    """Human-readable summary followed by machine-readable key=value lines."""
    tag = f" [{label}]" if label else ""
    lines = [
        f"DER {report.der:.3f}{tag} "
        f"(missed {report.missed:.3f}s, false alarm {report.false_alarm:.3f}s, "
        f"confusion {report.confusion:.3f}s, scored {report.scored_speech:.3f}s)",
        f"missed_seconds={report.missed!r}",
        f"false_alarm_seconds={report.false_alarm!r}",
        f"confusion_seconds={report.confusion!r}",
        f"scored_speech_seconds={report.scored_speech!r}",
        f"der={report.der!r}",
    ]
    return "\n".join(lines)
