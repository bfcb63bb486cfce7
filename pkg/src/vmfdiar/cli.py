"""Command-line interface: simulate, diarize, score, sweep-kappa.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All file outputs are byte-reproducible for a fixed seed.
"""
from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .geometry import read_fwe, write_fwe
from .pipeline import (
    DiarizeConfig,
    activity_to_annotation,
    diarize,
    read_overlap_regions_file,
    read_vad_mask_file,
)
from .scoring import compute_der, format_der_report, parse_rttm, write_rttm
from .synthdata import ALPHA_MODES, MeetingConfig, simulate_meeting

KAPPA_SWEEP_GRID = (10.0, 25.0, 50.0, 75.0, 100.0, 150.0, 200.0)
SWEEP_INITS = ("kmeans", "random")


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        raise _UsageExit(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="vmfdiar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic meeting")
    p.add_argument("--speakers", type=int, required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--duration", type=float, default=600.0)
    p.add_argument("--hop", type=float, default=0.01)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--silence", type=float, default=0.1)
    p.add_argument("--kappa", type=float, default=50.0)
    p.add_argument("--alpha-mode", choices=ALPHA_MODES, default="ramp")
    p.add_argument("--min-angle", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix (.fwe/.rttm appended)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diarize", help="diarize an embedding track")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--num-speakers", type=int, required=True)
    p.add_argument("--method", choices=("kmeans", "vmfmm"), default="vmfmm")
    p.add_argument("--init", choices=("random", "overinit", "kmeans"), default="kmeans")
    p.add_argument("--kappa-max", type=float, default=25.0)
    p.add_argument("--kappa-init", type=float, default=10.0)
    p.add_argument("--em-iters", type=int, default=50)
    p.add_argument("--fuse-at", type=int, default=20)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--max-filter", type=float, default=1.3)
    p.add_argument("--min-filter", type=float, default=1.0)
    p.add_argument("--vad", choices=("energy", "external", "none"), default="energy")
    p.add_argument("--vad-window", type=float, default=2.0)
    p.add_argument("--vad-offset", type=float, default=10.0)
    p.add_argument("--vad-mask", default=None, help="0/1-per-line mask for --vad external")
    p.add_argument("--overlap-regions", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="hypothesis RTTM path")
    p.add_argument("--diagnostics", default=None, help="report path (default: <output>.diag)")
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("score", help="score a hypothesis RTTM against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--region", choices=("all", "single", "overlap"), default="all")
    p.add_argument("--csv", default=None, help="append the result to this CSV")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep-kappa", help="DER over a kappa_max x init grid")
    p.add_argument("--embeddings", nargs="+", required=True)
    p.add_argument("--ref", nargs="+", required=True)
    p.add_argument("--num-speakers", type=int, required=True)
    p.add_argument("--em-iters", type=int, default=50)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--max-filter", type=float, default=1.3)
    p.add_argument("--min-filter", type=float, default=1.0)
    p.add_argument("--vad", choices=("energy", "external", "none"), default="energy")
    p.add_argument("--vad-window", type=float, default=2.0)
    p.add_argument("--vad-offset", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--csv", required=True, help="output CSV path")
    p.set_defaults(func=cmd_sweep_kappa)
    return parser


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    config = MeetingConfig(
        num_speakers=args.speakers,
        duration_seconds=args.duration,
        hop_seconds=args.hop,
        embedding_dim=args.dim,
        kappa_true=args.kappa,
        overlap_ratio=args.overlap,
        silence_ratio=args.silence,
        seed=args.seed,
        alpha_mode=args.alpha_mode,
        min_angle_deg=args.min_angle,
        meeting_id=Path(args.out).name,
    )
    track, annotation, truth = simulate_meeting(config, return_truth=True)
    out = Path(args.out)
    write_fwe(track, out.with_suffix(".fwe"))
    write_rttm(annotation, out.with_suffix(".rttm"))
    print(f"wrote {out.with_suffix('.fwe')} and {out.with_suffix('.rttm')}")
    print(f"realized_overlap_ratio={truth.realized_overlap!r}")
    print(f"realized_silence_ratio={truth.realized_silence!r}")
    return 0


def _diarize_config_from_args(args: argparse.Namespace) -> DiarizeConfig:
    overlap_regions = None
    if getattr(args, "overlap_regions", None):
        overlap_regions = read_overlap_regions_file(args.overlap_regions)
    vad_mask = None
    if getattr(args, "vad_mask", None):
        vad_mask = read_vad_mask_file(args.vad_mask, hop_seconds=1.0).voiced
    return DiarizeConfig(
        num_speakers=args.num_speakers,
        method=args.method,
        init=args.init,
        em_iters=args.em_iters,
        kappa_max=args.kappa_max,
        kappa_init=args.kappa_init,
        fuse_at=args.fuse_at,
        threshold=args.threshold,
        max_filter_seconds=args.max_filter,
        min_filter_seconds=args.min_filter,
        vad=args.vad,
        vad_window_seconds=args.vad_window,
        vad_offset_db=args.vad_offset,
        vad_mask=vad_mask,
        overlap_regions=overlap_regions,
        seed=args.seed,
    )


def _format_diagnostics(config: DiarizeConfig, diagnostics: dict) -> str:
    lines = [
        f"meeting_id={diagnostics['meeting_id']}",
        f"method={config.method}",
        f"init={config.init}",
        f"num_speakers={config.num_speakers}",
        f"em_iters={config.em_iters}",
        f"kappa_max={config.kappa_max!r}",
        f"kappa_init={config.kappa_init!r}",
        f"fuse_at={config.fuse_at}",
        f"threshold={config.threshold!r}",
        f"max_filter_seconds={config.max_filter_seconds!r}",
        f"min_filter_seconds={config.min_filter_seconds!r}",
        f"vad={config.vad}",
        f"vad_window_seconds={config.vad_window_seconds!r}",
        f"vad_offset_db={config.vad_offset_db!r}",
        f"seed={config.seed}",
        f"voiced_fraction={diagnostics['voiced_fraction']!r}",
        f"degenerate_frames={diagnostics['degenerate_frames']}",
    ]
    if "inertia" in diagnostics:
        lines.append(f"inertia={diagnostics['inertia']!r}")
        lines.append(f"kmeans_iterations={diagnostics['kmeans_iterations']}")
    if "kappas" in diagnostics:
        for k, v in enumerate(diagnostics["kappas"]):
            lines.append(f"kappa_{k}={v!r}")
        for k, v in enumerate(diagnostics["weights"]):
            lines.append(f"weight_{k}={v!r}")
        lines.append(
            "reseeded_components="
            + (",".join(str(v) for v in diagnostics["reseeded_components"]) or "none")
        )
        if "fused_pair" in diagnostics:
            lines.append(
                "fused_pair=" + ",".join(str(v) for v in diagnostics["fused_pair"])
            )
        for i, v in enumerate(diagnostics["loglik_trace"]):
            lines.append(f"loglik_{i}={v!r}")
    return "\n".join(lines) + "\n"


def cmd_diarize(args: argparse.Namespace) -> int:
    config = _diarize_config_from_args(args)
    track = read_fwe(args.embeddings)
    if config.vad_mask is not None and config.vad_mask.shape != (track.num_frames,):
        raise DataError(
            f"external VAD mask has {config.vad_mask.shape[0]} entries, "
            f"track has {track.num_frames} frames"
        )
    activity, _, diagnostics = diarize(track, config)
    annotation = activity_to_annotation(activity, track.meeting_id)
    write_rttm(annotation, args.output)
    diag_path = args.diagnostics or (str(args.output) + ".diag")
    Path(diag_path).write_text(_format_diagnostics(config, diagnostics))
    print(f"wrote {args.output} ({len(annotation.segments)} segments) and {diag_path}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    ref = parse_rttm(args.ref)
    hyp = parse_rttm(args.hyp)
    report = compute_der(ref, hyp, collar_seconds=args.collar, region=args.region)
    print(format_der_report(report, label=f"{args.region}, collar {args.collar:g}"))
    if args.csv:
        _append_csv(
            Path(args.csv),
            ["meeting_id", "region", "collar", "missed", "false_alarm", "confusion",
             "scored_speech", "der"],
            [ref.meeting_id, args.region, repr(args.collar), repr(report.missed),
             repr(report.false_alarm), repr(report.confusion),
             repr(report.scored_speech), repr(report.der)],
        )
    return 0


def _append_csv(path: Path, header: list[str], row: list[str]) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(header)
        writer.writerow(row)


def _sweep_one(
    kappa_max: float,
    init: str,
    tracks,
    refs,
    args: argparse.Namespace,
) -> dict:
    ders = {"all": [], "single": [], "overlap": []}
    for track, ref in zip(tracks, refs):
        config = DiarizeConfig(
            num_speakers=args.num_speakers,
            method="vmfmm",
            init=init,
            em_iters=args.em_iters,
            kappa_max=kappa_max,
            threshold=args.threshold,
            max_filter_seconds=args.max_filter,
            min_filter_seconds=args.min_filter,
            vad=args.vad,
            vad_window_seconds=args.vad_window,
            vad_offset_db=args.vad_offset,
            seed=args.seed,
        )
        activity, _, _ = diarize(track, config)
        hyp = activity_to_annotation(activity, track.meeting_id)
        for region in ders:
            ders[region].append(compute_der(ref, hyp, region=region).der)
    return {
        "kappa_max": kappa_max,
        "init": init,
        "der_avg": float(np.mean(ders["all"])),
        "der_single": float(np.mean(ders["single"])),
        "der_overlap": float(np.mean(ders["overlap"])),
    }


def cmd_sweep_kappa(args: argparse.Namespace) -> int:
    if len(args.embeddings) != len(args.ref):
        raise DataError(
            f"{len(args.embeddings)} tracks but {len(args.ref)} references"
        )
    tracks = [read_fwe(p) for p in args.embeddings]
    refs = [parse_rttm(p) for p in args.ref]
    jobs = [(kappa, init) for kappa in KAPPA_SWEEP_GRID for init in SWEEP_INITS]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(
            pool.map(lambda j: _sweep_one(j[0], j[1], tracks, refs, args), jobs)
        )
    with open(args.csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kappa_max", "init", "der_avg", "der_single", "der_overlap"])
        for res in results:  # grid order: kappa ascending, then init
            writer.writerow(
                [f"{res['kappa_max']:g}", res["init"], repr(res["der_avg"]),
                 repr(res["der_single"]), repr(res["der_overlap"])]
            )
    print(f"wrote {args.csv} ({len(results)} rows)")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
