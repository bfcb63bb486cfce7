import csv

import numpy as np
import pytest

from vmfdiar.cli import main


@pytest.fixture(scope="module")
def sim_meeting(tmp_path_factory):
    """A small simulated meeting shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    out = root / "meet"
    code = main([
        "simulate", "--speakers", "3", "--dim", "16", "--duration", "90",
        "--hop", "0.02", "--overlap", "0.2", "--silence", "0.1",
        "--kappa", "50", "--seed", "11", "--out", str(out),
    ])
    assert code == 0
    return root, out.with_suffix(".fwe"), out.with_suffix(".rttm")


def diarize_args(fwe, output, **overrides):
    args = {
        "--embeddings": str(fwe), "--num-speakers": "3", "--method": "vmfmm",
        "--init": "kmeans", "--vad": "energy", "--vad-window": "30",
        "--seed": "4", "--output": str(output),
    }
    args.update({k: str(v) for k, v in overrides.items()})
    flat = []
    for k, v in args.items():
        flat.extend([k, v])
    return ["diarize"] + flat


class TestSimulate:
    def test_creates_outputs(self, sim_meeting):
        _, fwe, rttm = sim_meeting
        assert fwe.exists() and rttm.exists()

    def test_missing_required_flag_is_usage_error(self, tmp_path, capsys):
        code = main(["simulate", "--out", str(tmp_path / "x")])
        assert code == 1

    def test_repeat_run_is_byte_identical(self, tmp_path):
        outs = []
        for sub in ("r1", "r2"):
            out = tmp_path / sub / "meet"
            out.parent.mkdir()
            assert main([
                "simulate", "--speakers", "2", "--dim", "8", "--duration", "30",
                "--hop", "0.02", "--overlap", "0.1", "--silence", "0.1",
                "--seed", "7", "--out", str(out),
            ]) == 0
            outs.append(out)
        assert outs[0].with_suffix(".fwe").read_bytes() == outs[1].with_suffix(".fwe").read_bytes()
        assert outs[0].with_suffix(".rttm").read_bytes() == outs[1].with_suffix(".rttm").read_bytes()

    def test_infeasible_config_is_data_error(self, tmp_path):
        code = main([
            "simulate", "--speakers", "7", "--dim", "2", "--duration", "30",
            "--out", str(tmp_path / "x"),
        ])
        assert code == 2


class TestDiarize:
    def test_kmeans_run_structure(self, sim_meeting, tmp_path):
        root, fwe, _ = sim_meeting
        hyp = tmp_path / "hyp.rttm"
        assert main(diarize_args(fwe, hyp, **{"--method": "kmeans"})) == 0
        speakers = {line.split()[7] for line in hyp.read_text().splitlines()}
        assert speakers == {"spk0", "spk1", "spk2"}

    def test_vmfmm_diagnostics_loglik_and_clamp(self, sim_meeting, tmp_path):
        root, fwe, _ = sim_meeting
        hyp = tmp_path / "hyp.rttm"
        diag = tmp_path / "hyp.diag"
        assert main(diarize_args(fwe, hyp, **{"--kappa-max": "25", "--diagnostics": str(diag)})) == 0
        text = diag.read_text()
        logliks = [float(l.split("=")[1]) for l in text.splitlines() if l.startswith("loglik_")]
        assert len(logliks) == 50
        assert np.all(np.diff(logliks) >= -1e-8)
        kappas = [float(l.split("=")[1]) for l in text.splitlines() if l.startswith("kappa_") and not l.startswith("kappa_max") and not l.startswith("kappa_init")]
        assert kappas and max(kappas) <= 25.0

    def test_repeat_run_byte_identical(self, sim_meeting, tmp_path):
        root, fwe, _ = sim_meeting
        outs = []
        for name in ("h1.rttm", "h2.rttm"):
            out = tmp_path / name
            assert main(diarize_args(fwe, out)) == 0
            outs.append(out)
        assert outs[0].read_bytes() == outs[1].read_bytes()
        assert (tmp_path / "h1.rttm.diag").read_bytes() == (tmp_path / "h2.rttm.diag").read_bytes()

    def test_missing_embedding_file_is_data_error(self, tmp_path):
        code = main(diarize_args(tmp_path / "nope.fwe", tmp_path / "h.rttm"))
        assert code == 2

    def test_overlap_refinement_flag(self, sim_meeting, tmp_path):
        root, fwe, ref = sim_meeting
        regions = tmp_path / "ov.txt"
        regions.write_text("10.0 12.0\n")
        hyp = tmp_path / "hyp.rttm"
        assert main(diarize_args(fwe, hyp, **{"--overlap-regions": str(regions)})) == 0

    def test_external_vad_mask(self, sim_meeting, tmp_path):
        root, fwe, _ = sim_meeting
        mask = tmp_path / "mask.txt"
        mask.write_text("\n".join(["1"] * 4500) + "\n")
        hyp = tmp_path / "hyp.rttm"
        assert main(diarize_args(fwe, hyp, **{"--vad": "external", "--vad-mask": str(mask)})) == 0

    def test_external_vad_mask_length_mismatch(self, sim_meeting, tmp_path):
        root, fwe, _ = sim_meeting
        mask = tmp_path / "mask.txt"
        mask.write_text("1\n0\n")
        code = main(diarize_args(fwe, tmp_path / "h.rttm",
                                 **{"--vad": "external", "--vad-mask": str(mask)}))
        assert code == 2


class TestScore:
    def test_perfect_score_prints_zero(self, sim_meeting, capsys):
        _, _, rttm = sim_meeting
        assert main(["score", "--ref", str(rttm), "--hyp", str(rttm)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("DER 0.000")
        assert "der=0.0" in out

    def test_collar_reduces_scored_speech(self, sim_meeting, tmp_path, capsys):
        root, fwe, ref = sim_meeting
        hyp = tmp_path / "hyp.rttm"
        assert main(diarize_args(fwe, hyp)) == 0
        scored = []
        for collar in ("0", "0.25"):
            assert main(["score", "--ref", str(ref), "--hyp", str(hyp),
                         "--collar", collar]) == 0
            out = capsys.readouterr().out
            scored.append(float(next(l for l in out.splitlines()
                                     if l.startswith("scored_speech_seconds=")).split("=")[1]))
        assert scored[1] < scored[0]

    def test_region_recombination_on_pipeline_output(self, sim_meeting, tmp_path, capsys):
        root, fwe, ref = sim_meeting
        hyp = tmp_path / "hyp.rttm"
        assert main(diarize_args(fwe, hyp)) == 0
        parts = {}
        for region in ("all", "single", "overlap"):
            assert main(["score", "--ref", str(ref), "--hyp", str(hyp),
                         "--region", region]) == 0
            out = capsys.readouterr().out
            vals = dict(l.split("=") for l in out.splitlines() if "=" in l)
            parts[region] = {k: float(v) for k, v in vals.items()}
        err = lambda p: p["missed_seconds"] + p["false_alarm_seconds"] + p["confusion_seconds"]
        assert err(parts["single"]) + err(parts["overlap"]) == pytest.approx(
            err(parts["all"]), abs=1e-9
        )

    def test_csv_append(self, sim_meeting, tmp_path):
        _, _, rttm = sim_meeting
        csv_path = tmp_path / "scores.csv"
        for _ in range(2):
            assert main(["score", "--ref", str(rttm), "--hyp", str(rttm),
                         "--csv", str(csv_path)]) == 0
        rows = list(csv.reader(csv_path.open()))
        assert rows[0][0] == "meeting_id"
        assert len(rows) == 3

    def test_empty_reference_is_data_error(self, tmp_path):
        ref = tmp_path / "empty.rttm"
        ref.write_text("")
        hyp = tmp_path / "hyp.rttm"
        hyp.write_text("SPEAKER m 1 0.0 1.0 <NA> <NA> a <NA> <NA>\n")
        assert main(["score", "--ref", str(ref), "--hyp", str(hyp)]) == 2


class TestSweepKappa:
    def test_grid_csv_and_determinism(self, sim_meeting, tmp_path):
        root, fwe, ref = sim_meeting
        csvs = []
        for name in ("s1.csv", "s2.csv"):
            out = tmp_path / name
            assert main([
                "sweep-kappa", "--embeddings", str(fwe), "--ref", str(ref),
                "--num-speakers", "3", "--em-iters", "15", "--vad", "energy",
                "--vad-window", "30", "--seed", "3", "--jobs", "2",
                "--csv", str(out),
            ]) == 0
            csvs.append(out)
        rows = list(csv.reader(csvs[0].open()))
        assert rows[0] == ["kappa_max", "init", "der_avg", "der_single", "der_overlap"]
        assert len(rows) == 15  # header + 7 kappa values x 2 inits
        kappas = [float(r[0]) for r in rows[1:]]
        assert kappas == sorted(kappas)
        assert {r[1] for r in rows[1:]} == {"kmeans", "random"}
        for r in rows[1:]:
            for v in r[2:]:
                assert 0.0 <= float(v) <= 1.0
        assert csvs[0].read_bytes() == csvs[1].read_bytes()

    def test_track_ref_count_mismatch(self, sim_meeting, tmp_path):
        root, fwe, ref = sim_meeting
        code = main(["sweep-kappa", "--embeddings", str(fwe), "--ref", str(ref),
                     str(ref), "--num-speakers", "3", "--csv", str(tmp_path / "x.csv")])
        assert code in (1, 2)


class TestUsage:
    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 1

    def test_bad_flag_value(self, tmp_path):
        assert main(["simulate", "--speakers", "two", "--out", str(tmp_path / "x")]) == 1
