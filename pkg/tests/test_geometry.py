import numpy as np
import pytest

from vmfdiar import (
    DataError,
    FrameEmbeddingTrack,
    VadMask,
    all_voiced_mask,
    normalize_track,
    read_fwe,
    write_fwe,
    write_fwe_text,
)


def make_track(frames, hop=0.01, energy=None):
    return FrameEmbeddingTrack(np.asarray(frames, dtype=float), hop, energy)


class TestTrackInvariants:
    def test_rejects_empty(self):
        with pytest.raises(DataError):
            make_track(np.empty((0, 4)))

    def test_rejects_one_dim_embeddings(self):
        with pytest.raises(DataError):
            make_track(np.ones((5, 1)))

    def test_rejects_non_finite(self):
        frames = np.ones((3, 4))
        frames[1, 2] = np.nan
        with pytest.raises(DataError):
            make_track(frames)

    def test_rejects_energy_length_mismatch(self):
        with pytest.raises(DataError):
            make_track(np.ones((3, 4)), energy=np.zeros(2))

    def test_rejects_nonpositive_hop(self):
        with pytest.raises(DataError):
            make_track(np.ones((3, 4)), hop=0.0)


class TestNormalizeTrack:
    def test_symmetric_pair_unchanged(self):
        v = np.array([0.6, 0.8, 0.0])
        track = make_track(np.stack([v, -v]))
        out = normalize_track(track, all_voiced_mask(track))
        np.testing.assert_allclose(out.frames, np.stack([v, -v]), atol=1e-12)
        assert not out.zero_frames.any()

    def test_constant_track_flags_every_frame(self):
        track = make_track(np.tile([0.3, 0.4, 0.5], (5, 1)))
        out = normalize_track(track, all_voiced_mask(track))
        assert out.zero_frames.all()
        np.testing.assert_array_equal(out.frames, np.zeros((5, 3)))

    def test_random_track_unit_norms_and_zero_means(self):
        rng = np.random.default_rng(8)
        track = make_track(rng.standard_normal((100, 8)))
        mask = VadMask(rng.uniform(size=100) < 0.8, 0.01)
        out = normalize_track(track, mask)
        voiced = out.frames[mask.voiced]
        np.testing.assert_allclose(np.linalg.norm(voiced, axis=1), 1.0, atol=1e-6)
        # direct recomputation: centered voiced frames have zero column means
        centered = track.frames - track.frames[mask.voiced].mean(axis=0)
        np.testing.assert_allclose(centered[mask.voiced].mean(axis=0), 0.0, atol=1e-6)

    def test_fewer_than_two_voiced_raises(self):
        track = make_track(np.eye(3))
        mask = VadMask(np.array([True, False, False]), 0.01)
        with pytest.raises(DataError):
            normalize_track(track, mask)

    def test_mask_length_mismatch_raises(self):
        track = make_track(np.eye(3))
        with pytest.raises(DataError):
            normalize_track(track, VadMask(np.ones(4, dtype=bool), 0.01))

    def test_idempotent_on_norm_homogeneous_input(self):
        # frames on a sphere around an offset center (and balanced so the
        # empirical mean is the center) have equal centered norms; the
        # normalized output then has zero voiced mean and a second
        # application is the identity
        rng = np.random.default_rng(5)
        half = rng.standard_normal((25, 6))
        half /= np.linalg.norm(half, axis=1, keepdims=True)
        directions = np.concatenate([half, -half])
        center = rng.standard_normal(6)
        track = make_track(center + 2.5 * directions)
        once = normalize_track(track, all_voiced_mask(track))
        twice = normalize_track(once, all_voiced_mask(once))
        np.testing.assert_allclose(twice.frames, once.frames, atol=1e-6)

    def test_equivariant_under_permutation(self):
        rng = np.random.default_rng(6)
        frames = rng.standard_normal((40, 5))
        mask = rng.uniform(size=40) < 0.7
        mask[:2] = True
        perm = rng.permutation(40)
        a = normalize_track(make_track(frames), VadMask(mask, 0.01))
        b = normalize_track(make_track(frames[perm]), VadMask(mask[perm], 0.01))
        np.testing.assert_allclose(b.frames, a.frames[perm], atol=1e-12)


class TestFweIO:
    def roundtrip(self, tmp_path, writer, with_energy):
        rng = np.random.default_rng(3)
        energy = rng.uniform(-60, -30, size=20) if with_energy else None
        track = FrameEmbeddingTrack(
            rng.standard_normal((20, 6)), 0.02, energy, meeting_id="m"
        )
        path = tmp_path / "track.fwe"
        writer(track, path)
        back = read_fwe(path)
        assert back.num_frames == 20 and back.dim == 6
        assert back.hop_seconds == pytest.approx(0.02, rel=1e-6)
        np.testing.assert_allclose(back.frames, track.frames, atol=1e-5)
        if with_energy:
            np.testing.assert_allclose(back.energy_db, energy, atol=1e-4)
        else:
            assert back.energy_db is None
        assert back.meeting_id == "track"

    @pytest.mark.parametrize("with_energy", [True, False])
    def test_binary_roundtrip(self, tmp_path, with_energy):
        self.roundtrip(tmp_path, write_fwe, with_energy)

    @pytest.mark.parametrize("with_energy", [True, False])
    def test_text_roundtrip(self, tmp_path, with_energy):
        self.roundtrip(tmp_path, write_fwe_text, with_energy)

    def test_truncated_binary_raises(self, tmp_path):
        rng = np.random.default_rng(0)
        track = FrameEmbeddingTrack(rng.standard_normal((10, 4)), 0.01)
        path = tmp_path / "t.fwe"
        write_fwe(track, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(DataError):
            read_fwe(path)

    def test_garbage_text_raises(self, tmp_path):
        path = tmp_path / "bad.fwe"
        path.write_text("not a header\n1 2 3\n")
        with pytest.raises(DataError):
            read_fwe(path)
