import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nirvo.core import ExtrinsicRotation, ground_truth_relative, rotation_angle_deg
from nirvo.errors import IoError, UnknownBand, WallOutOfView
from nirvo.harness import ingest
from nirvo.synth import (
    AlbedoModel, Pose, SceneConfig, SensorModel, SsaField, albedo, default_intrinsics, emit_dataset,
    generate_ssa_field, generate_trajectory, grain_diameter, render_frame, render_scene, render_sequence,
)
from nirvo.core import Rotation

MODEL = AlbedoModel()


@pytest.fixture(scope="module")
def small_scene():
    return SceneConfig(grid=128, frames=4)


class TestSsaField:
    def test_flat_noise_gives_midpoint(self):
        f = generate_ssa_field((64, 64), octaves=1, amplitude=0.0)
        assert np.all(f.grid == 32.5)

    def test_deterministic(self):
        a = generate_ssa_field((96, 96), seed=3)
        b = generate_ssa_field((96, 96), seed=3)
        c = generate_ssa_field((96, 96), seed=4)
        assert np.array_equal(a.grid, b.grid) and not np.array_equal(a.grid, c.grid)

    def test_range_and_positivity(self):
        f = generate_ssa_field((128, 128), seed=1)
        assert f.grid.min() >= 5.0 and f.grid.max() <= 60.0
        assert f.grid.std() > 3.0

    def test_crust_band(self):
        f = generate_ssa_field((256, 256), seed=2, crust_rows=(100, 110))
        assert f.grid[100:111].mean() < 0.5 * f.grid.mean()

    def test_rejects_small_grid(self):
        with pytest.raises(ValueError):
            generate_ssa_field((32, 64))

    def test_field_validation(self):
        with pytest.raises(ValueError):
            SsaField(np.zeros((64, 64)), 1.0)


class TestGrainDiameter:
    @pytest.mark.parametrize("ssa,d", [(6, 1.0), (60, 0.1), (12, 0.5)])
    def test_formula(self, ssa, d):
        assert grain_diameter(ssa) == pytest.approx(d)


class TestAlbedo:
    def test_small_grains_reflect_everything(self):
        for band in MODEL.gamma:
            assert albedo(MODEL, band, 1e-12) == pytest.approx(1.0, abs=1e-5)

    def test_visible_one_millimetre(self):
        assert albedo(MODEL, 560, 1.0) == pytest.approx(math.exp(-math.sqrt(0.002)))
        assert albedo(MODEL, "unfiltered", 1.0) == albedo(MODEL, 560, 1.0)

    def test_nir_spread(self):
        spread = albedo(MODEL, 850, 0.1) - albedo(MODEL, 850, 1.0)
        assert spread == pytest.approx(math.exp(-math.sqrt(0.1)) - math.exp(-1.0))
        assert spread == pytest.approx(0.361, abs=1e-3)

    def test_unknown_band(self):
        with pytest.raises(UnknownBand):
            albedo(MODEL, 700, 0.5)

    def test_model_validation(self):
        with pytest.raises(ValueError):
            AlbedoModel({560: 0.1, 850: 0.05})
        with pytest.raises(ValueError):
            AlbedoModel(c=0.0)

    def test_property_a(self):
        d = np.linspace(0.05, 1.0, 200)
        assert np.all(albedo(MODEL, 560, d) >= 0.95)

    def test_property_b(self):
        assert albedo(MODEL, 850, 0.1) - albedo(MODEL, 850, 1.0) >= 0.05

    def test_property_c(self):
        nir = albedo(MODEL, 850, 0.1) - albedo(MODEL, 850, 1.0)
        vis = albedo(MODEL, 560, 0.1) - albedo(MODEL, 560, 1.0)
        assert nir >= 10 * vis

    @settings(max_examples=100)
    @given(st.floats(0.01, 3.0), st.floats(0.01, 3.0))
    def test_property_d(self, d1, d2):
        if d1 == d2:
            return
        lo, hi = min(d1, d2), max(d1, d2)
        bands = sorted(MODEL.gamma)
        for b in bands:
            assert albedo(MODEL, b, hi) < albedo(MODEL, b, lo)
        vals = [albedo(MODEL, b, lo) for b in bands]
        assert all(x > y for x, y in zip(vals, vals[1:]))


class TestTrajectory:
    def test_timestamps(self):
        tr = generate_trajectory(10, 20.0, seed=1)
        ts = [p.t for p in tr.poses]
        assert ts == [i * 40 / 800 for i in range(10)]

    def test_deterministic(self):
        a, b = generate_trajectory(8, seed=5), generate_trajectory(8, seed=5)
        assert all(p.rotation == q.rotation and np.array_equal(p.position, q.position) for p, q in zip(a.poses, b.poses))

    def test_rejects_unsorted(self):
        p = Pose(0.0, Rotation.identity(), np.zeros(3))
        with pytest.raises(ValueError):
            from nirvo.synth import Trajectory
            Trajectory((p, p), 0.1, 0.001, 0)


class TestRender:
    intr = default_intrinsics(64, 48, 60.0)
    pose = Pose(0.0, Rotation.identity(), np.array([0.0, 0.0, -1.0]))

    def test_constant_field_identity_trajectory(self):
        f = SsaField(np.full((64, 64), 20.0), 2.0)
        traj = generate_trajectory(3, rot_sigma_deg=0, trans_sigma_m=0, drift=(0, 0, 0))
        frames, _ = render_sequence(f, MODEL, "850", traj, self.intr, SensorModel(1, 0, 0.6), 0.8, width=64, height=48)
        first = frames[0].image.pixels
        assert len(np.unique(first)) == 1
        assert all(fr.image == frames[0].image for fr in frames)

    def test_deterministic(self, small_scene):
        a, imu_a = render_scene(small_scene)
        b, imu_b = render_scene(small_scene)
        assert all(x.image == y.image for x, y in zip(a, b)) and imu_a == imu_b

    def test_wall_out_of_view(self):
        f = generate_ssa_field((64, 64), extent=0.2)
        with pytest.raises(WallOutOfView):
            render_frame(f, MODEL, "850", self.pose, self.intr, SensorModel(), 0.8, 0, 64, 48)

    def test_illumination_monotone(self):
        f = generate_ssa_field((128, 128), seed=9)
        sensor = SensorModel(1.0, 0.0, 0.6)
        prev = None
        for illum in (0.2, 0.5, 0.9, 1.5):
            img = render_frame(f, MODEL, "850", self.pose, self.intr, sensor, illum, 0, 64, 48).as_float()
            if prev is not None:
                assert np.all(img >= prev)
            prev = img

    def test_nir_contrast_exceeds_visible(self):
        cfg = replace(SceneConfig(), noise=0.0, frames=1)
        stds = {}
        for band in ("unfiltered", "850"):
            c = cfg.for_band(band)
            img = render_frame(c.ssa_field(), MODEL, band, c.trajectory().poses[0], c.intrinsics(), c.sensor(),
                               c.effective_illum(), 0, c.width, c.height)
            stds[band] = img.as_float().std()
        assert stds["850"] >= 5 * stds["unfiltered"]

    def test_ground_truth_consistency(self, small_scene):
        cfg = replace(small_scene, frames=12)
        traj = cfg.trajectory()
        _, imu = render_scene(cfg)
        for a, b in zip(traj.poses, traj.poses[1:]):
            gt = ground_truth_relative(imu, ExtrinsicRotation(), a.t, b.t)
            assert rotation_angle_deg(gt, a.rotation.T @ b.rotation) < 0.05


class TestSceneConfig:
    def test_text_round_trip(self):
        cfg = SceneConfig(grid=200, crust_start=10, crust_end=20, band="900", seed=7)
        assert SceneConfig.from_text(cfg.to_text()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            SceneConfig.from_mapping({"colour": "blue"})

    def test_nir_penalties(self):
        vis, nir = SceneConfig().for_band("unfiltered"), SceneConfig().for_band("850")
        assert nir.effective_illum() == pytest.approx(0.5 * vis.effective_illum())
        assert nir.sensor().gain > vis.sensor().gain


class TestEmitDataset:
    def test_round_trip(self, tmp_path, small_scene):
        frames, imu = render_scene(small_scene)
        m = emit_dataset(frames, imu, tmp_path / "ds", small_scene.intrinsics())
        assert m.frames == len(frames) and m.bands == ("850",)
        back, back_imu = ingest(tmp_path / "ds")
        assert [f.t for f in back] == [f.t for f in frames]
        assert all(a.image == b.image for a, b in zip(back, frames))
        assert np.array_equal(back_imu.t, imu.t) and np.allclose(back_imu.q, imu.q, atol=1e-15)

    def test_empty(self, tmp_path):
        from nirvo.core import ImuStream
        m = emit_dataset([], ImuStream([], np.zeros((0, 4))), tmp_path / "empty")
        assert m.frames == 0 and (tmp_path / "empty" / "frames.csv").read_text().strip() == "filename,t,band"

    def test_unwritable(self, tmp_path, small_scene):
        frames, imu = render_scene(replace(small_scene, frames=1))
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(IoError):
            emit_dataset(frames, imu, blocker / "sub")
