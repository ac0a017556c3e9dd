import numpy as np
import pytest

from nirvo.core import CameraIntrinsics, Rotation, rotation_angle_deg, skew
from nirvo.epipolar import (
    EssentialMatrix, RelativePose, classify_pair, decompose, denormalize_points, five_point, normalize_points,
    ransac_essential, required_iterations, sampson_distance,
)
from nirvo.epipolar.pose import pose_candidates
from nirvo.errors import DecompositionFailure, DegenerateSample, InsufficientMatches, NoModelFound

from geometry import eight_point_essential, essential, oracle_decompose, two_view_problem


def outlier_problem(seed, n_in=70, n_out=30):
    rng = np.random.default_rng(seed)
    r, t, x1, x2 = two_view_problem(rng, n_in, rot_sigma=0.2)
    o1 = rng.uniform(-0.5, 0.5, (n_out, 2))
    o2 = rng.uniform(-0.5, 0.5, (n_out, 2))
    return r, np.vstack([x1, o1]), np.vstack([x2, o2])


class TestNormalize:
    intr = CameraIntrinsics(420.0, 410.0, 319.5, 241.0)

    def test_principal_point(self):
        assert np.allclose(normalize_points([[319.5, 241.0]], self.intr), [[0.0, 0.0]])

    def test_unit_focal_offset(self):
        assert np.allclose(normalize_points([[319.5 + 420.0, 241.0]], self.intr), [[1.0, 0.0]])

    def test_round_trip(self, rng):
        pts = rng.uniform(0, 640, (100, 2))
        back = denormalize_points(normalize_points(pts, self.intr), self.intr)
        assert np.max(np.abs(back - pts)) < 1e-9


class TestEssentialMatrix:
    def test_projection_and_norm(self, rng):
        em = EssentialMatrix(rng.normal(size=(3, 3)))
        s = np.linalg.svd(em.e, compute_uv=False)
        assert s[0] == pytest.approx(s[1], rel=1e-6) and s[2] < 1e-12
        assert np.linalg.norm(em.e) == pytest.approx(np.sqrt(2.0))

    def test_canonical_sign(self, rng):
        e = rng.normal(size=(3, 3))
        a, b = EssentialMatrix(e), EssentialMatrix(-3.0 * e)
        assert np.allclose(a.e, b.e)
        assert a.e.flat[np.argmax(np.abs(a.e))] > 0

    def test_relative_pose_unit_translation(self):
        with pytest.raises(ValueError):
            RelativePose(Rotation.identity(), np.array([0.0, 0.0, 2.0]))


class TestFivePoint:
    def test_pure_sideways_translation(self, rng):
        r, t, x1, x2 = two_view_problem(rng, 5, r=Rotation.identity(), t=[1.0, 0, 0])
        target = EssentialMatrix(skew(t))
        assert any(E.close_to(target, 1e-6) for E in five_point(x1, x2))

    def test_rotation_about_y(self, rng):
        r = Rotation.from_axis_angle([0, 1, 0], np.radians(10))
        _, t, x1, x2 = two_view_problem(rng, 5, r=r, t=[0.1, 0, 1])
        target = EssentialMatrix(essential(r, t))
        assert any(E.close_to(target, 1e-6) for E in five_point(x1, x2))

    def test_identical_points_degenerate(self):
        x = np.tile([[0.1, -0.2]], (5, 1))
        with pytest.raises(DegenerateSample):
            five_point(x, x + 0.01)

    def test_needs_exactly_five(self, rng):
        _, _, x1, x2 = two_view_problem(rng, 6)
        with pytest.raises(ValueError):
            five_point(x1, x2)

    def test_constraints_hold(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            _, _, x1, x2 = two_view_problem(rng, 5)
            for E in five_point(x1, x2):
                assert np.max(np.abs(E.residuals(x1, x2))) <= 1e-8
                assert E.trace_constraint() <= 1e-6
                assert abs(np.linalg.det(E.e)) <= 1e-8


class TestDecompose:
    def test_recovers_generating_pose(self, rng):
        r = Rotation.from_axis_angle([0, 1, 0], np.radians(10))
        _, t, x1, x2 = two_view_problem(rng, 5, r=r, t=[0.1, 0, 1])
        pose = decompose(EssentialMatrix(essential(r, t)), x1, x2)
        assert rotation_angle_deg(pose.r, r) < 1e-6
        assert np.linalg.norm(pose.t - t) < 1e-6

    def test_construct_then_decompose_is_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            r, t, x1, x2 = two_view_problem(rng, 12)
            pose = decompose(EssentialMatrix(essential(r, t)), x1, x2)
            assert rotation_angle_deg(pose.r, r) < 1e-6
            assert np.linalg.norm(pose.t - t) < 1e-6

    def test_single_correspondence(self, rng):
        r, t, x1, x2 = two_view_problem(rng, 1)
        pose = decompose(EssentialMatrix(essential(r, t)), x1, x2)
        assert rotation_angle_deg(pose.r, r) < 1e-6
        assert len(pose_candidates(EssentialMatrix(essential(r, t)))) == 4

    def test_points_split_between_candidates_fail(self, rng):
        # half the points lie in front of both cameras for (R, t), the other half
        # behind both, which puts them in front for (R, -t): no strict majority
        r, t, x1, x2 = two_view_problem(rng, 6)
        behind1, behind2 = [], []
        while len(behind1) < 6:
            X = np.array([*rng.uniform(-1, 1, 2), -rng.uniform(2, 6)])
            X2 = r.m @ X + t
            if X2[2] < -0.1:
                behind1.append(X[:2] / X[2])
                behind2.append(X2[:2] / X2[2])
        with pytest.raises(DecompositionFailure):
            decompose(EssentialMatrix(essential(r, t)), np.vstack([x1, behind1]), np.vstack([x2, behind2]))

    def test_all_points_behind_flip_translation(self, rng):
        r, t, x1, x2 = two_view_problem(rng, 8)
        # inverting every depth mirrors the scene through both centres: the
        # same image points but generated by (R, -t)
        pose = decompose(EssentialMatrix(essential(r, t)), x1, x2)
        assert np.dot(pose.t, t) > 0.999


class TestSampson:
    def test_zero_on_exact_correspondences(self, rng):
        r, t, x1, x2 = two_view_problem(rng, 20)
        assert np.max(sampson_distance(essential(r, t), x1, x2)) < 1e-12

    def test_first_order_distance(self):
        # E = [e_x] (pure x translation): epipolar lines are horizontal, so the
        # geometric distance of a vertical offset d is split over both images
        e = skew([1.0, 0, 0])
        x1 = np.array([[0.2, 0.1]])
        x2 = np.array([[0.5, 0.1 + 0.02]])
        assert sampson_distance(e, x1, x2)[0] == pytest.approx(0.02 / np.sqrt(2))

    def test_stack_of_models(self, rng):
        r, t, x1, x2 = two_view_problem(rng, 10)
        es = np.stack([essential(r, t), np.eye(3)])
        d = sampson_distance(es, x1, x2)
        assert d.shape == (2, 10)
        assert np.allclose(d[1], sampson_distance(np.eye(3), x1, x2))


class TestRansac:
    def test_required_iterations(self):
        assert required_iterations(1.0, 0.999, 1000) == 1
        assert required_iterations(0.0, 0.999, 1000) == 1000
        n = required_iterations(0.7, 0.999, 1000)
        assert n == int(np.ceil(np.log(0.001) / np.log(1 - 0.7**5)))

    def test_outlier_example(self):
        r, x1, x2 = outlier_problem(0)
        res = ransac_essential(x1, x2, threshold=1e-3, rng_seed=0)
        assert res.inlier_mask[:70].all()
        assert rotation_angle_deg(res.pose.r, r) < 0.1

    def test_four_matches(self, rng):
        _, _, x1, x2 = two_view_problem(rng, 4)
        with pytest.raises(InsufficientMatches):
            ransac_essential(x1, x2)

    def test_pure_noise(self):
        rng = np.random.default_rng(5)
        x1, x2 = rng.uniform(-0.5, 0.5, (100, 2)), rng.uniform(-0.5, 0.5, (100, 2))
        with pytest.raises(NoModelFound):
            ransac_essential(x1, x2, threshold=1e-4, max_iters=1000, rng_seed=0)

    def test_reproducible(self):
        _, x1, x2 = outlier_problem(4)
        a = ransac_essential(x1, x2, rng_seed=17)
        b = ransac_essential(x1, x2, rng_seed=17)
        assert np.array_equal(a.essential.e, b.essential.e)
        assert np.array_equal(a.inlier_mask, b.inlier_mask)
        assert a.iterations_used == b.iterations_used

    def test_result_invariants(self):
        _, x1, x2 = outlier_problem(2)
        res = ransac_essential(x1, x2, rng_seed=2)
        assert res.n_inliers >= 5 and len(res.inlier_mask) == 100
        assert not res.inlier_mask.flags.writeable

    def test_agrees_with_eight_point_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            r, t, x1, x2 = two_view_problem(rng, 50)
            est = ransac_essential(x1, x2, rng_seed=1).pose.r
            oracle = oracle_decompose(eight_point_essential(x1, x2), x1, x2)
            assert rotation_angle_deg(est, oracle) < 0.05


class TestClassifyPair:
    gt = Rotation.from_axis_angle([0.3, -0.2, 1.0], np.radians(4.0))

    def test_exact_estimate(self):
        v = classify_pair(RelativePose(self.gt, np.array([1.0, 0, 0])), self.gt, 5.0)
        assert v.valid and v.error_deg == pytest.approx(0.0, abs=1e-9)

    def test_seven_degrees_off(self):
        est = self.gt @ Rotation.from_axis_angle([1, 0, 0], np.radians(7.0))
        v = classify_pair(est, self.gt, 5.0)
        assert not v.valid and v.error_deg == pytest.approx(7.0, abs=1e-9)

    @pytest.mark.parametrize("failure", [None, DecompositionFailure("no majority"), NoModelFound("none")])
    def test_failure_is_invalid(self, failure):
        v = classify_pair(failure, self.gt, 5.0)
        assert not v.valid and v.error_deg is None

    def test_boundary_is_valid(self):
        est = Rotation.from_axis_angle([0, 0, 1], np.radians(5.0))
        v = classify_pair(est, Rotation.identity(), v_tol := rotation_angle_deg(est, Rotation.identity()))
        assert v.valid and v.error_deg == v_tol
