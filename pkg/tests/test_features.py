import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from nirvo.core import GrayImage
from nirvo.errors import KindMismatch
from nirvo.features import (
    BINARY, GRADIENT_HISTOGRAM, HAAR, Descriptor, DescriptorSet, Keypoint, describe, detect_dog,
    detect_fast_hessian, detect_fast_pyramid, match, read_descriptors, read_keypoints_csv, write_descriptors,
    write_keypoints_csv,
)
from nirvo.features.fast import build_pyramid, segment_test_mask

from conftest import disk_image, gaussian_blob
from oracles import brute_segment_test

DETECTORS = {
    "FAST": detect_fast_pyramid,
    "DoG": detect_dog,
    "Hessian": detect_fast_hessian,
}


def textured(shape=(200, 240), seed=0, sigma=3.0, contrast=40.0):
    rng = np.random.default_rng(seed)
    base = ndimage.gaussian_filter(rng.normal(size=shape), sigma)
    return np.clip(128 + base / base.std() * contrast, 0, 255).astype(np.uint8)


def shifted(a, dx, dy, fill=128):
    out = np.full_like(a, fill)
    h, w = a.shape
    out[dy:, dx:] = a[:h - dy, :w - dx]
    return out


def positions(kps):
    return np.array([[k.x, k.y] for k in kps]).reshape(-1, 2)


def nearest_dist(p, q):
    if len(q) == 0:
        return np.full(len(p), np.inf)
    return np.hypot(p[:, None, 0] - q[None, :, 0], p[:, None, 1] - q[None, :, 1]).min(axis=1)


@pytest.mark.parametrize("name", list(DETECTORS))
def test_constant_image_has_no_keypoints(name, constant_image):
    assert DETECTORS[name](constant_image) == []


class TestFast:
    def test_segment_test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for k in range(20):
            level = rng.integers(0, 256, (40, 48), dtype=np.uint8)
            thr = int(rng.integers(10, 60))
            assert np.array_equal(segment_test_mask(level, thr), brute_segment_test(level, thr)), k

    def test_reported_keypoints_pass_at_their_level(self):
        rng = np.random.default_rng(6)
        for _ in range(3):
            img = GrayImage(rng.integers(0, 256, (60, 72), dtype=np.uint8))
            levels = build_pyramid(img, 8, 1.2)
            oracle = [brute_segment_test(lv, 20) for lv in levels]
            kps = detect_fast_pyramid(img, 20)
            assert kps
            for k in kps:
                s = 1.2 ** k.octave
                x, y = int(round(k.x / s)), int(round(k.y / s))
                assert oracle[k.octave][y, x]

    def test_checkerboard_corners(self):
        # X-junctions inside a board have no 9-long arc, so the board sits on a
        # grey surround whose L- and T-junctions are genuine segment-test corners
        yy, xx = np.mgrid[0:192, 0:192]
        board = np.where(((xx // 32) + (yy // 32)) % 2 == 0, 40, 200)
        inside = (xx >= 32) & (xx < 160) & (yy >= 32) & (yy < 160)
        img = np.where(inside, board, 120).astype(np.uint8)
        kps = [k for k in detect_fast_pyramid(GrayImage(img), 20) if k.octave == 0]
        assert len(kps) >= 12
        grid = range(32, 161, 32)
        corners = np.array([[x - 0.5, y - 0.5] for x in grid for y in grid])
        assert nearest_dist(positions(kps), corners).max() <= 1.5

    def test_threshold_monotone(self):
        img = GrayImage(textured())
        lo = positions(detect_fast_pyramid(img, 10))
        hi = positions(detect_fast_pyramid(img, 25))
        assert len(hi) < len(lo)
        assert nearest_dist(hi, lo).max() <= 0.5

    def test_level_zero_shift_equivariance(self):
        base = textured()
        a = [k for k in detect_fast_pyramid(GrayImage(base)) if k.octave == 0]
        b = [k for k in detect_fast_pyramid(GrayImage(shifted(base, 7, 3))) if k.octave == 0]
        pa = positions(a) + [7, 3]
        inner = (pa[:, 0] > 17) & (pa[:, 0] < 230) & (pa[:, 1] > 13) & (pa[:, 1] < 190)
        assert nearest_dist(pa[inner], positions(b)).max() <= 1.0


class TestDoG:
    @pytest.mark.parametrize("sigma", [3.0, 6.0, 12.0])
    def test_blob_centre_and_scale(self, sigma):
        size = int(12 * sigma) + 32
        c = (size - 1) / 2.0 + 0.3
        kps = detect_dog(gaussian_blob((size, size), [(c, c)], sigma))
        top = max(kps, key=lambda k: k.response)
        assert np.hypot(top.x - c, top.y - c) <= 1.0
        assert abs(top.scale / sigma - 1.0) <= 0.25

    def test_blob_pair(self):
        centers = [(60.0, 70.0), (100.0, 70.0)]
        kps = detect_dog(gaussian_blob((140, 160), centers, 6.0))
        strong = sorted(kps, key=lambda k: -k.response)[:2]
        found = positions(strong)
        assert nearest_dist(np.array(centers), found).max() <= 1.0

    def test_threshold_monotone(self):
        img = GrayImage(textured())
        lo = positions(detect_dog(img, contrast_threshold=0.02))
        hi = positions(detect_dog(img, contrast_threshold=0.06))
        assert 0 < len(hi) < len(lo)
        assert nearest_dist(hi, lo).max() <= 0.5


def exact_hessian_peak(img: np.ndarray, sigmas) -> tuple[float, float]:
    """Location of the strongest scale-normalized det(Hessian of Gaussian)."""
    a = img.astype(np.float64)
    best = (-np.inf, 0, 0)
    for s in sigmas:
        dxx = ndimage.gaussian_filter(a, s, order=(0, 2))
        dyy = ndimage.gaussian_filter(a, s, order=(2, 0))
        dxy = ndimage.gaussian_filter(a, s, order=(1, 1))
        det = s**4 * (dxx * dyy - dxy**2)
        y, x = np.unravel_index(np.argmax(det), det.shape)
        if det[y, x] > best[0]:
            best = (det[y, x], x, y)
    return float(best[1]), float(best[2])


class TestFastHessian:
    def test_disk_centre_matches_exact_oracle(self):
        img = disk_image((128, 128), 63.0, 61.0, 12)
        ox, oy = exact_hessian_peak(img.pixels, np.linspace(4, 14, 21))
        assert np.hypot(ox - 63, oy - 61) <= 1.0
        kps = detect_fast_hessian(img)
        top = max(kps, key=lambda k: k.response)
        assert np.hypot(top.x - ox, top.y - oy) <= 2.0

    def test_threshold_monotone(self):
        img = GrayImage(textured(contrast=80.0))
        lo = positions(detect_fast_hessian(img, 500))
        hi = positions(detect_fast_hessian(img, 800))
        assert 0 < len(hi) < len(lo)
        assert nearest_dist(hi, lo).max() <= 0.5


@pytest.mark.parametrize("name", ["DoG", "Hessian"])
def test_shift_equivariance_on_octave_grid(name):
    # shifts that are multiples of the coarsest octave step keep every octave's grid aligned
    det = DETECTORS[name] if name == "DoG" else (lambda im: detect_fast_hessian(im, 100))
    base = textured()
    pa = positions(det(GrayImage(base))) + [16, 8]
    pb = positions(det(GrayImage(shifted(base, 16, 8))))
    inner = (pa[:, 0] > 56) & (pa[:, 0] < 200) & (pa[:, 1] > 48) & (pa[:, 1] < 160)
    assert inner.sum() > 20
    assert nearest_dist(pa[inner], pb).max() <= 1.0


class TestDescribe:
    @pytest.mark.parametrize("kind", [GRADIENT_HISTOGRAM, HAAR, BINARY])
    def test_rotated_patch_beats_random_patches(self, kind):
        n, c = 97, 48.0
        kp = [Keypoint(c, c, 2.0, 1.0)]
        img = textured((n, n), seed=1, sigma=2.0)
        d0 = describe(GrayImage(img), kp, kind).data[0]
        d_rot = describe(GrayImage(np.rot90(img).copy()), kp, kind).data[0]

        def dist(a, b):
            if kind == BINARY:
                return int(np.unpackbits(np.bitwise_xor(a, b)).sum())
            return float(np.linalg.norm(a - b))

        others = [describe(GrayImage(textured((n, n), seed=100 + i, sigma=2.0)), kp, kind).data[0] for i in range(60)]
        rand = np.array([dist(d0, o) for o in others])
        assert np.mean(dist(d0, d_rot) < rand) >= 0.95

    def test_gradient_histograms_are_unit_length(self):
        img = GrayImage(textured())
        kps = detect_dog(img)
        ds = describe(img, kps, GRADIENT_HISTOGRAM)
        assert len(ds) > 0
        assert np.allclose(np.linalg.norm(ds.data, axis=1), 1.0, atol=1e-6)

    def test_empty(self):
        ds = describe(GrayImage(textured()), [], HAAR)
        assert len(ds) == 0 and ds.data.shape == (0, 64)

    def test_border_keypoint_dropped(self):
        img = GrayImage(textured())
        kps = [Keypoint(0.5, 0.5, 2.0, 1.0), Keypoint(120.0, 100.0, 2.0, 1.0)]
        ds = describe(img, kps, GRADIENT_HISTOGRAM)
        assert ds.dropped == [0]
        assert list(ds.index_map) == [1]

    def test_descriptor_validation(self):
        with pytest.raises(ValueError):
            Descriptor(HAAR, np.zeros(63))
        with pytest.raises(ValueError):
            Descriptor(GRADIENT_HISTOGRAM, np.full(128, 0.5))


class TestMatch:
    def test_self_match_orthonormal(self):
        eye = np.eye(128)[:10]
        ds = DescriptorSet(GRADIENT_HISTOGRAM, eye, np.arange(10))
        ms = match(ds, ds)
        assert [(m.idx_a, m.idx_b) for m in ms] == [(i, i) for i in range(10)]
        assert all(m.distance == 0 for m in ms)

    def test_single_elements(self):
        a = DescriptorSet(HAAR, np.ones((1, 64)), np.arange(1))
        b = DescriptorSet(HAAR, np.full((1, 64), 3.0), np.arange(1))
        ms = match(a, b)
        assert len(ms) == 1 and ms[0].distance == pytest.approx(16.0)

    def test_kind_mismatch(self):
        a = DescriptorSet(HAAR, np.ones((2, 64)), np.arange(2))
        b = DescriptorSet(BINARY, np.ones((2, 32), np.uint8), np.arange(2))
        with pytest.raises(KindMismatch):
            match(a, b)

    def test_hamming_distance(self):
        a = DescriptorSet(BINARY, np.array([[0b1011] + [0] * 31], np.uint8), np.arange(1))
        b = DescriptorSet(BINARY, np.zeros((1, 32), np.uint8), np.arange(1))
        assert match(a, b)[0].distance == 3

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 30))
    def test_symmetric_under_swap(self, seed, na, nb):
        rng = np.random.default_rng(seed)
        a = DescriptorSet(HAAR, rng.normal(size=(na, 64)), np.arange(na))
        b = DescriptorSet(HAAR, np.vstack([a.data[: nb // 2] + 0.01 * rng.normal(size=(min(na, nb // 2), 64)),
                                           rng.normal(size=(nb - min(na, nb // 2), 64))]), np.arange(nb))
        ab = {(m.idx_a, m.idx_b) for m in match(a, b)}
        ba = {(m.idx_b, m.idx_a) for m in match(b, a)}
        assert ab == ba


def test_keypoint_csv_round_trip(tmp_path):
    kps = [Keypoint(1.25, 2.5, 1.2, 33.0, 0.75), Keypoint(10.0, 0.0, 3.0, 1e-3, -1.5)]
    path = tmp_path / "kps.csv"
    write_keypoints_csv(path, kps)
    back = read_keypoints_csv(path)
    assert [(k.x, k.y, k.scale, k.response, k.orientation) for k in back] == \
        [(k.x, k.y, k.scale, k.response, k.orientation) for k in kps]


@pytest.mark.parametrize("kind", [GRADIENT_HISTOGRAM, BINARY])
def test_descriptor_dump_round_trip(tmp_path, kind):
    img = GrayImage(textured())
    ds = describe(img, detect_fast_pyramid(img)[:20], kind)
    path = tmp_path / "desc.bin"
    write_descriptors(path, ds)
    back = read_descriptors(path)
    assert len(back) == len(ds)
    assert all(d.kind == kind and np.array_equal(d.data, row) for d, row in zip(back, ds.data))
