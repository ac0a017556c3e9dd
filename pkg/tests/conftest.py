import numpy as np
import pytest

from nirvo.core import GrayImage, Rotation


def random_rotation(rng: np.random.Generator) -> Rotation:
    q = rng.normal(size=4)
    return Rotation.from_quaternion(q / np.linalg.norm(q))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noise_image(rng):
    return GrayImage(rng.integers(0, 256, size=(64, 80), dtype=np.uint8))


@pytest.fixture
def constant_image():
    return GrayImage(np.full((96, 96), 128, dtype=np.uint8))


def gaussian_blob(shape, centers, sigma, amplitude=200.0, background=0.0):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full(shape, background)
    for cx, cy in centers:
        img += amplitude * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma**2))
    return GrayImage(np.clip(np.round(img), 0, 255).astype(np.uint8))


def disk_image(shape, cx, cy, r, inside=200, outside=0):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    px = np.where((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r, inside, outside)
    return GrayImage(px.astype(np.uint8))


# --- acceptance report ---------------------------------------------------
# test_acceptance.py records one verdict per criterion; the lines are
# printed at the end of the run whether or not output capture is on.

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
