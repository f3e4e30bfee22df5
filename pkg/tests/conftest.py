import functools

import numpy as np
import pytest

from matchret.geometry import CameraView, TriangleMesh
from matchret.synth import SceneSpec, generate_scene

ACCEPTANCE = {}  # criterion number -> (passed, detail)

CRITERIA = {
    1: "gradient correctness",
    2: "overlap oracle equivalence",
    3: "retrieval exactness",
    4: "overlap ratio spot values",
    5: "loss constants",
    6: "anchor-swap dominance",
    7: "PR-MAC vs R-MAC direction",
    8: "training efficacy",
    9: "re-ranking consistency",
    10: "format round-trips",
}


class Recorder:
    def record(self, n, passed, detail=""):
        ACCEPTANCE[n] = (bool(passed), detail)
        return bool(passed)


@pytest.fixture(scope="session")
def acceptance():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        if n not in ACCEPTANCE:
            terminalreporter.write_line(f"criterion {n:2d} NOT RUN  {name}")
            continue
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}     {name}: {detail}")


@functools.lru_cache(maxsize=None)
def scene(seed=0, **kw):
    """Cached generated scene; treat as read-only."""
    return generate_scene(SceneSpec(seed=seed, **kw))


@pytest.fixture(scope="session")
def default_scene():
    return scene(0)


def simple_camera(f=100.0, size=(100, 100)):
    """Identity pose looking down +z with the principal point at the image centre."""
    return CameraView((f, f), (size[0] / 2, size[1] / 2), np.eye(3), np.zeros(3), size)


def front_triangle(z=5.0, half=1.0):
    """Triangle facing a camera at the origin (counter-clockwise seen from the camera)."""
    v = np.array([[-half, -half, z], [0.0, half, z], [half, -half, z]])
    return TriangleMesh(v, [[0, 1, 2]])
