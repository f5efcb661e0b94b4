import numpy as np
import pytest

from rigidloc.geometry import euler_to_rotation, rotation_exp
from rigidloc.measurement import build_whitened_model, center_model, true_ranges
from rigidloc.scenarios import REFERENCE_ANGLES_DEG, REFERENCE_TRANSLATION, pyramid_topology, random_anchors


class Setup:
    """Anchors, topology and pose of the reference scenario plus model builders."""

    def __init__(self, A, C, Q, t):
        self.A, self.C, self.Q, self.t = A, C, Q, t
        self.S = Q @ C + t[:, None]
        self.R = true_ranges(A, self.S)

    def models(self, zeta=1e8, rng=None, S=None):
        R = self.R if S is None else true_ranges(self.A, S)
        Y = R if rng is None else R + rng.standard_normal(R.shape) * R / np.sqrt(zeta)
        wm = build_whitened_model(self.A, Y * Y, zeta)
        return wm, center_model(wm, self.C)


@pytest.fixture
def setup():
    A = random_anchors(4, 1000.0, np.random.default_rng(2024))
    Q = euler_to_rotation(REFERENCE_ANGLES_DEG)
    return Setup(A, pyramid_topology(5.0), Q, np.array(REFERENCE_TRANSLATION))


def random_rotation(rng):
    return rotation_exp(rng.uniform(-np.pi, np.pi, 3) / np.sqrt(3))


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, title, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title}: {detail}")
