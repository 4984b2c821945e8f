import sys

import numpy as np
import pytest

from gcnrefine.synth import PhantomSpec, SimSpec, default_blobs, make_phantom, simulate_passes
from gcnrefine.uncertainty import analyze


@pytest.fixture(scope="session")
def small_case():
    """A 24^3 phantom with one false-positive and one false-negative blob."""
    v, gt = make_phantom(PhantomSpec(dims=(24, 24, 24), radii=(7, 6, 5), seed=11))
    blobs = default_blobs(gt, radius=3.5, seed=11)
    passes, y = simulate_passes(gt, SimSpec(T=20, error_blobs=blobs, seed=11))
    return {"v": v, "gt": gt, "passes": passes, "y": y, "bundle": analyze(passes, 0.5), "blobs": blobs}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.LINES, key=str):
        terminalreporter.write_line(mod.LINES[key])
