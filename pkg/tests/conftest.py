import numpy as np
import pytest

from stuntkit.anthropometry import load_reference, synth_cohort
from stuntkit.dataset import Dataset, make_rng

SHARES = (0.86, 0.12, 0.02)


@pytest.fixture(scope="session")
def reference():
    return load_reference()


@pytest.fixture(scope="session")
def cohort(reference):
    """752-row synthetic cohort with 86/12/2 class shares, seed 7."""
    return synth_cohort(752, SHARES, reference, make_rng(7))


@pytest.fixture(scope="session")
def skewed_cohort(reference):
    """Cohort with exactly 645 Normal / 89 Stunted / 18 Stunting rows."""
    parts = []
    for i, (code, n) in enumerate(((0.0, 645), (1.0, 89), (0.5, 18))):
        share = [0.0, 0.0, 0.0]
        share[i] = 1.0
        parts.append(synth_cohort(n, share, reference, make_rng(11, i)))
    X = np.vstack([p.features for p in parts])
    y = np.concatenate([p.labels for p in parts])
    return Dataset(X, y)


def random_dataset(rng, n, d=2, classes=(0.0, 1.0, 0.5), grid=False):
    X = rng.integers(0, 6, size=(n, d)).astype(float) if grid else rng.normal(size=(n, d))
    y = rng.choice(classes, size=n)
    return Dataset(X, y, tuple(f"x{i}" for i in range(d)))


# acceptance verdicts, one "criterion N: PASS|FAIL ..." line each, echoed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
