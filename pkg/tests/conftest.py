import io

import numpy as np
import pytest

from lmmoments.dataset import GroupedDataset, read_csv
from lmmoments.gls import FixedEffectsFit


def make_dataset(rng, sizes, p=2, b_scale=0.5, eps_scale=0.5, beta=None):
    sizes = np.asarray(sizes)
    N = int(sizes.sum())
    x = rng.standard_normal((N, p))
    beta = np.arange(1.0, p + 1) if beta is None else np.asarray(beta, dtype=float)
    b = b_scale * rng.standard_normal(sizes.size)
    y = 1.0 + x @ beta + np.repeat(b, sizes) + eps_scale * rng.standard_normal(N)
    return GroupedDataset(ids=tuple(f"g{i}" for i in range(sizes.size)), sizes=sizes, x=x, y=y)


def residual_fit(groups):
    return FixedEffectsFit.from_residuals(groups)


def parse(text):
    return read_csv(io.StringIO(text))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# -- acceptance reporting ------------------------------------------------------

_CRITERIA_LINES = []


class CriterionLog:
    """Collects one pass/fail line per check; the test fails if any check fails."""

    def __init__(self, label):
        self.label = label
        self.failed = []

    def check(self, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {self.label}: {name}" + (f"  ({detail})" if detail else "")
        _CRITERIA_LINES.append(line)
        print(line)
        if not ok:
            self.failed.append(line)
        return ok

    def assert_all(self):
        assert not self.failed, "\n".join(self.failed)


@pytest.fixture
def criterion(request):
    return CriterionLog(request.node.name)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA_LINES:
            terminalreporter.write_line(line)
