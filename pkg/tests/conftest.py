import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from smcmc.models import GHSkewedTPoissonModel, LinearGaussianModel

ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def frac(s: str) -> float:
    return float(Fraction(s))


@pytest.fixture
def oracles():
    return ORACLES


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gauss4():
    return LinearGaussianModel.on_grid(4, alpha=0.9, obs_var=1.0)


@pytest.fixture
def gh4():
    return GHSkewedTPoissonModel.on_grid(4, alpha=0.9, nu=7.0, gamma=0.3)


@pytest.fixture
def acceptance_log(request):
    """Collects ``(criterion, passed, detail)``; echoed in the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
