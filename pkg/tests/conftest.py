"""Shared fixtures and the acceptance summary hook."""
import numpy as np
import pytest

from specdmd.gridstore import TimeGrid
from specdmd.synth import MixtureSpec, gen_exponential_mixture

# Filled by tests/test_acceptance.py, printed at the end of the session.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def planted(n, eigs, m, dt, noise=0.0, seed=0):
    spec = MixtureSpec(n=n, eigs=tuple(eigs), times=TimeGrid.uniform(m, dt),
                       mode_seed=seed, amp_seed=seed + 1, noise_seed=seed + 2,
                       noise_sigma=noise)
    return gen_exponential_mixture(spec)


@pytest.fixture
def three_mode():
    eigs = (-0.1 + 2 * np.pi * 1j, -0.1 - 2 * np.pi * 1j, -0.5)
    return planted(10, eigs, 200, 0.02)
