from __future__ import annotations

import numpy as np
import pytest

from yamabe_ancients.barriers import AncientParams, BarrierProfiles
from yamabe_ancients.profiles import ModelParams, solve_traveling_wave

# certified margins found by find_q at n = 4, tau0 = -10 (rounded up)
CERTIFIED = {
    "sym_k1": AncientParams(2.0, 2.0, k=1.0, q=0.415625, tau0=-10.0, certified=True),
    "sym_k0": AncientParams(2.0, 2.0, k=0.0, q=0.069921875, tau0=-10.0, certified=True),
    "asym_k1": AncientParams(2.0, 3.0, h=0.5, h2=-1.0, k=1.0, q=0.44375, tau0=-10.0,
                             certified=True),
}


def fd8(f, x, h):
    """Eighth-order central first and second derivatives of a vectorized f."""
    c1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
    c2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
    vals = np.array([f(x + k * h) for k in range(-4, 5)])
    d1 = np.tensordot(c1, vals, axes=1) / h
    d2 = np.tensordot(c2, vals, axes=1) / h ** 2
    return d1, d2


@pytest.fixture(scope="session")
def model4():
    return ModelParams(4)


@pytest.fixture(scope="session")
def wave2(model4):
    return solve_traveling_wave(2.0, model4)


@pytest.fixture(scope="session")
def prof_sym(model4):
    return BarrierProfiles.build(CERTIFIED["sym_k1"], model4)


@pytest.fixture(scope="session")
def prof_asym(model4):
    return BarrierProfiles.build(CERTIFIED["asym_k1"], model4)
