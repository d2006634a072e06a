"""Catalog of named single-arm models and multi-arm instances.

The single-arm entries are the worked examples from the indexability study;
matrices are entered exactly as printed. The multi-arm entries are bundled
model files (``data/*.json``) used for the policy-comparison experiments.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .core import ArmModel
from .errors import ModelError


def _restart(num_states: int, base: float, discount: float = 0.9) -> ArmModel:
    k = num_states
    p0 = np.zeros((k, k))
    p0[:, 0] = 0.1
    for s in range(k):
        p0[s, min(s + 1, k - 1)] += 0.9
    p1 = np.zeros((k, k))
    p1[:, 0] = 1.0
    rewards = np.zeros((k, 2))
    rewards[:, 0] = base ** np.arange(1, k + 1)
    return ArmModel(p0, p1, rewards, discount)


def circular4() -> ArmModel:
    p0 = np.array([
        [1 / 2, 0, 0, 1 / 2],
        [1 / 2, 1 / 2, 0, 0],
        [0, 1 / 2, 1 / 2, 0],
        [0, 0, 1 / 2, 1 / 2],
    ])
    rewards = np.array([[-1, -1], [0, 0], [0, 0], [1, 1]], dtype=float)
    return ArmModel(p0, p0.T, rewards, 0.9)


def restart5() -> ArmModel:
    return _restart(5, 0.9)


def restart10() -> ArmModel:
    return _restart(10, 0.95)


def restart100() -> ArmModel:
    return _restart(100, 0.99)


def randomwalk5() -> ArmModel:
    p = np.array([
        [3, 7, 0, 0, 0],
        [1, 2, 7, 0, 0],
        [0, 1, 2, 7, 0],
        [0, 0, 1, 2, 7],
        [0, 0, 0, 3, 7],
    ]) / 10
    rewards = np.zeros((5, 2))
    rewards[:, 1] = 0.9 ** np.arange(1, 6)
    return ArmModel(p, p.copy(), rewards, 0.9)


def akbarzadeh3() -> ArmModel:
    p0 = np.array([[0.3629, 0.5026, 0.1343], [0.0823, 0.7534, 0.1643], [0.2460, 0.0294, 0.7246]])
    # the first printed row sums to 0.9998; rescale it proportionally
    p0[0] /= p0[0].sum()
    p1 = [[0.1719, 0.1749, 0.6532], [0.0547, 0.9317, 0.0136], [0.1547, 0.6271, 0.2182]]
    rewards = [[0, 0.44138], [0, 0.8033], [0, 0.14257]]
    return ArmModel(p0, p1, rewards, 0.9)


def ninomora3_indexable() -> ArmModel:
    p0 = [[0.1810, 0.4801, 0.3389], [0.2676, 0.2646, 0.4678], [0.5304, 0.2843, 0.1853]]
    p1 = [[0.2841, 0.4827, 0.2332], [0.5131, 0.0212, 0.4657], [0.4612, 0.0081, 0.5307]]
    rewards = [[0, 0.9016], [0, 0.10949], [0, 0.01055]]
    return ArmModel(p0, p1, rewards, 0.9)


def ninomora3_nonindexable() -> ArmModel:
    p0 = [[0.1902, 0.4156, 0.3942], [0.5676, 0.4191, 0.0133], [0.0191, 0.1097, 0.8712]]
    p1 = [[0.7796, 0.0903, 0.1301], [0.1903, 0.1863, 0.6234], [0.2901, 0.3901, 0.3198]]
    rewards = [[0.458, 0.9631], [0.5308, 0.7963], [0.6873, 0.1057]]
    return ArmModel(p0, p1, rewards, 0.9)


FIVESTATE_P0 = (
    (0.1502, 0.0400, 0.4156, 0.0300, 0.3642),
    (0.4000, 0.3500, 0.0800, 0.1200, 0.0500),
    (0.5276, 0.0400, 0.3991, 0.0200, 0.0133),
    (0.0500, 0.1000, 0.1500, 0.2000, 0.5000),
    (0.0191, 0.0100, 0.0897, 0.0300, 0.8512),
)
FIVESTATE_P1 = (
    (0.7196, 0.0500, 0.0903, 0.0100, 0.1301),
    (0.5500, 0.2000, 0.0500, 0.0800, 0.1200),
    (0.1903, 0.0100, 0.1663, 0.0100, 0.6234),
    (0.2000, 0.0500, 0.1500, 0.1000, 0.5000),
    (0.2501, 0.0100, 0.3901, 0.0300, 0.3198),
)


def _fivestate(rewards, discount=0.9) -> ArmModel:
    return ArmModel(FIVESTATE_P0, FIVESTATE_P1, rewards, discount)


def fivestate_nonindexable() -> ArmModel:
    return _fivestate([
        [0.4580, 0.9631],
        [0.5100, 0.8100],
        [0.5308, 0.7963],
        [0.6710, 0.1061],
        [0.6873, 0.1057],
    ])


_MOD1_REWARDS = [
    [0.4580, 0.9631],
    [0.5100, 0.8100],
    [0.6508, 0.7963],
    [0.6710, 0.6061],
    [0.6873, 0.5057],
]


def fivestate_indexable_mod1() -> ArmModel:
    return _fivestate(_MOD1_REWARDS)


def fivestate_indexable_mod2() -> ArmModel:
    return _fivestate([
        [0.4580, 0.5057],
        [0.5100, 0.6061],
        [0.6508, 0.7963],
        [0.6710, 0.8100],
        [0.6873, 0.9631],
    ])


def fivestate_indexable_beta99() -> ArmModel:
    return _fivestate(_MOD1_REWARDS, discount=0.99)


ARM_FIXTURES = {
    "circular4": circular4,
    "restart5": restart5,
    "restart10": restart10,
    "restart100": restart100,
    "randomwalk5": randomwalk5,
    "akbarzadeh3": akbarzadeh3,
    "ninomora3-indexable": ninomora3_indexable,
    "ninomora3-nonindexable": ninomora3_nonindexable,
    "fivestate-nonindexable": fivestate_nonindexable,
    "fivestate-indexable-mod1": fivestate_indexable_mod1,
    "fivestate-indexable-mod2": fivestate_indexable_mod2,
    "fivestate-indexable-beta99": fivestate_indexable_beta99,
}

INSTANCE_FIXTURES = {
    "rmab3-nonidentical": "rmab3_nonidentical.json",
    "rmab5-nonidentical": "rmab5_nonidentical.json",
}


def fixture_names(instances: bool = False) -> list[str]:
    return list(INSTANCE_FIXTURES if instances else ARM_FIXTURES)


def instance_fixture_text(name: str) -> str:
    try:
        filename = INSTANCE_FIXTURES[name]
    except KeyError:
        raise ModelError(f"unknown fixture {name!r}") from None
    return resources.files("rmabkit").joinpath("data", filename).read_text()


def load_fixture(name: str):
    """Return the named ArmModel, or an RmabInstance for multi-arm entries."""
    if name in ARM_FIXTURES:
        return ARM_FIXTURES[name]()
    if name in INSTANCE_FIXTURES:
        from .modelio import parse_model

        return parse_model(instance_fixture_text(name)).instance()
    raise ModelError(f"unknown fixture {name!r}; known: {', '.join(ARM_FIXTURES)}, {', '.join(INSTANCE_FIXTURES)}")
