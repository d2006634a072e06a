"""Single-arm restless bandit model and the subsidy-parameterised value iteration.

States are labelled 1..K in every public result; arrays are indexed from 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

ROW_SUM_TOL = 1e-9


def _as_matrix(name, data, shape):
    arr = np.array(data, dtype=float)
    if arr.shape != shape:
        raise ModelError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_stochastic(name, mat):
    if np.any(mat < 0.0) or np.any(mat > 1.0):
        raise ModelError(f"{name} has entries outside [0, 1]")
    sums = mat.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        row = int(bad[0])
        raise ModelError(f"{name} row {row + 1} sums to {sums[row]!r}, not 1")


@dataclass(frozen=True, eq=False)
class ArmModel:
    """One restless arm with two actions (0 = passive, 1 = active).

    ``passive_transitions[s, s']`` and ``active_transitions[s, s']`` are the
    one-step transition probabilities, ``rewards[s, a]`` the immediate reward.
    """

    passive_transitions: np.ndarray
    active_transitions: np.ndarray
    rewards: np.ndarray
    discount: float

    def __post_init__(self):
        p0 = np.asarray(self.passive_transitions, dtype=float)
        if p0.ndim != 2 or p0.shape[0] != p0.shape[1] or p0.shape[0] < 1:
            raise ModelError(f"passive_transitions must be a non-empty square matrix, got shape {p0.shape}")
        k = p0.shape[0]
        p0 = _as_matrix("passive_transitions", p0, (k, k))
        p1 = _as_matrix("active_transitions", self.active_transitions, (k, k))
        r = _as_matrix("rewards", self.rewards, (k, 2))
        _check_stochastic("passive_transitions", p0)
        _check_stochastic("active_transitions", p1)
        beta = float(self.discount)
        if not 0.0 < beta < 1.0:
            raise ModelError(f"discount must lie in (0, 1), got {beta!r}")
        object.__setattr__(self, "passive_transitions", p0)
        object.__setattr__(self, "active_transitions", p1)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "discount", beta)

    @property
    def num_states(self) -> int:
        return self.rewards.shape[0]

    def transitions(self, action: int) -> np.ndarray:
        return self.active_transitions if action else self.passive_transitions

    def with_rewards(self, rewards) -> "ArmModel":
        return ArmModel(self.passive_transitions, self.active_transitions, rewards, self.discount)

    def with_discount(self, discount: float) -> "ArmModel":
        return ArmModel(self.passive_transitions, self.active_transitions, self.rewards, discount)

    def __eq__(self, other):
        if not isinstance(other, ArmModel):
            return NotImplemented
        return (
            self.discount == other.discount
            and np.array_equal(self.passive_transitions, other.passive_transitions)
            and np.array_equal(self.active_transitions, other.active_transitions)
            and np.array_equal(self.rewards, other.rewards)
        )

    __hash__ = None


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule for value iteration and the action tie threshold."""

    max_iterations: int = 100_000
    value_tolerance: float = 1e-9
    action_tolerance: float = 1e-6

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ModelError("max_iterations must be at least 1")
        if not self.value_tolerance > 0:
            raise ModelError("value_tolerance must be positive")
        if not self.action_tolerance > 0:
            raise ModelError("action_tolerance must be positive")


@dataclass(frozen=True, eq=False)
class ValueTable:
    subsidy: float
    q_passive: np.ndarray
    q_active: np.ndarray
    values: np.ndarray
    iterations_used: int
    converged: bool
    # sup-norm successive differences d_t = |V_{t+1} - V_t|, one per backup
    residuals: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def q_gap(self) -> np.ndarray:
        return self.q_active - self.q_passive


def bellman_backup(model: ArmModel, subsidy: float, values_in):
    """One synchronous backup. Returns ``(q_passive, q_active, values_out)``."""
    v = np.asarray(values_in, dtype=float)
    if v.shape != (model.num_states,):
        raise ModelError(f"value vector has shape {v.shape}, expected ({model.num_states},)")
    beta = model.discount
    q0 = model.rewards[:, 0] + subsidy + beta * (model.passive_transitions @ v)
    q1 = model.rewards[:, 1] + beta * (model.active_transitions @ v)
    return q0, q1, np.maximum(q0, q1)


def solve_value_function(model: ArmModel, subsidy: float, config: SolverConfig | None = None) -> ValueTable:
    """Iterate backups from V = 0 until the sup-norm step falls below the tolerance.

    Not converging within ``max_iterations`` is reported through
    ``ValueTable.converged``; it is not an error here.
    """
    return solve_value_functions(model, [subsidy], config, record_residuals=True)[0]


def solve_value_functions(model: ArmModel, subsidies, config: SolverConfig | None = None, record_residuals=False):
    """Run independent value iterations for several subsidies at once.

    Each subsidy's iteration stops (and is frozen) at its own convergence
    step, so results match separate scalar solves.
    """
    config = config or SolverConfig()
    lam = np.asarray(subsidies, dtype=float).ravel()
    k, j = model.num_states, lam.size
    beta = model.discount
    r0 = model.rewards[:, [0]] + lam[None, :]
    r1 = model.rewards[:, [1]]
    v = np.zeros((k, j))
    q0 = np.zeros((k, j))
    q1 = np.zeros((k, j))
    iters = np.zeros(j, dtype=int)
    active = np.ones(j, dtype=bool)
    history = []
    for _ in range(int(config.max_iterations)):
        cols = np.flatnonzero(active)
        if cols.size == 0:
            break
        va = v[:, cols]
        a0 = r0[:, cols] + beta * (model.passive_transitions @ va)
        a1 = r1 + beta * (model.active_transitions @ va)
        vn = np.maximum(a0, a1)
        step = np.max(np.abs(vn - va), axis=0)
        v[:, cols] = vn
        q0[:, cols] = a0
        q1[:, cols] = a1
        iters[cols] += 1
        if record_residuals:
            row = np.full(j, np.nan)
            row[cols] = step
            history.append(row)
        active[cols[step < config.value_tolerance]] = False
    residuals = np.array(history).reshape(-1, j)
    tables = []
    for c in range(j):
        res = residuals[: iters[c], c] if record_residuals else np.empty(0)
        tables.append(
            ValueTable(
                subsidy=float(lam[c]),
                q_passive=q0[:, c].copy(),
                q_active=q1[:, c].copy(),
                values=v[:, c].copy(),
                iterations_used=int(iters[c]),
                converged=not active[c],
                residuals=res,
            )
        )
    return tables


def greedy_actions(q_passive, q_active, action_tolerance: float) -> np.ndarray:
    """Argmax action per state; near-ties (|gap| < tolerance) go to the passive action."""
    gap = np.asarray(q_active) - np.asarray(q_passive)
    return np.where((np.abs(gap) >= action_tolerance) & (gap > 0), 1, 0).astype(np.int8)
