"""Arm-selection rules for a restless multi-armed bandit: myopic, Whittle index, rollout.

Arms and states are 1-based in every argument and result. A joint state is a
sequence with one state label per arm; an action is a frozenset of the arm
labels that are played.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ArmModel, SolverConfig
from .errors import ConfigurationError, ModelError
from .indexability import SubsidyGrid, compute_whittle_indices


@dataclass(frozen=True, eq=False)
class RmabInstance:
    arms: tuple[ArmModel, ...]
    plays_per_step: int = 1
    # arrays stacked over arms, padded to the largest state count
    _rewards: np.ndarray = field(init=False, repr=False)
    _cdf: np.ndarray = field(init=False, repr=False)
    _sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        arms = tuple(self.arms)
        if not arms:
            raise ModelError("an instance needs at least one arm")
        betas = {arm.discount for arm in arms}
        if len(betas) != 1:
            raise ModelError(f"arms disagree on the discount factor: {sorted(betas)}")
        m = int(self.plays_per_step)
        if not 1 <= m <= len(arms):
            raise ModelError(f"plays_per_step must lie in 1..{len(arms)}, got {m}")
        kmax = max(arm.num_states for arm in arms)
        rewards = np.zeros((len(arms), kmax, 2))
        cdf = np.ones((2, len(arms), kmax, kmax))
        for n, arm in enumerate(arms):
            k = arm.num_states
            rewards[n, :k] = arm.rewards
            for a in (0, 1):
                c = np.cumsum(arm.transitions(a), axis=1)
                c[:, -1] = 1.0
                cdf[a, n, :k, :k] = c
        object.__setattr__(self, "arms", arms)
        object.__setattr__(self, "plays_per_step", m)
        object.__setattr__(self, "_rewards", rewards)
        object.__setattr__(self, "_cdf", cdf)
        object.__setattr__(self, "_sizes", np.array([arm.num_states for arm in arms]))

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    @property
    def discount(self) -> float:
        return self.arms[0].discount

    def state_index(self, state) -> np.ndarray:
        """Validate a joint state and return it as a 0-based integer array."""
        x = np.asarray(state)
        if x.shape != (self.num_arms,):
            raise ModelError(f"joint state must have {self.num_arms} entries, got shape {x.shape}")
        if not np.issubdtype(x.dtype, np.integer):
            if not np.all(x == np.round(x)):
                raise ModelError("joint state entries must be integers")
            x = x.astype(int)
        if np.any(x < 1) or np.any(x > self._sizes):
            raise ModelError(f"joint state {tuple(int(v) for v in x)} outside the arms' state ranges")
        return x.astype(np.intp) - 1

    def rewards_at(self, x: np.ndarray, played: np.ndarray) -> np.ndarray:
        """Per-arm reward for 0-based states ``x`` and 0/1 action vector ``played`` (broadcasts)."""
        n = np.arange(self.num_arms)
        return self._rewards[n, x, played]

    def step(self, x: np.ndarray, played: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Next 0-based states by inverse-CDF sampling (broadcasts over leading axes)."""
        n = np.arange(self.num_arms)
        rows = self._cdf[played, n, x]
        return np.minimum((rows <= uniforms[..., None]).sum(axis=-1), self._sizes - 1)


@dataclass(frozen=True, eq=False)
class IndexTable:
    """Precomputed Whittle indices, ``per_arm[n][s-1]`` for arm n+1 in state s."""

    per_arm: tuple[np.ndarray, ...]

    @classmethod
    def from_instance(
        cls,
        instance: RmabInstance,
        grid: SubsidyGrid | None = None,
        config: SolverConfig | None = None,
        refine: bool = True,
    ) -> "IndexTable":
        tables = []
        for n, arm in enumerate(instance.arms, start=1):
            report = compute_whittle_indices(arm, grid, config, refine=refine)
            if not report.indexable:
                w = report.witnesses[0]
                raise ConfigurationError(
                    f"arm {n} is not indexable (state {w.state} at subsidies {w.subsidies}); "
                    "Whittle indices are undefined"
                )
            tables.append(report.whittle_index)
        return cls(tuple(tables))

    def check_covers(self, instance: RmabInstance) -> None:
        if len(self.per_arm) != instance.num_arms:
            raise ModelError(f"index table covers {len(self.per_arm)} arms, instance has {instance.num_arms}")
        for n, (vec, arm) in enumerate(zip(self.per_arm, instance.arms), start=1):
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (arm.num_states,) or np.any(np.isnan(vec)):
                raise ModelError(f"index table entry for arm {n} does not cover states 1..{arm.num_states}")


@dataclass(frozen=True)
class RolloutConfig:
    horizon: int = 4
    trajectories: int = 30
    candidate_limit: int | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.horizon) < 1 or int(self.trajectories) < 1:
            raise ModelError("rollout horizon and trajectory count must be positive")
        if self.candidate_limit is not None and int(self.candidate_limit) < 1:
            raise ModelError("candidate_limit must be positive")


@dataclass(frozen=True, eq=False)
class RolloutDecision:
    """Chosen arm set plus every evaluated candidate's scores.

    ``improvement_scores`` rank candidates (immediate reward plus discounted
    look-ahead estimate); ``lookahead_scores`` are the plain look-ahead
    estimates. ``trajectory_steps`` counts simulated trajectory steps.
    """

    arms: frozenset
    candidates: tuple[tuple[int, ...], ...]
    improvement_scores: np.ndarray
    lookahead_scores: np.ndarray
    trajectory_steps: int


def _top_m(scores: np.ndarray, m: int) -> np.ndarray:
    # stable sort: equal scores keep ascending arm order
    return np.argsort(-scores, axis=-1, kind="stable")[..., :m]


def _as_action(positions) -> frozenset:
    return frozenset(int(p) + 1 for p in positions)


def myopic_action(instance: RmabInstance, state) -> frozenset:
    """The M arms with the highest active reward in their current state."""
    x = instance.state_index(state)
    active = instance.rewards_at(x, np.ones(instance.num_arms, dtype=np.intp))
    return _as_action(_top_m(active, instance.plays_per_step))


def whittle_action(instance: RmabInstance, state, indices: IndexTable) -> frozenset:
    """The M arms with the highest Whittle index in their current state."""
    x = instance.state_index(state)
    indices.check_covers(instance)
    current = np.array([indices.per_arm[n][x[n]] for n in range(instance.num_arms)], dtype=float)
    return _as_action(_top_m(current, instance.plays_per_step))


def _mask(instance: RmabInstance, action) -> np.ndarray:
    arms = sorted(int(a) for a in action)
    if len(arms) != instance.plays_per_step or len(set(arms)) != len(arms):
        raise ModelError(f"an action must name {instance.plays_per_step} distinct arms, got {arms}")
    if arms[0] < 1 or arms[-1] > instance.num_arms:
        raise ModelError(f"arm labels must lie in 1..{instance.num_arms}")
    mask = np.zeros(instance.num_arms, dtype=np.intp)
    mask[np.array(arms) - 1] = 1
    return mask


def _trajectory_returns(instance: RmabInstance, x: np.ndarray, first: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Discounted H-step returns; ``first`` is (C, N) initial masks, ``uniforms`` (L, H, N).

    Returns a (C, L) array. All candidates share the same uniforms.
    """
    c = first.shape[0]
    num_traj, horizon, n = uniforms.shape
    beta = instance.discount
    states = np.broadcast_to(x, (c, num_traj, n))
    played = np.broadcast_to(first[:, None, :], (c, num_traj, n))
    total = np.zeros((c, num_traj))
    arm_ids = np.arange(n)
    for h in range(horizon):
        if h > 0:
            active = instance._rewards[arm_ids, states, 1]
            chosen = _top_m(active, instance.plays_per_step)
            played = np.zeros((c, num_traj, n), dtype=np.intp)
            np.put_along_axis(played, chosen, 1, axis=-1)
        total += beta**h * instance.rewards_at(states, played).sum(axis=-1)
        states = instance.step(states, played, uniforms[:, h, :])
    return total


def _rng(config: RolloutConfig, rng):
    return np.random.default_rng(config.seed) if rng is None else rng


def rollout_value_samples(instance: RmabInstance, state, initial_action, config: RolloutConfig, rng=None) -> np.ndarray:
    """Per-trajectory discounted returns Q_l for a fixed initial action (length L)."""
    rng = _rng(config, rng)
    x = instance.state_index(state)
    first = _mask(instance, initial_action)[None, :]
    uniforms = rng.random((config.trajectories, config.horizon, instance.num_arms))
    return _trajectory_returns(instance, x, first, uniforms)[0]


def rollout_value_estimate(instance: RmabInstance, state, initial_action, config: RolloutConfig, rng=None) -> float:
    """Average H-step discounted return under the myopic base policy after ``initial_action``."""
    return float(rollout_value_samples(instance, state, initial_action, config, rng).mean())


def best_subsets(gains, m: int, limit: int) -> list[tuple[int, ...]]:
    """The ``limit`` size-m subsets of 0-based arms with the largest gain sums.

    Ordered by decreasing sum, ties by lexicographically smallest subset.
    """
    gains = np.asarray(gains, dtype=float)
    n = gains.size
    order = np.argsort(-gains, kind="stable")

    def key(pos):
        arms = tuple(sorted(int(order[p]) for p in pos))
        return (-float(gains[list(arms)].sum()), arms)

    start = tuple(range(m))
    heap = [(key(start), start)]
    seen = {start}
    out = []
    while heap and len(out) < limit:
        (_, arms), pos = heapq.heappop(heap)
        out.append(arms)
        for i in range(m):
            nxt = pos[i] + 1
            if nxt < n and (i == m - 1 or nxt < pos[i + 1]):
                succ = pos[:i] + (nxt,) + pos[i + 1:]
                if succ not in seen:
                    seen.add(succ)
                    heapq.heappush(heap, (key(succ), succ))
    return out


def candidate_actions(instance: RmabInstance, x: np.ndarray, config: RolloutConfig) -> list[tuple[int, ...]]:
    n, m = instance.num_arms, instance.plays_per_step
    if m == 1:
        return [(i,) for i in range(n)]
    limit = config.candidate_limit if config.candidate_limit is not None else n
    limit = min(int(limit), math.comb(n, m))
    rewards = instance._rewards[np.arange(n), x]
    return best_subsets(rewards[:, 1] - rewards[:, 0], m, limit)


def rollout_decision(instance: RmabInstance, state, config: RolloutConfig, rng=None) -> RolloutDecision:
    """Score candidate first actions and pick the best.

    Without an explicit ``rng`` the generator is seeded from ``config.seed``.
    """
    rng = _rng(config, rng)
    x = instance.state_index(state)
    n = instance.num_arms
    candidates = candidate_actions(instance, x, config)
    first = np.zeros((len(candidates), n), dtype=np.intp)
    for i, cand in enumerate(candidates):
        first[i, list(cand)] = 1
    uniforms = rng.random((config.trajectories, config.horizon, n))
    lookahead = _trajectory_returns(instance, x, first, uniforms).mean(axis=1)
    immediate = instance.rewards_at(x, first).sum(axis=-1)
    scores = immediate + instance.discount * lookahead

    top = scores.max()
    chosen = min(candidates[i] for i in range(len(candidates)) if scores[i] == top)
    return RolloutDecision(
        arms=_as_action(chosen),
        candidates=tuple(tuple(a + 1 for a in c) for c in candidates),
        improvement_scores=scores,
        lookahead_scores=lookahead,
        trajectory_steps=len(candidates) * config.trajectories * config.horizon,
    )


def rollout_action(instance: RmabInstance, state, config: RolloutConfig, rng=None) -> frozenset:
    """One-step improvement over the myopic base policy, estimated by simulation."""
    return rollout_decision(instance, state, config, rng).arms
