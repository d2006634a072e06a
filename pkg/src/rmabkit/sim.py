"""Monte Carlo simulation of an RMAB instance under a fixed arm-selection rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ModelError
from .policies import (
    IndexTable,
    RmabInstance,
    RolloutConfig,
    myopic_action,
    rollout_action,
    whittle_action,
)


_BATCH = 4096


def _top_m_mask(scores: np.ndarray, m: int) -> np.ndarray:
    # same ordering as the single-state rules: stable sort, ties to the lower arm
    chosen = np.argsort(-scores, axis=-1, kind="stable")[..., :m]
    mask = np.zeros(scores.shape, dtype=np.intp)
    np.put_along_axis(mask, chosen, 1, axis=-1)
    return mask


@dataclass(frozen=True)
class MyopicPolicy:
    name = "myopic"

    def prepare(self, instance):
        return self

    def choose(self, instance, state, rng):
        return myopic_action(instance, state)

    def choose_batch(self, instance, x):
        """0/1 play masks for a (R, N) block of 0-based joint states."""
        return _top_m_mask(instance._rewards[np.arange(instance.num_arms), x, 1], instance.plays_per_step)


@dataclass(frozen=True)
class WhittlePolicy:
    """Whittle index play. ``indices=None`` computes (refined) indices on demand."""

    indices: IndexTable | None = None
    name = "whittle"

    def prepare(self, instance):
        table = self.indices if self.indices is not None else IndexTable.from_instance(instance)
        try:
            table.check_covers(instance)
        except ModelError as exc:
            raise ConfigurationError(f"Whittle policy unavailable: {exc}") from exc
        return WhittlePolicy(table)

    def choose(self, instance, state, rng):
        return whittle_action(instance, state, self.indices)

    def choose_batch(self, instance, x):
        current = np.stack([np.asarray(self.indices.per_arm[n], dtype=float)[x[:, n]] for n in range(instance.num_arms)], axis=1)
        return _top_m_mask(current, instance.plays_per_step)


@dataclass(frozen=True)
class RolloutPolicy:
    config: RolloutConfig = field(default_factory=RolloutConfig)
    name = "rollout"

    def prepare(self, instance):
        return self

    def choose(self, instance, state, rng):
        return rollout_action(instance, state, self.config, rng)


def default_horizon(discount: float) -> int:
    # rounding first keeps 1/(1-0.9) = 10.000000000000002 from becoming 11
    return math.ceil(round(1.0 / (1.0 - discount), 9)) * 5


@dataclass(frozen=True)
class SimulationConfig:
    """``horizon_steps=None`` means ceil(1/(1-beta)) * 5; ``initial_state=None``
    draws each arm's starting state uniformly per replication.

    ``replication_offset`` shifts replication labels, so a run can be split in
    pieces that reproduce the pooled run exactly.
    """

    policy: object = field(default_factory=MyopicPolicy)
    horizon_steps: int | None = None
    replications: int = 100
    seed: int = 0
    initial_state: tuple[int, ...] | None = None
    replication_offset: int = 0

    def __post_init__(self):
        if self.horizon_steps is not None and int(self.horizon_steps) < 1:
            raise ModelError("horizon_steps must be at least 1")
        if int(self.replications) < 1:
            raise ModelError("replications must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ModelError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    per_step_mean_discounted_cumulative: np.ndarray
    per_step_std_error: np.ndarray
    final_value_per_replication: np.ndarray
    policy: str = ""
    # (R, T) discounted cumulative reward per replication
    cumulative: np.ndarray = field(repr=False, default=None)

    @property
    def final_mean(self) -> float:
        return float(self.per_step_mean_discounted_cumulative[-1])

    @property
    def final_std_error(self) -> float:
        return float(self.per_step_std_error[-1])


def replication_streams(seed: int, replication: int):
    """Environment and policy generators for one replication.

    The policy stream is separate so that a policy's internal sampling never
    shifts the environment's draws.
    """
    env = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replication), 0)))
    pol = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replication), 1)))
    return env, pol


def _run_replication(instance: RmabInstance, policy, horizon: int, seed: int, rep: int, initial_state):
    env, pol = replication_streams(seed, rep)
    if initial_state is None:
        x = env.integers(0, instance._sizes)
    else:
        x = instance.state_index(initial_state)
    beta = instance.discount
    n = instance.num_arms
    out = np.empty(horizon)
    total = 0.0
    for t in range(horizon):
        chosen = policy.choose(instance, tuple(int(v) + 1 for v in x), pol)
        played = np.zeros(n, dtype=np.intp)
        played[[a - 1 for a in chosen]] = 1
        total += beta**t * float(instance.rewards_at(x, played).sum())
        out[t] = total
        x = instance.step(x, played, env.random(n))
    return out


def _draws(instance: RmabInstance, horizon: int, seed: int, rep: int, initial_state):
    # identical stream use to _run_replication: initial state, then n uniforms per step
    env, _ = replication_streams(seed, rep)
    x = env.integers(0, instance._sizes) if initial_state is None else instance.state_index(initial_state)
    return x, env.random((horizon, instance.num_arms))


def _run_batch(instance: RmabInstance, policy, horizon: int, seed: int, reps, initial_state):
    """Replications ``reps`` advanced together; only for state-feedback policies."""
    draws = [_draws(instance, horizon, seed, r, initial_state) for r in reps]
    x = np.stack([d[0] for d in draws])
    uniforms = np.stack([d[1] for d in draws])
    beta = instance.discount
    out = np.empty((len(reps), horizon))
    total = np.zeros(len(reps))
    for t in range(horizon):
        played = policy.choose_batch(instance, x)
        total = total + beta**t * instance.rewards_at(x, played).sum(axis=-1)
        out[:, t] = total
        x = instance.step(x, played, uniforms[:, t, :])
    return out


def simulate(instance: RmabInstance, config: SimulationConfig) -> SimulationTrace:
    policy = config.policy.prepare(instance)
    horizon = config.horizon_steps or default_horizon(instance.discount)
    if config.initial_state is not None:
        instance.state_index(config.initial_state)
    reps = int(config.replications)
    cumulative = np.empty((reps, horizon))
    labels = range(config.replication_offset, config.replication_offset + reps)
    if hasattr(policy, "choose_batch"):
        for lo in range(0, reps, _BATCH):
            block = labels[lo:lo + _BATCH]
            cumulative[lo:lo + len(block)] = _run_batch(
                instance, policy, horizon, config.seed, block, config.initial_state
            )
    else:
        for r, label in enumerate(labels):
            cumulative[r] = _run_replication(instance, policy, horizon, config.seed, label, config.initial_state)
    mean = cumulative.mean(axis=0)
    if reps > 1:
        stderr = cumulative.std(axis=0, ddof=1) / math.sqrt(reps)
    else:
        stderr = np.zeros(horizon)
    return SimulationTrace(
        per_step_mean_discounted_cumulative=mean,
        per_step_std_error=stderr,
        final_value_per_replication=cumulative[:, -1].copy(),
        policy=policy.name,
        cumulative=cumulative,
    )
