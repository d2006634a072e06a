import numpy as np
import pytest

from oracles import myopic_sim_expectation
from rmabkit import (
    ArmModel,
    ConfigurationError,
    IndexTable,
    ModelError,
    MyopicPolicy,
    RmabInstance,
    RolloutConfig,
    RolloutPolicy,
    SimulationConfig,
    WhittlePolicy,
    load_fixture,
    simulate,
)
from rmabkit.sim import default_horizon, replication_streams


def two_state_pair():
    a = ArmModel([[0.8, 0.2], [0.3, 0.7]], [[0.4, 0.6], [0.9, 0.1]], [[0.1, 0.5], [0.2, 0.9]], 0.9)
    b = ArmModel([[0.6, 0.4], [0.5, 0.5]], [[0.2, 0.8], [0.7, 0.3]], [[0.0, 0.7], [0.3, 0.4]], 0.9)
    return RmabInstance((a, b))


def test_single_state_geometric_sum():
    arm = ArmModel([[1.0]], [[1.0]], [[0.0, 1.0]], 0.5)
    trace = simulate(RmabInstance((arm,)), SimulationConfig(horizon_steps=30, replications=3))
    assert abs(trace.final_mean - 2.0) < 1e-6
    assert trace.final_std_error == 0.0


def test_default_horizon():
    assert default_horizon(0.5) == 10
    assert default_horizon(0.9) == 50
    assert default_horizon(0.99) == 500
    trace = simulate(two_state_pair(), SimulationConfig(replications=2))
    assert trace.per_step_mean_discounted_cumulative.shape == (50,)


def test_rerun_is_bitwise_identical():
    arm = ArmModel(np.eye(2), np.eye(2), [[0.0, 1.0], [0.0, 2.0]], 0.9)
    inst = RmabInstance((arm, arm))
    cfg = SimulationConfig(horizon_steps=20, replications=5, seed=42)
    a, b = simulate(inst, cfg), simulate(inst, cfg)
    assert np.array_equal(a.cumulative, b.cumulative)


def test_three_step_myopic_matches_enumeration():
    inst = two_state_pair()
    trace = simulate(inst, SimulationConfig(horizon_steps=3, replications=100_000, seed=7))
    exact = myopic_sim_expectation(inst.arms, 3)
    assert abs(trace.final_mean - exact) <= 3 * trace.final_std_error


def test_fixed_initial_state_first_step():
    inst = two_state_pair()
    trace = simulate(inst, SimulationConfig(horizon_steps=1, replications=4, initial_state=(2, 1)))
    # myopic plays arm 1 (0.9 > 0.7): 0.9 + 0.0
    assert np.allclose(trace.final_value_per_replication, 0.9)


def test_split_replications_pool_exactly():
    inst = two_state_pair()
    full = simulate(inst, SimulationConfig(horizon_steps=15, replications=10, seed=3))
    first = simulate(inst, SimulationConfig(horizon_steps=15, replications=5, seed=3))
    second = simulate(inst, SimulationConfig(horizon_steps=15, replications=5, seed=3, replication_offset=5))
    pooled = np.concatenate([first.cumulative, second.cumulative])
    assert np.array_equal(pooled, full.cumulative)
    assert pooled.mean(axis=0)[-1] == pytest.approx(full.final_mean, abs=1e-15)


def test_policy_stream_separate_from_environment():
    e1, p1 = replication_streams(5, 0)
    e2, _ = replication_streams(5, 0)
    assert e1.random() == e2.random()
    assert e1.random() != p1.random()


def test_mean_nondecreasing_with_nonnegative_rewards_and_tail_bound():
    inst = RmabInstance((load_fixture("restart5"), load_fixture("akbarzadeh3"), load_fixture("circular4")))
    trace = simulate(inst, SimulationConfig(horizon_steps=60, replications=20, seed=1))
    mean = trace.per_step_mean_discounted_cumulative
    assert np.all(np.diff(mean) >= 0)
    beta = inst.discount
    rmax = max(np.abs(a.rewards).max() for a in inst.arms)
    bound = beta ** np.arange(1, 60) * inst.num_arms * rmax / (1 - beta)
    c = trace.cumulative
    assert np.all(np.abs(c[:, -1:] - c[:, :-1]) <= bound + 1e-12)


def test_whittle_on_nonindexable_arm_fails_before_simulation():
    inst = RmabInstance((load_fixture("fivestate-nonindexable"), load_fixture("fivestate-indexable-mod1")))
    with pytest.raises(ConfigurationError):
        simulate(inst, SimulationConfig(policy=WhittlePolicy(), horizon_steps=5, replications=1))


def test_whittle_table_mismatch_is_configuration_error():
    inst = two_state_pair()
    with pytest.raises(ConfigurationError):
        simulate(inst, SimulationConfig(policy=WhittlePolicy(IndexTable((np.zeros(2),))), horizon_steps=2))


def test_whittle_and_rollout_run():
    inst = two_state_pair()
    for policy in (WhittlePolicy(), RolloutPolicy(RolloutConfig(horizon=2, trajectories=5))):
        t = simulate(inst, SimulationConfig(policy=policy, horizon_steps=10, replications=3))
        assert t.policy == policy.name
        assert np.all(np.isfinite(t.per_step_mean_discounted_cumulative))


def test_rollout_simulation_reproducible():
    inst = two_state_pair()
    cfg = SimulationConfig(policy=RolloutPolicy(RolloutConfig(horizon=2, trajectories=5)), horizon_steps=8, replications=3, seed=9)
    assert np.array_equal(simulate(inst, cfg).cumulative, simulate(inst, cfg).cumulative)


@pytest.mark.parametrize("kw", [dict(horizon_steps=0), dict(replications=0), dict(seed=-1), dict(seed=2**64)])
def test_config_validation(kw):
    with pytest.raises(ModelError):
        SimulationConfig(**kw)


def test_bad_initial_state_rejected():
    with pytest.raises(ModelError):
        simulate(two_state_pair(), SimulationConfig(initial_state=(3, 1), horizon_steps=2))


@pytest.mark.parametrize("policy", [MyopicPolicy(), WhittlePolicy()])
def test_batched_path_matches_per_replication_loop(policy):
    from rmabkit.sim import _run_replication

    inst = RmabInstance((load_fixture("restart5"), load_fixture("akbarzadeh3"), load_fixture("ninomora3-indexable")))
    trace = simulate(inst, SimulationConfig(policy=policy, horizon_steps=40, replications=6, seed=12))
    prepared = policy.prepare(inst)
    for r in range(6):
        assert np.array_equal(trace.cumulative[r], _run_replication(inst, prepared, 40, 12, r, None))
