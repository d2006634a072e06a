import io
import json

import numpy as np
import pytest

from oracles import random_arm, read_csv_grid
from rmabkit import (
    ModelError,
    ParseError,
    PolicyMatrix,
    RmabInstance,
    SimulationConfig,
    SubsidyGrid,
    check_structural_conditions,
    compute_whittle_indices,
    fixture_names,
    load_fixture,
    parse_model,
    serialize_model,
    simulate,
    write_csv,
)
from rmabkit.modelio import ModelFile, arm_digest, fixture_digest, fixture_text, fmt, single_arm_file
from rmabkit.core import SolverConfig

PINNED_DIGESTS = {
    "circular4": "e9de052c1af89b929792475e9879e8a42743e1bdce16f352c8bfe67dcb03ae8d",
    "restart5": "88e873f5b15dcb7ea4c71c1f94058007b790efc53717370bab693ae08f817e1e",
    "restart10": "06df09a41f1755fea1c02bc68898ccca0164512cbec9fe59840a341ea583909a",
    "restart100": "adf375b83425059e1492e51bda456c2bda718908d48f14c4172b8cd907645353",
    "randomwalk5": "f1d5868c06b1d3ac0b8145c48c8e041e18cffe2ff91d1ec2c8ddc6ecd532adc7",
    "akbarzadeh3": "555176d9e9dfcb869936b2ac068f82760c75afd50361e6b2fa82031983565b72",
    "ninomora3-indexable": "7df09ce0d512b44b8ef5a3bc8a79daed24ee6aeddd95026d4eaf5c642f565d8b",
    "ninomora3-nonindexable": "ca7076a6b0cefd955d32ebfa51d919a7e14e9de5e9966b34f3ee40af10753688",
    "fivestate-nonindexable": "f33ad8aea107e7bbd6edf5becaa49462eabfa5dbd789de6601d79710cc220a79",
    "fivestate-indexable-mod1": "1a7044228faa9fe0f63b3b2dc5fa4889b2a12d41f0975787945d889867f0b749",
    "fivestate-indexable-mod2": "aa5e7cdac54bbdd9d762c8412e532d66326397d5640ca903f8992c5786495d5e",
    "fivestate-indexable-beta99": "9ed3b63e52f0192aa10c32180d2df651e7d2855146f254b0df69ba3f93d7d2e9",
    "rmab3-nonidentical": "78888a1cbe6e111eb20756880da71efbeb169d0ea441ea296e5e578a35ea2f2f",
    "rmab5-nonidentical": "ce8bad9dba043c355b2580dde8db2a82a80be0f47faacad76f45a84e4a6cd229",
}


def minimal(**arm_overrides):
    arm = {
        "num_states": 2,
        "discount": 0.9,
        "passive_transitions": [[0.5, 0.5], [0.0, 1.0]],
        "active_transitions": [[1.0, 0.0], [1.0, 0.0]],
        "rewards": [[0.0, 1.0], [0.5, 0.2]],
    }
    arm.update(arm_overrides)
    return {"format_version": 1, "arms": {"a": arm}}


def parse_err(doc):
    with pytest.raises(ParseError) as info:
        parse_model(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(info.value)


@pytest.mark.parametrize("name", sorted(PINNED_DIGESTS))
def test_fixture_digest_pinned(name):
    assert fixture_digest(name) == PINNED_DIGESTS[name]


def test_catalog_size():
    assert len(fixture_names()) == 12
    assert set(fixture_names()) | set(fixture_names(instances=True)) == set(PINNED_DIGESTS)


def test_circular_active_is_transpose():
    m = parse_model(fixture_text("circular4")).arm()
    assert np.array_equal(m.active_transitions, m.passive_transitions.T)


def test_restart5_passive_rewards():
    m = load_fixture("restart5")
    assert np.allclose(m.rewards[:, 0], [0.9, 0.81, 0.729, 0.6561, 0.59049], rtol=0, atol=1e-15)
    assert np.all(m.rewards[:, 1] == 0)


def test_randomwalk_same_dynamics():
    m = load_fixture("randomwalk5")
    assert np.array_equal(m.active_transitions, m.passive_transitions)
    assert np.allclose(m.rewards[:, 1], 0.9 ** np.arange(1, 6))
    assert np.all(m.rewards[:, 0] == 0)


def test_fivestate_active_rewards():
    m = load_fixture("fivestate-nonindexable")
    assert m.rewards[:, 1].tolist() == [0.9631, 0.8100, 0.7963, 0.1061, 0.1057]


def test_beta99_variant_only_changes_discount():
    a, b = load_fixture("fivestate-indexable-mod1"), load_fixture("fivestate-indexable-beta99")
    assert b.discount == 0.99
    assert a.with_discount(0.99) == b


def test_instance_fixtures():
    for name, n in [("rmab3-nonidentical", 3), ("rmab5-nonidentical", 5)]:
        inst = load_fixture(name)
        assert isinstance(inst, RmabInstance)
        assert inst.num_arms == n and inst.plays_per_step == 1 and inst.discount == 0.99


def test_unknown_fixture():
    with pytest.raises(ModelError):
        load_fixture("nope")


@pytest.mark.parametrize("name", fixture_names() + fixture_names(instances=True))
def test_fixture_round_trip(name):
    text = fixture_text(name)
    first = parse_model(text)
    assert serialize_model(first) == text
    assert parse_model(serialize_model(first)) == first


@pytest.mark.parametrize("seed", range(10))
def test_random_round_trip(seed):
    rng = np.random.default_rng(seed)
    arms = {f"arm{i}": random_arm(rng, int(rng.integers(1, 6))) for i in range(3)}
    mf = ModelFile(arms)
    back = parse_model(serialize_model(mf))
    assert back == mf
    assert parse_model(serialize_model(back).encode()) == back


def test_rescales_near_stochastic_rows():
    mf = parse_model(json.dumps(minimal(passive_transitions=[[0.5, 0.5000004], [0.0, 1.0]])))
    row = mf.arm().passive_transitions[0]
    assert abs(row.sum() - 1) < 1e-15
    assert row[0] == pytest.approx(0.5 / 1.0000004, abs=1e-15)


def test_rejects_row_naming_it():
    msg = parse_err(minimal(active_transitions=[[1.0, 0.0], [0.5, 0.4]]))
    assert "arms.a.active_transitions row 2" in msg


def test_empty_input_names_position():
    assert "line 1 column 1" in parse_err("")


def test_syntax_error_position():
    assert "line 3" in parse_err('{\n  "format_version": 1,\n  "arms": [,]\n}')


@pytest.mark.parametrize("doc,where", [
    ({"format_version": 2, "arms": {}}, "format_version"),
    ({"format_version": 1, "arms": {}}, "arms"),
    ({"format_version": 1, "arms": {"a": {}}, "extra": 1}, "top level"),
    (minimal(num_states=3), "passive_transitions"),
    (minimal(discount=1.5), "discount"),
    (minimal(rewards=[[0, "x"], [0, 0]]), "rewards row 1 column 2"),
    (minimal(rewards=[[0, 1]]), "rewards"),
    (minimal(passive_transitions=[[1.5, -0.5], [0, 1]]), "passive_transitions row 1"),
    (dict(minimal(), instance={"arms": ["b"]}), "instance.arms[0]"),
    (dict(minimal(), instance={"arms": ["a"], "plays_per_step": 2}), "instance.plays_per_step"),
    (dict(minimal(), instance={"arms": ["a"], "discount": 0.5}), "instance.discount"),
])
def test_parse_errors_locate_problem(doc, where):
    assert where in parse_err(doc)


def test_parse_error_is_model_error():
    assert issubclass(ParseError, ModelError)


def test_instance_block():
    doc = minimal()
    doc["instance"] = {"arms": ["a", "a", "a"], "plays_per_step": 2}
    mf = parse_model(json.dumps(doc))
    inst = mf.instance()
    assert inst.num_arms == 3 and inst.plays_per_step == 2
    assert parse_model(serialize_model(mf)) == mf


def test_arm_digest_sensitivity():
    arm = load_fixture("restart5")
    cfg = SolverConfig()
    base = arm_digest(arm, cfg, None, True)
    assert base == arm_digest(load_fixture("restart5"), SolverConfig(), None, True)
    assert base != arm_digest(arm.with_discount(0.8), cfg, None, True)
    assert base != arm_digest(arm, SolverConfig(action_tolerance=1e-5), None, True)
    assert base != arm_digest(arm, cfg, SubsidyGrid.linspace(-1, 1, 11), True)
    assert base != arm_digest(arm, cfg, None, False)


# CSV ----------------------------------------------------------------------

def test_fmt_twelve_significant_digits():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(-0.4) == "-0.4"
    assert fmt(2.0) == "2"
    assert fmt(123456789.123456) == "123456789.123"


def test_policy_matrix_csv_small():
    pm = PolicyMatrix.from_actions([[1, 0]], SubsidyGrid([-1.0, 1.0]))
    buf = io.StringIO()
    write_csv(pm, buf)
    assert buf.getvalue() == "state,-1,1\n1,1,0\n"


def test_policy_matrix_csv_round_trip(tmp_path):
    report = compute_whittle_indices(load_fixture("ninomora3-nonindexable"), SubsidyGrid.linspace(-1, 1, 21))
    path = tmp_path / "p.csv"
    write_csv(report.policy_matrix, path)
    header, rows = read_csv_grid(path)
    assert header[0] == "state"
    assert np.array_equal(np.array([float(v) for v in header[1:]]), report.policy_matrix.grid.points)
    assert [int(r[0]) for r in rows] == [1, 2, 3]
    assert np.array_equal(np.array([[int(v) for v in r[1:]] for r in rows]), report.policy_matrix.actions)


def test_index_csv(tmp_path):
    report = compute_whittle_indices(load_fixture("circular4"), SubsidyGrid.linspace(-1, 1, 21))
    path = tmp_path / "i.csv"
    write_csv(report, path)
    header, rows = read_csv_grid(path)
    assert header == ["state", "index", "flag"]
    assert [float(r[1]) for r in rows] == [-0.4, 0.5, 0.9, -0.8]
    assert {r[2] for r in rows} == {"ok"}


def test_index_csv_nonindexable(tmp_path):
    report = compute_whittle_indices(load_fixture("fivestate-nonindexable"))
    path = tmp_path / "i.csv"
    write_csv(report, path)
    _, rows = read_csv_grid(path)
    assert rows[2] == ["3", "", "non-indexable"]


def test_trace_csv_length(tmp_path):
    arm = load_fixture("restart5")
    trace = simulate(RmabInstance((arm,)), SimulationConfig(horizon_steps=2, replications=3))
    path = tmp_path / "t.csv"
    write_csv(trace, path)
    header, rows = read_csv_grid(path)
    assert header == ["t", "mean", "stderr"]
    assert len(rows) == 2
    assert float(rows[-1][1]) == pytest.approx(trace.final_mean, rel=1e-11)


def test_structural_csv():
    buf = io.StringIO()
    write_csv(check_structural_conditions(load_fixture("restart5")), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "condition,value"
    assert "reward_monotone_nonincreasing(a=0),true" in lines


def test_unwritable_destination(tmp_path):
    pm = PolicyMatrix.from_actions([[1, 0]])
    with pytest.raises(OSError):
        write_csv(pm, tmp_path / "missing" / "x.csv")


def test_unknown_csv_object():
    with pytest.raises(TypeError):
        write_csv(object(), io.StringIO())


def test_single_arm_file_requires_name_when_ambiguous():
    mf = ModelFile({"a": load_fixture("restart5"), "b": load_fixture("circular4")})
    with pytest.raises(ModelError):
        mf.arm()
    with pytest.raises(ModelError):
        mf.arm("c")
    assert single_arm_file("x", load_fixture("circular4")).arm() == load_fixture("circular4")
