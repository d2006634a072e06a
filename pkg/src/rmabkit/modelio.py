"""Model files, fixture export and CSV output.

Model files are JSON documents::

    {
      "format_version": 1,
      "arms": {
        "<name>": {
          "num_states": K,
          "discount": beta,
          "passive_transitions": [[...], ...],   # K rows of K
          "active_transitions": [[...], ...],
          "rewards": [[r(s,0), r(s,1)], ...]      # K rows
        }
      },
      "instance": {                               # optional
        "arms": ["<name>", ...],                  # repeats allowed
        "plays_per_step": M,
        "discount": beta                          # optional; must match the arms
      },
      "index_tables": {...}                       # optional, written by the index cache
    }

Transition rows must sum to 1 within 1e-6; rows inside that tolerance are
rescaled to sum to 1, rows outside it are rejected.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ArmModel, SolverConfig
from .errors import ModelError, ParseError
from .indexability import IndexReport, PolicyMatrix, StructuralReport, SubsidyGrid

FORMAT_VERSION = 1
PARSE_ROW_TOL = 1e-6
# rows this close to 1 are left untouched, which keeps parse -> write -> parse stable
_RESCALE_FLOOR = 1e-12

_ARM_KEYS = {"num_states", "discount", "passive_transitions", "active_transitions", "rewards"}


@dataclass(eq=False)
class ModelFile:
    arms: dict[str, ArmModel]
    instance_arms: tuple[str, ...] | None = None
    plays_per_step: int | None = None
    format_version: int = FORMAT_VERSION
    index_tables: dict = field(default_factory=dict)

    def arm(self, name: str | None = None) -> ArmModel:
        """The named arm, or the only arm when ``name`` is omitted."""
        if name is None:
            if len(self.arms) != 1:
                raise ModelError(f"file defines {len(self.arms)} arms; name one of {sorted(self.arms)}")
            return next(iter(self.arms.values()))
        try:
            return self.arms[name]
        except KeyError:
            raise ModelError(f"no arm named {name!r}") from None

    def instance(self):
        from .policies import RmabInstance

        if self.instance_arms is None:
            raise ModelError("model file has no instance block")
        return RmabInstance(tuple(self.arms[n] for n in self.instance_arms), self.plays_per_step)

    def __eq__(self, other):
        if not isinstance(other, ModelFile):
            return NotImplemented
        return (
            self.format_version == other.format_version
            and list(self.arms) == list(other.arms)
            and all(self.arms[k] == other.arms[k] for k in self.arms)
            and self.instance_arms == other.instance_arms
            and self.plays_per_step == other.plays_per_step
            and self.index_tables == other.index_tables
        )


def _number(value, where) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", where)
    if not math.isfinite(value):
        raise ParseError("number is not finite", where)
    return float(value)


def _matrix(value, rows, cols, where) -> np.ndarray:
    if not isinstance(value, list) or len(value) != rows:
        got = len(value) if isinstance(value, list) else type(value).__name__
        raise ParseError(f"expected {rows} rows, got {got}", where)
    out = np.empty((rows, cols))
    for i, row in enumerate(value):
        rw = f"{where} row {i + 1}"
        if not isinstance(row, list) or len(row) != cols:
            got = len(row) if isinstance(row, list) else type(row).__name__
            raise ParseError(f"expected {cols} entries, got {got}", rw)
        for j, x in enumerate(row):
            out[i, j] = _number(x, f"{rw} column {j + 1}")
    return out


def _stochastic(mat: np.ndarray, where) -> np.ndarray:
    for i, row in enumerate(mat):
        rw = f"{where} row {i + 1}"
        if np.any(row < 0) or np.any(row > 1):
            raise ParseError("probabilities must lie in [0, 1]", rw)
        total = row.sum()
        if abs(total - 1.0) > PARSE_ROW_TOL:
            raise ParseError(f"row sums to {total!r}; must be 1 within {PARSE_ROW_TOL:g}", rw)
        if abs(total - 1.0) > _RESCALE_FLOOR:
            mat[i] = row / total
    return mat


def _parse_arm(name, spec) -> ArmModel:
    where = f"arms.{name}"
    if not isinstance(spec, dict):
        raise ParseError("arm definition must be an object", where)
    unknown = set(spec) - _ARM_KEYS
    missing = _ARM_KEYS - set(spec)
    if unknown:
        raise ParseError(f"unknown field(s) {sorted(unknown)}", where)
    if missing:
        raise ParseError(f"missing field(s) {sorted(missing)}", where)
    k = spec["num_states"]
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ParseError(f"num_states must be a positive integer, got {k!r}", f"{where}.num_states")
    beta = _number(spec["discount"], f"{where}.discount")
    if not 0 < beta < 1:
        raise ParseError(f"discount must lie in (0, 1), got {beta!r}", f"{where}.discount")
    p0 = _stochastic(_matrix(spec["passive_transitions"], k, k, f"{where}.passive_transitions"), f"{where}.passive_transitions")
    p1 = _stochastic(_matrix(spec["active_transitions"], k, k, f"{where}.active_transitions"), f"{where}.active_transitions")
    rewards = _matrix(spec["rewards"], k, 2, f"{where}.rewards")
    return ArmModel(p0, p1, rewards, beta)


def parse_model(text) -> ModelFile:
    """Parse and validate a model file given as ``str`` or ``bytes``."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8 text ({exc.reason})", f"byte {exc.start}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", "line 1 column 1")
    unknown = set(doc) - {"format_version", "arms", "instance", "index_tables"}
    if unknown:
        raise ParseError(f"unknown field(s) {sorted(unknown)}", "top level")
    version = doc.get("format_version")
    if version != FORMAT_VERSION or isinstance(version, bool):
        raise ParseError(f"unsupported format_version {version!r}", "format_version")
    arms_doc = doc.get("arms")
    if not isinstance(arms_doc, dict) or not arms_doc:
        raise ParseError("expected a non-empty object of arm definitions", "arms")
    arms = {name: _parse_arm(name, spec) for name, spec in arms_doc.items()}

    instance_arms = plays = None
    if "instance" in doc:
        inst = doc["instance"]
        if not isinstance(inst, dict):
            raise ParseError("instance block must be an object", "instance")
        names = inst.get("arms")
        if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
            raise ParseError("expected a non-empty list of arm names", "instance.arms")
        for i, n in enumerate(names):
            if n not in arms:
                raise ParseError(f"unknown arm {n!r}", f"instance.arms[{i}]")
        plays = inst.get("plays_per_step", 1)
        if isinstance(plays, bool) or not isinstance(plays, int) or not 1 <= plays <= len(names):
            raise ParseError(f"plays_per_step must be an integer in 1..{len(names)}", "instance.plays_per_step")
        betas = {arms[n].discount for n in names}
        if len(betas) != 1:
            raise ParseError(f"instance arms disagree on discount: {sorted(betas)}", "instance.arms")
        if "discount" in inst:
            declared = _number(inst["discount"], "instance.discount")
            if declared not in betas:
                raise ParseError(f"declared discount {declared!r} differs from the arms' {betas.pop()!r}", "instance.discount")
        instance_arms = tuple(names)

    tables = doc.get("index_tables", {})
    if not isinstance(tables, dict):
        raise ParseError("index_tables must be an object", "index_tables")
    return ModelFile(arms, instance_arms, plays, FORMAT_VERSION, tables)


def _row(values) -> str:
    return "[" + ", ".join(json.dumps(float(v)) for v in values) + "]"


def _block(name, mat, indent) -> str:
    pad = " " * indent
    rows = (",\n" + pad + "  ").join(_row(r) for r in mat)
    return f'{pad}"{name}": [\n{pad}  {rows}\n{pad}]'


def serialize_model(model_file: ModelFile) -> str:
    """Canonical text form: one matrix row per line, floats written with ``repr`` precision."""
    parts = [f'{{\n  "format_version": {model_file.format_version},\n  "arms": {{']
    arm_blocks = []
    for name, arm in model_file.arms.items():
        body = ",\n".join([
            f'      "num_states": {arm.num_states}',
            f'      "discount": {json.dumps(arm.discount)}',
            _block("passive_transitions", arm.passive_transitions, 6),
            _block("active_transitions", arm.active_transitions, 6),
            _block("rewards", arm.rewards, 6),
        ])
        arm_blocks.append(f"    {json.dumps(name)}: {{\n{body}\n    }}")
    parts.append(",\n".join(arm_blocks))
    parts.append("  }")
    text = "\n".join(parts)
    if model_file.instance_arms is not None:
        beta = model_file.arms[model_file.instance_arms[0]].discount
        inst = {"arms": list(model_file.instance_arms), "plays_per_step": model_file.plays_per_step, "discount": beta}
        text += ',\n  "instance": ' + json.dumps(inst)
    if model_file.index_tables:
        tables = json.dumps(model_file.index_tables, indent=2, sort_keys=True).replace("\n", "\n  ")
        text += ',\n  "index_tables": ' + tables
    return text + "\n}\n"


def single_arm_file(name: str, arm: ArmModel) -> ModelFile:
    return ModelFile({name: arm})


def fixture_text(name: str) -> str:
    """Canonical model-file text for a catalog entry."""
    from .fixtures import ARM_FIXTURES, instance_fixture_text, load_fixture

    if name in ARM_FIXTURES:
        return serialize_model(single_arm_file(name, load_fixture(name)))
    return serialize_model(parse_model(instance_fixture_text(name)))


def fixture_digest(name: str) -> str:
    return hashlib.sha256(fixture_text(name).encode()).hexdigest()


def arm_digest(arm: ArmModel, config: SolverConfig, grid: SubsidyGrid | None, refine: bool) -> str:
    """Cache key for an arm's index table under one solver configuration."""
    h = hashlib.sha256(serialize_model(single_arm_file("arm", arm)).encode())
    h.update(json.dumps([config.max_iterations, config.value_tolerance, config.action_tolerance, bool(refine)]).encode())
    h.update(b"default-grid" if grid is None else np.asarray(grid.points).tobytes())
    return h.hexdigest()


# CSV output ---------------------------------------------------------------

def fmt(x) -> str:
    """Twelve significant digits."""
    return format(float(x), ".12g")


def _policy_rows(pm: PolicyMatrix):
    yield ["state"] + [fmt(v) for v in pm.grid.points]
    for s, row in enumerate(pm.actions, start=1):
        yield [str(s)] + [str(int(a)) for a in row]


def _index_rows(report: IndexReport):
    yield ["state", "index", "flag"]
    k = report.policy_matrix.num_states
    for s in range(k):
        if not report.indexable:
            yield [str(s + 1), "", "non-indexable"]
        else:
            val = report.whittle_index[s]
            yield [str(s + 1), fmt(val) if np.isfinite(val) else "inf", report.index_flags[s]]


def _trace_rows(trace):
    yield ["t", "mean", "stderr"]
    for t, (m, e) in enumerate(zip(trace.per_step_mean_discounted_cumulative, trace.per_step_std_error)):
        yield [str(t), fmt(m), fmt(e)]


def _structural_rows(report: StructuralReport):
    yield ["condition", "value"]
    for name, val in report.as_dict().items():
        yield [name, "true" if val else "false"]


def csv_rows(obj):
    from .sim import SimulationTrace

    if isinstance(obj, PolicyMatrix):
        return _policy_rows(obj)
    if isinstance(obj, IndexReport):
        return _index_rows(obj)
    if isinstance(obj, SimulationTrace):
        return _trace_rows(obj)
    if isinstance(obj, StructuralReport):
        return _structural_rows(obj)
    raise TypeError(f"no CSV layout for {type(obj).__name__}")


def write_csv(obj, destination) -> None:
    """Write a policy matrix, index report, structural report or trace as CSV.

    ``destination`` is a path or a text stream. Lines end with a bare line feed.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(csv_rows(obj))
    if hasattr(destination, "write"):
        destination.write(buf.getvalue())
        return
    with open(Path(destination), "w", newline="") as fh:
        fh.write(buf.getvalue())
