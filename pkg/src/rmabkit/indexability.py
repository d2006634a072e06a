"""Policy matrix over a subsidy grid, indexability verdicts and Whittle indices.

Grid positions, like states, are 1-based wherever they appear in results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ArmModel, SolverConfig, greedy_actions, solve_value_functions
from .errors import ConvergenceError, ModelError

SLACK = 1e-12

# flags attached to each state's index
INDEX_OK = "ok"
INDEX_AT_OR_BELOW_GRID = "at-or-below-grid"
INDEX_ABOVE_GRID = "above-grid"


@dataclass(frozen=True, eq=False)
class SubsidyGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise ModelError("a subsidy grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise ModelError("subsidy grid contains non-finite values")
        if np.any(np.diff(pts) <= 0):
            raise ModelError("subsidy grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def linspace(cls, lo: float, hi: float, num: int) -> "SubsidyGrid":
        # rounding keeps decimal grid points (0.9, -0.4, ...) exact to the printed value
        return cls(np.round(np.linspace(lo, hi, int(num)), 12))

    @classmethod
    def with_step(cls, lo: float, hi: float, step: float) -> "SubsidyGrid":
        num = int(round((hi - lo) / step)) + 1
        return cls.linspace(lo, hi, num)

    @classmethod
    def default_for(cls, model: ArmModel, num: int = 201) -> "SubsidyGrid":
        r = model.rewards
        span = float(r.max() - r.min())
        lo = min(float(r.min()) - span - 0.1, -1.0)
        hi = max(float(r.max()) + 0.1, 1.0)
        return cls.linspace(lo, hi, num)

    def __len__(self):
        return self.points.size

    def position(self, subsidy: float, tol: float = 1e-9) -> int:
        """1-based position of ``subsidy`` on the grid."""
        hits = np.flatnonzero(np.abs(self.points - subsidy) <= tol)
        if hits.size == 0:
            raise ModelError(f"subsidy {subsidy!r} is not a grid point")
        return int(hits[0]) + 1

    def __eq__(self, other):
        if not isinstance(other, SubsidyGrid):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PolicyMatrix:
    """K x J table of optimal actions; column j is the policy at ``grid.points[j-1]``."""

    grid: SubsidyGrid
    actions: np.ndarray
    q_gap: np.ndarray
    values: np.ndarray | None = None

    def __post_init__(self):
        acts = np.array(self.actions, dtype=np.int8)
        if acts.ndim != 2 or acts.shape[1] != len(self.grid):
            raise ModelError(f"actions shape {acts.shape} does not match a grid of {len(self.grid)} points")
        if not np.all((acts == 0) | (acts == 1)):
            raise ModelError("policy matrix entries must be 0 or 1")
        acts.setflags(write=False)
        object.__setattr__(self, "actions", acts)

    @classmethod
    def from_actions(cls, actions, grid: SubsidyGrid | None = None) -> "PolicyMatrix":
        """Wrap a hand-written action table; the grid defaults to 1..J."""
        acts = np.asarray(actions)
        if grid is None:
            grid = SubsidyGrid(np.arange(1, acts.shape[1] + 1, dtype=float))
        return cls(grid, acts, np.where(acts == 1, np.inf, -np.inf))

    @property
    def num_states(self) -> int:
        return self.actions.shape[0]

    def column_at(self, subsidy: float) -> np.ndarray:
        return self.actions[:, self.grid.position(subsidy) - 1]

    def passive_set_at(self, subsidy: float) -> frozenset:
        return passive_set(self, self.grid.position(subsidy))


@dataclass(frozen=True)
class Witness:
    """A state whose action goes 1, 0, 1 across three increasing subsidies.

    Position 0 with subsidy -inf stands for the always-active region below the grid.
    """

    state: int
    subsidies: tuple[float, float, float]
    positions: tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class IndexReport:
    indexable: bool
    whittle_index: np.ndarray | None
    index_flags: tuple[str, ...] | None
    witnesses: tuple[Witness, ...]
    passive_sets: tuple[frozenset, ...]
    policy_matrix: PolicyMatrix
    # both characterisations are kept so that their agreement can be audited
    rows_monotone: bool = True
    passive_sets_nested: bool = True
    refined: bool = False
    bracket_width: np.ndarray | None = None


@dataclass(frozen=True)
class StructuralReport:
    """Exact truth values of the monotonicity and superadditivity conditions.

    Per-action fields are ``(passive, active)`` pairs.
    """

    reward_monotone_nondecreasing: tuple[bool, bool]
    reward_monotone_nonincreasing: tuple[bool, bool]
    tail_monotone: tuple[bool, bool]
    reward_superadditive: bool
    reward_subadditive: bool
    tail_superadditive: bool
    tail_subadditive: bool
    theorem1_nondecreasing_case: bool
    theorem1_nonincreasing_case: bool

    def as_dict(self) -> dict:
        out = {}
        for name, val in self.__dict__.items():
            if isinstance(val, tuple):
                out[f"{name}(a=0)"] = val[0]
                out[f"{name}(a=1)"] = val[1]
            else:
                out[name] = val
        return out


def compute_policy_matrix(model: ArmModel, grid: SubsidyGrid, config: SolverConfig | None = None) -> PolicyMatrix:
    config = config or SolverConfig()
    k, j = model.num_states, len(grid)
    actions = np.zeros((k, j), dtype=np.int8)
    gaps = np.zeros((k, j))
    values = np.zeros((k, j))
    for col, table in enumerate(solve_value_functions(model, grid.points, config)):
        if not table.converged:
            raise ConvergenceError(
                f"value iteration did not converge at subsidy {table.subsidy!r} "
                f"within {config.max_iterations} iterations",
                subsidy=table.subsidy,
            )
        actions[:, col] = greedy_actions(table.q_passive, table.q_active, config.action_tolerance)
        gaps[:, col] = table.q_gap
        values[:, col] = table.values
    return PolicyMatrix(grid, actions, gaps, values)


def passive_set(policy_matrix: PolicyMatrix, j: int) -> frozenset:
    """States (1-based) taking the passive action at grid position ``j`` (1-based)."""
    if not 1 <= j <= len(policy_matrix.grid):
        raise ModelError(f"grid position {j} outside 1..{len(policy_matrix.grid)}")
    col = policy_matrix.actions[:, j - 1]
    return frozenset(int(s) + 1 for s in np.flatnonzero(col == 0))


def _row_witnesses(state: int, row: np.ndarray, points: np.ndarray) -> list[Witness]:
    # one witness per 0 -> 1 rise that follows a 1: (start of the preceding
    # run of ones, start of the run of zeros, the rise)
    out = []
    run_starts = [0] + [i for i in range(1, row.size) if row[i] != row[i - 1]]
    if row[0] == 0 and len(run_starts) > 1:
        # every state is active for a low enough subsidy, so a row that opens
        # passive and later turns active has its leading 1 below the grid
        c = run_starts[1]
        out.append(Witness(state=state, subsidies=(-np.inf, float(points[0]), float(points[c])), positions=(0, 1, c + 1)))
    for a, b, c in zip(run_starts, run_starts[1:], run_starts[2:]):
        if row[a] == 1 and row[b] == 0 and row[c] == 1:
            out.append(
                Witness(
                    state=state,
                    subsidies=(float(points[a]), float(points[b]), float(points[c])),
                    positions=(a + 1, b + 1, c + 1),
                )
            )
    return out


def verify_indexability(policy_matrix: PolicyMatrix) -> IndexReport:
    acts = policy_matrix.actions
    points = policy_matrix.grid.points
    j = len(points)
    passive = tuple(passive_set(policy_matrix, col) for col in range(1, j + 1))

    rows_monotone = bool(np.all(np.diff(acts.astype(int), axis=1) <= 0))
    nested = all(passive[i] <= passive[i + 1] for i in range(j - 1))
    witnesses = []
    for s in range(acts.shape[0]):
        witnesses.extend(_row_witnesses(s + 1, acts[s], points))

    if not rows_monotone:
        return IndexReport(
            indexable=False,
            whittle_index=None,
            index_flags=None,
            witnesses=tuple(witnesses),
            passive_sets=passive,
            policy_matrix=policy_matrix,
            rows_monotone=rows_monotone,
            passive_sets_nested=nested,
        )

    index = np.empty(acts.shape[0])
    flags = []
    for s, row in enumerate(acts):
        zeros = np.flatnonzero(row == 0)
        if zeros.size == 0:
            index[s] = np.inf
            flags.append(INDEX_ABOVE_GRID)
        else:
            index[s] = points[zeros[0]]
            flags.append(INDEX_AT_OR_BELOW_GRID if zeros[0] == 0 else INDEX_OK)
    return IndexReport(
        indexable=True,
        whittle_index=index,
        index_flags=tuple(flags),
        witnesses=(),
        passive_sets=passive,
        policy_matrix=policy_matrix,
        rows_monotone=rows_monotone,
        passive_sets_nested=nested,
    )


def _passive_at(model: ArmModel, subsidies, config: SolverConfig) -> np.ndarray:
    """Passive-action indicator matrix: row s, column i is state s at ``subsidies[i]``."""
    out = np.zeros((model.num_states, len(subsidies)), dtype=bool)
    for i, table in enumerate(solve_value_functions(model, subsidies, config)):
        if not table.converged:
            raise ConvergenceError(
                f"value iteration did not converge at subsidy {table.subsidy!r}", subsidy=table.subsidy
            )
        out[:, i] = greedy_actions(table.q_passive, table.q_active, config.action_tolerance) == 0
    return out


def compute_whittle_indices(
    model: ArmModel,
    grid: SubsidyGrid | None = None,
    config: SolverConfig | None = None,
    refine: bool = False,
) -> IndexReport:
    """Policy matrix plus indexability verdict, with optional bisection refinement.

    Refinement narrows each interior index to a bracket narrower than 1/100 of
    the local grid spacing; the reported index is the bracket's upper end, the
    smallest subsidy known to make the state passive.
    """
    config = config or SolverConfig()
    if grid is None:
        grid = SubsidyGrid.default_for(model)
    report = verify_indexability(compute_policy_matrix(model, grid, config))
    if not refine or not report.indexable:
        return report

    points = grid.points
    index = report.whittle_index.copy()
    widths = np.zeros(model.num_states)
    states = [s for s, flag in enumerate(report.index_flags) if flag == INDEX_OK]
    if states:
        upper = np.array([int(np.flatnonzero(points == index[s])[0]) for s in states])
        lo = points[upper - 1].astype(float)
        hi = points[upper].astype(float)
        target = (hi - lo) / 100.0
        # every state's bracket halves in lockstep; one batched solve per round
        while np.any(hi - lo >= target):
            mid = 0.5 * (lo + hi)
            passive = _passive_at(model, mid, config)[states, np.arange(len(states))]
            busy = hi - lo >= target
            hi = np.where(busy & passive, mid, hi)
            lo = np.where(busy & ~passive, mid, lo)
        index[states] = hi
        widths[states] = hi - lo
    return IndexReport(
        indexable=True,
        whittle_index=index,
        index_flags=report.index_flags,
        witnesses=(),
        passive_sets=report.passive_sets,
        policy_matrix=report.policy_matrix,
        rows_monotone=report.rows_monotone,
        passive_sets_nested=report.passive_sets_nested,
        refined=True,
        bracket_width=widths,
    )


def _nondecreasing(vals) -> bool:
    return bool(np.all(np.diff(vals) >= -SLACK))


def _pairwise_nondecreasing(mat) -> bool:
    # every s' > s, every column: mat[s'] >= mat[s]
    k = mat.shape[0]
    return all(np.all(mat[sp] >= mat[s] - SLACK) for s in range(k) for sp in range(s + 1, k))


def check_structural_conditions(model: ArmModel) -> StructuralReport:
    r = model.rewards
    # tails[a][s, k] = sum_{j >= k} p^a[s, j]
    tails = [np.cumsum(model.transitions(a)[:, ::-1], axis=1)[:, ::-1] for a in (0, 1)]
    reward_up = (_pairwise_nondecreasing(r[:, [0]]), _pairwise_nondecreasing(r[:, [1]]))
    reward_down = (_pairwise_nondecreasing(-r[:, [0]]), _pairwise_nondecreasing(-r[:, [1]]))
    tail_up = (_pairwise_nondecreasing(tails[0]), _pairwise_nondecreasing(tails[1]))
    reward_diff = (r[:, 1] - r[:, 0])[:, None]
    tail_diff = tails[1] - tails[0]
    r_super = _pairwise_nondecreasing(reward_diff)
    r_sub = _pairwise_nondecreasing(-reward_diff)
    t_super = _pairwise_nondecreasing(tail_diff)
    t_sub = _pairwise_nondecreasing(-tail_diff)
    base = all(reward_up) and all(tail_up)
    return StructuralReport(
        reward_monotone_nondecreasing=reward_up,
        reward_monotone_nonincreasing=reward_down,
        tail_monotone=tail_up,
        reward_superadditive=r_super,
        reward_subadditive=r_sub,
        tail_superadditive=t_super,
        tail_subadditive=t_sub,
        theorem1_nondecreasing_case=base and r_super and t_super,
        theorem1_nonincreasing_case=base and r_sub and t_sub,
    )


def threshold_state_curve(policy_matrix: PolicyMatrix) -> list[int | None]:
    """Smallest passive state in each column, or None for an all-active column."""
    curve = []
    for col in policy_matrix.actions.T:
        zeros = np.flatnonzero(col == 0)
        curve.append(int(zeros[0]) + 1 if zeros.size else None)
    return curve
