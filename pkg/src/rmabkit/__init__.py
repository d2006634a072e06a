"""Finite-state restless bandits: indexability via value iteration, Whittle
indices, and simulation of myopic, Whittle-index and rollout play."""

__version__ = "0.1.0"

from .core import ArmModel, SolverConfig, ValueTable, bellman_backup, solve_value_function, solve_value_functions
from .errors import ConfigurationError, ConvergenceError, ModelError, ParseError, RmabError
from .fixtures import fixture_names, load_fixture
from .indexability import (
    IndexReport,
    PolicyMatrix,
    StructuralReport,
    SubsidyGrid,
    Witness,
    check_structural_conditions,
    compute_policy_matrix,
    compute_whittle_indices,
    passive_set,
    threshold_state_curve,
    verify_indexability,
)
from .modelio import ModelFile, parse_model, serialize_model, write_csv
from .policies import (
    IndexTable,
    RmabInstance,
    RolloutConfig,
    myopic_action,
    rollout_action,
    rollout_decision,
    rollout_value_estimate,
    whittle_action,
)
from .sim import MyopicPolicy, RolloutPolicy, SimulationConfig, SimulationTrace, WhittlePolicy, simulate
