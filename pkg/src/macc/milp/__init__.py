from .model import Arc, MilpModel, PlanningInstance, build_model
from .mps import export_model, write_mps
from .plan import (
    DecodeError,
    NoPlanError,
    PlanResult,
    PlanTimeout,
    decode,
    makespan_lower_bound,
    plan_substructure,
)
from .solvers import (
    ADAPTERS,
    HighsAdapter,
    MpsHighsAdapter,
    SolverError,
    SolverVerdict,
    get_adapter,
    solve,
)

__all__ = [
    "ADAPTERS", "Arc", "DecodeError", "HighsAdapter", "MilpModel", "MpsHighsAdapter", "NoPlanError",
    "PlanResult", "PlanTimeout", "PlanningInstance", "SolverError", "SolverVerdict", "build_model",
    "decode", "export_model", "get_adapter", "makespan_lower_bound", "plan_substructure", "solve",
    "write_mps",
]
