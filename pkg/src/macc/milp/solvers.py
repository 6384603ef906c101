"""Exact solver adapters.

An adapter turns a ``MilpModel`` into a ``SolverVerdict``.  Two are shipped:
``highs`` solves in process through ``scipy.optimize.milp``; ``highs-mps``
writes the model to an MPS file and hands that file to a standalone HiGHS
instance, the same route any external solver would take.
"""
from __future__ import annotations

import logging
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .mps import write_mps

log = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, TIMEOUT = "optimal", "infeasible", "timeout"


class SolverError(RuntimeError):
    """The adapter itself failed (not an infeasible or timed-out model)."""


@dataclass
class SolverVerdict:
    status: str
    assignment: Optional[np.ndarray] = field(default=None, repr=False)
    objective_value: Optional[int] = None
    solve_seconds: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _trivial(model) -> Optional[SolverVerdict]:
    """Verdict for a model without variables, where only constant rows remain."""
    if model.n_vars:
        return None
    ok = bool(np.all(model.row_lo <= 1e-9) and np.all(model.row_hi >= -1e-9))
    if ok:
        return SolverVerdict(OPTIMAL, np.zeros(0), 0, 0.0)
    return SolverVerdict(INFEASIBLE)


def _finish(model, x, t0) -> SolverVerdict:
    x = np.round(np.asarray(x)).astype(np.int8)
    bad = model.check(x)
    if bad:
        raise SolverError(f"solver returned an assignment violating {len(bad)} rows, e.g. {bad[:3]}")
    return SolverVerdict(OPTIMAL, x, int(round(float(model.c @ x))), time.perf_counter() - t0)


def relaxation_feasible(model, time_budget: float = 10_000.0) -> Optional[bool]:
    """Feasibility of the LP relaxation; None when HiGHS stops on the time limit.

    An infeasible relaxation proves the binary program infeasible, which is
    all this is used for.
    """
    trivial = _trivial(model)
    if trivial is not None:
        return trivial.status == OPTIMAL
    res = milp(
        np.zeros(model.n_vars),
        integrality=np.zeros(model.n_vars),
        bounds=Bounds(model.lb, model.ub),
        constraints=LinearConstraint(model.A, model.row_lo, model.row_hi) if model.n_constraints else None,
        options={"time_limit": max(float(time_budget), 1e-3), "disp": False},
    )
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    return None


class HighsAdapter:
    """In-process HiGHS branch and bound through scipy."""

    name = "highs"

    def __init__(self, seed: int = 0, threads: int = 1):
        self.seed = seed  # scipy does not expose the HiGHS seed; runs are deterministic anyway
        self.threads = threads

    def solve(self, model, time_budget: float = 10_000.0) -> SolverVerdict:
        t0 = time.perf_counter()
        trivial = _trivial(model)
        if trivial is not None:
            return trivial
        res = milp(
            model.c,
            integrality=np.ones(model.n_vars),
            bounds=Bounds(model.lb, model.ub),
            constraints=LinearConstraint(model.A, model.row_lo, model.row_hi) if model.n_constraints else None,
            options={"time_limit": max(float(time_budget), 1e-3), "mip_rel_gap": 0.0, "disp": False},
        )
        elapsed = time.perf_counter() - t0
        if res.status == 0:
            return _finish(model, res.x, t0)
        if res.status == 2:
            return SolverVerdict(INFEASIBLE, solve_seconds=elapsed)
        if res.status == 1:
            return SolverVerdict(TIMEOUT, solve_seconds=elapsed)
        raise SolverError(f"HiGHS (scipy) failed with status {res.status}: {res.message}")


class MpsHighsAdapter:
    """Round-trips the model through an MPS file read by a separate HiGHS instance."""

    name = "highs-mps"

    def __init__(self, seed: int = 0, workdir: Optional[str] = None):
        self.seed = seed
        self.workdir = workdir

    def solve(self, model, time_budget: float = 10_000.0) -> SolverVerdict:
        try:
            import highspy
        except ImportError as exc:  # pragma: no cover - depends on the environment
            raise SolverError("highspy is not installed") from exc
        t0 = time.perf_counter()
        trivial = _trivial(model)
        if trivial is not None:
            return trivial
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            path = Path(tmp) / "model.mps"
            write_mps(model, path)
            h = highspy.Highs()
            h.setOptionValue("output_flag", False)
            h.setOptionValue("random_seed", int(self.seed))
            h.setOptionValue("time_limit", max(float(time_budget), 1e-3))
            h.setOptionValue("mip_rel_gap", 0.0)
            h.setOptionValue("threads", 1)
            if h.readModel(str(path)) == highspy.HighsStatus.kError:
                raise SolverError(f"HiGHS could not read {path}")
            if h.getNumCol() != model.n_vars or h.getNumRow() != model.n_constraints:
                raise SolverError("MPS round trip changed the model size")
            h.run()
            status = h.getModelStatus()
            elapsed = time.perf_counter() - t0
            S = highspy.HighsModelStatus
            if status == S.kOptimal:
                return _finish(model, h.getSolution().col_value, t0)
            if status in (S.kInfeasible, S.kUnboundedOrInfeasible):
                return SolverVerdict(INFEASIBLE, solve_seconds=elapsed)
            if status == S.kTimeLimit:
                return SolverVerdict(TIMEOUT, solve_seconds=elapsed)
            raise SolverError(f"HiGHS (MPS) ended with {h.modelStatusToString(status)}")


ADAPTERS = {"highs": HighsAdapter, "highs-mps": MpsHighsAdapter}


def get_adapter(name: str, seed: int = 0):
    try:
        return ADAPTERS[name](seed=seed)
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(ADAPTERS)}") from None


def solve(model, adapter=None, time_budget: float = 10_000.0) -> SolverVerdict:
    adapter = adapter or HighsAdapter()
    verdict = adapter.solve(model, time_budget)
    log.debug("T=%d status=%s obj=%s %.2fs", model.T, verdict.status, verdict.objective_value, verdict.solve_seconds)
    return verdict
