"""Linear solves for the nonsymmetric DG system and the end-to-end pipeline."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem

log = logging.getLogger(__name__)

DENSE_LIMIT = 5000
RTOL = 1e-10


class SolverError(RuntimeError):
    def __init__(self, message: str, history=()):
        super().__init__(message)
        self.history = list(history)


@dataclass
class SolveReport:
    method: str
    residual: float  # ||B c - b|| / ||b||, 0 when b = 0
    iterations: int | None
    wall_time: float
    history: list = field(default_factory=list, repr=False)


def _relres(B, c, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(B @ c - b)
    return float(r / nb) if nb > 0 else float(r)


def solve_matrix(B, b, method: str = "auto", restart: int = 50, maxiter: int = 2000):
    """Solve ``B c = b``; returns ``(c, SolveReport)``.

    ``auto`` picks a dense LU up to ``DENSE_LIMIT`` unknowns and restarted
    GMRES on the Jacobi-scaled system above that, wrapped in a few rounds
    of residual correction so the unscaled residual meets ``RTOL``.
    """
    t0 = time.perf_counter()
    n = B.shape[0]
    if method == "auto":
        method = "direct" if n <= DENSE_LIMIT else "iterative"
    if not np.any(b):
        c = np.zeros(n)
        return c, SolveReport(method, 0.0, 0 if method == "iterative" else None, time.perf_counter() - t0)

    if method == "direct":
        dense = B.toarray() if sp.issparse(B) else np.asarray(B)
        c = sla.lu_solve(sla.lu_factor(dense), b)
        res = _relres(B, c, b)
        if not res <= RTOL:
            raise SolverError(f"direct solve residual {res:.3e} exceeds {RTOL:g}", [res])
        return c, SolveReport("direct", res, None, time.perf_counter() - t0, [res])

    if method != "iterative":
        raise ValueError(f"unknown solve method {method!r}")
    B = sp.csr_matrix(B)
    d = B.diagonal()
    d = np.where(d != 0.0, d, 1.0)
    Dinv = sp.diags(1.0 / d)
    A = Dinv @ B
    nb = np.linalg.norm(b)
    c = np.zeros(n)
    history: list[float] = []
    # GMRES works on the scaled residual; outer refinement drives the true one
    for _ in range(8):
        r = b - B @ c
        res = np.linalg.norm(r) / nb
        if res <= RTOL:
            break
        dc, info = spla.gmres(
            A, Dinv @ r, rtol=1e-6, atol=0.0, restart=restart, maxiter=maxiter,
            callback=history.append, callback_type="pr_norm",
        )
        if info != 0:
            raise SolverError(f"GMRES stopped with info={info}, residual {res:.3e}", history)
        c = c + dc
    res = _relres(B, c, b)
    if not res <= RTOL:
        raise SolverError(f"GMRES refinement stalled at residual {res:.3e}", history)
    return c, SolveReport("iterative", res, len(history), time.perf_counter() - t0, history)


def solve_linear(system: AssembledSystem, method: str = "auto"):
    from .space import DGFunction

    c, report = solve_matrix(system.B, system.rhs, method)
    log.info("solved %d dofs by %s, residual %.3e", c.size, report.method, report.residual)
    return DGFunction(system.space, c), report
