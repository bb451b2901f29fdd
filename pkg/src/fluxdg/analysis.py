"""Closed-form stability constants and their discrete measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import PenaltyParams, assemble_direct
from .coefficient import CoefficientField, continuity_c
from .norms import NormContext
from .space import DGFunction

MEASURE_LIMIT = 3000

# values printed in the two flat/scaled-exponent corollaries
PRINTED_XI1_FIRST = math.sqrt(288.0) / 10.0
PRINTED_XI1_SECOND = math.sqrt(228.0) / 10.0


@dataclass(frozen=True)
class TheoryConstants:
    beta: float
    C: float
    M: float
    xi1: float
    xi2: float
    gamma_lb: float  # xi2 / xi1, meaningful only when valid
    valid: bool  # xi2 > 0 and beta < 0
    xi2_exact: str = ""  # rational value when every exponent is an integer

    def discrepancy_note(self) -> str:
        """Compare xi1 with the two printed corollary values sqrt(288)/10 and sqrt(228)/10."""
        d288 = abs(self.xi1 - PRINTED_XI1_FIRST)
        d228 = abs(self.xi1 - PRINTED_XI1_SECOND)
        match = "sqrt(228)/10" if d228 < 1e-12 else ("sqrt(288)/10" if d288 < 1e-12 else "neither")
        return f"xi1 formula gives {self.xi1:.17g}; matches {match}; printed sqrt(288)/10 treated as a typo"


def _q(x) -> Fraction:
    return Fraction(repr(float(x)))


def _pow(base: Fraction, expo: float):
    """Exact rational power for integer exponents, float otherwise."""
    if float(expo).is_integer():
        return base ** int(expo)
    return Fraction(float(base) ** float(expo))


def theory_constants(params: PenaltyParams, h: float, p: float, beta: float, C: float) -> TheoryConstants:
    """M, xi1, xi2 and xi2/xi1 from their closed forms.

    Evaluated in rational arithmetic on the decimal values of the inputs so
    that, e.g., |beta| = 0.4 gives xi2 = 1/10 exactly rather than 1 - 0.9 in
    binary floating point.
    """
    if not params.sigma > 0:
        raise ValueError("theory constants need sigma > 0")
    s = _q(params.sigma)
    b, hq, pq, Cq = abs(_q(beta)), _q(h), _q(p), _q(C)
    p_theta, p_zeta = _pow(pq, params.theta), _pow(pq, params.zeta)
    h_nu, h_lam = _pow(hq, params.nu), _pow(hq, params.lam)
    M = max(Fraction(3), Cq * p_theta / h_nu, Cq * p_zeta / (4 * s * h_lam) + 1)
    # (1 + |beta|)^2 bounds (1 + beta)^2 for either sign and reproduces the corollary value
    xi1_sq = max(Fraction(2), (1 + b) ** 2 + 2 * b**2 * p_theta / h_nu)
    xi2 = min(1 - Fraction(9, 4) * b, b * p_theta / (4 * h_nu), 1 - b - b * p_zeta / (s * h_lam))
    xi1 = math.sqrt(xi1_sq)
    valid = xi2 > 0 and beta < 0
    return TheoryConstants(float(beta), float(C), float(M), xi1, float(xi2), float(xi2) / xi1, bool(valid), str(xi2))


def corollary_beta(params: PenaltyParams, h: float, p: float) -> float:
    """Default construction parameter: -4 h**nu / (10 p**theta) (-0.4 at flat exponents)."""
    return -0.4 * h**params.nu / p**params.theta


@dataclass(frozen=True)
class MeasuredConstants:
    gamma_h: float
    M_h: float
    ndof: int
    fingerprint: str


class MeasurementRefused(RuntimeError):
    pass


def whitened(B, G) -> np.ndarray:
    """``R^{-T} B R^{-1}`` for the Cholesky factor ``G = R^T R``."""
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    G = G.toarray() if sp.issparse(G) else np.asarray(G, dtype=float)
    try:
        R = sla.cholesky(G, lower=False)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"norm matrix is not positive definite: {exc}") from None
    X = sla.solve_triangular(R, B.T, trans="T").T
    return sla.solve_triangular(R, X, trans="T")


def measure_constants(B, G, fingerprint: str = "", limit: int = MEASURE_LIMIT) -> MeasuredConstants:
    """Extreme singular values of the norm-whitened system matrix."""
    n = B.shape[0]
    if n > limit:
        raise MeasurementRefused(f"{n} DOFs exceeds the dense measurement limit of {limit}")
    sv = sla.svdvals(whitened(B, G))
    return MeasuredConstants(float(sv.min()), float(sv.max()), n, fingerprint)


def measure_space(space, K: CoefficientField, params: PenaltyParams) -> tuple[MeasuredConstants, TheoryConstants]:
    ctx = NormContext(space, K, params)
    B = assemble_direct(space, K, params)
    fp = f"{space.fingerprint()}|{params.fingerprint()}|K={K.label}"
    meas = measure_constants(B, ctx.gram(), fp)
    h, p = space.mesh.h, space.p
    theory = theory_constants(params, h, p, corollary_beta(params, h, p), continuity_c(K))
    return meas, theory


def build_uhat(u: DGFunction, beta: float, ctx: NormContext) -> DGFunction:
    """``u + beta * z_E`` element by element (each lifting extended by zero)."""
    out = u.coefficients.copy()
    if beta != 0.0:
        for e in range(u.space.mesh.n_elements):
            out[u.space.dofs(e)] += beta * ctx.local_lifting(u, e).coefficients
    return DGFunction(u.space, out)


@dataclass
class LemmaReport:
    n: int
    beta: float
    xi1: float
    xi2: float
    r1: np.ndarray  # |||u_hat||| / |||u|||
    r2: np.ndarray  # B(u, u_hat) / |||u|||^2

    @property
    def r1_max(self) -> float:
        return float(self.r1.max())

    @property
    def r2_min(self) -> float:
        return float(self.r2.min())

    @property
    def r1_failures(self) -> int:
        return int(np.sum(self.r1 > self.xi1 * (1 + 1e-9)))

    @property
    def r2_failures(self) -> int:
        return int(np.sum(self.r2 < self.xi2 * (1 - 1e-9)))


def lemma_check(space, K, params, beta: float, n_samples: int, seed: int, samples=None) -> LemmaReport:
    """Empirical ratios for the two lemmas behind the inf-sup bound; failures are reported only."""
    ctx = NormContext(space, K, params)
    B = assemble_direct(space, K, params)
    G = ctx.gram()
    th = theory_constants(params, space.mesh.h, space.p, beta, continuity_c(K))
    rng = np.random.default_rng(seed)
    if samples is None:
        samples = rng.standard_normal((n_samples, space.ndof))
    r1, r2 = [], []
    for c in samples:
        u = DGFunction(space, c)
        uh = build_uhat(u, beta, ctx)
        nu = c @ (G @ c)
        r1.append(np.sqrt(uh.coefficients @ (G @ uh.coefficients) / nu))
        r2.append(uh.coefficients @ (B @ c) / nu)
    return LemmaReport(len(samples), beta, th.xi1, th.xi2, np.array(r1), np.array(r2))
