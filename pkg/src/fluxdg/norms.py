"""Element norms, local Neumann liftings, the triple norm and its Gram matrix.

The dual norm of an element's boundary flux is realised through the local
lifting ``z_E``: the solution, in the element's own polynomial space, of

    (z_E, v)_{*,E} = int_{dE} (K grad u . mu) v ds    for all local v,

where ``(w, v)_{*,E} = int_E K grad w . grad v + w v``.  Its ``*``-norm is
the discrete H^{-1/2}(dE) norm of the flux functional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels
from .assembly import PenaltyParams, _interior_tables, _Triplets, boundary_flux_blocks, side_traces, volume_blocks
from .coefficient import CoefficientField
from .space import BrokenSpace, DGFunction, project_l2


@dataclass
class LocalLifting:
    element: int
    coefficients: np.ndarray  # local coefficients of z_E
    source: DGFunction
    residual: float  # relative residual of the local solve

    def star_norm(self, ctx: "NormContext") -> float:
        A = ctx.local_gram(self.element)
        return float(np.sqrt(max(self.coefficients @ A @ self.coefficients, 0.0)))


class NormContext:
    """Caches element-level blocks for one (space, K, quadrature) triple."""

    def __init__(self, space: BrokenSpace, K: CoefficientField, params: PenaltyParams | None = None, q=None):
        self.space = space
        self.K = K
        self.params = params if params is not None else PenaltyParams()
        self.q = q
        self.tables = space.tables(q)
        self.kvol = K.volume_values(self.tables)
        stiff, mass = volume_blocks(space, K, q)
        self._gram = stiff + mass
        self.sides = side_traces(space, K, q)
        self._flux = boundary_flux_blocks(space, K, q, self.sides)
        self._faces = _interior_tables(space, self.sides)
        self._chol: dict[int, tuple] = {}
        self._G = None

    @property
    def tau(self) -> float:
        return self.params.tau(self.space.mesh.h, self.space.p)

    @property
    def omega(self) -> float:
        return self.params.omega(self.space.mesh.h, self.space.p)

    def local_gram(self, e: int) -> np.ndarray:
        act = self.space.local_modes(e)
        return self._gram[e][np.ix_(act, act)]

    def local_flux_operator(self, e: int) -> np.ndarray:
        """``F[a, b] = int_{dE} phi_a (K grad phi_b . mu)``: maps coefficients to lifting data."""
        act = self.space.local_modes(e)
        return self._flux[e][np.ix_(act, act)]

    def cholesky(self, e: int):
        if e not in self._chol:
            self._chol[e] = sla.cho_factor(self.local_gram(e), lower=True)
        return self._chol[e]

    # -- function-based evaluations (quadrature on the DG function itself) --

    def star_norm_sq(self, u: DGFunction, e: int) -> float:
        t = self.tables
        c = u.padded()[e]
        val, gx, gy = t.phi[e] @ c, t.gx[e] @ c, t.gy[e] @ c
        return float(np.sum(t.weights[e] * (self.kvol[e] * (gx * gx + gy * gy) + val * val)))

    def flux_moments(self, u: DGFunction, e: int) -> np.ndarray:
        """``int_{dE} (K grad u . mu) phi_a ds`` for the active local modes of ``e``."""
        c = u.padded()[e]
        out = np.zeros(self.space.nb)
        for phi, flux, w, _ in self.sides:
            g = flux[e] @ c
            out += phi[e].T @ (w[e] * g)
        return out[self.space.local_modes(e)]

    def local_lifting(self, u: DGFunction, e: int) -> LocalLifting:
        rhs = self.flux_moments(u, e)
        z = sla.cho_solve(self.cholesky(e), rhs)
        A = self.local_gram(e)
        scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        res = float(np.linalg.norm(A @ z - rhs) / scale) if np.any(rhs) else 0.0
        return LocalLifting(e, z, u, res)

    def dual_norm_flux(self, u: DGFunction, e: int) -> float:
        return self.local_lifting(u, e).star_norm(self)

    def flux_jump_sq(self, u: DGFunction) -> float:
        """``|| [K grad u . n] ||^2`` over the interior faces."""
        if self._faces is None:
            return 0.0
        own, nbr, T, Q, W = self._faces
        c = u.padded()
        jump = np.einsum("fqa,fa->fq", Q[0], c[own]) - np.einsum("fqa,fa->fq", Q[1], c[nbr])
        return float(np.sum(W * jump * jump))

    def triple_norm_sq(self, u: DGFunction) -> float:
        om = self.omega
        total = 0.0
        for e in range(self.space.mesh.n_elements):
            total += self.star_norm_sq(u, e) + om * self.dual_norm_flux(u, e) ** 2
        return total + self.tau * self.flux_jump_sq(u)

    def triple_norm(self, u: DGFunction) -> float:
        return float(np.sqrt(self.triple_norm_sq(u)))

    # -- matrix forms --

    def lifting_operator(self, e: int) -> np.ndarray:
        """Local matrix mapping coefficients of u on ``e`` to those of z_E."""
        return sla.cho_solve(self.cholesky(e), self.local_flux_operator(e))

    def gram(self) -> sp.csr_matrix:
        """Symmetric matrix ``G`` with ``c @ G @ c = |||v_c|||**2``."""
        if self._G is None:
            self._G = self._build_gram()
        return self._G

    def _build_gram(self) -> sp.csr_matrix:
        space = self.space
        trip = _Triplets(space)
        ne = space.mesh.n_elements
        blocks = np.zeros((ne, space.nb, space.nb))
        om = self.omega
        for e in range(ne):
            act = space.local_modes(e)
            L, _ = self.cholesky(e)
            Y = sla.solve_triangular(L, self.local_flux_operator(e), lower=True)
            blocks[e][np.ix_(act, act)] = self.local_gram(e) + om * (Y.T @ Y)
        trip.add(np.arange(ne), np.arange(ne), blocks)
        if self._faces is not None:
            own, nbr, _, Q, W = self._faces
            el = (own, nbr)
            sgn = (1.0, -1.0)
            for s in range(2):
                for t in range(2):
                    trip.add(el[s], el[t], _kernels.weighted_outer(W, Q[s], Q[t]), self.tau * sgn[s] * sgn[t])
        G = trip.tocsr()
        return ((G + G.T) * 0.5).tocsr()


def star_norm_sq(u: DGFunction, element: int, K: CoefficientField) -> float:
    """``int_E K |grad u|^2 + u^2``."""
    return NormContext(u.space, K).star_norm_sq(u, element)


def local_lifting(u: DGFunction, element: int, K: CoefficientField) -> LocalLifting:
    return NormContext(u.space, K).local_lifting(u, element)


def dual_norm_flux(u: DGFunction, element: int, K: CoefficientField) -> float:
    """Discrete H^{-1/2}(dE) norm of ``K grad u . mu``, i.e. the *-norm of the lifting."""
    return NormContext(u.space, K).dual_norm_flux(u, element)


def triple_norm(u: DGFunction, K: CoefficientField, params: PenaltyParams) -> float:
    return NormContext(u.space, K, params).triple_norm(u)


def build_gram(space: BrokenSpace, K: CoefficientField, params: PenaltyParams, q=None) -> sp.csr_matrix:
    return NormContext(space, K, params, q).gram()


def broken_h1_norm(u: DGFunction, q=None) -> float:
    """``(sum_E ||u||_{H1(E)}^2)^{1/2}`` with unit weights."""
    t = u.space.tables(q)
    val, gx, gy = u.at_quadrature(q)
    return float(np.sqrt(np.sum(t.weights * (val**2 + gx**2 + gy**2))))


@dataclass(frozen=True)
class ErrorNorms:
    l2: float
    h1: float  # broken H1: (||e||^2 + sum_E ||grad e||^2)^{1/2}
    triple: float  # discrete surrogate, see error_norms


def error_norms(u_h: DGFunction, exact, exact_grad, ctx: NormContext, q=None) -> ErrorNorms:
    """L2, broken H1 and triple-norm errors against an exact solution.

    ``exact(x, y)`` and ``exact_grad(x, y) -> (ux, uy)`` must be vectorized.
    The triple-norm error is a surrogate: the discrete triple norm of
    ``u_h - P u`` (``P`` the element L2 projection) combined with the
    element ``*``-norms of the projection remainder ``u - P u``.  Flux data
    of a non-polynomial ``u`` has no discrete lifting, so no exact value exists.
    """
    space = u_h.space
    q = space.quad_order + 4 if q is None else q
    t = space.tables(q)
    kq = ctx.K.volume_values(t)
    x, y = t.points[..., 0], t.points[..., 1]
    ue = np.broadcast_to(exact(x, y), x.shape)
    gex, gey = (np.broadcast_to(g, x.shape) for g in exact_grad(x, y))
    val, gx, gy = u_h.at_quadrature(q)
    l2sq = np.sum(t.weights * (val - ue) ** 2)
    semi = np.sum(t.weights * ((gx - gex) ** 2 + (gy - gey) ** 2))

    proj = project_l2(space, exact, q)
    pv, pgx, pgy = proj.at_quadrature(q)
    rem = np.sum(t.weights * (kq * ((gex - pgx) ** 2 + (gey - pgy) ** 2) + (ue - pv) ** 2))
    d = (u_h - proj).coefficients
    disc = d @ (ctx.gram() @ d)
    return ErrorNorms(float(np.sqrt(l2sq)), float(np.sqrt(l2sq + semi)), float(np.sqrt(disc + rem)))
