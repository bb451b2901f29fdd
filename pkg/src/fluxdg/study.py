"""Verification studies: manufactured solutions, rates, consistency, conservation, stability."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import legendre as npleg

from . import _kernels
from .analysis import measure_constants
from .assembly import PenaltyParams, _interior_tables, assemble_direct, assemble_rhs, assemble_system, side_traces
from .coefficient import CoefficientField, make_coefficient
from .mesh import SIDES, InvalidInputError, Mesh, build_rect_mesh
from .norms import NormContext, error_norms
from .solver import solve_linear, solve_matrix
from .space import BrokenSpace, DGFunction, QuadratureRule, build_space

log = logging.getLogger(__name__)

PI = math.pi
UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class ManufacturedCase:
    id: str
    description: str
    u: Callable
    grad: Callable  # (x, y) -> (ux, uy)
    f: Callable
    K_spec: object
    flux: Callable  # (x, y) -> (K ux, K uy), evaluated inside one constant-K tile
    div_flux: Callable  # -div(K grad u), same convention
    zero_on_boundary: bool = True
    domain: tuple = UNIT_SQUARE

    def pde_residual(self, x, y) -> np.ndarray:
        return self.div_flux(x, y) + self.u(x, y) - self.f(x, y)


def _sinsin(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def _sinsin_grad(x, y):
    return PI * np.cos(PI * x) * np.sin(PI * y), PI * np.sin(PI * x) * np.cos(PI * y)


def _quadrant_k(x, y, low=1.0, high=10.0):
    tile = np.floor(2.0 * np.asarray(x)).clip(0, 1) + np.floor(2.0 * np.asarray(y)).clip(0, 1)
    return np.where(tile % 2 == 0, low, high)


def _bubble(x, y):
    return x * (1 - x) * y * (1 - y)


def _bubble_grad(x, y):
    return (1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)


def _bubble_neg_lap(x, y):
    return 2 * y * (1 - y) + 2 * x * (1 - x)


def manufactured(case_id: str) -> ManufacturedCase:
    """Built-in cases on the unit square, all with u = 0 on the boundary.

    a: K = 1, u = sin(pi x) sin(pi y)
    b: K = 1 + x^2, same u
    c: K = 1 / 10 checkerboard on the four quadrants, u = x(1-x)y(1-y);
       du/dn vanishes on x = 1/2 and y = 1/2, so the flux K grad u . n is
       continuous across the coefficient jumps and u is a true solution.
    """
    if case_id == "a":
        return ManufacturedCase(
            "a", "K=1, u=sin(pi x)sin(pi y)", _sinsin, _sinsin_grad,
            lambda x, y: (2 * PI**2 + 1) * _sinsin(x, y),
            {"kind": "constant", "value": 1.0},
            _sinsin_grad,
            lambda x, y: 2 * PI**2 * _sinsin(x, y),
        )
    if case_id == "b":
        def div_b(x, y):
            return (1 + x**2) * 2 * PI**2 * _sinsin(x, y) - 2 * x * PI * np.cos(PI * x) * np.sin(PI * y)

        def flux_b(x, y):
            gx, gy = _sinsin_grad(x, y)
            return (1 + x**2) * gx, (1 + x**2) * gy

        return ManufacturedCase(
            "b", "K=1+x^2, u=sin(pi x)sin(pi y)", _sinsin, _sinsin_grad,
            lambda x, y: div_b(x, y) + _sinsin(x, y),
            {"kind": "analytic", "expr": "1 + x**2"},
            flux_b, div_b,
        )
    if case_id == "c":
        def flux_c(x, y):
            k = _quadrant_k(x, y)
            gx, gy = _bubble_grad(x, y)
            return k * gx, k * gy

        def div_c(x, y):
            return _quadrant_k(x, y) * _bubble_neg_lap(x, y)

        return ManufacturedCase(
            "c", "K=1/10 quadrant checkerboard, u=x(1-x)y(1-y)", _bubble, _bubble_grad,
            lambda x, y: div_c(x, y) + _bubble(x, y),
            {"kind": "checkerboard", "values": [1.0, 10.0], "cells": 2},
            flux_c, div_c,
        )
    raise InvalidInputError(f"unknown manufactured case {case_id!r}; known: a, b, c")


# --------------------------------------------------------------------------
# bilinear form with a non-discrete trial function


def apply_form_exact(space: BrokenSpace, K: CoefficientField, params: PenaltyParams, u, grad, q=None) -> np.ndarray:
    """``r[k] = B(u, phi_k)`` for callable ``u``, integrated with ``q``-point rules.

    Follows the element-boundary form term by term; fluxes of ``u`` are taken
    one-sidedly with each element's own K.
    """
    q = space.quad_order if q is None else q
    t = space.tables(q)
    x, y = t.points[..., 0], t.points[..., 1]
    uq = np.broadcast_to(u(x, y), x.shape)
    ux, uy = (np.broadcast_to(g, x.shape) for g in grad(x, y))
    wk = t.weights * K.volume_values(t)
    r = (
        _kernels.weighted_moments(wk, ux, t.gx)
        + _kernels.weighted_moments(wk, uy, t.gy)
        + _kernels.weighted_moments(t.weights, uq, t.phi)
    )
    elems = np.arange(space.mesh.n_elements)
    sides = side_traces(space, K, q)
    for s, (phi, flux, w, pts) in enumerate(sides):
        mu = SIDES[s][3]
        us = u(pts[..., 0], pts[..., 1])
        gx, gy = grad(pts[..., 0], pts[..., 1])
        kq = K.values_at(elems, pts)
        g = kq * (gx * mu[0] + gy * mu[1])
        r -= _kernels.weighted_moments(w, g, phi)
        r += _kernels.weighted_moments(w, np.broadcast_to(us, w.shape), flux)

    faces = space.mesh.interior_faces
    tables = _interior_tables(space, sides)
    if tables is not None:
        own, nbr, T, Q, W = tables
        tau = params.tau(space.mesh.h, space.p)
        pts = np.stack([sides[f.owner_side][3][f.owner] for f in faces])
        nvec = np.array([f.normal for f in faces])
        us = u(pts[..., 0], pts[..., 1])
        gx, gy = grad(pts[..., 0], pts[..., 1])
        dn = gx * nvec[:, None, 0] + gy * nvec[:, None, 1]
        jump = K.values_at(own, pts) * dn - K.values_at(nbr, pts) * dn
        for s, (el, sgn) in enumerate(((own, 1.0), (nbr, -1.0))):
            contrib = (
                0.5 * _kernels.weighted_moments(W, jump, T[s])
                - sgn * _kernels.weighted_moments(W, np.broadcast_to(us, W.shape), Q[s])
                + tau * sgn * _kernels.weighted_moments(W, jump, Q[s])
            )
            np.add.at(r, el, contrib)

    out = np.zeros(space.ndof)
    act = space.dof_map >= 0
    out[space.dof_map[act]] = r[act]
    return out


def consistency_residual(case: ManufacturedCase, space: BrokenSpace, params: PenaltyParams, extra: int = 4,
                         K: CoefficientField | None = None, ctx: NormContext | None = None) -> float:
    """``max_k |B(u, phi_k) - L_h(phi_k)| / |||phi_k|||`` for the exact solution ``u``.

    ``B(u, .)`` is integrated with ``quad_order + extra`` points per
    direction (effectively exact); ``L_h`` is the load vector the solver
    uses, at the space's own quadrature.  The exact solution satisfies the
    variational equations identically, so what remains is the consistency
    error the discrete system actually carries.
    """
    K = make_coefficient(case.K_spec, space) if K is None else K
    r = apply_form_exact(space, K, params, case.u, case.grad, space.quad_order + extra) - assemble_rhs(space, case.f)
    ctx = NormContext(space, K, params) if ctx is None else ctx
    scale = np.sqrt(ctx.gram().diagonal())
    return float(np.max(np.abs(r) / scale))


# --------------------------------------------------------------------------
# local conservation


def _side_neighbors(mesh: Mesh):
    """``table[e][side] = ("interior", other element, other side) | ("boundary", None, None)``."""
    table = [[None] * 4 for _ in range(mesh.n_elements)]
    for f in mesh.interior_faces:
        table[f.owner][f.owner_side] = ("interior", f.neighbor, f.neighbor_side)
        table[f.neighbor][f.neighbor_side] = ("interior", f.owner, f.owner_side)
    for f in mesh.boundary_faces:
        table[f.element][f.side] = ("boundary", None, None)
    return table


@dataclass
class ConservationReport:
    residuals: np.ndarray  # per element
    total: float  # sum over elements

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def conservation_check(u_h: DGFunction, f, K: CoefficientField, q=None) -> ConservationReport:
    """Per-element balance ``int_E f - int_E u_h + int_dE F* . mu``.

    ``F*`` is the average diffusive flux on interior faces and the one-sided
    flux on the domain boundary.  Computed from point evaluations of ``u_h``,
    independently of any assembled matrix.
    """
    space = u_h.space
    mesh = space.mesh
    t = space.tables(q)
    c = u_h.padded()
    fq = np.broadcast_to(f(t.points[..., 0], t.points[..., 1]), t.weights.shape)
    uq = np.einsum("eqa,ea->eq", t.phi, c)
    res = np.sum(t.weights * (fq - uq), axis=1)

    elems = np.arange(mesh.n_elements)
    flux = []  # flux[s][e, q] = K grad u_h . mu_s on side s of e
    weights = []
    for s in range(4):
        _, fl, w, _ = space.side_data(elems, s, q=q, kfield=K)
        flux.append(np.einsum("eqa,ea->eq", fl, c))
        weights.append(w)
    nbrs = _side_neighbors(mesh)
    for e in range(mesh.n_elements):
        for s in range(4):
            kind, other, oside = nbrs[e][s]
            own = flux[s][e]
            if kind == "interior":
                # neighbor's outward flux is along -mu, so its value along mu is the negative
                fstar = 0.5 * (own - flux[oside][other])
            else:
                fstar = own
            res[e] += np.sum(weights[s][e] * fstar)
    return ConservationReport(res, float(np.sum(res)))


# --------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceRow:
    n: int
    h: float
    ndof: int
    l2: float
    h1: float
    triple: float
    rate_l2: float | None = None
    rate_h1: float | None = None
    rate_triple: float | None = None
    residual: float = 0.0


def solve_case(case: ManufacturedCase, n: int, p, params: PenaltyParams, path="direct", numbering="row-major"):
    mesh = build_rect_mesh(case.domain, n, n, numbering=numbering)
    space = build_space(mesh, p)
    K = make_coefficient(case.K_spec, space)
    system = assemble_system(space, K, params, case.f, path=path)
    u_h, report = solve_linear(system)
    return u_h, report, K, system


def convergence_study(case: ManufacturedCase, params: PenaltyParams, levels=(4, 8, 16), p=2) -> list[ConvergenceRow]:
    """Errors on successively refined uniform meshes, ordered by decreasing h.

    Observed orders are ``log2(e_coarse / e_fine)`` scaled by the actual
    h ratio; they are diagnostics, not claims about the formulation.
    """
    if len(levels) < 3:
        raise InvalidInputError("a convergence study needs at least 3 levels")
    if np.min(p) < 2:
        log.warning("p=1 run: the flux-jump formulation may be unstable; excluded from rate gates")
    rows = []
    for n in sorted(levels):
        u_h, report, K, system = solve_case(case, n, p, params)
        ctx = NormContext(u_h.space, K, params)
        err = error_norms(u_h, case.u, case.grad, ctx)
        rows.append(ConvergenceRow(n, u_h.space.mesh.h, u_h.space.ndof, err.l2, err.h1, err.triple,
                                   residual=report.residual))
    for prev, row in zip(rows, rows[1:]):
        k = math.log(prev.h / row.h)
        row.rate_l2 = math.log(prev.l2 / row.l2) / k
        row.rate_h1 = math.log(prev.h1 / row.h1) / k
        row.rate_triple = math.log(prev.triple / row.triple) / k
    return rows


# --------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    amplitude: float
    delta_u_triple: float
    delta_f_l2: float
    ratio: float  # |||du||| / ||df||
    bound: float  # 1 / gamma_h
    holds: bool


def stability_probe(space: BrokenSpace, K: CoefficientField, params: PenaltyParams, delta_f, amplitudes,
                    gamma_h: float | None = None) -> list[StabilityReport]:
    """Solve with data ``a * delta_f`` for each amplitude and compare against ``1 / gamma_h``.

    ``|||du||| <= ||df|| / gamma_h`` is the discrete inf-sup bound and must hold.
    """
    ctx = NormContext(space, K, params)
    B = assemble_direct(space, K, params)
    G = ctx.gram()
    if gamma_h is None:
        gamma_h = measure_constants(B, G).gamma_h
    t = space.tables()
    base = np.broadcast_to(delta_f(t.points[..., 0], t.points[..., 1]), t.weights.shape)
    base_rhs = assemble_rhs(space, delta_f)
    out = []
    for a in amplitudes:
        c, _ = solve_matrix(B, a * base_rhs)
        du = float(np.sqrt(max(c @ (G @ c), 0.0)))
        df = float(abs(a) * np.sqrt(np.sum(t.weights * base**2)))
        ratio = du / df if df > 0 else 0.0
        bound = 1.0 / gamma_h
        out.append(StabilityReport(float(a), du, df, ratio, bound, du <= bound * df * (1 + 1e-6)))
    return out


# --------------------------------------------------------------------------
# continuous Galerkin reference


def gll_points(p: int) -> np.ndarray:
    interior = npleg.legroots(npleg.legder([0] * p + [1])) if p > 1 else np.array([])
    return np.concatenate([[-1.0], np.sort(interior), [1.0]])


def lagrange_table(nodes: np.ndarray, x: np.ndarray):
    """Values and derivatives of the Lagrange polynomials on ``nodes`` at ``x``."""
    n = nodes.size
    vals = np.ones((x.size, n))
    ders = np.zeros((x.size, n))
    for j in range(n):
        others = [m for m in range(n) if m != j]
        denom = np.prod([nodes[j] - nodes[m] for m in others])
        for m in others:
            vals[:, j] *= x - nodes[m]
        for k in others:
            term = np.ones(x.size)
            for m in others:
                if m != k:
                    term *= x - nodes[m]
            ders[:, j] += term
        vals[:, j] /= denom
        ders[:, j] /= denom
    return vals, ders


@dataclass
class CGResult:
    mesh: Mesh
    p: int
    coefficients: np.ndarray  # on the full (nx p + 1) x (ny p + 1) node grid, x fastest
    matrix: sp.csr_matrix  # reduced (interior-node) stiffness + mass
    l2: float
    h1: float
    spd: bool


def solve_cg_reference(case: ManufacturedCase, n: int, p: int, q=None) -> CGResult:
    """Conforming Q_p Lagrange solve of the classical H1_0 problem on the same mesh."""
    if p < 1:
        raise InvalidInputError("CG reference needs p >= 1")
    mesh = build_rect_mesh(case.domain, n, n)
    space = build_space(mesh, p)  # only for quadrature points / K certification
    K = make_coefficient(case.K_spec, space)
    nodes = gll_points(p)
    npx, npy = mesh.nx * p + 1, mesh.ny * p + 1

    def assemble(qq):
        rule = QuadratureRule.gauss(qq)
        ref, w = rule.tensor()
        lx, dlx = lagrange_table(nodes, ref[:, 0])
        ly, dly = lagrange_table(nodes, ref[:, 1])
        phi = (lx[:, :, None] * ly[:, None, :]).reshape(len(w), -1)
        dxi = (dlx[:, :, None] * ly[:, None, :]).reshape(len(w), -1)
        deta = (lx[:, :, None] * dly[:, None, :]).reshape(len(w), -1)
        return rule, ref, w, phi, dxi, deta

    qq = space.quad_order if q is None else q
    rule, ref, w, phi, dxi, deta = assemble(qq)
    loc = np.array([[i, j] for i in range(p + 1) for j in range(p + 1)])
    rows, cols, vals = [], [], []
    rhs = np.zeros(npx * npy)
    t = space.tables(qq)
    kq = K.volume_values(t)
    for e in range(mesh.n_elements):
        ix, iy = mesh.grid_index[e]
        x0, x1, y0, y1 = mesh.bounds[e]
        sx, sy = 2.0 / (x1 - x0), 2.0 / (y1 - y0)
        det = (x1 - x0) * (y1 - y0) / 4.0
        gid = (iy * p + loc[:, 1]) * npx + (ix * p + loc[:, 0])
        wq = w * det
        gx, gy = sx * dxi, sy * deta
        A = (gx.T * (wq * kq[e])) @ gx + (gy.T * (wq * kq[e])) @ gy + (phi.T * wq) @ phi
        fq = case.f(t.points[e, :, 0], t.points[e, :, 1])
        rhs[gid] += phi.T @ (wq * fq)
        r, c = np.meshgrid(gid, gid, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(A.ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(npx * npy,) * 2).tocsr()
    gi, gj = np.meshgrid(np.arange(npx), np.arange(npy), indexing="xy")
    interior = ((gi > 0) & (gi < npx - 1) & (gj > 0) & (gj < npy - 1)).ravel()
    idx = np.flatnonzero(interior)
    Ai = A[idx][:, idx].tocsr()
    spd = True
    if idx.size <= 4000:
        try:
            sla.cholesky(Ai.toarray())
        except np.linalg.LinAlgError:
            spd = False
    coef = np.zeros(npx * npy)
    if idx.size:
        coef[idx] = spla.spsolve(Ai.tocsc(), rhs[idx]) if np.any(rhs[idx]) else 0.0

    # errors at elevated quadrature
    _, ref2, w2, phi2, dxi2, deta2 = assemble(qq + 4)
    l2sq = semi = 0.0
    for e in range(mesh.n_elements):
        ix, iy = mesh.grid_index[e]
        x0, x1, y0, y1 = mesh.bounds[e]
        sx, sy = 2.0 / (x1 - x0), 2.0 / (y1 - y0)
        det = (x1 - x0) * (y1 - y0) / 4.0
        gid = (iy * p + loc[:, 1]) * npx + (ix * p + loc[:, 0])
        xs = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * ref2[:, 0]
        ys = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * ref2[:, 1]
        ue = case.u(xs, ys)
        ex, ey = case.grad(xs, ys)
        cl = coef[gid]
        l2sq += np.sum(w2 * det * (phi2 @ cl - ue) ** 2)
        semi += np.sum(w2 * det * ((sx * dxi2 @ cl - ex) ** 2 + (sy * deta2 @ cl - ey) ** 2))
    return CGResult(mesh, p, coef, Ai, float(np.sqrt(l2sq)), float(np.sqrt(l2sq + semi)), spd)
