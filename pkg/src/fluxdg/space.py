"""Broken tensor-product Legendre spaces and Gauss quadrature."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

from . import _kernels
from .mesh import SIDES, InvalidInputError, Mesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureRule:
    """``q``-point Gauss-Legendre rule on [-1, 1] and its tensor square."""

    q: int
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, q: int) -> "QuadratureRule":
        if q < 1:
            raise InvalidInputError(f"quadrature needs at least one point, got {q}")
        x, w = npleg.leggauss(q)
        return cls(q, x, w)

    @property
    def exact_degree(self) -> int:
        return 2 * self.q - 1

    def tensor(self) -> tuple[np.ndarray, np.ndarray]:
        """Points ``(q*q, 2)`` and weights of the 2D rule, first coordinate slowest."""
        xi, eta = np.meshgrid(self.points, self.points, indexing="ij")
        w = np.outer(self.weights, self.weights)
        return np.column_stack([xi.ravel(), eta.ravel()]), w.ravel()


def legendre_table(n: int, x) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of L_0..L_n at ``x``; shapes ``(len(x), n + 1)``."""
    x = np.asarray(x, dtype=float)
    vals = np.empty(x.shape + (n + 1,))
    ders = np.empty_like(vals)
    vals[..., 0] = 1.0
    ders[..., 0] = 0.0
    if n >= 1:
        vals[..., 1] = x
        ders[..., 1] = 1.0
    for k in range(2, n + 1):
        vals[..., k] = ((2 * k - 1) * x * vals[..., k - 1] - (k - 1) * vals[..., k - 2]) / k
        ders[..., k] = k * vals[..., k - 1] + x * ders[..., k - 1]
    return vals, ders


def tensor_basis(pmax: int, ref_points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded tensor Legendre basis at reference points.

    Mode ``(i, j)`` (``L_i(xi) L_j(eta)``) sits at column ``i * (pmax + 1) + j``.
    Returns values and the two reference derivatives, each ``(npts, (pmax+1)**2)``.
    """
    ref_points = np.atleast_2d(np.asarray(ref_points, dtype=float))
    lx, dlx = legendre_table(pmax, ref_points[:, 0])
    ly, dly = legendre_table(pmax, ref_points[:, 1])
    n = pmax + 1
    phi = (lx[:, :, None] * ly[:, None, :]).reshape(-1, n * n)
    dxi = (dlx[:, :, None] * ly[:, None, :]).reshape(-1, n * n)
    deta = (lx[:, :, None] * dly[:, None, :]).reshape(-1, n * n)
    return phi, dxi, deta


@dataclass(frozen=True)
class SideTable:
    """Basis traces on one reference side, in face parameter order."""

    side: int
    t: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    dxi: np.ndarray
    deta: np.ndarray


@dataclass(frozen=True)
class ElementTables:
    """Per-element basis data at one quadrature order, padded to ``(pmax+1)**2`` modes."""

    rule: QuadratureRule
    weights: np.ndarray  # (ne, nq2) physical volume weights
    points: np.ndarray  # (ne, nq2, 2) physical points
    phi: np.ndarray  # (ne, nq2, nb) masked values
    gx: np.ndarray  # (ne, nq2, nb) physical x-derivative
    gy: np.ndarray
    sides: tuple[SideTable, ...]


class BrokenSpace:
    """Discontinuous piecewise Q_p space on a rectangular mesh.

    Degrees may vary per element.  DOFs are element-major; inside an element
    modes are ordered ``(i, j)`` with ``i`` the x-degree, outer loop on ``i``.
    """

    def __init__(self, mesh: Mesh, degrees, quad_order: int | None = None):
        degrees = np.broadcast_to(np.asarray(degrees), (mesh.n_elements,)).copy()
        if np.any(degrees != np.round(degrees)):
            raise InvalidInputError("polynomial degrees must be integers")
        degrees = degrees.astype(np.int64)
        if degrees.min() < 1:
            raise InvalidInputError(f"all degrees must be >= 1, got minimum {degrees.min()}")
        if degrees.min() == 1:
            log.warning("degree-1 elements present; the flux-jump formulation may be unstable at p=1")
        self.mesh = mesh
        self.degrees = degrees
        self.pmax = int(degrees.max())
        self.nb = (self.pmax + 1) ** 2
        self.quad_order = int(quad_order) if quad_order is not None else self.pmax + 2
        sizes = (degrees + 1) ** 2
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.ndof = int(self.offsets[-1])

        n = self.pmax + 1
        mask = np.zeros((mesh.n_elements, self.nb), dtype=bool)
        dof_map = -np.ones((mesh.n_elements, self.nb), dtype=np.int64)
        for e, pe in enumerate(degrees):
            idx = np.array([i * n + j for i in range(pe + 1) for j in range(pe + 1)])
            mask[e, idx] = True
            dof_map[e, idx] = self.offsets[e] + np.arange(idx.size)
        self.mask = mask
        self.dof_map = dof_map
        self._tables: dict[int, ElementTables] = {}

    @property
    def p(self) -> int:
        """Global degree used in penalty and norm weights: the minimum local degree."""
        return int(self.degrees.min())

    def local_modes(self, e: int) -> np.ndarray:
        return np.flatnonzero(self.mask[e])

    def dofs(self, e: int) -> np.ndarray:
        return np.arange(self.offsets[e], self.offsets[e + 1])

    def tables(self, q: int | None = None) -> ElementTables:
        q = self.quad_order if q is None else int(q)
        if q not in self._tables:
            self._tables[q] = self._build_tables(q)
        return self._tables[q]

    def _build_tables(self, q: int) -> ElementTables:
        rule = QuadratureRule.gauss(q)
        ref, w = rule.tensor()
        phi, dxi, deta = tensor_basis(self.pmax, ref)
        b = self.mesh.bounds
        wx, wy = self.mesh.widths()
        det = wx * wy / 4.0
        m = self.mask[:, None, :].astype(float)
        px = 0.5 * (b[:, 0] + b[:, 1])[:, None] + 0.5 * wx[:, None] * ref[None, :, 0]
        py = 0.5 * (b[:, 2] + b[:, 3])[:, None] + 0.5 * wy[:, None] * ref[None, :, 1]
        sides = []
        for s, (_, axis, val, _) in enumerate(SIDES):
            pts = np.empty((q, 2))
            pts[:, axis] = val
            pts[:, 1 - axis] = rule.points
            sphi, sdxi, sdeta = tensor_basis(self.pmax, pts)
            sides.append(SideTable(s, rule.points, rule.weights, sphi, sdxi, sdeta))
        return ElementTables(
            rule=rule,
            weights=det[:, None] * w[None, :],
            points=np.stack([px, py], axis=-1),
            phi=phi[None] * m,
            gx=(2.0 / wx)[:, None, None] * dxi[None] * m,
            gy=(2.0 / wy)[:, None, None] * deta[None] * m,
            sides=tuple(sides),
        )

    def side_data(self, elements, side: int, q: int | None = None, normal=None, kfield=None):
        """Traces on ``side`` of each element in ``elements``.

        Returns ``(phi, flux, weights, points)`` with ``phi`` and ``flux`` of
        shape ``(n, q, nb)``.  ``flux`` is ``K grad(phi) . normal`` (outward
        normal of the side if ``normal`` is None); it is None without ``kfield``.
        """
        elements = np.asarray(elements, dtype=np.int64)
        st = self.tables(q).sides[side]
        _, axis, val, mu = SIDES[side]
        b = self.mesh.bounds[elements]
        wx, wy = b[:, 1] - b[:, 0], b[:, 3] - b[:, 2]
        m = self.mask[elements][:, None, :].astype(float)
        cx, cy = 0.5 * (b[:, 0] + b[:, 1]), 0.5 * (b[:, 2] + b[:, 3])
        pts = np.empty((elements.size, st.t.size, 2))
        if axis == 0:
            pts[..., 0] = (cx + 0.5 * wx * val)[:, None]
            pts[..., 1] = cy[:, None] + 0.5 * wy[:, None] * st.t[None]
            jac = 0.5 * wy
        else:
            pts[..., 0] = cx[:, None] + 0.5 * wx[:, None] * st.t[None]
            pts[..., 1] = (cy + 0.5 * wy * val)[:, None]
            jac = 0.5 * wx
        weights = jac[:, None] * st.weights[None]
        phi = st.phi[None] * m
        flux = None
        if kfield is not None:
            nvec = np.asarray(mu if normal is None else normal, dtype=float)
            nvec = np.broadcast_to(nvec, (elements.size, 2))
            kq = kfield.values_at(elements, pts)
            gx = (2.0 / wx)[:, None, None] * st.dxi[None]
            gy = (2.0 / wy)[:, None, None] * st.deta[None]
            flux = kq[:, :, None] * (nvec[:, 0, None, None] * gx + nvec[:, 1, None, None] * gy) * m
        return phi, flux, weights, pts

    def to_reference(self, e: int, x, y) -> tuple[np.ndarray, np.ndarray]:
        b = self.mesh.bounds[e]
        xi = (2.0 * np.asarray(x, dtype=float) - (b[0] + b[1])) / (b[1] - b[0])
        eta = (2.0 * np.asarray(y, dtype=float) - (b[2] + b[3])) / (b[3] - b[2])
        return xi, eta

    def zero(self) -> "DGFunction":
        return DGFunction(self, np.zeros(self.ndof))

    def function(self, coefficients) -> "DGFunction":
        return DGFunction(self, coefficients)

    def fingerprint(self) -> str:
        m = self.mesh
        degs = ",".join(str(int(d)) for d in self.degrees) if np.unique(self.degrees).size > 1 else str(self.pmax)
        return f"{m.nx}x{m.ny}|p={degs}|q={self.quad_order}"


def build_space(mesh: Mesh, degrees=2, quad_order: int | None = None) -> BrokenSpace:
    return BrokenSpace(mesh, degrees, quad_order)


def eval_basis(space: BrokenSpace, element: int, ref_point) -> tuple[np.ndarray, np.ndarray]:
    """Active basis values ``(n,)`` and physical gradients ``(n, 2)`` at one reference point."""
    if not 0 <= element < space.mesh.n_elements:
        raise IndexError(f"element {element} out of range [0, {space.mesh.n_elements})")
    ref = np.asarray(ref_point, dtype=float).reshape(1, 2)
    if np.any(np.abs(ref) > 1.0 + 1e-12):
        raise InvalidInputError(f"reference point {ref_point!r} outside [-1, 1]^2")
    phi, dxi, deta = tensor_basis(space.pmax, ref)
    wx, wy = (w[element] for w in space.mesh.widths())
    act = space.local_modes(element)
    grads = np.column_stack([2.0 / wx * dxi[0, act], 2.0 / wy * deta[0, act]])
    return phi[0, act], grads


@dataclass
class DGFunction:
    space: BrokenSpace
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).copy()
        if self.coefficients.shape != (self.space.ndof,):
            raise InvalidInputError(
                f"coefficient vector has shape {self.coefficients.shape}, space has {self.space.ndof} DOFs"
            )

    def padded(self) -> np.ndarray:
        """Coefficients laid out on the padded mode table, ``(n_elements, nb)``."""
        out = np.zeros(self.space.dof_map.shape)
        dm = self.space.dof_map
        act = dm >= 0
        out[act] = self.coefficients[dm[act]]
        return out

    def local(self, e: int) -> np.ndarray:
        return self.coefficients[self.space.offsets[e] : self.space.offsets[e + 1]]

    def __add__(self, other: "DGFunction") -> "DGFunction":
        return DGFunction(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other: "DGFunction") -> "DGFunction":
        return DGFunction(self.space, self.coefficients - other.coefficients)

    def __mul__(self, alpha: float) -> "DGFunction":
        return DGFunction(self.space, alpha * self.coefficients)

    __rmul__ = __mul__

    def at_quadrature(self, q: int | None = None):
        """Values and physical gradients at volume quadrature points, each ``(ne, nq2)``."""
        t = self.space.tables(q)
        c = self.padded()
        val = np.einsum("eqa,ea->eq", t.phi, c)
        gx = np.einsum("eqa,ea->eq", t.gx, c)
        gy = np.einsum("eqa,ea->eq", t.gy, c)
        return val, gx, gy

    def __call__(self, x, y):
        """Point values; points on shared edges take the element found by ``Mesh.locate``."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        mesh = self.space.mesh
        a, b, c, d = mesh.domain
        ix = np.clip(((x.ravel() - a) / (b - a) * mesh.nx).astype(np.int64), 0, mesh.nx - 1)
        iy = np.clip(((y.ravel() - c) / (d - c) * mesh.ny).astype(np.int64), 0, mesh.ny - 1)
        elems = mesh._lookup[iy, ix]
        bnd = mesh.bounds[elems]
        xi = (2.0 * x.ravel() - (bnd[:, 0] + bnd[:, 1])) / (bnd[:, 1] - bnd[:, 0])
        eta = (2.0 * y.ravel() - (bnd[:, 2] + bnd[:, 3])) / (bnd[:, 3] - bnd[:, 2])
        phi, _, _ = tensor_basis(self.space.pmax, np.column_stack([xi, eta]))
        vals = np.einsum("na,na->n", phi, self.padded()[elems])
        return vals.reshape(x.shape)


def project_l2(space: BrokenSpace, f, q: int | None = None) -> DGFunction:
    """Element-wise L2 projection of ``f(x, y)`` (vectorized callable)."""
    t = space.tables(q)
    fq = np.asarray(f(t.points[..., 0], t.points[..., 1]), dtype=float)
    fq = np.broadcast_to(fq, t.weights.shape)
    mass = _kernels.weighted_outer(t.weights, t.phi, t.phi)
    rhs = _kernels.weighted_moments(t.weights, fq, t.phi)
    coef = np.empty(space.ndof)
    for e in range(space.mesh.n_elements):
        act = space.local_modes(e)
        coef[space.dofs(e)] = np.linalg.solve(mass[e][np.ix_(act, act)], rhs[e, act])
    return DGFunction(space, coef)
