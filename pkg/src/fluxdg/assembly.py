"""Matrix and load-vector assembly for the flux-jump penalized DG form.

Matrices are stored test-row / trial-column, so ``B(u, v) = c_v @ B @ c_u``.
Two assembly paths are provided.  ``assemble_direct`` integrates the
element-boundary terms over every element boundary and adds the interface
average/jump terms separately.  ``assemble_reduced`` rewrites the boundary
terms face by face (interior faces as average-times-jump, domain boundary
faces kept one-sided).  They agree to rounding; the tests use each as the
oracle for the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .coefficient import CoefficientField
from .mesh import BoundaryFace, InteriorFace, InvalidInputError
from .space import BrokenSpace, DGFunction, tensor_basis


@dataclass(frozen=True)
class PenaltyParams:
    sigma: float = 1.0
    lam: float = 0.0
    zeta: float = 0.0
    nu: float = 0.0
    theta: float = 0.0
    comparison: bool = False  # permits sigma == 0 (Baumann-Oden limit)

    def __post_init__(self):
        for name in ("lam", "zeta", "nu", "theta"):
            if not getattr(self, name) >= 0.0:
                raise InvalidInputError(f"exponent {name} must be >= 0, got {getattr(self, name)!r}")
        if self.sigma < 0.0 or (self.sigma == 0.0 and not self.comparison):
            raise InvalidInputError(
                f"sigma must be > 0 (got {self.sigma!r}); sigma = 0 needs comparison mode"
            )

    def tau(self, h: float, p: int) -> float:
        """Face penalty weight sigma * h**lam / p**zeta."""
        return self.sigma * h**self.lam / p**self.zeta

    def omega(self, h: float, p: int) -> float:
        """Weight of the lifted boundary-flux term in the triple norm, h**nu / p**theta."""
        return h**self.nu / p**self.theta

    def fingerprint(self) -> str:
        return f"sigma={self.sigma!r}|lam={self.lam!r}|zeta={self.zeta!r}|nu={self.nu!r}|theta={self.theta!r}"


@dataclass
class AssembledSystem:
    space: BrokenSpace
    K: CoefficientField
    params: PenaltyParams
    B: sp.csr_matrix
    rhs: np.ndarray
    G: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)


class _Triplets:
    """COO accumulator; duplicates are summed on conversion to CSR."""

    def __init__(self, space: BrokenSpace):
        self.space = space
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, row_elems, col_elems, blocks, scale=1.0):
        dm = self.space.dof_map
        r = dm[np.asarray(row_elems)][:, :, None]
        c = dm[np.asarray(col_elems)][:, None, :]
        r, c = np.broadcast_arrays(r, c)
        keep = (r >= 0) & (c >= 0)
        self.rows.append(r[keep])
        self.cols.append(c[keep])
        self.vals.append(scale * blocks[keep])

    def tocsr(self) -> sp.csr_matrix:
        n = self.space.ndof
        if not self.rows:
            return sp.csr_matrix((n, n))
        m = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))), shape=(n, n)
        )
        m = m.tocsr()
        m.sum_duplicates()
        return m


def volume_blocks(space: BrokenSpace, K: CoefficientField, q=None):
    """Per-element ``(K grad u . grad v)`` and ``(u v)`` blocks, each ``(ne, nb, nb)``."""
    t = space.tables(q)
    wk = t.weights * K.volume_values(t)
    stiff = _kernels.weighted_outer(wk, t.gx, t.gx) + _kernels.weighted_outer(wk, t.gy, t.gy)
    mass = _kernels.weighted_outer(t.weights, t.phi, t.phi)
    return stiff, mass


def side_traces(space: BrokenSpace, K: CoefficientField, q=None):
    """Trace and outward-flux tables for all four sides of every element."""
    elems = np.arange(space.mesh.n_elements)
    return [space.side_data(elems, s, q=q, kfield=K) for s in range(4)]


def boundary_flux_blocks(space: BrokenSpace, K: CoefficientField, q=None, sides=None):
    """``P[e, a, b] = int_{dE} phi_a (K grad phi_b . mu)`` summed over the four sides."""
    sides = side_traces(space, K, q) if sides is None else sides
    out = np.zeros((space.mesh.n_elements, space.nb, space.nb))
    for phi, flux, w, _ in sides:
        out += _kernels.weighted_outer(w, phi, flux)
    return out


def _interior_tables(space, sides):
    """Owner/neighbor traces and fluxes along the face normal ``n`` (owner outward)."""
    faces = space.mesh.interior_faces
    if not faces:
        return None
    own = np.array([f.owner for f in faces])
    nbr = np.array([f.neighbor for f in faces])
    os_ = np.array([f.owner_side for f in faces])
    ns_ = np.array([f.neighbor_side for f in faces])
    nq = sides[0][0].shape[1]
    T = np.empty((2, len(faces), nq, space.nb))
    Q = np.empty_like(T)
    W = np.empty((len(faces), nq))
    for k in range(len(faces)):
        phi_o, flux_o, w_o, _ = (a[own[k]] for a in sides[os_[k]])
        phi_n, flux_n, _, _ = (a[nbr[k]] for a in sides[ns_[k]])
        T[0, k], Q[0, k], W[k] = phi_o, flux_o, w_o
        T[1, k], Q[1, k] = phi_n, -flux_n
    return own, nbr, T, Q, W


def _penalty(space, trip, tables, tau):
    own, nbr, T, Q, W = tables
    elems = (own, nbr)
    sgn = (1.0, -1.0)
    for s in range(2):
        for t in range(2):
            trip.add(elems[s], elems[t], _kernels.weighted_outer(W, Q[s], Q[t]), tau * sgn[s] * sgn[t])


def _check_threads(threads):
    if threads is not None:
        _kernels.set_threads(threads)


def assemble_direct(space: BrokenSpace, K: CoefficientField, params: PenaltyParams, q=None, threads=None):
    """System matrix with element-boundary terms integrated over each full element boundary."""
    _check_threads(threads)
    h, p = space.mesh.h, space.p
    trip = _Triplets(space)
    elems = np.arange(space.mesh.n_elements)
    stiff, mass = volume_blocks(space, K, q)
    sides = side_traces(space, K, q)
    P = boundary_flux_blocks(space, K, q, sides)
    trip.add(elems, elems, stiff + mass - P + P.transpose(0, 2, 1))

    tables = _interior_tables(space, sides)
    if tables is not None:
        own, nbr, T, Q, W = tables
        el = (own, nbr)
        sgn = (1.0, -1.0)
        for s in range(2):
            for t in range(2):
                # <v>[K grad u . n]
                trip.add(el[s], el[t], _kernels.weighted_outer(W, T[s], Q[t]), 0.5 * sgn[t])
                # -<u>[K grad v . n]
                trip.add(el[s], el[t], _kernels.weighted_outer(W, Q[s], T[t]), -0.5 * sgn[s])
        _penalty(space, trip, tables, params.tau(h, p))
    return trip.tocsr()


def assemble_reduced(space: BrokenSpace, K: CoefficientField, params: PenaltyParams, q=None, threads=None):
    """Same matrix, face-wise: interior faces carry <flux>[.] terms, boundary faces one-sided terms."""
    _check_threads(threads)
    h, p = space.mesh.h, space.p
    trip = _Triplets(space)
    elems = np.arange(space.mesh.n_elements)
    stiff, mass = volume_blocks(space, K, q)
    trip.add(elems, elems, stiff + mass)
    sides = side_traces(space, K, q)

    tables = _interior_tables(space, sides)
    if tables is not None:
        own, nbr, T, Q, W = tables
        el = (own, nbr)
        sgn = (1.0, -1.0)
        for s in range(2):
            for t in range(2):
                # -<K grad u . n>[v]
                trip.add(el[s], el[t], _kernels.weighted_outer(W, T[s], Q[t]), -0.5 * sgn[s])
                # +<K grad v . n>[u]
                trip.add(el[s], el[t], _kernels.weighted_outer(W, Q[s], T[t]), 0.5 * sgn[t])
        _penalty(space, trip, tables, params.tau(h, p))

    bfaces = space.mesh.boundary_faces
    for s in range(4):
        idx = np.array([f.element for f in bfaces if f.side == s], dtype=np.int64)
        if idx.size == 0:
            continue
        phi, flux, w, _ = (a[idx] for a in sides[s])
        blk = _kernels.weighted_outer(w, phi, flux)
        trip.add(idx, idx, -blk + blk.transpose(0, 2, 1))
    return trip.tocsr()


def assemble_rhs(space: BrokenSpace, f, q=None) -> np.ndarray:
    """Load vector ``L(phi_k) = int f phi_k``; ``f`` is a vectorized ``f(x, y)``."""
    t = space.tables(q)
    fq = np.broadcast_to(np.asarray(f(t.points[..., 0], t.points[..., 1]), dtype=float), t.weights.shape)
    mom = _kernels.weighted_moments(t.weights, fq, t.phi)
    out = np.zeros(space.ndof)
    act = space.dof_map >= 0
    out[space.dof_map[act]] = mom[act]
    return out


def assemble_system(space, K, params, f, path="direct", q=None, threads=None) -> AssembledSystem:
    if path == "direct":
        B = assemble_direct(space, K, params, q, threads)
    elif path == "reduced":
        B = assemble_reduced(space, K, params, q, threads)
    else:
        raise InvalidInputError(f"unknown assembly path {path!r}")
    meta = {"path": path, "space": space.fingerprint(), "params": params.fingerprint(), "K": K.label}
    return AssembledSystem(space, K, params, B, assemble_rhs(space, f, q), metadata=meta)


class ContractViolation(RuntimeError):
    pass


def _trace(u: DGFunction, K: CoefficientField, e: int, point, normal):
    space = u.space
    xi, eta = space.to_reference(e, point[0], point[1])
    phi, dxi, deta = tensor_basis(space.pmax, [[float(xi), float(eta)]])
    act = space.local_modes(e)
    c = u.local(e)
    wx, wy = (w[e] for w in space.mesh.widths())
    val = phi[0, act] @ c
    gx, gy = 2.0 / wx * (dxi[0, act] @ c), 2.0 / wy * (deta[0, act] @ c)
    k = float(K.values_at(np.array([e]), np.array([[point]]))[0, 0])
    return val, k * (gx * normal[0] + gy * normal[1])


def face_jump_average(space: BrokenSpace, K: CoefficientField, u: DGFunction, face, t: float):
    """``([u], <u>, [K grad u . n], <K grad u . n>)`` at face parameter ``t`` in [-1, 1]."""
    if isinstance(face, (int, np.integer)):
        face = space.mesh.interior_faces[face]
    if isinstance(face, BoundaryFace) or not isinstance(face, InteriorFace):
        raise ContractViolation("jump/average operators are defined on interior faces only")
    s = 0.5 * (1.0 + t)
    pt = (
        face.start[0] + s * (face.end[0] - face.start[0]),
        face.start[1] + s * (face.end[1] - face.start[1]),
    )
    ui, fi = _trace(u, K, face.owner, pt, face.normal)
    uj, fj = _trace(u, K, face.neighbor, pt, face.normal)
    return ui - uj, 0.5 * (ui + uj), fi - fj, 0.5 * (fi + fj)


def dump_triplets(path, matrix) -> None:
    """Write ``row col value`` lines (0-based, 17 significant digits), row-major order."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# shape {m.shape[0]} {m.shape[1]}\n")
        for k in order:
            fh.write(f"{m.row[k]} {m.col[k]} {m.data[k]:.17g}\n")


def load_triplets(path) -> sp.csr_matrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        shape = (int(header[2]), int(header[3]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)


def dump_vector(path, vec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# length {len(vec)}\n")
        for k, v in enumerate(vec):
            fh.write(f"{k} {v:.17g}\n")
