"""Structured rectangular partitions with oriented face topology."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# element sides: reference coordinate held fixed and its value, outward normal
SIDES = (
    ("left", 0, -1.0, (-1.0, 0.0)),
    ("right", 0, 1.0, (1.0, 0.0)),
    ("bottom", 1, -1.0, (0.0, -1.0)),
    ("top", 1, 1.0, (0.0, 1.0)),
)
LEFT, RIGHT, BOTTOM, TOP = range(4)


class InvalidInputError(ValueError):
    """Raised when a construction precondition is violated."""


@dataclass(frozen=True)
class InteriorFace:
    owner: int  # E_i, the larger index
    neighbor: int  # E_j
    owner_side: int
    neighbor_side: int
    normal: tuple[float, float]  # unit normal pointing from owner into neighbor
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))


@dataclass(frozen=True)
class BoundaryFace:
    element: int
    side: int
    normal: tuple[float, float]  # outward
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))


@dataclass(frozen=True)
class Mesh:
    domain: tuple[float, float, float, float]
    nx: int
    ny: int
    bounds: np.ndarray  # (n_elements, 4): x0, x1, y0, y1
    grid_index: np.ndarray  # (n_elements, 2): column ix, row iy
    interior_faces: tuple[InteriorFace, ...]
    boundary_faces: tuple[BoundaryFace, ...]
    diameters: np.ndarray = field(repr=False)

    @property
    def n_elements(self) -> int:
        return self.bounds.shape[0]

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def h_min(self) -> float:
        return float(self.diameters.min())

    def widths(self) -> tuple[np.ndarray, np.ndarray]:
        return self.bounds[:, 1] - self.bounds[:, 0], self.bounds[:, 3] - self.bounds[:, 2]

    def centroids(self) -> np.ndarray:
        return np.column_stack(
            [0.5 * (self.bounds[:, 0] + self.bounds[:, 1]), 0.5 * (self.bounds[:, 2] + self.bounds[:, 3])]
        )

    def element_faces(self, e: int) -> list[tuple[str, int, int]]:
        """Faces touching element ``e`` as (kind, face index, side) triples."""
        out = []
        for k, f in enumerate(self.interior_faces):
            if f.owner == e:
                out.append(("interior", k, f.owner_side))
            elif f.neighbor == e:
                out.append(("interior", k, f.neighbor_side))
        for k, f in enumerate(self.boundary_faces):
            if f.element == e:
                out.append(("boundary", k, f.side))
        return out

    def locate(self, x: float, y: float) -> int:
        a, b, c, d = self.domain
        ix = min(int((x - a) / (b - a) * self.nx), self.nx - 1)
        iy = min(int((y - c) / (d - c) * self.ny), self.ny - 1)
        return int(self._lookup[iy, ix])

    @cached_property
    def _lookup(self) -> np.ndarray:
        table = np.empty((self.ny, self.nx), dtype=np.int64)
        table[self.grid_index[:, 1], self.grid_index[:, 0]] = np.arange(self.n_elements)
        return table

    def summary(self) -> str:
        lines = [
            f"domain {self.domain[0]!r} {self.domain[1]!r} {self.domain[2]!r} {self.domain[3]!r}",
            f"grid {self.nx} x {self.ny}",
            f"elements {self.n_elements}",
            f"interior_faces {len(self.interior_faces)}",
            f"boundary_faces {len(self.boundary_faces)}",
            f"h {self.h:.17g}",
            f"h_min {self.h_min:.17g}",
        ]
        return "\n".join(lines) + "\n"


def build_rect_mesh(domain=(0.0, 1.0, 0.0, 1.0), nx: int = 1, ny: int = 1, numbering: str = "row-major") -> Mesh:
    """Partition ``(a, b) x (c, d)`` into ``nx * ny`` equal rectangles.

    ``numbering`` is ``"row-major"`` (index ``iy * nx + ix``) or ``"reversed"``
    (the same list read backwards); the reversed ordering flips every
    interior face orientation and is used to check orientation invariance.
    """
    a, b, c, d = (float(v) for v in domain)
    if not (np.isfinite([a, b, c, d]).all() and b > a and d > c):
        raise InvalidInputError(f"degenerate domain {domain!r}: need a < b and c < d")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidInputError(f"nx and ny must be positive integers, got {nx!r}, {ny!r}")
    nx, ny = int(nx), int(ny)
    if numbering not in ("row-major", "reversed"):
        raise InvalidInputError(f"unknown numbering {numbering!r}")

    xs = np.linspace(a, b, nx + 1)
    ys = np.linspace(c, d, ny + 1)
    n = nx * ny
    index = np.arange(n).reshape(ny, nx)
    if numbering == "reversed":
        index = n - 1 - index

    bounds = np.empty((n, 4))
    grid = np.empty((n, 2), dtype=np.int64)
    for iy in range(ny):
        for ix in range(nx):
            e = index[iy, ix]
            bounds[e] = (xs[ix], xs[ix + 1], ys[iy], ys[iy + 1])
            grid[e] = (ix, iy)

    interior = []
    # vertical faces, then horizontal faces; sorted afterwards for a stable order
    for iy in range(ny):
        for ix in range(nx - 1):
            left, right = int(index[iy, ix]), int(index[iy, ix + 1])
            p0, p1 = (xs[ix + 1], ys[iy]), (xs[ix + 1], ys[iy + 1])
            if right > left:
                interior.append(InteriorFace(right, left, LEFT, RIGHT, (-1.0, 0.0), p0, p1))
            else:
                interior.append(InteriorFace(left, right, RIGHT, LEFT, (1.0, 0.0), p0, p1))
    for iy in range(ny - 1):
        for ix in range(nx):
            low, up = int(index[iy, ix]), int(index[iy + 1, ix])
            p0, p1 = (xs[ix], ys[iy + 1]), (xs[ix + 1], ys[iy + 1])
            if up > low:
                interior.append(InteriorFace(up, low, BOTTOM, TOP, (0.0, -1.0), p0, p1))
            else:
                interior.append(InteriorFace(low, up, TOP, BOTTOM, (0.0, 1.0), p0, p1))
    interior.sort(key=lambda f: (f.owner, f.neighbor))

    boundary = []
    for iy in range(ny):
        boundary.append(BoundaryFace(int(index[iy, 0]), LEFT, (-1.0, 0.0), (a, ys[iy]), (a, ys[iy + 1])))
        boundary.append(BoundaryFace(int(index[iy, nx - 1]), RIGHT, (1.0, 0.0), (b, ys[iy]), (b, ys[iy + 1])))
    for ix in range(nx):
        boundary.append(BoundaryFace(int(index[0, ix]), BOTTOM, (0.0, -1.0), (xs[ix], c), (xs[ix + 1], c)))
        boundary.append(BoundaryFace(int(index[ny - 1, ix]), TOP, (0.0, 1.0), (xs[ix], d), (xs[ix + 1], d)))
    boundary.sort(key=lambda f: (f.element, f.side))

    diam = np.hypot(bounds[:, 1] - bounds[:, 0], bounds[:, 3] - bounds[:, 2])
    return Mesh((a, b, c, d), nx, ny, bounds, grid, tuple(interior), tuple(boundary), diam)


def mesh_metrics(mesh: Mesh) -> tuple[float, float]:
    """Return ``(h, h_min)``: largest and smallest element diameters."""
    return mesh.h, mesh.h_min
