"""Diffusion coefficient K(x) and source data, with certified bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import InvalidInputError, Mesh


class InvalidCoefficientError(InvalidInputError):
    """K fails the positivity/boundedness requirement at a sample point."""


_EXPR_NAMES = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sinh", "cosh", "tanh", "arctan", "pi", "e")
}


def compile_expression(expr: str) -> Callable:
    """Turn a config string such as ``"1 + x**2"`` into a vectorized ``f(x, y)``.

    Only numpy elementary functions and the names ``x``, ``y`` are visible.
    """
    try:
        code = compile(expr, "<expression>", "eval")
    except SyntaxError as exc:
        raise InvalidInputError(f"cannot parse expression {expr!r}: {exc.msg}") from None
    allowed = set(_EXPR_NAMES) | {"x", "y"}
    unknown = set(code.co_names) - allowed
    if unknown:
        raise InvalidInputError(f"expression {expr!r} uses unknown names {sorted(unknown)}")

    def f(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = eval(code, {"__builtins__": {}}, dict(_EXPR_NAMES, x=x, y=y))
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, y).shape)

    f.expression = expr
    return f


@dataclass(frozen=True)
class CoefficientField:
    """K as a constant, per-element constants, or an analytic callable.

    Piecewise values are one-sided: evaluating on an element's boundary
    uses that element's value.
    """

    kind: str
    values: np.ndarray | float | None
    func: Callable | None
    K0: float
    K1: float
    label: str = ""

    def values_at(self, elements, points) -> np.ndarray:
        """K at ``points[k, q, :]`` seen from element ``elements[k]``; shape ``points.shape[:-1]``."""
        shape = points.shape[:-1]
        if self.kind == "constant":
            return np.full(shape, float(self.values))
        if self.kind == "piecewise":
            vals = np.asarray(self.values)[np.asarray(elements)]
            return np.broadcast_to(vals.reshape(vals.shape + (1,) * (len(shape) - 1)), shape).copy()
        return np.asarray(self.func(points[..., 0], points[..., 1]), dtype=float).reshape(shape)

    def volume_values(self, tables) -> np.ndarray:
        n = tables.points.shape[0]
        return self.values_at(np.arange(n), tables.points)

    def is_piecewise_constant(self) -> bool:
        return self.kind in ("constant", "piecewise")


def _certify(kind, values, func, samples: np.ndarray, label: str) -> CoefficientField:
    samples = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(samples)):
        raise InvalidCoefficientError(f"coefficient {label!r} is not finite at some sample point")
    k0, k1 = float(samples.min()), float(samples.max())
    if k0 <= 0.0:
        raise InvalidCoefficientError(f"coefficient {label!r} must be positive; minimum sample is {k0!r}")
    return CoefficientField(kind, values, func, k0, k1, label)


def checkerboard_values(mesh: Mesh, low: float, high: float, cells: int | None = None) -> np.ndarray:
    """Per-element checkerboard.

    With ``cells=None`` colours alternate element by element; otherwise the
    domain is split into ``cells x cells`` equal tiles (which must align with
    the mesh) and colours alternate tile by tile.  The tile containing the
    lower-left corner gets ``low``.
    """
    if cells is None:
        ix, iy = mesh.grid_index[:, 0], mesh.grid_index[:, 1]
    else:
        if mesh.nx % cells or mesh.ny % cells:
            raise InvalidInputError(f"a {cells}x{cells} checkerboard does not align with a {mesh.nx}x{mesh.ny} mesh")
        ix = mesh.grid_index[:, 0] // (mesh.nx // cells)
        iy = mesh.grid_index[:, 1] // (mesh.ny // cells)
    return np.where((ix + iy) % 2 == 0, float(low), float(high))


def make_coefficient(spec, space) -> CoefficientField:
    """Build and certify K from a config mapping, a number, or a callable.

    Accepted mappings::

        {"kind": "constant", "value": 1.0}
        {"kind": "checkerboard", "values": [1.0, 10.0], "cells": 2}   # cells optional
        {"kind": "piecewise", "values": [...one per element...]}
        {"kind": "analytic", "expr": "1 + x**2"}

    Bounds ``K0``/``K1`` are the min/max over every volume and face
    quadrature point of ``space``; a nonpositive sample is an error.
    """
    mesh = space.mesh
    if callable(spec):
        spec = {"kind": "analytic", "func": spec}
    elif np.isscalar(spec):
        spec = {"kind": "constant", "value": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidInputError(f"coefficient spec must be a number or a mapping with 'kind', got {spec!r}")
    kind = spec["kind"]
    if kind == "constant":
        v = float(spec["value"])
        return _certify("constant", v, None, [v], f"constant {v!r}")
    if kind == "checkerboard":
        low, high = spec["values"]
        vals = checkerboard_values(mesh, low, high, spec.get("cells"))
        return _certify("piecewise", vals, None, vals, f"checkerboard {low!r}/{high!r}")
    if kind == "piecewise":
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (mesh.n_elements,):
            raise InvalidInputError(f"piecewise coefficient needs {mesh.n_elements} values, got {vals.size}")
        return _certify("piecewise", vals, None, vals, "piecewise")
    if kind == "analytic":
        func = spec.get("func") or compile_expression(spec["expr"])
        label = spec.get("expr", getattr(func, "__name__", "analytic"))
        tables = space.tables()
        samples = [np.asarray(func(tables.points[..., 0], tables.points[..., 1]), dtype=float).ravel()]
        for s in range(4):
            _, _, _, pts = space.side_data(np.arange(mesh.n_elements), s)
            samples.append(np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float).ravel())
        return _certify("analytic", None, func, np.concatenate(samples), label)
    raise InvalidInputError(f"unknown coefficient kind {kind!r}")


def continuity_c(K: CoefficientField) -> float:
    """Constant C = max(1/K0, 1) entering the continuity bound."""
    return max(1.0 / K.K0, 1.0)
