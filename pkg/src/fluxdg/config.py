"""Run configuration: TOML file + command-line overrides, validated up front.

Schema (``schema_version = 1``)::

    schema_version = 1

    [mesh]
    domain = [0.0, 1.0, 0.0, 1.0]   # a, b, c, d
    nx = 8
    ny = 8

    [space]
    degree = 2                      # integer, or one integer per element
    quad_order = 0                  # 0: p_max + 2 Gauss points per direction

    [penalty]
    sigma = 1.0
    lam = 0.0
    zeta = 0.0
    nu = 0.0
    theta = 0.0
    comparison = false              # allow sigma = 0

    [coefficient]                   # only with problem.f; cases carry their own K
    kind = "constant"               # constant | checkerboard | piecewise | analytic
    value = 1.0
    # values = [1.0, 10.0]; cells = 2; expr = "1 + x**2"

    [problem]
    case = "a"                      # a | b | c, or give f instead
    # f = "0"

    [solver]
    method = "auto"                 # auto | direct | iterative

    [study]
    levels = [4, 8, 16]
    beta = "corollary"              # or a number
    samples = 200
    seed = 0
    amplitudes = [1e-6, 1e-4, 1e-2]
    perturbation = "sin(2*pi*x)*sin(2*pi*y)"

    [output]
    directory = "fluxdg-out"
    threads = 1
    grid_resolution = 65

Unknown sections or keys are errors.  Precedence: flag > file > default.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .mesh import InvalidInputError

SCHEMA_VERSION = 1

DEFAULTS = {
    "mesh": {"domain": [0.0, 1.0, 0.0, 1.0], "nx": 8, "ny": 8},
    "space": {"degree": 2, "quad_order": 0},
    "penalty": {"sigma": 1.0, "lam": 0.0, "zeta": 0.0, "nu": 0.0, "theta": 0.0, "comparison": False},
    "coefficient": {},
    "problem": {"case": None, "f": None},
    "solver": {"method": "auto"},
    "study": {
        "levels": [4, 8, 16],
        "beta": "corollary",
        "samples": 200,
        "seed": None,
        "amplitudes": [1e-6, 1e-4, 1e-2],
        "perturbation": "sin(2*pi*x)*sin(2*pi*y)",
    },
    "output": {"directory": "fluxdg-out", "threads": 1, "grid_resolution": 65},
}
COEFFICIENT_KEYS = {"kind", "value", "values", "cells", "expr"}


class ConfigError(InvalidInputError):
    pass


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


@dataclass
class RunConfig:
    data: dict
    source: str = "<defaults>"

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    @property
    def seed(self) -> int:
        seed = self.data["study"]["seed"]
        if seed is None:
            raise ConfigError("study.seed is required for sampled checks")
        return int(seed)


def _merge(base: dict, overlay: dict, origin: str) -> None:
    for section, values in overlay.items():
        if section == "schema_version":
            continue
        if section not in DEFAULTS:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"{origin}: [{section}] must be a table")
        allowed = COEFFICIENT_KEYS if section == "coefficient" else set(DEFAULTS[section])
        for key, val in values.items():
            if key not in allowed:
                raise ConfigError(f"{origin}: unknown key {section}.{key}")
            base[section][key] = val


def parse_override(text: str) -> tuple[str, str, object]:
    """``section.key=value`` with the value parsed as a TOML literal (bare words become strings)."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    lhs, rhs = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    try:
        value = tomllib.loads(f"v = {rhs.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = rhs.strip()
    return section, key, value


def load_config(path=None, overrides=()) -> RunConfig:
    data = copy.deepcopy(DEFAULTS)
    source = "<defaults>"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {str(path)!r} does not exist")
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        version = raw.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}, got {version!r}")
        _merge(data, raw, str(path))
        source = str(path)
    for item in overrides:
        section, key, value = item if isinstance(item, tuple) else parse_override(item)
        _merge(data, {section: {key: value}}, "override")
    validate(data)
    return RunConfig(data, source)


def validate(data: dict) -> None:
    m = data["mesh"]
    dom = m["domain"]
    if not (isinstance(dom, list) and len(dom) == 4 and all(_is_number(v) for v in dom)):
        raise ConfigError("mesh.domain must be four numbers [a, b, c, d]")
    if not (dom[1] > dom[0] and dom[3] > dom[2]):
        raise ConfigError(f"mesh.domain {dom} is degenerate: need a < b and c < d")
    for key in ("nx", "ny"):
        if not (_is_int(m[key]) and m[key] >= 1):
            raise ConfigError(f"mesh.{key} must be an integer >= 1, got {m[key]!r}")

    deg = data["space"]["degree"]
    if _is_int(deg):
        if deg < 1:
            raise ConfigError(f"space.degree must be >= 1, got {deg}")
    elif isinstance(deg, list):
        if len(deg) != m["nx"] * m["ny"] or not all(_is_int(v) and v >= 1 for v in deg):
            raise ConfigError(f"space.degree list needs {m['nx'] * m['ny']} integers >= 1")
    else:
        raise ConfigError("space.degree must be an integer or a list of integers")
    if not (_is_int(data["space"]["quad_order"]) and data["space"]["quad_order"] >= 0):
        raise ConfigError("space.quad_order must be an integer >= 0")

    pen = data["penalty"]
    for key in ("sigma", "lam", "zeta", "nu", "theta"):
        if not _is_number(pen[key]):
            raise ConfigError(f"penalty.{key} must be a number")
        if key != "sigma" and pen[key] < 0:
            raise ConfigError(f"penalty.{key} must be >= 0, got {pen[key]}")
    if not isinstance(pen["comparison"], bool):
        raise ConfigError("penalty.comparison must be true or false")
    if pen["sigma"] < 0 or (pen["sigma"] == 0 and not pen["comparison"]):
        raise ConfigError("penalty.sigma must be > 0 (sigma = 0 requires penalty.comparison = true)")

    prob = data["problem"]
    if prob["case"] is not None and prob["f"] is not None:
        raise ConfigError("give either problem.case or problem.f, not both")
    if prob["case"] is None and prob["f"] is None:
        prob["case"] = "a"
    if prob["case"] is not None:
        if prob["case"] not in ("a", "b", "c"):
            raise ConfigError(f"problem.case must be one of a, b, c; got {prob['case']!r}")
        if data["coefficient"]:
            raise ConfigError("[coefficient] applies only with problem.f; manufactured cases define their own K")
        if prob["case"] == "c" and (m["nx"] % 2 or m["ny"] % 2):
            raise ConfigError("case c needs even nx and ny so the coefficient jumps lie on element faces")
        if [float(v) for v in dom] != [0.0, 1.0, 0.0, 1.0]:
            raise ConfigError("manufactured cases are defined on the unit square")
    elif not isinstance(prob["f"], (str, int, float)):
        raise ConfigError("problem.f must be a number or an expression string")

    coef = data["coefficient"]
    if coef and coef.get("kind") not in ("constant", "checkerboard", "piecewise", "analytic"):
        raise ConfigError(f"coefficient.kind {coef.get('kind')!r} is not recognised")

    if data["solver"]["method"] not in ("auto", "direct", "iterative"):
        raise ConfigError("solver.method must be auto, direct or iterative")

    st = data["study"]
    if not (isinstance(st["levels"], list) and len(st["levels"]) >= 1 and all(_is_int(v) and v >= 1 for v in st["levels"])):
        raise ConfigError("study.levels must be a list of positive integers")
    if not (st["beta"] == "corollary" or _is_number(st["beta"])):
        raise ConfigError("study.beta must be a number or \"corollary\"")
    if not (_is_int(st["samples"]) and st["samples"] >= 1):
        raise ConfigError("study.samples must be a positive integer")
    if st["seed"] is not None and not _is_int(st["seed"]):
        raise ConfigError("study.seed must be an integer")
    if not (isinstance(st["amplitudes"], list) and all(_is_number(v) for v in st["amplitudes"])):
        raise ConfigError("study.amplitudes must be a list of numbers")

    out = data["output"]
    if not (_is_int(out["threads"]) and out["threads"] >= 1):
        raise ConfigError("output.threads must be an integer >= 1")
    if not (_is_int(out["grid_resolution"]) and out["grid_resolution"] >= 2):
        raise ConfigError("output.grid_resolution must be an integer >= 2")
