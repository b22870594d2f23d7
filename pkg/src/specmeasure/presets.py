"""Named operator presets and JSON run configurations.

A configuration is a JSON object with a ``"preset"`` field plus optional
overrides.  :func:`resolve_config` validates it against the command's preset
table and fills in defaults, so that the resolved dictionary fully determines
a run and can be stored in a manifest.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .chebyshev import clenshaw_curtis
from .core import AdaptiveConfig, FunctionSampler, ResolventSampler
from .integral import (
    IntegralSampler,
    IntOpSpec,
    gaussian_operator,
    multiplication_density,
    multiplication_operator,
    multiplication_resolvent,
    polynomial_function,
    polynomial_kernel,
    sqrt_three_halves_x,
)
from .kernel import RationalKernel, make_kernel
from .lattice import (
    GrapheneSpec,
    LatticeSampler,
    build_graphene,
    jacobi_operator,
    load_coordinate_list,
)
from .ode import (
    ODESampler,
    RadialSchrodingerSpec,
    beam_f,
    beam_operator,
    coulomb_dirac,
    dirac_f,
    even_line_resolvent,
    gaussian_radial_f,
    hellmann_operator,
    schrodinger_f,
    schrodinger_operator,
)

__all__ = [
    "ConfigError",
    "locate_field",
    "COMMON_DEFAULTS",
    "PRESETS",
    "resolve_config",
    "load_config",
    "build_sampler",
    "build_kernel",
    "adaptive_config",
    "grid_points",
    "oracle_density",
]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


def locate_field(text: str, message: str) -> int | None:
    """1-based line of the first key named in ``message`` (``field 'x'`` or ``params.x``) inside ``text``."""
    m = re.search(r"field '([\w.]+)'|params\.(\w+)", message)
    if not m:
        return None
    key = (m.group(1) or m.group(2)).split(".")[-1]
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


COMMON_DEFAULTS: dict[str, Any] = {
    "epsilon": 0.1,
    "order": 2,
    "pole_type": "equispaced",
    "poles": None,
    "disc_min": 64,
    "disc_max": 65536,
    "rel_tol": 1e-11,
    "abs_tol": 1e-13,
}


@dataclass(frozen=True)
class Preset:
    command: str
    params: dict
    grid: dict
    overrides: dict
    description: str


def _grid(start, stop, num):
    return {"start": start, "stop": stop, "num": num}


PRESETS: dict[str, dict[str, Preset]] = {
    "diff-meas": {
        "schrodinger": Preset("diff-meas", {"map_scale": 100.0}, _grid(0.0, 6.0, 121), {"epsilon": 0.1},
                              "-u'' + x^2/(1+x^6) u on the real line, f = sqrt(9/pi) x^2/(1+x^6)"),
        "beam": Preset("diff-meas", {"a": 0.0, "map_scale": 10.0}, _grid(-1.0, 5.0, 121), {"epsilon": 0.05},
                       "u'''' - ((1-exp(-x^2)) u')' + a sin(x)/(1+x^2) u, f = sqrt(2/pi)/(1+x^2)"),
    },
    "rse-meas": {
        "hellmann": Preset("rse-meas", {"ell": 1, "r0": 2.0, "map_scale": 30.0}, _grid(-0.5, 3.0, 141),
                           {"epsilon": 0.1, "rel_tol": 1e-9, "disc_max": 262144},
                           "radial Schrodinger with V = (exp(-r)-1)/r, f = Gaussian at r0"),
        "hydrogen": Preset("rse-meas", {"ell": 0, "r0": 2.0, "map_scale": 30.0}, _grid(-0.5, 3.0, 141),
                           {"epsilon": 0.1, "rel_tol": 1e-9, "disc_max": 262144},
                           "radial Schrodinger with V = -1/r, f = Gaussian at r0"),
    },
    "int-meas": {
        "gaussian": Preset("int-meas", {}, _grid(-2.5, 2.5, 501), {"epsilon": 0.1},
                           "x u + int exp(-(x^2+y^2)) u(y) dy on [-1,1], f = sqrt(3/2) x"),
        "identity": Preset("int-meas", {}, _grid(-1.5, 1.5, 301), {"epsilon": 0.1},
                           "multiplication by x on [-1,1], f = sqrt(3/2) x"),
        "polynomial": Preset("int-meas", {"multiplier": [0.0, 1.0], "kernel": [[0.0]], "f": [0.0, 1.0]},
                             _grid(-1.5, 1.5, 301), {"epsilon": 0.1},
                             "polynomial multiplier and kernel from monomial coefficient tables"),
    },
    "infmat-meas": {
        "graphene": Preset("infmat-meas", {"flux": 0.25, "radius": 200, "defect": False}, _grid(-3.1, 3.1, 125),
                           {"epsilon": 0.05, "rel_tol": 1e-8, "disc_max": 262144},
                           "honeycomb lattice with magnetic flux, f = e_1"),
        "jacobi": Preset("infmat-meas", {"diagonal": 0.0, "offdiagonal": 1.0}, _grid(-2.5, 2.5, 101),
                         {"epsilon": 0.05}, "constant-coefficient Jacobi matrix, f = e_1"),
        "file": Preset("infmat-meas", {"path": None, "support_path": None}, _grid(-3.0, 3.0, 101),
                       {"epsilon": 0.05}, "coordinate-list matrix (i, j, re, im) with optional F table, f = e_1"),
    },
    "dirac-eigs": {
        "coulomb": Preset("dirac-eigs", {"gamma": -0.8, "kappa": -1, "count": 10, "lower": -0.999,
                                         "upper_gap": 1e-3, "step": 0.1, "map_scale": 2.0},
                          {}, {"epsilon": 1e-6},
                          "radial Dirac operator with Coulomb potential gamma/r, f = (sqrt(2) r e^-r)(1, 1)"),
    },
    "convergence": {
        "multiplication": Preset("convergence", {"x0": 0.5, "orders": [1, 2], "epsilons": [0.2, 0.1, 0.05]},
                                 {}, {}, "multiplication by x on [-1,1]; exact density 1.5 x^2"),
        "schrodinger": Preset("convergence", {"x0": 0.3, "orders": [6], "epsilons": [0.01], "map_scale": 100.0},
                              {}, {"rel_tol": 1e-10},
                              "-u'' + x^2/(1+x^6) u; density from an outgoing shooting solution"),
        "gaussian": Preset("convergence", {"x0": 0.5, "orders": [2, 4], "epsilons": [0.1, 0.05],
                                           "reference": None},
                           {}, {}, "integral operator; needs a reference block (no closed form)"),
    },
}

_TOP_FIELDS = set(COMMON_DEFAULTS) | {"preset", "params", "grid", "points", "quad_order", "prob_interval"}


def load_config(path: str) -> dict:
    """Read a JSON config; syntax errors report line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _number(cfg, key, kind=float, positive=False):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and int(v) != v):
        raise ConfigError(f"field {key!r}: expected {'an integer' if kind is int else 'a number'}, got {v!r}")
    v = kind(v)
    if positive and not v > 0:
        raise ConfigError(f"field {key!r}: must be positive, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"field {key!r}: must be finite")
    return v


def resolve_config(command: str, raw: dict) -> dict:
    """Merge ``raw`` with the preset defaults and validate every field."""
    table = PRESETS.get(command)
    if table is None:
        raise ConfigError(f"unknown command {command!r}")
    unknown = set(raw) - _TOP_FIELDS
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)}; allowed: {sorted(_TOP_FIELDS)}")
    name = raw.get("preset")
    if name not in table:
        raise ConfigError(f"field 'preset': expected one of {sorted(table)}, got {name!r}")
    preset = table[name]
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(preset.overrides)
    cfg.update({k: v for k, v in raw.items() if k not in ("params", "grid")})
    params = dict(preset.params)
    extra = raw.get("params", {}) or {}
    if not isinstance(extra, dict):
        raise ConfigError("field 'params': expected an object")
    bad = set(extra) - set(params)
    if bad:
        raise ConfigError(f"field 'params': unknown key(s) {sorted(bad)} for preset {name!r}; "
                          f"allowed: {sorted(params)}")
    params.update(extra)
    cfg["params"] = params
    grid = dict(preset.grid)
    grid.update(raw.get("grid", {}) or {})
    cfg["grid"] = grid

    cfg["epsilon"] = _number(cfg, "epsilon", positive=True)
    cfg["order"] = _number(cfg, "order", int)
    if cfg["order"] < 1:
        raise ConfigError(f"field 'order': kernel order must be at least 1, got {cfg['order']}")
    cfg["disc_min"] = _number(cfg, "disc_min", int, positive=True)
    cfg["disc_max"] = _number(cfg, "disc_max", int, positive=True)
    if cfg["disc_min"] > cfg["disc_max"]:
        raise ConfigError("fields 'disc_min'/'disc_max': need disc_min <= disc_max")
    cfg["rel_tol"] = _number(cfg, "rel_tol")
    cfg["abs_tol"] = _number(cfg, "abs_tol")
    if cfg["pole_type"] not in ("equispaced", "file"):
        raise ConfigError(f"field 'pole_type': expected 'equispaced' or 'file', got {cfg['pole_type']!r}")
    if cfg["pole_type"] == "file":
        poles = cfg.get("poles")
        if not isinstance(poles, list) or not poles:
            raise ConfigError("field 'poles': pole_type 'file' needs a list of [re, im] pairs")
        try:
            cfg["poles"] = [[float(p[0]), float(p[1])] for p in poles]
        except (TypeError, ValueError, IndexError):
            raise ConfigError("field 'poles': entries must be [re, im] pairs") from None
        cfg["order"] = len(cfg["poles"])
    if "points" in cfg:
        pts = cfg["points"]
        if not isinstance(pts, list) or not all(isinstance(p, (int, float)) and not isinstance(p, bool)
                                                for p in pts):
            raise ConfigError("field 'points': expected a list of numbers")
        cfg["points"] = [float(p) for p in pts]
    elif preset.grid:
        for key in ("start", "stop", "num"):
            if key not in grid:
                raise ConfigError(f"field 'grid.{key}' is missing")
        g = {"start": grid["start"], "stop": grid["stop"], "num": grid["num"]}
        _number(g, "start")
        _number(g, "stop")
        if _number(g, "num", int) < 1:
            raise ConfigError("field 'grid.num': need at least one point")
    if cfg.get("prob_interval") is not None:
        pi = cfg["prob_interval"]
        if not (isinstance(pi, list) and len(pi) == 2 and all(isinstance(v, (int, float)) for v in pi)
                and pi[0] < pi[1]):
            raise ConfigError("field 'prob_interval': expected [a, b] with a < b")
        cfg["prob_interval"] = [float(pi[0]), float(pi[1])]
    if "quad_order" in cfg:
        if _number(cfg, "quad_order", int) < 2:
            raise ConfigError("field 'quad_order': need at least 2")
    _check_params(command, name, params)
    return cfg


def _check_params(command, name, p):
    if command == "dirac-eigs":
        if not abs(p["gamma"]) < math.sqrt(3) / 2:
            raise ConfigError(f"params.gamma: Coulomb coupling must satisfy |gamma| < sqrt(3)/2, got {p['gamma']}")
        if int(p["count"]) != p["count"] or p["count"] < 0:
            raise ConfigError("params.count: expected a nonnegative integer")
        if int(p["kappa"]) != p["kappa"] or p["kappa"] == 0:
            raise ConfigError("params.kappa: expected a nonzero integer")
    if command == "infmat-meas" and name == "graphene":
        if not 0 <= p["flux"] <= 1:
            raise ConfigError("params.flux: must lie in [0, 1]")
        if int(p["radius"]) != p["radius"] or p["radius"] < 1:
            raise ConfigError("params.radius: must be an integer >= 1")
    if command == "infmat-meas" and name == "file" and not p.get("path"):
        raise ConfigError("params.path: the file preset needs a coordinate-list path")
    if command == "convergence":
        if not p["orders"] or not p["epsilons"]:
            raise ConfigError("params.orders/params.epsilons: must be nonempty lists")
        if name == "gaussian" and not p.get("reference"):
            raise ConfigError("params.reference: this preset has no analytic oracle; supply "
                              "{'epsilon': ..., 'order': ...} for a self-reference run")


def adaptive_config(cfg: dict) -> AdaptiveConfig:
    return AdaptiveConfig(disc_min=cfg["disc_min"], disc_max=cfg["disc_max"],
                          rel_tol=cfg["rel_tol"], abs_tol=cfg["abs_tol"])


def build_kernel(cfg: dict, order: int | None = None) -> RationalKernel:
    if cfg["pole_type"] == "file":
        return make_kernel(pole_type="file", poles=[complex(re, im) for re, im in cfg["poles"]])
    return make_kernel(cfg["order"] if order is None else order)


def grid_points(cfg: dict) -> np.ndarray:
    if "points" in cfg:
        return np.asarray(cfg["points"], dtype=float)
    g = cfg["grid"]
    return np.linspace(float(g["start"]), float(g["stop"]), int(g["num"]))


def _int_spec(name: str, p: dict) -> tuple[IntOpSpec, Callable]:
    if name == "gaussian":
        return gaussian_operator(), sqrt_three_halves_x
    if name == "identity":
        return multiplication_operator(), sqrt_three_halves_x
    kern = polynomial_kernel(p["kernel"])
    spec = IntOpSpec(polynomial_function(p["multiplier"]), kern, name="polynomial integral operator")
    fpoly = polynomial_function(p["f"])
    x, w = clenshaw_curtis(257)
    nrm = math.sqrt(float(np.dot(w, fpoly(x) ** 2)))
    if nrm == 0:
        raise ConfigError("params.f: right-hand side vanishes identically")
    return spec, (lambda x: fpoly(x) / nrm)


def build_sampler(command: str, cfg: dict) -> ResolventSampler:
    """Sampler for a resolved configuration of a measure command."""
    name, p = cfg["preset"], cfg["params"]
    if command == "diff-meas":
        if name == "schrodinger":
            return ODESampler(schrodinger_operator(p["map_scale"]), schrodinger_f)
        return ODESampler(beam_operator(p["a"], p["map_scale"]), beam_f)
    if command == "rse-meas":
        if name == "hellmann":
            spec = hellmann_operator(int(p["ell"]), p["map_scale"])
        else:
            spec = RadialSchrodingerSpec(0.0, -1.0, int(p["ell"]), p["map_scale"], name="hydrogen")
        return ODESampler(spec, gaussian_radial_f(p["r0"]))
    if command == "int-meas":
        spec, f = _int_spec(name, p)
        return IntegralSampler(spec, f)
    if command == "infmat-meas":
        if name == "graphene":
            spec = build_graphene(GrapheneSpec(float(p["flux"]), int(p["radius"]), bool(p["defect"])))
        elif name == "jacobi":
            spec = jacobi_operator(float(p["diagonal"]), float(p["offdiagonal"]))
        else:
            try:
                spec = load_coordinate_list(p["path"], p.get("support_path"))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"params.path: {exc}") from None
        return LatticeSampler(spec, [1.0])
    if command == "dirac-eigs":
        spec = coulomb_dirac(float(p["gamma"]), int(p["kappa"]), float(p["map_scale"]))
        return ODESampler(spec, dirac_f)
    raise ConfigError(f"command {command!r} has no measure sampler")


def oracle_density(name: str, p: dict) -> tuple[ResolventSampler, float | None]:
    """Sampler and exact density at ``x0`` for a convergence preset (``None`` if no oracle)."""
    x0 = float(p["x0"])
    if name == "multiplication":
        return FunctionSampler(multiplication_resolvent, "multiplication by x"), float(multiplication_density(x0))
    if name == "schrodinger":
        spec = schrodinger_operator(p["map_scale"])
        rho = even_line_resolvent(spec.coefficients[0], schrodinger_f, x0).imag / math.pi
        return ODESampler(spec, schrodinger_f), rho
    spec, f = _int_spec("gaussian", p)
    return IntegralSampler(spec, f), None
