"""JSON configuration: a small expression language for fields and typed loaders.

Fields are given as strings such as ``"sin(pi*x)*y"``.  The expressions are
parsed with :mod:`ast` and only arithmetic, the coordinates ``x``/``y``, the
constants ``pi``/``e`` and a fixed set of numpy functions are accepted.
"""

from __future__ import annotations

import ast
import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .bounds import EstimateInputs
from .dynamics import SimConfig
from .errors import ConfigError
from .grid import Grid, ScalarField, VectorField
from .params import PhysParams

FUNCTIONS = {
    name: getattr(np, name)
    for name in (
        "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh",
        "arctan", "arcsin", "arccos", "minimum", "maximum", "sign", "heaviside", "where",
    )
}
CONSTANTS = {"pi": math.pi, "e": math.e}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.FloorDiv)
_CMPOPS = (ast.Lt, ast.LtE, ast.Gt, ast.GtE)


def _check_node(node: ast.AST, variables: frozenset[str]) -> None:
    if isinstance(node, ast.Expression):
        _check_node(node.body, variables)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ValueError(f"only numeric literals are allowed, got {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in variables and node.id not in CONSTANTS:
            raise ValueError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ValueError(f"operator {type(node.op).__name__} is not allowed")
        _check_node(node.left, variables)
        _check_node(node.right, variables)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ValueError(f"operator {type(node.op).__name__} is not allowed")
        _check_node(node.operand, variables)
    elif isinstance(node, ast.Compare):
        if not all(isinstance(op, _CMPOPS) for op in node.ops):
            raise ValueError("only <, <=, >, >= comparisons are allowed")
        for sub in [node.left, *node.comparators]:
            _check_node(sub, variables)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ValueError(f"call to {ast.unparse(node.func)!r} is not allowed")
        if node.keywords:
            raise ValueError("keyword arguments are not allowed")
        for arg in node.args:
            _check_node(arg, variables)
    else:
        raise ValueError(f"syntax {type(node).__name__} is not allowed")


def compile_expression(expr: str, variables: tuple[str, ...]):
    """Validate ``expr`` and return a callable of the coordinate arrays."""
    if not isinstance(expr, (str, int, float)) or isinstance(expr, bool):
        raise ValueError(f"expected an expression string or number, got {expr!r}")
    tree = ast.parse(str(expr), mode="eval")
    _check_node(tree, frozenset(variables))
    code = compile(tree, "<expr>", "eval")
    namespace: dict[str, Any] = {"__builtins__": {}, **FUNCTIONS, **CONSTANTS}

    def fn(*coords: np.ndarray) -> np.ndarray:
        local = dict(zip(variables, coords))
        with np.errstate(all="ignore"):
            return np.asarray(eval(code, namespace, local), dtype=float)

    return fn


def _variables(grid: Grid) -> tuple[str, ...]:
    return ("x", "y")[: grid.dim]


def scalar_field(expr: str, grid: Grid, field: str, dirichlet: bool = False) -> ScalarField:
    try:
        fn = compile_expression(expr, _variables(grid))
        return ScalarField.sample(grid, fn, dirichlet=dirichlet)
    except (SyntaxError, ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigError(field, str(exc)) from None


def vector_field(exprs, grid: Grid, field: str, dirichlet: bool = True) -> VectorField:
    if isinstance(exprs, (str, int, float)) and grid.dim == 1:
        exprs = [exprs]
    if not isinstance(exprs, list) or len(exprs) != grid.dim:
        raise ConfigError(field, f"expected a list of {grid.dim} component expressions")
    try:
        fns = [compile_expression(e, _variables(grid)) for e in exprs]
        return VectorField.sample(grid, fns, dirichlet=dirichlet)
    except (SyntaxError, ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigError(field, str(exc)) from None


def read_json(path: str | Path) -> dict:
    """Load a JSON object; a missing file is reported as :class:`FileNotFoundError`."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<json>", f"{path}: top level must be an object")
    return data


def _number(d: Mapping, key: str, default=None, prefix: str = "") -> float:
    name = prefix + key
    if key not in d:
        if default is None:
            raise ConfigError(name, "is required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"must be a number, got {v!r}")
    return float(v)


def load_grid(d: Mapping) -> Grid:
    g = d.get("grid")
    if not isinstance(g, Mapping):
        raise ConfigError("grid", "is required and must be an object")
    try:
        return Grid.from_dict(g)
    except KeyError as exc:
        raise ConfigError(f"grid.{exc.args[0]}", "is required") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("grid", str(exc)) from None


def load_phys(d: Mapping) -> PhysParams:
    ph = d.get("phys", {})
    if not isinstance(ph, Mapping):
        raise ConfigError("phys", "must be an object")
    return PhysParams(
        D=_number(ph, "D", 1.0, "phys."), E=_number(ph, "E", 1.0, "phys."), gamma=_number(ph, "gamma", 1.0, "phys.")
    )


SIM_KEYS = {
    "grid", "phys", "m0", "S", "dt", "t_end", "elliptic_tol", "blowup_cap", "reg_eps",
    "output_stride", "helmholtz_tol", "preconditioner", "record_q", "stability_factor",
}


def load_sim_config(d: Mapping) -> SimConfig:
    """Build a :class:`SimConfig` from a parsed JSON object."""
    unknown = set(d) - SIM_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration key")
    grid = load_grid(d)
    phys = load_phys(d)
    if "m0" not in d:
        raise ConfigError("m0", "is required")
    if "S" not in d:
        raise ConfigError("S", "is required")
    m0 = vector_field(d["m0"], grid, "m0", dirichlet=True)
    S = scalar_field(d["S"], grid, "S")
    m0_src = [d["m0"]] if not isinstance(d["m0"], list) else list(d["m0"])
    kwargs: dict[str, Any] = {}
    for key in ("elliptic_tol", "blowup_cap", "reg_eps", "helmholtz_tol", "stability_factor"):
        if key in d:
            kwargs[key] = _number(d, key)
    if "output_stride" in d:
        v = d["output_stride"]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError("output_stride", f"must be an integer, got {v!r}")
        kwargs["output_stride"] = v
    if "preconditioner" in d:
        if d["preconditioner"] not in ("auto", "jacobi", "tridiagonal"):
            raise ConfigError("preconditioner", f"unknown preconditioner {d['preconditioner']!r}")
        kwargs["preconditioner"] = d["preconditioner"]
    if "record_q" in d:
        rq = d["record_q"]
        if not isinstance(rq, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in rq):
            raise ConfigError("record_q", "must be a list of numbers")
        kwargs["record_q"] = tuple(float(v) for v in rq)
    return SimConfig(
        grid=grid,
        phys=phys,
        m0=m0,
        S=S,
        dt=_number(d, "dt"),
        t_end=_number(d, "t_end"),
        source={"m0": m0_src, "S": d["S"]},
        **kwargs,
    )


def sim_config_to_dict(cfg: SimConfig) -> dict:
    """Inverse of :func:`load_sim_config` for configs that carry their source expressions."""
    if not cfg.source:
        raise ValueError("config has no source expressions to echo")
    out = {k: v for k, v in cfg.echo().items() if k != "source"}
    out["m0"] = cfg.source["m0"]
    out["S"] = cfg.source["S"]
    return out


def load_estimate_inputs(d: Mapping) -> EstimateInputs:
    required = ("N", "q", "ell", "norm_S", "norm_m0_2", "norm_m0_inf", "norm_grad_m0_inf")
    for key in required:
        _number(d, key)
    for key in ("gamma", "c", "norm_S_2", "D", "E"):
        if key in d and d[key] is not None:
            _number(d, key)
    try:
        return EstimateInputs.from_dict(d)
    except ValueError as exc:
        msg = str(exc)
        names = sorted((*required, "gamma", "c", "norm_S_2", "D", "E"), key=len, reverse=True)
        field = next((k for k in names if msg.startswith(k + " ")), None)
        if field is None:
            field = "q" if "q is too close" in msg else "<inputs>"
        raise ConfigError(field, msg) from None
