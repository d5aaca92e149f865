"""Scenario files: parsing, validation and construction of problems.

A scenario is an INI-style file (sections in brackets, ``key = value``
entries, ``#`` comments).  Numeric values may be arithmetic expressions in
``pi``, ``e``, ``inf`` and the functions sqrt, sin, cos, tan, acos, asin,
atan, exp, log.  Vectors are comma separated; lists of vectors are
separated by ``;``.  The full grammar is in docs/scenario-format.md.
"""
from __future__ import annotations

import ast
import configparser
import math
import operator as _op
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import integral_eq
from .chain import Problem
from .errors import ConfigError
from .operators import (
    AffineHyperplaneProjector,
    AffineSubspace,
    Ball,
    BallProjector,
    Box,
    DiskOnCircle,
    ExpQuasiconvexProx,
    HalfspaceIntersection,
    HalfspaceProjector,
    Huber,
    Identity,
    IntervalProjector,
    LineProjector,
    PointProjector,
    Rotation,
    SinglePoint,
)
from .sampling import ContinuousUniform, Dirac, FiniteDiscrete, Gaussian, UniformBox

# ----------------------------------------------------------------------------
# values
# ----------------------------------------------------------------------------

_BINOPS = {ast.Add: _op.add, ast.Sub: _op.sub, ast.Mult: _op.mul, ast.Div: _op.truediv, ast.Pow: _op.pow}
_UNARY = {ast.USub: _op.neg, ast.UAdd: _op.pos}
_FUNCS = {f: getattr(math, f) for f in ("sqrt", "sin", "cos", "tan", "acos", "asin", "atan", "exp", "log")}
_CONSTS = {"pi": math.pi, "e": math.e, "inf": math.inf}


def eval_number(text: str, names: Optional[dict] = None) -> float:
    """Evaluate a restricted arithmetic expression."""
    env = dict(_CONSTS, **(names or {}))

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name) and node.id in env:
            return env[node.id]
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ConfigError(f"unsupported expression element in {text!r}")

    try:
        return float(ev(ast.parse(text.strip(), mode="eval")))
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse number {text!r}") from exc


def compile_expression(text: str, var: str) -> Callable[[float], float]:
    eval_number(text, {var: 1.0})  # validate now
    return lambda v: eval_number(text, {var: v})


def parse_vector(text: str) -> np.ndarray:
    return np.array([eval_number(p) for p in text.split(",") if p.strip()])


def parse_vectors(text: str) -> list:
    return [parse_vector(p) for p in text.split(";") if p.strip()]


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# ----------------------------------------------------------------------------
# grammar
# ----------------------------------------------------------------------------

SECTION_KEYS = {
    "scenario": {"name", "description", "steps", "trajectories", "seed", "retain_points", "output"},
    "family": {"law", "operator", "lo", "hi", "rho", "radius", "operators", "probs"},
    "second_family": {"law", "operator", "lo", "hi", "rho", "radius", "operators", "probs"},
    "feasible_set": {"type", "point", "center", "radius", "lo", "hi", "directions", "normals", "offsets"},
    "problem": {"alpha_bar", "closed_form"},
    "initial": {"law", "point", "lo", "hi", "mean", "stddev"},
    "diagnostics": {
        "rate",
        "r_theory",
        "kappa_theory",
        "hitting",
        "expect_class",
        "expect_feas_frac",
        "expect_constant_mean_dist",
        "expect_limit_projection",
        "limit_tolerance",
        "monotone_mean_dist",
        "feas_probes",
        "feas_samples",
        "regularity_grid",
        "expect_divergence",
        "kappa_rel_tol",
        "kl_radii",
        "kl_points",
        "kl_factor",
        "wasserstein",
        "limit_curve",
        "k_ref",
    },
    "integral": {"kernel", "rhs", "a", "b", "n", "iterations", "solution", "sup_tol", "s_min", "seed"},
}
OPERATOR_KEYS = {"type", "r", "alpha", "center", "radius", "normal", "offset", "u", "b", "phi", "point", "dim"}

OPERATOR_TYPES = {
    "interval": "projector onto [r-1/2, r+1/2] (intervals example)",
    "line": "projector onto the line R e_alpha (lines example)",
    "disk": "projector onto B(rho e_t, 1) (disks example)",
    "ball": "projector onto a closed ball",
    "halfspace": "projector onto {<normal,x> <= offset} (orthogonal halfspaces example)",
    "hyperplane": "projector onto {<u,x> = b} (affine subspaces example)",
    "point": "projector onto a single point (inconsistent two-family example)",
    "identity": "identity map",
    "rotation": "rotation by phi (nonexpansive, not paracontractive: rotation example)",
    "huber": "Huber function with parameter alpha (non-averaged paracontraction)",
    "exp_prox": "prox of 1 - exp(-|x|^2) (non-averaged resolvent of a quasiconvex function)",
}
UNIFORM_BUILDERS = ("line", "interval", "disk", "rotation")


@dataclass
class Scenario:
    name: str
    description: str
    K: int
    M: int
    seed: int
    retain_points: bool
    output: Optional[str]
    problem: Optional[Problem]
    mu: Any
    closed_form: Optional[str]
    closed_params: dict
    diagnostics: dict
    integral: Optional[dict]
    source: str = ""
    family_desc: str = ""


def _section(cfg, name, required=True) -> Optional[dict]:
    if not cfg.has_section(name):
        if required:
            raise ConfigError(f"missing section [{name}]")
        return None
    return dict(cfg.items(name))


def _check_keys(sec: dict, allowed: set, where: str):
    bad = sorted(set(sec) - allowed)
    if bad:
        raise ConfigError(f"unknown key(s) {bad} in [{where}]; valid keys: {sorted(allowed)}")


def _need(sec: dict, key: str, where: str) -> str:
    if key not in sec:
        raise ConfigError(f"missing key {key!r} in [{where}]")
    return sec[key]


def _build_operator(sec: dict, where: str):
    _check_keys(sec, OPERATOR_KEYS, where)
    kind = _need(sec, "type", where).strip()
    num = lambda k, d=None: eval_number(sec[k]) if k in sec else (d if d is not None else eval_number(_need(sec, k, where)))  # noqa: E731
    if kind == "interval":
        return IntervalProjector(num("r", 0.0))
    if kind == "line":
        return LineProjector(num("alpha"))
    if kind == "ball":
        return BallProjector(tuple(parse_vector(_need(sec, "center", where))), num("radius"))
    if kind == "halfspace":
        return HalfspaceProjector(tuple(parse_vector(_need(sec, "normal", where))), num("offset", 0.0))
    if kind == "hyperplane":
        return AffineHyperplaneProjector(tuple(parse_vector(_need(sec, "u", where))), num("b", 0.0))
    if kind == "point":
        return PointProjector(tuple(parse_vector(_need(sec, "point", where))))
    if kind == "identity":
        return Identity()
    if kind == "rotation":
        return Rotation(num("phi"))
    if kind == "huber":
        return Huber(num("alpha", 1.0))
    if kind == "exp_prox":
        return ExpQuasiconvexProx(int(num("dim")) if "dim" in sec else None)
    raise ConfigError(f"unknown operator type {kind!r} in [{where}]; valid: {sorted(OPERATOR_TYPES)}")


def _build_family(cfg, secname: str):
    sec = _section(cfg, secname)
    _check_keys(sec, SECTION_KEYS[secname], secname)
    law = _need(sec, "law", secname).strip()
    if law == "finite":
        names = [s.strip() for s in _need(sec, "operators", secname).split(",") if s.strip()]
        ops = []
        for nm in names:
            sub = f"operator.{nm}"
            if not cfg.has_section(sub):
                raise ConfigError(f"[{secname}] references operator {nm!r} but section [{sub}] is missing")
            ops.append(_build_operator(dict(cfg.items(sub)), sub))
        probs = parse_vector(sec["probs"]) if "probs" in sec else np.full(len(ops), 1.0 / len(ops))
        return FiniteDiscrete(ops, probs, ids=names), f"finite {names} with probabilities {probs.tolist()}"
    if law == "uniform":
        kind = _need(sec, "operator", secname).strip()
        lo, hi = eval_number(_need(sec, "lo", secname)), eval_number(_need(sec, "hi", secname))
        if kind == "line":
            builder = LineProjector
        elif kind == "interval":
            builder = IntervalProjector
        elif kind == "rotation":
            builder = Rotation
        elif kind == "disk":
            builder = DiskOnCircle(eval_number(_need(sec, "rho", secname)), eval_number(sec.get("radius", "1")))
        else:
            raise ConfigError(f"operator {kind!r} cannot be indexed by a uniform parameter; valid: {list(UNIFORM_BUILDERS)}")
        return ContinuousUniform(lo, hi, builder), f"{kind} operators, parameter ~ unif[{lo:.6g}, {hi:.6g}]"
    raise ConfigError(f"unknown law {law!r} in [{secname}]; valid: ['finite', 'uniform']")


def _build_set(sec: dict):
    _check_keys(sec, SECTION_KEYS["feasible_set"], "feasible_set")
    kind = _need(sec, "type", "feasible_set").strip()
    if kind == "point":
        return SinglePoint(parse_vector(_need(sec, "point", "feasible_set")))
    if kind == "ball":
        return Ball(parse_vector(_need(sec, "center", "feasible_set")), eval_number(_need(sec, "radius", "feasible_set")))
    if kind == "box":
        return Box(parse_vector(_need(sec, "lo", "feasible_set")), parse_vector(_need(sec, "hi", "feasible_set")))
    if kind == "affine":
        return AffineSubspace(parse_vector(_need(sec, "point", "feasible_set")), parse_vectors(sec.get("directions", "")))
    if kind == "halfspaces":
        normals = parse_vectors(_need(sec, "normals", "feasible_set"))
        offsets = parse_vector(_need(sec, "offsets", "feasible_set"))
        if len(normals) != len(offsets):
            raise ConfigError("normals and offsets differ in length")
        return HalfspaceIntersection(list(zip(normals, offsets)))
    raise ConfigError(f"unknown feasible_set type {kind!r}; valid: ['affine', 'ball', 'box', 'halfspaces', 'point']")


def _build_initial(sec: dict):
    _check_keys(sec, SECTION_KEYS["initial"], "initial")
    law = _need(sec, "law", "initial").strip()
    if law == "dirac":
        return Dirac(tuple(parse_vector(_need(sec, "point", "initial"))))
    if law == "uniform_box":
        return UniformBox(tuple(parse_vector(_need(sec, "lo", "initial"))), tuple(parse_vector(_need(sec, "hi", "initial"))))
    if law == "gaussian":
        return Gaussian(tuple(parse_vector(_need(sec, "mean", "initial"))), eval_number(_need(sec, "stddev", "initial")))
    raise ConfigError(f"unknown initial law {law!r}; valid: ['dirac', 'gaussian', 'uniform_box']")


def _closed_params(cfg, kind: Optional[str]) -> dict:
    if kind is None:
        return {}
    fam = dict(cfg.items("family"))
    lo, hi = eval_number(fam.get("lo", "0")), eval_number(fam.get("hi", "0"))
    if kind == "lines":
        if abs(lo) > 0:
            raise ConfigError("closed_form = lines needs lo = 0")
        return {"beta": hi}
    if kind == "intervals":
        eps = 0.5 + lo
        if abs((0.5 - hi) - eps) > 1e-12:
            raise ConfigError("closed_form = intervals needs a symmetric range [eps - 1/2, 1/2 - eps]")
        return {"eps": eps}
    if kind == "disks":
        return {"rho": eval_number(_need(fam, "rho", "family"))}
    raise ConfigError(f"unknown closed_form {kind!r}; valid: ['disks', 'intervals', 'lines', 'none']")


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    if not text.strip():
        raise ConfigError(f"{source}: empty scenario file")
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#", ";"), interpolation=None)
    cfg.optionxform = str
    try:
        cfg.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from exc
    known = set(SECTION_KEYS)
    for s in cfg.sections():
        if s not in known and not s.startswith("operator."):
            raise ConfigError(f"{source}: unknown section [{s}]; valid: {sorted(known)} and [operator.NAME]")

    sc = _section(cfg, "scenario")
    _check_keys(sc, SECTION_KEYS["scenario"], "scenario")
    name = sc.get("name", Path(source).stem)
    K = int(eval_number(sc.get("steps", "1")))
    M = int(eval_number(sc.get("trajectories", "1")))
    if K < 1 or M < 1:
        raise ConfigError("steps and trajectories must be >= 1")
    seed = int(eval_number(sc.get("seed", "0")))

    integral = None
    isec = _section(cfg, "integral", required=False)
    if isec is not None:
        _check_keys(isec, SECTION_KEYS["integral"], "integral")
        integral = {
            "kernel": isec.get("kernel", "indicator").strip(),
            "rhs": isec.get("rhs", "half_t_squared").strip(),
            "a": eval_number(isec.get("a", "0")),
            "b": eval_number(isec.get("b", "1")),
            "n": int(eval_number(isec.get("n", "201"))),
            "iterations": int(eval_number(isec.get("iterations", "200000"))),
            "solution": isec.get("solution", "").strip() or None,
            "sup_tol": eval_number(isec.get("sup_tol", "0.05")),
            "s_min": eval_number(isec.get("s_min", "0.05")),
            "seed": int(eval_number(isec["seed"])) if "seed" in isec else None,
        }
        if integral["kernel"] not in integral_eq.KERNELS:
            raise ConfigError(f"unknown kernel {integral['kernel']!r}; valid: {sorted(integral_eq.KERNELS)}")
        if integral["rhs"] not in integral_eq.RHS:
            raise ConfigError(f"unknown rhs {integral['rhs']!r}; valid: {sorted(integral_eq.RHS)}")
        if integral["solution"] is not None and integral["solution"] not in integral_eq.SOLUTIONS:
            raise ConfigError(f"unknown solution {integral['solution']!r}; valid: {sorted(integral_eq.SOLUTIONS)}")

    problem, mu, closed, cparams, fdesc = None, None, None, {}, ""
    if cfg.has_section("family"):
        family, fdesc = _build_family(cfg, "family")
        second = None
        if cfg.has_section("second_family"):
            second, sdesc = _build_family(cfg, "second_family")
            fdesc += f"; then {sdesc}"
        fs = _build_set(_section(cfg, "feasible_set"))
        pr = _section(cfg, "problem", required=False) or {}
        _check_keys(pr, SECTION_KEYS["problem"], "problem")
        closed = pr.get("closed_form", "none").strip()
        closed = None if closed == "none" else closed
        cparams = _closed_params(cfg, closed)
        problem = Problem(family, fs, eval_number(pr.get("alpha_bar", "0.5")), second, name)
        mu = _build_initial(_section(cfg, "initial"))
        if mu.dim != (fs.dim or mu.dim):
            raise ConfigError(f"initial law has dimension {mu.dim}, feasible set {fs.dim}")
    elif integral is None:
        raise ConfigError(f"{source}: needs a [family] section or an [integral] section")

    diag = _section(cfg, "diagnostics", required=False) or {}
    _check_keys(diag, SECTION_KEYS["diagnostics"], "diagnostics")
    if "expect_feas_frac" in diag:
        compile_expression(diag["expect_feas_frac"], "n")
    if diag.get("expect_class", "none").strip() not in ("none", "OneStep", "NeverCertain"):
        raise ConfigError("expect_class must be OneStep, NeverCertain or none")

    return Scenario(
        name=name,
        description=sc.get("description", ""),
        K=K,
        M=M,
        seed=seed,
        retain_points=parse_bool(sc.get("retain_points", "false")),
        output=sc.get("output"),
        problem=problem,
        mu=mu,
        closed_form=closed,
        closed_params=cparams,
        diagnostics=diag,
        integral=integral,
        source=source,
        family_desc=fdesc,
    )


def builtin_names() -> list:
    files = resources.files("rfi").joinpath("bundled").iterdir()
    return sorted(p.name[:-4] for p in files if p.name.endswith(".ini"))


def builtin_text(name: str) -> str:
    return resources.files("rfi").joinpath("bundled", f"{name}.ini").read_text()


def builtin_header(name: str) -> str:
    """The leading comment block of a bundled scenario."""
    lines = []
    for line in builtin_text(name).splitlines():
        if not line.startswith("#"):
            break
        lines.append(line.lstrip("# ").rstrip())
    return " ".join(l for l in lines if l)


def load_scenario(path) -> Scenario:
    """Load a scenario from a file path, or by bundled name."""
    p = Path(path)
    if p.is_file():
        return parse_scenario(p.read_text(), str(p))
    if str(path) in builtin_names():
        return parse_scenario(builtin_text(str(path)), f"{path}.ini")
    raise ConfigError(f"no scenario file {path!r} and no bundled scenario of that name; bundled: {builtin_names()}")
