"""Run configuration: flat ``section.key = value`` lines.

Example::

    # identity coefficient, linear source
    domain.dim = 1
    domain.bounds = 0, 1
    domain.n = 512
    model.m = "1"
    model.m_lower = 1
    nonlinearity.regime = source
    nonlinearity.f = "pi^2*sin(pi*x)"

Expressions are double-quoted; ``#`` starts a comment outside quotes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from . import expr
from .errors import ConfigError, ModelError
from .mesh import Mesh
from .model import REGIMES, CoefficientModel, Nonlinearity
from .model.coefficient import FAMILIES
from .model.nonlinearity import space_vars

__all__ = ["RunConfig", "load_config", "parse_config"]


@dataclass(frozen=True)
class DomainSpec:
    dim: int = 1
    bounds: tuple = ()
    n: int = 64


@dataclass(frozen=True)
class ModelSpec:
    m: str | None = None
    family: str | None = None
    p: float = 1.0
    m_lower: float | None = None
    primitive: str | None = None


@dataclass(frozen=True)
class NonlinearitySpec:
    regime: str = "source"
    f: str | None = None
    c: float | None = None
    p: float | None = None
    theta: float | None = None
    delta: float | None = None
    nu: float | None = None
    mu: str | None = None


@dataclass(frozen=True)
class SolverSpec:
    tol: float = 1e-10
    fixed_point_tol: float = 1e-8
    cg_tol: float = 1e-10
    quad_tol: float = 1e-10
    residual_tol: float = 1e-8
    maxit: int | None = None
    backend: str | None = None
    workers: int = 1


@dataclass(frozen=True)
class HypothesisSpec:
    budget: int = 4096
    t_max: float = 3.0
    r_max: float = 5.0
    lemma_t_max: float = 3.0
    lemma_r_max: float = 2.0


@dataclass(frozen=True)
class ManufacturedSpec:
    u: str | None = None


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    precision: int = 17


SECTIONS = {
    "domain": DomainSpec,
    "model": ModelSpec,
    "nonlinearity": NonlinearitySpec,
    "solver": SolverSpec,
    "hypotheses": HypothesisSpec,
    "manufactured": ManufacturedSpec,
    "output": OutputSpec,
}

_EXPR_KEYS = {("model", "m"), ("model", "primitive"), ("nonlinearity", "f"), ("nonlinearity", "mu"),
              ("manufactured", "u")}
_INT_KEYS = {("domain", "dim"), ("domain", "n"), ("solver", "maxit"), ("solver", "workers"),
             ("hypotheses", "budget"), ("output", "precision")}
_WORD_KEYS = {("model", "family"), ("nonlinearity", "regime"), ("solver", "backend"), ("output", "dir")}


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec = field(default_factory=DomainSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    hypotheses: HypothesisSpec = field(default_factory=HypothesisSpec)
    manufactured: ManufacturedSpec = field(default_factory=ManufacturedSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    path: str | None = None

    def mesh(self, n=None):
        return Mesh(self.domain.dim, _pairs(self.domain.bounds), self.domain.n if n is None else n)

    def coefficient(self):
        ms = self.model
        if ms.family is not None:
            return CoefficientModel.family(ms.family, p=ms.p, m_lower=ms.m_lower)
        return CoefficientModel(ms.m, ms.m_lower, primitive=ms.primitive)

    def nonlinearity_obj(self):
        ns = self.nonlinearity
        return Nonlinearity(ns.f, ns.regime, dim=self.domain.dim, c=ns.c, p=ns.p, theta=ns.theta,
                            delta=ns.delta, nu=ns.nu, mu=ns.mu)

    def problem(self, n=None):
        from .nonlocal_solver import Problem

        s = self.solver
        return Problem(self.mesh(n), self.coefficient(), self.nonlinearity_obj(), solver_tol=s.tol,
                       quad_tol=s.quad_tol, cg_tol=s.cg_tol, residual_tol=s.residual_tol, maxit=s.maxit,
                       backend=s.backend)

    def with_overrides(self, tol=None, n=None, out=None):
        cfg = self
        if tol is not None:
            if not tol > 0:
                raise ConfigError(f"--tol must be positive, got {tol!r}")
            cfg = replace(cfg, solver=replace(cfg.solver, fixed_point_tol=float(tol)))
        if n is not None:
            if n < 2:
                raise ConfigError(f"--n must be at least 2, got {n!r}")
            cfg = replace(cfg, domain=replace(cfg.domain, n=int(n)))
        if out is not None:
            cfg = replace(cfg, output=replace(cfg.output, dir=str(out)))
        return cfg

    def to_dict(self):
        """Echo of the settings that affect results (output paths excluded)."""
        out = {}
        for name in SECTIONS:
            if name == "output":
                continue
            sec = getattr(self, name)
            out[name] = {f.name: _plain(getattr(sec, f.name)) for f in fields(sec)}
        return out


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def _pairs(flat):
    return [tuple(flat[i:i + 2]) for i in range(0, len(flat), 2)]


def _strip_comment(text):
    quoted = False
    for i, ch in enumerate(text):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return text[:i]
    return text


def _convert(section, key, raw, where):
    path, line = where
    if (section, key) in _EXPR_KEYS:
        if len(raw) < 2 or raw[0] != '"' or raw[-1] != '"':
            raise ConfigError(f"{section}.{key} must be a double-quoted expression", path, line)
        return raw[1:-1]
    if '"' in raw:
        raise ConfigError(f"{section}.{key} takes a bare value, not a quoted string", path, line)
    if (section, key) in _WORD_KEYS:
        return raw
    if (section, key) == ("domain", "bounds"):
        try:
            return tuple(float(x) for x in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"domain.bounds must be numbers, got {raw!r}", path, line) from None
    try:
        if (section, key) in _INT_KEYS:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        v = float(raw)
    except ValueError:
        kind = "an integer" if (section, key) in _INT_KEYS else "a number"
        raise ConfigError(f"{section}.{key} must be {kind}, got {raw!r}", path, line) from None
    return v


def parse_config(text, path="<string>"):
    """RunConfig from config text; every error carries file and line."""
    values = {name: {} for name in SECTIONS}
    lines = {}
    for lineno, rawline in enumerate(text.splitlines(), 1):
        body = _strip_comment(rawline).strip()
        if not body:
            continue
        if body.count('"') % 2:
            raise ConfigError("unterminated quoted string", path, lineno)
        if "=" not in body:
            raise ConfigError(f"expected 'section.key = value', got {body!r}", path, lineno)
        lhs, rhs = (s.strip() for s in body.split("=", 1))
        if lhs.count(".") != 1:
            raise ConfigError(f"key {lhs!r} must have the form section.key", path, lineno)
        section, key = lhs.split(".")
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r}; known: {', '.join(SECTIONS)}", path, lineno)
        known = {f.name for f in fields(SECTIONS[section])}
        if key not in known:
            raise ConfigError(f"unknown key {lhs!r}; {section} takes {', '.join(sorted(known))}", path, lineno)
        if lhs in lines:
            raise ConfigError(f"duplicate key {lhs!r} (first set on line {lines[lhs]})", path, lineno)
        if not rhs:
            raise ConfigError(f"missing value for {lhs!r}", path, lineno)
        lines[lhs] = lineno
        values[section][key] = _convert(section, key, rhs, (path, lineno))

    cfg = RunConfig(**{name: SECTIONS[name](**values[name]) for name in SECTIONS}, path=path)
    if not cfg.domain.bounds:
        cfg = replace(cfg, domain=replace(cfg.domain, bounds=(0.0, 1.0) * cfg.domain.dim))
    _validate(cfg, lines, path)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))


def _validate(cfg, lines, path):
    def err(key, msg):
        raise ConfigError(msg, path, lines.get(key))

    def positive(key, v, required=False):
        if v is None:
            if required:
                # point at the regime line that demands it
                raise ConfigError(f"{key} is required in the {ns.regime} regime", path,
                                  lines.get("nonlinearity.regime"))
            return
        if not (v > 0 and math.isfinite(v)):
            err(key, f"{key} must be positive and finite, got {v!r}")

    ns = cfg.nonlinearity
    d = cfg.domain
    if d.dim not in (1, 2):
        err("domain.dim", f"domain.dim must be 1 or 2, got {d.dim}")
    if len(d.bounds) != 2 * d.dim:
        err("domain.bounds", f"domain.bounds needs {2 * d.dim} numbers for dim {d.dim}, got {len(d.bounds)}")
    for a, b in _pairs(d.bounds):
        if not b > a:
            err("domain.bounds", f"empty interval [{a}, {b}] in domain.bounds")
    if d.n < 2:
        err("domain.n", f"domain.n must be at least 2, got {d.n}")

    ms = cfg.model
    if (ms.m is None) == (ms.family is None):
        err("model.m" if ms.m is not None else "model.family", "exactly one of model.m and model.family is required")
    if ms.family is not None and ms.family not in FAMILIES:
        err("model.family", f"unknown family {ms.family!r}; known: {', '.join(FAMILIES)}")
    if ms.m_lower is None:
        err("model.m_lower", "model.m_lower is required")
    positive("model.m_lower", ms.m_lower)
    for key in ("m", "primitive"):
        src = getattr(ms, key)
        if src is not None:
            _parse(src, ("t", "r"), f"model.{key}", lines, path)

    if ns.regime not in REGIMES:
        err("nonlinearity.regime", f"unknown regime {ns.regime!r}; expected one of {', '.join(REGIMES)}")
    if ns.f is None:
        err("nonlinearity.f", "nonlinearity.f is required")
    xs = space_vars(d.dim)
    _parse(ns.f, xs + ("t",), "nonlinearity.f", lines, path)
    if ns.mu is not None:
        _parse(ns.mu, xs, "nonlinearity.mu", lines, path)
    for key in ("c", "p", "theta", "nu"):
        positive(f"nonlinearity.{key}", getattr(ns, key))
    if ns.delta is not None and not 0 < ns.delta <= 1:
        err("nonlinearity.delta", f"nonlinearity.delta must lie in (0, 1], got {ns.delta!r}")
    if ns.regime == "growth":
        positive("nonlinearity.c", ns.c, required=True)
        positive("nonlinearity.p", ns.p, required=True)
    elif ns.regime == "sublinear":
        positive("nonlinearity.c", ns.c, required=True)
    elif ns.regime == "lipschitz":
        positive("nonlinearity.theta", ns.theta, required=True)

    s = cfg.solver
    for key in ("tol", "fixed_point_tol", "cg_tol", "quad_tol", "residual_tol"):
        positive(f"solver.{key}", getattr(s, key))
    if s.maxit is not None and s.maxit < 1:
        err("solver.maxit", "solver.maxit must be at least 1")
    if s.workers < 1:
        err("solver.workers", "solver.workers must be at least 1")
    if s.backend not in (None, "compiled", "python"):
        err("solver.backend", f"solver.backend must be compiled or python, got {s.backend!r}")

    h = cfg.hypotheses
    if h.budget < 1:
        err("hypotheses.budget", "hypotheses.budget must be at least 1")
    for key in ("t_max", "r_max", "lemma_t_max", "lemma_r_max"):
        positive(f"hypotheses.{key}", getattr(h, key))
    if cfg.manufactured.u is not None:
        _parse(cfg.manufactured.u, xs, "manufactured.u", lines, path)
    if not 1 <= cfg.output.precision <= 17:
        err("output.precision", "output.precision must lie in [1, 17]")

    # build the model objects once so constructor checks surface here too
    try:
        cfg.coefficient()
        cfg.nonlinearity_obj()
    except (ModelError, expr.ExprError) as exc:
        raise ConfigError(str(exc), path, lines.get("model.m") or lines.get("nonlinearity.f")) from None


def _parse(src, allowed, key, lines, path):
    try:
        return expr.parse(src, allowed)
    except expr.ExprError as exc:
        raise ConfigError(f"{key}: {exc}", path, lines.get(key)) from None
