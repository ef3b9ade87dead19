"""Experiment configuration: INI-style files with a tiny expression language.

Sections: [domain], [operator], [boundary], [grid], [solver], [lab].
Scalar data fields (f, g, gamma, dirichlet, exact, beta components) are
arithmetic expressions over x1, x2 with + - * / ^ and abs/min/max/sqrt,
compiled to vectorized evaluators. Keeping configs declarative makes every
experiment reproducible from the file alone; all random sampling in audits
is seeded from the config hash.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .discretize import DiscreteProblem, discretize
from .geometry import (
    CapSpec,
    Domain,
    ObliqueField,
    PolyGraph,
    check_obliqueness,
    make_box_domain,
    make_graph_domain,
    make_half_disk,
    make_spherical_cap,
    unflatten_transform,
    validate_cap_height,
)
from .operators import Ellipticity, OperatorSpec, bellman_operator, linear_operator


class ConfigError(ValueError):
    pass


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\^|[+\-*/(),]))"
)

_FUNCS = {
    "abs": (1, np.abs),
    "sqrt": (1, np.sqrt),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise ConfigError(f"cannot tokenize expression near {text[pos:]!r}")
            break
        pos = m.end()
        if m.lastgroup == "num":
            out.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
    out.append(("end", None))
    return out


class Expression:
    """Compiled arithmetic expression over x1, x2 (vectorized)."""

    def __init__(self, source: str):
        self.source = source.strip()
        self._tokens = _tokenize(self.source)
        self._pos = 0
        self._ast = self._expr()
        if self._peek() != ("end", None):
            raise ConfigError(f"trailing input in expression {self.source!r}")

    def _peek(self):
        return self._tokens[self._pos]

    def _next(self):
        tok = self._tokens[self._pos]
        self._pos += 1
        return tok

    def _expect_op(self, op):
        tok = self._next()
        if tok != ("op", op):
            raise ConfigError(f"expected {op!r} in expression {self.source!r}")

    def _expr(self):
        node = self._term()
        while self._peek() == ("op", "+") or self._peek() == ("op", "-"):
            op = self._next()[1]
            rhs = self._term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def _term(self):
        node = self._unary()
        while self._peek() == ("op", "*") or self._peek() == ("op", "/"):
            op = self._next()[1]
            rhs = self._unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def _unary(self):
        if self._peek() == ("op", "-"):
            self._next()
            return ("neg", self._unary())
        return self._power()

    def _power(self):
        base = self._atom()
        if self._peek() == ("op", "^"):
            self._next()
            return ("pow", base, self._unary())
        return base

    def _atom(self):
        kind, val = self._next()
        if kind == "num":
            return ("const", val)
        if kind == "name":
            if val in ("x1", "x2"):
                return ("var", val)
            if val in _FUNCS:
                arity, _ = _FUNCS[val]
                self._expect_op("(")
                args = [self._expr()]
                while self._peek() == ("op", ","):
                    self._next()
                    args.append(self._expr())
                self._expect_op(")")
                if len(args) != arity:
                    raise ConfigError(f"{val} takes {arity} arguments")
                return ("call", val, args)
            raise ConfigError(f"unknown name {val!r} (variables are x1, x2)")
        if (kind, val) == ("op", "("):
            node = self._expr()
            self._expect_op(")")
            return node
        raise ConfigError(f"unexpected token in expression {self.source!r}")

    def _eval(self, node, env):
        tag = node[0]
        if tag == "const":
            return node[1]
        if tag == "var":
            return env[node[1]]
        if tag == "neg":
            return -self._eval(node[1], env)
        if tag == "call":
            _, fn = _FUNCS[node[1]]
            return fn(*(self._eval(a, env) for a in node[2]))
        a, b = self._eval(node[1], env), self._eval(node[2], env)
        if tag == "add":
            return a + b
        if tag == "sub":
            return a - b
        if tag == "mul":
            return a * b
        if tag == "div":
            return a / b
        return np.power(a, b)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        val = self._eval(self._ast, {"x1": pts[:, 0], "x2": pts[:, 1]})
        return np.broadcast_to(np.asarray(val, dtype=float), (pts.shape[0],)).copy()

    def is_constant(self) -> bool:
        def walk(n):
            return n[0] != "var" and all(
                walk(c) for c in (n[2] if n[0] == "call" else n[1:]) if isinstance(c, tuple)
            )

        return walk(self._ast)


def _parse_pair(text: str):
    text = text.strip()
    if not (text.startswith("(") and text.endswith(")")):
        raise ConfigError(f"expected a parenthesized pair, got {text!r}")
    depth, split = 0, None
    inner = text[1:-1]
    for i, ch in enumerate(inner):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            split = i
            break
    if split is None:
        raise ConfigError(f"pair needs two comma-separated entries: {text!r}")
    return inner[:split], inner[split + 1 :]


@dataclass
class ExperimentConfig:
    path: str
    text: str
    domain_kind: str
    domain: Domain
    operator: OperatorSpec
    oblique: ObliqueField
    f: Expression
    dirichlet: Expression
    h: float
    stencil: str
    method: str
    tol: float | None
    max_iter: int
    oblique_order: int
    dirichlet_sampling: str
    lab: dict = field(default_factory=dict)
    graph_phi: PolyGraph | None = None
    raw: configparser.ConfigParser | None = None

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    @property
    def seed(self) -> int:
        return int(self.sha256[:8], 16) & 0x7FFFFFFF

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _line_of(text: str, section: str, key: str) -> int:
    sec_pat = re.compile(r"^\s*\[" + re.escape(section) + r"\]")
    key_pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    in_sec = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip().startswith("["):
            in_sec = bool(sec_pat.match(line))
        elif in_sec and key_pat.match(line):
            return lineno
    return 0


def _fail(text, section, key, msg):
    line = _line_of(text, section, key)
    raise ConfigError(f"line {line}: [{section}] {key}: {msg}")


def _get(cp, text, section, key, default=None, cast=str):
    if not cp.has_option(section, key):
        if default is None:
            _fail(text, section, key, "missing required key")
        return default
    val = cp.get(section, key)
    try:
        return cast(val)
    except ConfigError:
        raise
    except Exception as err:
        _fail(text, section, key, str(err))


def _triplet_matrix(text: str) -> np.ndarray:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise ValueError("expected a11,a12,a22")
    return np.array([[vals[0], vals[1]], [vals[1], vals[2]]])


def parse_config(path) -> ExperimentConfig:
    """Parse and validate an experiment file; failures carry line numbers."""
    with open(path) as fh:
        text = fh.read()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # lambda vs Lambda must stay distinct
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}")
    for sec in ("domain", "operator", "boundary", "grid"):
        if not cp.has_section(sec):
            raise ConfigError(f"{path}: missing section [{sec}]")

    kind = _get(cp, text, "domain", "kind")
    delta0 = _get(cp, text, "boundary", "delta0", default=0.05, cast=float)
    graph_phi = None
    if kind == "half_disk":
        domain = make_half_disk(_get(cp, text, "domain", "radius", cast=float))
    elif kind == "cap":
        r = _get(cp, text, "domain", "radius", cast=float)
        height_raw = _get(cp, text, "domain", "height", default="auto")
        h0 = delta0 / 2 if str(height_raw).strip() == "auto" else float(height_raw)
        domain = make_spherical_cap(CapSpec(r, h0))
    elif kind == "graph":
        coeffs = tuple(
            float(v)
            for v in _get(cp, text, "domain", "phi").split(",")
        )
        w = _get(cp, text, "domain", "radius", cast=float)
        height = _get(cp, text, "domain", "height", cast=float)
        graph_phi = PolyGraph(coeffs, w)
        domain = make_graph_domain(graph_phi, height)
    else:
        _fail(text, "domain", "kind", f"unknown kind {kind!r}")

    lam = _get(cp, text, "operator", "lambda", cast=float)
    Lam = _get(cp, text, "operator", "Lambda", cast=float)
    try:
        ell = Ellipticity(lam, Lam)
    except ValueError as err:
        _fail(text, "operator", "lambda", str(err))
    op_kind = _get(cp, text, "operator", "kind")
    f0 = _get(cp, text, "operator", "F0", default=0.0, cast=float)
    try:
        if op_kind in ("pucci_plus", "pucci_minus"):
            operator = OperatorSpec(op_kind, ell, f0=f0)
        elif op_kind == "linear":
            A = _get(cp, text, "operator", "A", cast=_triplet_matrix)
            operator = linear_operator(A, ell, f0=f0)
        elif op_kind == "bellman":
            members = []
            for item in _get(cp, text, "operator", "members").split(";"):
                vals = [float(v) for v in item.split(",")]
                if len(vals) != 4:
                    raise ValueError("each member is a11,a12,a22,c")
                members.append(
                    (np.array([[vals[0], vals[1]], [vals[1], vals[2]]]), vals[3])
                )
            operator = bellman_operator(members, ell, f0=f0)
        else:
            _fail(text, "operator", "kind", f"unknown kind {op_kind!r}")
    except (ValueError, ConfigError) as err:
        if isinstance(err, ConfigError):
            raise
        _fail(text, "operator", "kind", str(err))

    def expr_of(section, key, default=None):
        raw = _get(cp, text, section, key, default=default)
        try:
            return Expression(str(raw))
        except ConfigError as err:
            _fail(text, section, key, str(err))

    beta_raw = _get(cp, text, "boundary", "beta")
    try:
        b1_src, b2_src = _parse_pair(beta_raw)
        b1, b2 = Expression(b1_src), Expression(b2_src)
    except ConfigError as err:
        _fail(text, "boundary", "beta", str(err))
    gamma_e = expr_of("boundary", "gamma", default="0")
    g_e = expr_of("boundary", "g", default="0")
    dirichlet_e = expr_of("boundary", "dirichlet", default="0")
    f_e = expr_of("operator", "f", default="0")

    oblique = ObliqueField(
        beta=lambda pts: np.stack([b1(pts), b2(pts)], axis=1),
        gamma=gamma_e,
        g=g_e,
        delta0=delta0,
    )

    h = _get(cp, text, "grid", "h", cast=float)
    if h <= 0:
        _fail(text, "grid", "h", "h must be positive")
    stencil = _get(cp, text, "grid", "stencil", default="wide")

    method = _get(cp, text, "solver", "method", default="policy") if cp.has_section("solver") else "policy"
    tol_raw = _get(cp, text, "solver", "tol", default="auto") if cp.has_section("solver") else "auto"
    tol = None if str(tol_raw).strip() == "auto" else float(tol_raw)
    max_iter = int(_get(cp, text, "solver", "max_iter", default=400000, cast=float)) if cp.has_section("solver") else 400000
    oblique_order = _get(cp, text, "solver", "oblique_order", default=1, cast=int) if cp.has_section("solver") else 1
    dirichlet_sampling = (
        _get(cp, text, "solver", "dirichlet_sampling", default="snapped")
        if cp.has_section("solver")
        else "snapped"
    )

    lab: dict = {}
    if cp.has_section("lab"):
        for key, val in cp.items("lab"):
            lab[key] = val

    cfg = ExperimentConfig(
        path=str(path), text=text, domain_kind=kind, domain=domain,
        operator=operator, oblique=oblique, f=f_e, dirichlet=dirichlet_e,
        h=h, stencil=stencil, method=method, tol=tol, max_iter=max_iter,
        oblique_order=oblique_order, dirichlet_sampling=dirichlet_sampling,
        lab=lab, graph_phi=graph_phi, raw=cp,
    )

    # transversality validated on boundary samples before any solve
    try:
        check_obliqueness(domain, oblique, n_samples=256, rng=cfg.rng())
    except ValueError as err:
        _fail(text, "boundary", "beta", str(err))
    if kind == "cap":
        try:
            validate_cap_height(domain, oblique)
        except ValueError as err:
            _fail(text, "domain", "height", str(err))
    return cfg


def build_problem(cfg: ExperimentConfig, h: float | None = None) -> DiscreteProblem:
    """Assemble the discrete problem for a parsed configuration.

    Graph domains are flattened: the problem is posed on the flat strip in
    transformed coordinates, with the congruence-transformed coefficient,
    the curvature drift, and all data pulled back through the inverse map.
    Only the linear kind supports curved graphs (the transformed extremal
    operators would be gradient-dependent).
    """
    h_eff = cfg.h if h is None else h
    if cfg.domain_kind != "graph":
        return discretize(
            cfg.domain, cfg.operator, cfg.oblique, cfg.f, cfg.dirichlet,
            h_eff, stencil=cfg.stencil, oblique_order=cfg.oblique_order,
            dirichlet_sampling=cfg.dirichlet_sampling,
        )

    phi = cfg.graph_phi
    xs = np.linspace(-phi.halfwidth, phi.halfwidth, 65)
    tilted = np.max(np.abs(phi.derivative(xs))) > 1e-14
    if cfg.operator.kind != "linear" and tilted:
        raise ConfigError(
            "non-flat graph domains require the linear operator kind; "
            "extremal kinds are supported on half_disk and cap domains"
        )
    flat = make_box_domain(phi.halfwidth, cfg.domain.params["height"])

    def pullback(expr):
        return lambda pts: expr(unflatten_transform(phi, pts))

    raw_beta = cfg.oblique.beta

    def beta_flat(pts):
        x = unflatten_transform(phi, pts)
        b = np.atleast_2d(raw_beta(x))
        slope = phi.derivative(np.atleast_2d(pts)[:, 0])
        bt = np.stack([b[:, 0], b[:, 1] - b[:, 0] * slope], axis=1)
        nrm = np.linalg.norm(bt, axis=1, keepdims=True)
        return bt / np.where(nrm > 1e-14, nrm, 1.0)

    def scale(pts):
        x = unflatten_transform(phi, pts)
        b = np.atleast_2d(raw_beta(x))
        slope = phi.derivative(np.atleast_2d(pts)[:, 0])
        bt = np.stack([b[:, 0], b[:, 1] - b[:, 0] * slope], axis=1)
        return np.linalg.norm(bt, axis=1)

    oblique_flat = ObliqueField(
        beta=beta_flat,
        gamma=lambda pts: pullback(cfg.oblique.gamma)(pts) / np.maximum(scale(pts), 1e-14),
        g=lambda pts: pullback(cfg.oblique.g)(pts) / np.maximum(scale(pts), 1e-14),
        delta0=min(cfg.oblique.delta0, 0.99),
    )

    if cfg.operator.kind != "linear":
        # pure vertical translation: the operator is unchanged
        return discretize(
            flat, cfg.operator, oblique_flat, pullback(cfg.f), pullback(cfg.dirichlet),
            h_eff, stencil=cfg.stencil, oblique_order=cfg.oblique_order,
            dirichlet_sampling=cfg.dirichlet_sampling,
        )

    A = cfg.operator.A

    def coeff(pts):
        pts = np.atleast_2d(pts)
        slope = phi.derivative(pts[:, 0])
        out = np.empty((len(pts), 2, 2))
        # J A J^T with J = [[1, 0], [-phi', 1]]
        out[:, 0, 0] = A[0, 0]
        out[:, 0, 1] = A[0, 1] - A[0, 0] * slope
        out[:, 1, 0] = out[:, 0, 1]
        out[:, 1, 1] = A[1, 1] - 2 * A[0, 1] * slope + A[0, 0] * slope**2
        return out

    def drift(pts):
        pts = np.atleast_2d(pts)
        return -A[0, 0] * phi.second_derivative(pts[:, 0])

    return discretize(
        flat, cfg.operator, oblique_flat, pullback(cfg.f), pullback(cfg.dirichlet),
        h_eff, stencil=cfg.stencil, oblique_order=cfg.oblique_order,
        dirichlet_sampling=cfg.dirichlet_sampling,
        coefficient_field=coeff, drift_field=drift,
    )
