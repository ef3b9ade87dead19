"""Fully nonlinear second-order operators acting on symmetric matrices.

Implements the Pucci extremal operators M+/M- with ellipticity constants
(lambda, Lambda), linear operators tr(A M), and convex Bellman operators
max_k tr(A_k M) + c_k, together with an ellipticity audit and the reduced
operator induced on a flat boundary by an oblique derivative condition.

Eigenvalues of 2x2 symmetric matrices are computed in closed form
(trace/determinant) so that algebraic identities hold to rounding error.
All functions are pure and accept batched inputs with shape (..., n, n).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .report import AuditReport


@dataclass(frozen=True)
class Ellipticity:
    """Ellipticity constants 0 < lam <= Lam."""

    lam: float
    Lam: float

    def __post_init__(self):
        if not (0 < self.lam <= self.Lam):
            raise ValueError(f"need 0 < lambda <= Lambda, got ({self.lam}, {self.Lam})")


def sym_eigenvalues(M: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric matrices, shape (..., n, n) -> (..., n).

    2x2 matrices use the closed form mean +/- sqrt(((a-b)/2)^2 + c^2);
    larger sizes fall back to eigvalsh.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    if M.shape[-2] != n:
        raise ValueError("matrix input must be square")
    if n == 1:
        return M[..., 0, :]
    if n == 2:
        a, b, c = M[..., 0, 0], M[..., 1, 1], M[..., 0, 1]
        mean = 0.5 * (a + b)
        disc = np.sqrt((0.5 * (a - b)) ** 2 + c**2)
        return np.stack([mean - disc, mean + disc], axis=-1)
    return np.linalg.eigvalsh(M)


def pucci_plus(M: np.ndarray, e: Ellipticity) -> np.ndarray:
    """Maximal Pucci operator: Lam * (positive eigenvalue sum) - lam * (negative part sum)."""
    ev = sym_eigenvalues(M)
    return e.Lam * np.clip(ev, 0, None).sum(axis=-1) + e.lam * np.clip(ev, None, 0).sum(axis=-1)


def pucci_minus(M: np.ndarray, e: Ellipticity) -> np.ndarray:
    """Minimal Pucci operator, lam and Lam swapped on the eigenvalue parts."""
    ev = sym_eigenvalues(M)
    return e.lam * np.clip(ev, 0, None).sum(axis=-1) + e.Lam * np.clip(ev, None, 0).sum(axis=-1)


def _check_coefficient(A: np.ndarray, e: Ellipticity, what: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{what}: coefficient matrix must be square")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError(f"{what}: coefficient matrix must be symmetric")
    ev = sym_eigenvalues(A)
    if ev.min() < e.lam - 1e-10 or ev.max() > e.Lam + 1e-10:
        raise ValueError(
            f"{what}: eigenvalues {ev} outside the ellipticity interval [{e.lam}, {e.Lam}]"
        )
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class OperatorSpec:
    """A uniformly elliptic operator F(M).

    kind:
      pucci_plus / pucci_minus -- extremal operators, no free coefficients,
      linear                   -- tr(A M) with eigenvalues of A in [lam, Lam],
      bellman                  -- max_k tr(A_k M) + c_k over a finite member list.
    f0 is an additive constant, so F(0) = f0 for the pucci and linear kinds
    and f0 + max_k c_k for bellman.
    """

    kind: str
    ellipticity: Ellipticity
    A: np.ndarray | None = None
    members: tuple = ()
    f0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("pucci_plus", "pucci_minus", "linear", "bellman"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "linear":
            if self.A is None:
                raise ValueError("linear kind needs a coefficient matrix")
            object.__setattr__(
                self, "A", _check_coefficient(self.A, self.ellipticity, "linear")
            )
        if self.kind == "bellman":
            if not self.members:
                raise ValueError("bellman kind needs at least one member")
            checked = tuple(
                (_check_coefficient(Ak, self.ellipticity, f"bellman member {k}"), float(ck))
                for k, (Ak, ck) in enumerate(self.members)
            )
            object.__setattr__(self, "members", checked)

    @property
    def constant_term(self) -> float:
        """F(0)."""
        if self.kind == "bellman":
            return self.f0 + max(ck for _, ck in self.members)
        return self.f0


def linear_operator(A, e: Ellipticity, f0: float = 0.0) -> OperatorSpec:
    return OperatorSpec("linear", e, A=np.asarray(A, dtype=float), f0=f0)


def bellman_operator(members, e: Ellipticity, f0: float = 0.0) -> OperatorSpec:
    return OperatorSpec("bellman", e, members=tuple(members), f0=f0)


def evaluate(F: OperatorSpec, M: np.ndarray) -> np.ndarray:
    """Evaluate F on one matrix or a batch, shape (..., n, n) -> (...)."""
    M = np.asarray(M, dtype=float)
    if F.kind == "pucci_plus":
        return pucci_plus(M, F.ellipticity) + F.f0
    if F.kind == "pucci_minus":
        return pucci_minus(M, F.ellipticity) + F.f0
    if F.kind == "linear":
        return np.einsum("ij,...ji->...", F.A, M) + F.f0
    vals = [np.einsum("ij,...ji->...", Ak, M) + ck for Ak, ck in F.members]
    return np.max(np.stack(vals, axis=0), axis=0) + F.f0


def normalization_shift(F: OperatorSpec, n: int = 2) -> float:
    """Scalar t with F(t * e_n e_n^T) = 0, |t| <= |F(0)| / lambda.

    Shifting u by t x_n^2 / 2 reduces a problem with F(0) != 0 to the
    normalized case, which is how nonzero constant terms are absorbed.
    """
    f0 = float(evaluate(F, np.zeros((n, n))))
    if f0 == 0.0:
        return 0.0
    bound = abs(f0) / F.ellipticity.lam
    E = np.zeros((n, n))
    E[n - 1, n - 1] = 1.0

    def g(t):
        return float(evaluate(F, t * E))

    lo, hi = -bound * (1 + 1e-12), bound * (1 + 1e-12)
    return float(brentq(g, lo, hi, xtol=1e-15, rtol=1e-15))


def random_symmetric(rng: np.random.Generator, size: int, n: int = 2, scale: float = 1.0):
    B = rng.standard_normal((size, n, n)) * scale
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def random_psd(rng: np.random.Generator, size: int, n: int = 2, scale: float = 1.0):
    B = rng.standard_normal((size, n, n)) * scale
    return np.einsum("...ij,...kj->...ik", B, B)


def ellipticity_audit(F: OperatorSpec, samples: int, rng=None) -> AuditReport:
    """Check lam * tr(N) <= F(M+N) - F(M) <= Lam * tr(N) on random (M, N >= 0).

    For N >= 0 the eigenvalue sum tr(N) is the tight two-sided normalization
    (it equals the extremal-operator sandwich M-(N) <= dF <= M+(N)); for
    rank-one N it coincides with the spectral radius. Violations are
    reported, never raised.
    """
    if samples < 1:
        raise ValueError("samples >= 1 required")
    rng = np.random.default_rng(0) if rng is None else rng
    e = F.ellipticity
    M = random_symmetric(rng, samples)
    N = random_psd(rng, samples)
    trace_n = np.einsum("...ii->...", N)
    df = evaluate(F, M + N) - evaluate(F, M)
    lower_violation = np.max(np.clip(e.lam * trace_n - df, 0, None))
    upper_violation = np.max(np.clip(df - e.Lam * trace_n, 0, None))
    worst = float(max(lower_violation, upper_violation))
    return AuditReport(
        kind="ellipticity",
        values={
            "samples": samples,
            "max_lower_violation": float(lower_violation),
            "max_upper_violation": float(upper_violation),
            "max_violation": worst,
        },
        passed=worst <= 1e-10,
    )


def reduced_boundary_operator(
    F: OperatorSpec, M, beta: np.ndarray, abar: float
) -> float:
    """Operator induced on the flat boundary by an oblique condition.

    For a tangential Hessian M (size (n-1) x (n-1)), a transversal direction
    beta with beta_n != 0 and a given second normal coefficient abar, builds

        [ M                  -M beta'/beta_n                      ]
        [ -beta'^T M/beta_n  (abar + beta'^T M beta')/beta_n^2    ]

    and evaluates F on it. Convex in M whenever F is convex.
    """
    beta = np.asarray(beta, dtype=float)
    n = beta.shape[0]
    bn = beta[-1]
    if abs(bn) < 1e-14:
        raise ValueError("reduced operator undefined for beta_n = 0")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (n - 1, n - 1):
        raise ValueError(f"tangential Hessian must be {(n - 1, n - 1)}, got {M.shape}")
    bp = beta[:-1]
    full = np.zeros((n, n))
    full[: n - 1, : n - 1] = M
    full[: n - 1, n - 1] = -M @ bp / bn
    full[n - 1, : n - 1] = -bp @ M / bn
    full[n - 1, n - 1] = (abar + bp @ M @ bp) / bn**2
    return float(evaluate(F, full))
