"""Explicit sub/supersolution barriers with closed-form Hessians.

Four families: the boundary-Harnack combination built from the linear piece
w1 = 2 rho R - x2 and the quadratic piece w2 = 2 - (x2/2rhoR)^2 - x2/2rhoR
+ |x1|^2/R^2; the Dirichlet quadratic v2 = -K1 x2^2 - K2 x2 + K3; the
exterior-sphere power barrier v3 = r1^{-p} - |x-y|^{-p}; and the Hoelder
cone psi = K (n.(x-x1))^(alpha/2). Constants are given explicit formulas
plus an escalation loop and every barrier is certified numerically by
evaluating F on its analytic Hessian (`verify_supersolution`), so the
choice of constants is self-checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import Ellipticity, OperatorSpec, evaluate, pucci_plus
from .report import AuditReport


@dataclass
class BarrierSpec:
    kind: str
    params: dict
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    region: str = ""
    flags: list = field(default_factory=list)


def _pts(x) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    return p[None, :] if p.ndim == 1 else p


def rho_admissible(e: Ellipticity, delta1: float, gamma_sup: float, n: int = 2) -> float:
    """Largest admissible slab aspect ratio for the boundary Harnack regions.

    Two ceilings: rho1 = delta1 / (16 (1 + gamma_sup)) controls the boundary
    rows, and rho2 makes the extremal operator of diag(2I, -1/(2 rho^2))
    strictly below -1, i.e. 2 Lam (n-1) - lam/(2 rho^2) < -1 giving
    rho2 = sqrt(lam / (2 (1 + 2 Lam (n-1)))). Returns min(rho1, rho2)
    shaved by 1e-6 to keep both inequalities strict.
    """
    if delta1 <= 0 or gamma_sup < 0:
        raise ValueError("need delta1 > 0 and gamma_sup >= 0")
    rho1 = delta1 / (16.0 * (1.0 + gamma_sup))
    rho2 = np.sqrt(e.lam / (2.0 * (1.0 + 2.0 * e.Lam * (n - 1))))
    return float(min(rho1, rho2) * (1.0 - 1e-6))


def harnack_barrier(
    R: float,
    rho: float,
    A: float,
    g_sup: float,
    delta1: float,
    e: Ellipticity | None = None,
    gamma_sup: float = 0.0,
) -> BarrierSpec:
    """Combination (g_sup/delta1) w1 + (A/4) w2 - A on the slab {0 < x2 < 2 rho R}.

    w1 is affine and w2 has constant Hessian diag(2/R^2, -1/(2 rho^2 R^2)),
    so the combination is a supersolution with margin A/(4R^2) once rho is
    admissible. Adding a nonnegative solution u yields the comparison
    function used for the boundary Harnack estimate.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    if e is not None and rho > rho_admissible(e, delta1, gamma_sup):
        raise ValueError(f"rho={rho} exceeds the admissible value")
    c1 = g_sup / delta1
    H2 = np.diag([2.0 / R**2, -1.0 / (2 * rho**2 * R**2)])

    def w1(x):
        p = _pts(x)
        return 2 * rho * R - p[:, 1]

    def w2(x):
        p = _pts(x)
        t = p[:, 1] / (2 * rho * R)
        return 2.0 - t**2 - t + p[:, 0] ** 2 / R**2

    def value(x):
        v = c1 * w1(x) + 0.25 * A * w2(x) - A
        return v[0] if np.asarray(x).ndim == 1 else v

    def gradient(x):
        p = _pts(x)
        gx = 0.25 * A * 2 * p[:, 0] / R**2
        gy = -c1 + 0.25 * A * (-2 * p[:, 1] / (2 * rho * R) ** 2 - 1.0 / (2 * rho * R))
        out = np.stack([gx, gy], axis=1)
        return out[0] if np.asarray(x).ndim == 1 else out

    def hessian(x):
        p = _pts(x)
        out = np.broadcast_to(0.25 * A * H2, (len(p), 2, 2)).copy()
        return out[0] if np.asarray(x).ndim == 1 else out

    return BarrierSpec(
        kind="harnack_w1_w2",
        params={"R": R, "rho": rho, "A": A, "g_sup": g_sup, "delta1": delta1},
        value=value, gradient=gradient, hessian=hessian,
        region=f"0 < x2 < {2 * rho * R:.6g}, |x1| < {2 * R:.6g}",
    )


def dirichlet_quadratic_barrier(
    e: Ellipticity,
    f_sup: float,
    g_sup: float,
    gamma_sup: float,
    phi_sup: float,
    domain_height: float,
    delta0: float = 1.0,
    f0: float = 0.0,
) -> BarrierSpec:
    """Quadratic supersolution v2 = -K1 x2^2 - K2 x2 + K3 with v2 >= 1.

    K1 = (1 + f_sup)/(2 lam) makes the extremal value of the Hessian at most
    -(1 + f_sup); K2 = (g_sup + gamma_sup phi_sup + 1 + 2 K1 H)/delta0 forces
    the boundary row below -(g_sup + gamma_sup phi_sup); K3 tops up so v2 >= 1
    on the strip 0 <= x2 <= H. Constants escalate x2 (up to ten times) until
    the three inequalities verify, then the choice is frozen.
    """
    if min(f_sup, g_sup, gamma_sup, phi_sup) < 0 or domain_height <= 0 or delta0 <= 0:
        raise ValueError("barrier data must be nonnegative with positive height/delta0")
    H = domain_height
    K1 = (1.0 + f_sup) / (2.0 * e.lam)
    for _ in range(10):
        K2 = (g_sup + gamma_sup * phi_sup + 1.0 + 2.0 * K1 * H) / delta0
        K3 = 1.0 + K2 * H + K1 * H**2
        hess_extremal = pucci_plus(np.diag([0.0, -2.0 * K1]), e) + f0
        interior_ok = hess_extremal <= -f_sup - 0.5
        boundary_ok = -delta0 * K2 <= -(g_sup + gamma_sup * phi_sup) - 0.5
        min_ok = (K3 - K2 * H - K1 * H**2) >= 1.0 - 1e-12
        if interior_ok and boundary_ok and min_ok:
            break
        K1 *= 2.0
    else:
        raise RuntimeError("barrier constants failed to verify after escalation")

    def value(x):
        p = _pts(x)
        v = -K1 * p[:, 1] ** 2 - K2 * p[:, 1] + K3
        return v[0] if np.asarray(x).ndim == 1 else v

    def gradient(x):
        p = _pts(x)
        out = np.stack([np.zeros(len(p)), -2 * K1 * p[:, 1] - K2], axis=1)
        return out[0] if np.asarray(x).ndim == 1 else out

    def hessian(x):
        p = _pts(x)
        out = np.broadcast_to(np.diag([0.0, -2.0 * K1]), (len(p), 2, 2)).copy()
        return out[0] if np.asarray(x).ndim == 1 else out

    return BarrierSpec(
        kind="dirichlet_quadratic",
        params={"K1": K1, "K2": K2, "K3": K3, "height": H, "delta0": delta0},
        value=value, gradient=gradient, hessian=hessian,
        region=f"0 <= x2 <= {H:.6g}",
    )


def exterior_sphere_barrier(
    r1: float, y, p: float, e: Ellipticity, n: int = 2
) -> BarrierSpec:
    """Power barrier r1^{-p} - |x - y|^{-p}, zero on the sphere |x-y| = r1.

    The radial Hessian eigenvalues are -p(p+1) r^{-p-2} (radial) and
    p r^{-p-2} (tangential, (n-1)-fold), so the extremal value is
    nonpositive outside the sphere iff p >= (n-1) Lam/lam - 1; the exponent
    auto-escalates to (n-1) Lam/lam - 1 + 0.5 when the input is smaller.
    """
    if r1 <= 0 or p <= 0:
        raise ValueError("need r1 > 0 and p > 0")
    y = np.asarray(y, dtype=float)
    p_min = (n - 1) * e.Lam / e.lam - 1.0
    p_eff = max(float(p), p_min + 0.5)

    def radius(x):
        return np.linalg.norm(_pts(x) - y, axis=1)

    def value(x):
        v = r1 ** (-p_eff) - radius(x) ** (-p_eff)
        return v[0] if np.asarray(x).ndim == 1 else v

    def gradient(x):
        pts = _pts(x)
        r = radius(x)
        out = p_eff * r ** (-p_eff - 2) * (pts - y)
        return out[0] if np.asarray(x).ndim == 1 else out

    def hessian(x):
        pts = _pts(x)
        r = radius(x)[:, None, None]
        rhat = (pts - y) / radius(x)[:, None]
        outer = np.einsum("mi,mj->mij", rhat, rhat)
        eye = np.broadcast_to(np.eye(2), outer.shape)
        out = p_eff * r ** (-p_eff - 2) * (eye - outer) - p_eff * (
            p_eff + 1
        ) * r ** (-p_eff - 2) * outer
        return out[0] if np.asarray(x).ndim == 1 else out

    return BarrierSpec(
        kind="exterior_sphere",
        params={"r1": r1, "y": tuple(y), "p": p_eff, "p_requested": float(p)},
        value=value, gradient=gradient, hessian=hessian,
        region=f"|x - y| >= {r1:.6g}",
    )


def holder_cone_barrier(x1, normal, K: float, alpha: float) -> BarrierSpec:
    """Hoelder growth barrier K (n(x1) . (x - x1))^(alpha/2) at a boundary point.

    Stored exponent alpha/2: the barrier trades one half of the data's
    exponent for validity under any uniformly elliptic operator. Negative
    inner products are clamped to zero and flagged as outside the cone.
    """
    if not (0 < alpha <= 1):
        raise ValueError("need 0 < alpha <= 1")
    if K <= 0:
        raise ValueError("need K > 0")
    x1 = np.asarray(x1, dtype=float)
    nrm = np.asarray(normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    a = alpha / 2.0
    spec_flags: list = []

    def t_of(x):
        return (_pts(x) - x1) @ nrm

    def value(x):
        t = t_of(x)
        if np.any(t < 0):
            if "clamped_outside_cone" not in spec_flags:
                spec_flags.append("clamped_outside_cone")
            t = np.clip(t, 0.0, None)
        v = K * t**a
        return v[0] if np.asarray(x).ndim == 1 else v

    def gradient(x):
        t = np.clip(t_of(x), 1e-300, None)
        out = (K * a * t ** (a - 1))[:, None] * nrm[None, :]
        return out[0] if np.asarray(x).ndim == 1 else out

    def hessian(x):
        t = np.clip(t_of(x), 1e-300, None)
        outer = np.einsum("i,j->ij", nrm, nrm)
        out = (K * a * (a - 1) * t ** (a - 2))[:, None, None] * outer[None]
        return out[0] if np.asarray(x).ndim == 1 else out

    return BarrierSpec(
        kind="holder_cone",
        params={"x1": tuple(x1), "normal": tuple(nrm), "K": K, "alpha": alpha,
                "exponent": a},
        value=value, gradient=gradient, hessian=hessian,
        region="n(x1) . (x - x1) > 0",
        flags=spec_flags,
    )


def verify_supersolution(
    b: BarrierSpec,
    F: OperatorSpec,
    samples: np.ndarray,
    margin: float,
    sense: str = "super",
    slack: float = 1e-9,
) -> AuditReport:
    """Check F(D^2 b) <= -margin (super) or >= margin (sub) on the samples.

    Uses the barrier's analytic Hessian; violations are reported with the
    worst sample, never raised.
    """
    pts = _pts(samples)
    vals = evaluate(F, b.hessian(pts))
    if sense == "super":
        violation = vals + margin
    elif sense == "sub":
        violation = margin - vals
    else:
        raise ValueError("sense must be 'super' or 'sub'")
    worst = int(np.argmax(violation))
    max_violation = float(violation[worst])
    return AuditReport(
        kind=f"barrier_{b.kind}_{sense}solution",
        values={
            "samples": len(pts),
            "margin": margin,
            "max_violation": max_violation,
            "worst_x1": float(pts[worst, 0]),
            "worst_x2": float(pts[worst, 1]),
            "worst_value": float(vals[worst]),
        },
        passed=max_violation <= slack,
    )


def hessian_fd_error(b: BarrierSpec, samples: np.ndarray, step: float = 1e-4) -> float:
    """Max relative deviation between the analytic Hessian and central differences."""
    pts = _pts(samples)
    H = b.hessian(pts)
    fd = np.zeros_like(H)
    for i in range(2):
        for j in range(2):
            ei = np.zeros(2)
            ej = np.zeros(2)
            ei[i] = step
            ej[j] = step
            fd[:, i, j] = (
                b.value(pts + ei + ej)
                - b.value(pts + ei - ej)
                - b.value(pts - ei + ej)
                + b.value(pts - ei - ej)
            ) / (4 * step**2)
    scale = np.maximum(np.abs(H), 1.0)
    return float(np.max(np.abs(fd - H) / scale))
