"""Discrete convex envelopes, contact sets, and the ABP maximum-principle audit.

The production envelope is computed by iterated convexification sweeps:
Gamma <- min(u, min over directions e of (Gamma(x+ke) + Gamma(x-ke))/2)
until stationary, which yields the largest minorant that is discretely
convex along the chosen direction set. The independent oracle evaluates the
supporting-plane definition exactly via the lower convex hull of the lifted
point cloud. The ABP audit bounds sup u^- by the Dirichlet boundary term,
the oblique data term, and the L^n norm of f^+ over the contact set of the
convex envelope of min(u, 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

from .discretize import DiscreteProblem, GridField, NodeClass
from .geometry import one_direction_constant
from .report import AuditReport

SWEEP_TOL = 1e-12


@dataclass
class EnvelopeResult:
    envelope: np.ndarray  # same shape as the input values
    contact_mask: np.ndarray
    contact_tol: float
    sweeps: int

    def max_gap(self, u, mask):
        return float(np.max((u - self.envelope)[mask])) if mask.any() else 0.0


def all_primitive_directions(shape) -> np.ndarray:
    """Every primitive lattice direction (p, q) representable inside `shape`."""
    pmax, qmax = shape[0] - 1, shape[1] - 1
    out = [(0, 1), (1, 0)]
    for p in range(1, pmax + 1):
        for q in range(1, qmax + 1):
            if gcd(p, q) == 1:
                out.append((p, q))
                out.append((p, -q))
    return np.array(out)


def _shift(a: np.ndarray, dx: int, dy: int, fill: float) -> np.ndarray:
    """a evaluated at index + (dx, dy), padded with `fill` outside."""
    out = np.full_like(a, fill)
    sx0, sx1 = max(dx, 0), min(a.shape[-2] + dx, a.shape[-2])
    sy0, sy1 = max(dy, 0), min(a.shape[-1] + dy, a.shape[-1])
    if sx0 < sx1 and sy0 < sy1:
        out[..., sx0 - dx : sx1 - dx, sy0 - dy : sy1 - dy] = a[..., sx0:sx1, sy0:sy1]
    return out


def convex_envelope_array(
    u: np.ndarray,
    mask: np.ndarray,
    directions=None,
    tol: float = SWEEP_TOL,
    max_sweeps: int = 200000,
    contact_tol: float | None = None,
    spacing: float = 1.0,
) -> EnvelopeResult:
    """Iterated convexification sweeps on a 2-D array (batched leading dims ok).

    Out-of-mask entries never constrain the minimum; nodes with no usable
    direction pair hold their input value. Raises when the iteration fails
    to settle, which signals a mask whose hull is disconnected.
    """
    u = np.asarray(u, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not np.all(np.isfinite(u[..., mask])):
        raise ValueError("envelope input must be finite on the mask")
    dirs = np.array(DEFAULT_DIRECTIONS) if directions is None else np.asarray(directions)
    big = np.inf
    work = np.where(mask, u, big)
    env = work.copy()
    sweeps = 0
    while sweeps < max_sweeps:
        cand = np.full_like(env, big)
        for dx, dy in dirs:
            pair = 0.5 * (_shift(env, dx, dy, big) + _shift(env, -dx, -dy, big))
            cand = np.minimum(cand, pair)
        new = np.minimum(work, cand)
        new = np.where(mask, new, big)
        change = np.max(np.abs(np.where(mask, new - env, 0.0)))
        env = new
        sweeps += 1
        if change <= tol:
            break
    else:
        raise RuntimeError(
            "convexification sweeps did not settle (disconnected hull mask?)"
        )
    env = np.where(mask, env, 0.0)
    uvals = np.where(mask, u, 0.0)
    if contact_tol is None:
        scale = float(np.max(np.abs(uvals))) if mask.any() else 0.0
        contact_tol = spacing**2 * (1.0 + scale)
    contact = mask & (np.abs(uvals - env) <= contact_tol)
    return EnvelopeResult(env, contact, contact_tol, sweeps)


DEFAULT_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2))


def convex_envelope(
    u: GridField, mask=None, directions=None, contact_tol: float | None = None, **kw
) -> EnvelopeResult:
    """Grid-level wrapper; mask defaults to all in-domain nodes.

    The returned arrays are flat in node order. contact_tol defaults to
    h^2 (1 + |u|_inf), the consistency-order replacement for exact equality.
    """
    grid = u.grid
    m = grid.in_domain if mask is None else np.asarray(mask, dtype=bool)
    u2 = u.values.reshape(grid.nx, grid.ny)
    m2 = m.reshape(grid.nx, grid.ny)
    dirs = grid.directions if directions is None else directions
    res = convex_envelope_array(
        u2, m2, directions=dirs, contact_tol=contact_tol, spacing=grid.h, **kw
    )
    return EnvelopeResult(
        res.envelope.ravel(), res.contact_mask.ravel(), res.contact_tol, res.sweeps
    )


def convex_envelope_bruteforce(u: np.ndarray, mask: np.ndarray, spacing: float = 1.0):
    """Exact discrete envelope from the supporting-plane definition.

    Gamma(x) = sup{p.x + c : p.y + c <= u(y) for every y in the mask}: the
    optimal planes are the lower facets of the convex hull of the lifted
    points (y, u(y)), so the envelope is the max over those facet planes.
    Oracle-grade: small masks only.
    """
    from scipy.spatial import ConvexHull, QhullError

    u = np.asarray(u, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    n_pts = int(mask.sum())
    if n_pts > 450:
        raise ValueError("brute-force envelope limited to ~400 nodes")
    ii, jj = np.nonzero(mask)
    xy = np.stack([ii, jj], axis=1) * spacing
    z = u[mask]
    lifted = np.column_stack([xy, z])
    out = np.full_like(u, 0.0)
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        # coplanar input: the envelope is the affine interpolant, i.e. u itself
        out[mask] = z
        return out
    eqs = hull.equations  # n . x + d = 0 with n outward
    lower = eqs[eqs[:, 2] < -1e-12]
    # z >= -(a x + b y + d)/c on lower facets; envelope = max over facet planes
    planes = -(lower[:, [0, 1, 3]]) / lower[:, 2:3]
    vals = xy @ planes[:, :2].T + planes[:, 2][None, :]
    out[mask] = np.max(vals, axis=1)
    return out


def abp_audit(problem: DiscreteProblem, u: GridField) -> AuditReport:
    """Empirical maximum-principle bound for the solved field.

    Computes sup of u^- over the interior, the Dirichlet boundary term, the
    max of g^+ over the oblique patch, and the L^n norm (n = 2) of f^+ over
    the contact set of the convex envelope of min(u, 0); reports the
    inferred constant C_emp = (lhs - dirichlet)^+ / (g term + f term). A
    positive gamma makes the bound inapplicable and flags the report.
    Domains larger than the unit ball are rescaled internally.
    """
    grid = problem.grid
    u.assert_finite("abp input")
    flags = []
    gamma = problem.rows.gamma
    if len(gamma) and float(np.max(gamma)) > 1e-12:
        return AuditReport(
            kind="abp", values={"max_gamma": float(np.max(gamma))},
            passed=None, flags=["inapplicable: gamma > 0 on the oblique patch"],
        )

    sigma = max(1.0, float(np.max(np.linalg.norm(grid.positions[grid.in_domain], axis=1))))
    int_idx = grid.interior_idx
    lhs = float(np.max(np.clip(-u.values[int_idx], 0, None))) if len(int_idx) else 0.0
    d_idx = grid.dirichlet_idx
    dirichlet_term = (
        float(np.max(np.clip(-u.values[d_idx], 0, None))) if len(d_idx) else 0.0
    )
    g_term = float(np.max(np.clip(problem.rows.g, 0, None))) if len(problem.rows.g) else 0.0

    vmin = GridField(grid, np.minimum(u.values, 0.0) * grid.in_domain)
    env = convex_envelope(vmin)
    contact_interior = env.contact_mask & (grid.classes == NodeClass.INTERIOR)
    f_plus = np.clip(problem.f, 0, None)
    h_eff = grid.h / sigma
    f_contact_ln = float(
        np.sqrt(np.sum(f_plus[contact_interior] ** 2) * h_eff**2)
    )
    n_mask = int(grid.in_domain.sum())
    contact_fraction = float(env.contact_mask.sum()) / n_mask if n_mask else 0.0

    delta1 = one_direction_constant(problem.rows.beta) if len(problem.rows.beta) else 0.0

    numerator = max(lhs - dirichlet_term, 0.0)
    denominator = sigma * g_term + sigma * f_contact_ln
    if denominator > 0:
        c_emp = numerator / denominator
    else:
        c_emp = 0.0
        if numerator <= 0:
            flags.append("bound_trivial")
        else:
            c_emp = float("inf")
            flags.append("unbounded: zero data with negative minimum")
    return AuditReport(
        kind="abp",
        values={
            "lhs": lhs,
            "dirichlet_term": dirichlet_term,
            "g_term": g_term,
            "f_contact_ln": f_contact_ln,
            "c_emp": c_emp,
            "contact_fraction": contact_fraction,
            "delta1": delta1,
            "rescale": sigma,
            "envelope_sweeps": env.sweeps,
        },
        passed=np.isfinite(c_emp),
        flags=flags,
    )
