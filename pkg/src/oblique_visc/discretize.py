"""Monotone finite-difference discretization on a uniform grid.

Nodes of the bounding-box lattice are classified by signed distance:
interior (d <= -h/2), boundary band (|d| < h/2, snapped to the nearest
boundary point and split oblique/Dirichlet by the patch predicates), or
exterior. Interior rows use a wide-stencil frame scheme: directional second
differences along lattice directions grouped into orthogonal frames.
Extremal operators take a max/min of eigenvalue-weighted frame sums, linear
and Bellman operators use a nonnegative frame decomposition of each
coefficient matrix, so every interior row is nondecreasing in its neighbor
values. Oblique rows difference upwind into the domain along beta with
bilinear interpolation (weights >= 0); Dirichlet rows pin values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.optimize import nnls

from .geometry import Domain, ObliqueField
from .operators import OperatorSpec

DIRECTIONS_NARROW = ((1, 0), (0, 1), (1, -1), (1, 1))
DIRECTIONS_WIDE = DIRECTIONS_NARROW + ((2, 1), (1, 2), (2, -1), (1, -2))

_BAND_EPS = 1e-9


class NodeClass(IntEnum):
    EXTERIOR = 0
    INTERIOR = 1
    OBLIQUE = 2
    DIRICHLET = 3


CLASS_NAMES = {
    NodeClass.EXTERIOR: "exterior",
    NodeClass.INTERIOR: "interior",
    NodeClass.OBLIQUE: "oblique",
    NodeClass.DIRICHLET: "dirichlet",
}


def _orthogonal_frames(directions) -> tuple:
    dirs = [np.array(d) for d in directions]
    frames = []
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            if dirs[i] @ dirs[j] == 0:
                frames.append((i, j))
    return tuple(frames)


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over the domain bounding box with node classification."""

    domain: Domain
    h: float
    nx: int
    ny: int
    origin: np.ndarray
    positions: np.ndarray  # (N, 2) lattice positions
    snapped: np.ndarray  # (N, 2); boundary nodes carry their nearest boundary point
    classes: np.ndarray  # (N,) NodeClass values
    directions: np.ndarray  # (K, 2) integer lattice directions
    frames: tuple  # index pairs of orthogonal directions
    nbp: np.ndarray  # (K, N) flat index of node + direction, -1 outside the box
    nbm: np.ndarray  # (K, N) flat index of node - direction

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def interior_idx(self) -> np.ndarray:
        return np.flatnonzero(self.classes == NodeClass.INTERIOR)

    @property
    def oblique_idx(self) -> np.ndarray:
        return np.flatnonzero(self.classes == NodeClass.OBLIQUE)

    @property
    def dirichlet_idx(self) -> np.ndarray:
        return np.flatnonzero(self.classes == NodeClass.DIRICHLET)

    @property
    def in_domain(self) -> np.ndarray:
        return self.classes != NodeClass.EXTERIOR

    def flat_index(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    def direction_length(self, k: int) -> float:
        d = self.directions[k]
        return float(np.hypot(d[0], d[1]) * self.h)


def build_grid(domain: Domain, h: float, stencil: str = "wide") -> Grid:
    """Lay a lattice of spacing h over the bounding box and classify nodes."""
    if h <= 0:
        raise ValueError("spacing must be positive")
    lo, hi = domain.bounding_box
    span = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    if np.max(span) / h < 8 - 1e-12:
        raise ValueError(f"grid too coarse: fewer than 8 nodes across the diameter at h={h}")
    nx = int(np.ceil(span[0] / h - 1e-9)) + 1
    ny = int(np.ceil(span[1] / h - 1e-9)) + 1
    origin = np.asarray(lo, dtype=float)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    positions = origin + h * np.stack([ii.ravel(), jj.ravel()], axis=1)

    d = domain.signed_distance(positions)
    classes = np.full(nx * ny, NodeClass.EXTERIOR, dtype=np.uint8)
    classes[d <= -h / 2] = NodeClass.INTERIOR
    band = (d > -h / 2) & (d < h / 2 * (1 + _BAND_EPS))
    snapped = positions.copy()
    if band.any():
        proj = domain.project_to_boundary(positions[band])
        snapped[band] = proj
        on_gamma = domain.oblique_patch(proj)
        band_idx = np.flatnonzero(band)
        classes[band_idx[on_gamma]] = NodeClass.OBLIQUE
        classes[band_idx[~on_gamma]] = NodeClass.DIRICHLET
    if not (classes == NodeClass.INTERIOR).any():
        raise ValueError("domain degenerate: no interior nodes at this spacing")

    if stencil == "wide":
        directions = np.array(DIRECTIONS_WIDE)
    elif stencil == "narrow":
        directions = np.array(DIRECTIONS_NARROW)
    else:
        raise ValueError(f"unknown stencil {stencil!r}")
    frames = _orthogonal_frames(directions)

    K = len(directions)
    nbp = np.full((K, nx * ny), -1, dtype=np.int64)
    nbm = np.full((K, nx * ny), -1, dtype=np.int64)
    for k, (dx, dy) in enumerate(directions):
        ip, jp = ii + dx, jj + dy
        ok = (ip >= 0) & (ip < nx) & (jp >= 0) & (jp < ny)
        nbp[k][ok.ravel()] = (ip * ny + jp).ravel()[ok.ravel()]
        im, jm = ii - dx, jj - dy
        ok = (im >= 0) & (im < nx) & (jm >= 0) & (jm < ny)
        nbm[k][ok.ravel()] = (im * ny + jm).ravel()[ok.ravel()]

    return Grid(
        domain=domain, h=h, nx=nx, ny=ny, origin=origin,
        positions=positions, snapped=snapped, classes=classes,
        directions=directions, frames=frames, nbp=nbp, nbm=nbm,
    )


@dataclass
class GridField:
    """Scalar values on the grid nodes (exterior entries are zero and unused)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError("value count must equal node count")

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridField":
        vals = np.zeros(grid.n_nodes)
        mask = grid.in_domain
        vals[mask] = fn(grid.positions[mask])
        return cls(grid, vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.n_nodes))

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy())

    def assert_finite(self, what: str = "field"):
        if not np.all(np.isfinite(self.values[self.grid.in_domain])):
            raise ValueError(f"{what} contains non-finite values")

    def max_norm(self, mask=None) -> float:
        m = self.grid.in_domain if mask is None else mask
        return float(np.max(np.abs(self.values[m]))) if m.any() else 0.0


def frame_decomposition(A: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Nonnegative weights w with sum_k w_k e_k e_k^T = A over unit directions.

    Solved as a tiny nonnegative least squares problem; an inexact fit means
    the anisotropy of A exceeds the angular resolution of the stencil.
    """
    A = np.asarray(A, dtype=float)
    unit = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    basis = np.stack([unit[:, 0] ** 2, unit[:, 1] ** 2, unit[:, 0] * unit[:, 1]], axis=0)
    target = np.array([A[0, 0], A[1, 1], A[0, 1]])
    w, rnorm = nnls(basis, target)
    if rnorm > 1e-10 * max(1.0, np.abs(target).max()):
        raise ValueError(
            "coefficient matrix not representable with nonnegative weights on this stencil"
        )
    return w


@dataclass
class _ObliqueRows:
    """Precomputed upwind structure of the oblique-boundary rows."""

    idx: np.ndarray  # node indices
    beta: np.ndarray  # (m, 2) sampled at snapped points
    beta_norm: np.ndarray
    gamma: np.ndarray
    g: np.ndarray
    s: np.ndarray  # upwind step per node
    order: int
    interp_idx: list  # per interpolation point: (m, 4) corner flat indices
    interp_w: list  # per interpolation point: (m, 4) bilinear weights


@dataclass
class DiscreteProblem:
    """Grid, operator and data with one residual row kind per node."""

    grid: Grid
    operator: OperatorSpec
    oblique: ObliqueField
    f: np.ndarray  # per-node right-hand side samples (used at interior rows)
    dirichlet: np.ndarray  # values at dirichlet nodes (same order as dirichlet_idx)
    rows: _ObliqueRows
    member_weights: list = field(default_factory=list)  # frame weights per linear/bellman member
    member_constants: np.ndarray | None = None
    frame_avail: np.ndarray | None = None  # (F, n_int) usable frames at interior nodes
    dir_avail: np.ndarray | None = None  # (K, n_int)
    drift: np.ndarray | None = None  # optional vertical drift coefficient at interior nodes
    coeff_per_column: dict | None = None  # column index -> frame weights (x-dependent linear)
    flags: list = field(default_factory=list)
    dirichlet_sampling: str = "snapped"

    @property
    def h(self) -> float:
        return self.grid.h


def _bilinear(grid: Grid, q: np.ndarray):
    """Corner indices and weights of bilinear interpolation at points q."""
    t = (q - grid.origin) / grid.h
    i0 = np.clip(np.floor(t[:, 0] + 1e-12).astype(int), 0, grid.nx - 2)
    j0 = np.clip(np.floor(t[:, 1] + 1e-12).astype(int), 0, grid.ny - 2)
    tx = t[:, 0] - i0
    ty = t[:, 1] - j0
    corners = np.stack(
        [
            grid.flat_index(i0, j0),
            grid.flat_index(i0 + 1, j0),
            grid.flat_index(i0, j0 + 1),
            grid.flat_index(i0 + 1, j0 + 1),
        ],
        axis=1,
    )
    weights = np.stack(
        [(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1
    )
    return corners, weights


_INWARD_CANDIDATES = np.array(
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
)


def _build_oblique_rows(grid: Grid, oblique: ObliqueField, order: int) -> _ObliqueRows:
    idx = grid.oblique_idx
    pts = grid.snapped[idx]
    beta = np.atleast_2d(oblique.beta(pts))
    bnorm = np.linalg.norm(beta, axis=1)
    if np.any(bnorm < 1e-14):
        raise ValueError("oblique row with vanishing beta")
    bhat = beta / bnorm[:, None]
    gamma = np.asarray(oblique.gamma(pts), dtype=float)
    g = np.asarray(oblique.g(pts), dtype=float)

    unit = _INWARD_CANDIDATES / np.linalg.norm(_INWARD_CANDIDATES, axis=1, keepdims=True)
    align = bhat @ unit.T
    best = np.argmax(align, axis=1)
    if np.any(align[np.arange(len(idx)), best] < 0.5):
        k = int(np.argmin(align[np.arange(len(idx)), best]))
        raise ValueError(
            f"no inward lattice direction within 60 degrees of beta at node "
            f"({pts[k, 0]:.6g}, {pts[k, 1]:.6g})"
        )
    s = grid.h * np.linalg.norm(_INWARD_CANDIDATES[best], axis=1)

    x0 = grid.positions[idx]
    n_pts = order  # one interpolation point per upwind level
    interp_idx, interp_w = [], []
    classes = grid.classes
    for level in range(1, n_pts + 1):
        s_lvl = s.copy()
        for attempt in range(4):
            q = x0 + (level * s_lvl)[:, None] * bhat
            corners, weights = _bilinear(grid, q)
            bad = (classes[corners] == NodeClass.EXTERIOR) & (weights > 1e-12)
            bad_nodes = bad.any(axis=1)
            if not bad_nodes.any():
                break
            if attempt == 3:
                k = int(np.flatnonzero(bad_nodes)[0])
                raise ValueError(
                    f"upwind interpolation leaves the domain near "
                    f"({x0[k, 0]:.6g}, {x0[k, 1]:.6g})"
                )
            s_lvl[bad_nodes] *= 0.5
        if level == 1:
            s = s_lvl
        interp_idx.append(corners)
        interp_w.append(weights)

    return _ObliqueRows(
        idx=idx, beta=beta, beta_norm=bnorm, gamma=gamma, g=g, s=s,
        order=order, interp_idx=interp_idx, interp_w=interp_w,
    )


def discretize(
    domain: Domain,
    operator: OperatorSpec,
    oblique: ObliqueField,
    f,
    dirichlet_data,
    h: float,
    stencil: str = "wide",
    oblique_order: int = 1,
    dirichlet_sampling: str = "snapped",
    coefficient_field=None,
    drift_field=None,
) -> DiscreteProblem:
    """Assemble the discrete problem for F(D^2 u) = f with oblique data.

    f and dirichlet_data are callables on point arrays. By default boundary
    data is sampled at the snapped boundary points; dirichlet_sampling="node"
    evaluates the (extended) data expression at the lattice node instead,
    which manufactured-solution studies use to remove the O(h) snapping
    mismatch on curved arcs. coefficient_field/drift_field supply an
    x-dependent coefficient matrix and vertical drift for the linear kind
    (the flattened form of a curved-boundary problem).
    """
    if oblique_order not in (1, 2):
        raise ValueError("oblique_order must be 1 or 2")
    if dirichlet_sampling not in ("snapped", "node"):
        raise ValueError("dirichlet_sampling must be 'snapped' or 'node'")
    grid = build_grid(domain, h, stencil=stencil)
    rows = _build_oblique_rows(grid, oblique, oblique_order)

    f_vals = np.zeros(grid.n_nodes)
    mask = grid.in_domain
    f_vals[mask] = np.asarray(f(grid.positions[mask]), dtype=float)

    didx = grid.dirichlet_idx
    dpts = grid.snapped[didx] if dirichlet_sampling == "snapped" else grid.positions[didx]
    dvals = np.asarray(dirichlet_data(dpts), dtype=float)

    K = len(grid.directions)
    int_idx = grid.interior_idx
    dir_avail = np.zeros((K, len(int_idx)), dtype=bool)
    for k in range(K):
        p = grid.nbp[k][int_idx]
        m = grid.nbm[k][int_idx]
        ok = (p >= 0) & (m >= 0)
        ok[ok] &= (grid.classes[p[ok]] != NodeClass.EXTERIOR) & (
            grid.classes[m[ok]] != NodeClass.EXTERIOR
        )
        dir_avail[k] = ok
    frame_avail = np.stack(
        [dir_avail[a] & dir_avail[b] for a, b in grid.frames], axis=0
    )
    if not frame_avail.any(axis=0).all():
        raise ValueError("interior node without a usable orthogonal frame")

    member_weights: list = []
    member_constants = None
    flags: list = []
    drift = None
    coeff_per_column = None
    if operator.kind == "linear" and coefficient_field is None:
        member_weights = [frame_decomposition(operator.A, grid.directions)]
        member_constants = np.array([0.0])
    elif operator.kind == "linear":
        pos = grid.positions[int_idx]
        coeff_per_column = {}
        cols = np.unique(np.round((pos[:, 0] - grid.origin[0]) / h).astype(int))
        for ic in cols:
            x1 = grid.origin[0] + ic * h
            Ak = coefficient_field(np.array([[x1, 0.0]]))[0]
            coeff_per_column[int(ic)] = frame_decomposition(Ak, grid.directions)
        if drift_field is not None:
            drift = np.asarray(drift_field(pos), dtype=float)
    elif operator.kind == "bellman":
        member_weights = [frame_decomposition(Ak, grid.directions) for Ak, _ in operator.members]
        member_constants = np.array([ck for _, ck in operator.members])

    needed = None
    if member_weights:
        needed = np.any(np.stack(member_weights) > 1e-14, axis=0)
    elif coeff_per_column is not None:
        needed = np.any(
            np.stack(list(coeff_per_column.values())) > 1e-14, axis=0
        )
    if needed is not None:
        missing = needed[:, None] & ~dir_avail
        if missing.any():
            flags.append(f"one_sided_fallback_nodes={int(missing.any(axis=0).sum())}")

    return DiscreteProblem(
        grid=grid, operator=operator, oblique=oblique, f=f_vals,
        dirichlet=dvals, rows=rows, member_weights=member_weights,
        member_constants=member_constants, frame_avail=frame_avail,
        dir_avail=dir_avail, drift=drift, coeff_per_column=coeff_per_column,
        flags=flags, dirichlet_sampling=dirichlet_sampling,
    )


def _second_differences(problem: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """All directional second differences at interior nodes, NaN if unusable."""
    grid = problem.grid
    idx = grid.interior_idx
    K = len(grid.directions)
    out = np.full((K, len(idx)), np.nan)
    len2 = (grid.directions[:, 0] ** 2 + grid.directions[:, 1] ** 2) * grid.h**2
    for k in range(K):
        ok = problem.dir_avail[k]
        p = grid.nbp[k][idx[ok]]
        m = grid.nbm[k][idx[ok]]
        out[k][ok] = (u[p] - 2 * u[idx[ok]] + u[m]) / len2[k]
    return out


def directional_second_difference(problem: DiscreteProblem, u: "GridField", node: int, k: int) -> float:
    """(u(x+ke) - 2u(x) + u(x-ke)) / |ke|^2 along grid direction k at one node."""
    grid = problem.grid
    if grid.classes[node] != NodeClass.INTERIOR:
        raise ValueError("second differences are defined at interior nodes")
    pos = np.flatnonzero(grid.interior_idx == node)
    if len(pos) == 0:
        raise ValueError("node is not interior")
    val = _second_differences(problem, u.values)[k, pos[0]]
    if not np.isfinite(val):
        raise ValueError("neighbor unresolvable along this direction")
    return float(val)


def _pucci_from_diffs(problem: DiscreteProblem, diffs: np.ndarray, kind: str) -> np.ndarray:
    e = problem.operator.ellipticity
    if kind == "pucci_plus":
        g = e.Lam * np.clip(diffs, 0, None) + e.lam * np.clip(diffs, None, 0)
        fill = -np.inf
    else:
        g = e.lam * np.clip(diffs, 0, None) + e.Lam * np.clip(diffs, None, 0)
        fill = np.inf
    frame_vals = np.stack(
        [
            np.where(problem.frame_avail[fi], g[a] + g[b], fill)
            for fi, (a, b) in enumerate(problem.grid.frames)
        ],
        axis=0,
    )
    return frame_vals.max(axis=0) if kind == "pucci_plus" else frame_vals.min(axis=0)


def _linear_from_diffs(problem: DiscreteProblem, diffs: np.ndarray, weights: np.ndarray, u=None):
    """sum_k w_k * Delta_k with one-sided substitution where a direction is missing."""
    vals = np.zeros(diffs.shape[1])
    grid = problem.grid
    idx = grid.interior_idx
    len2 = (grid.directions[:, 0] ** 2 + grid.directions[:, 1] ** 2) * grid.h**2
    for k in range(len(grid.directions)):
        if weights[k] <= 1e-14:
            continue
        dk = diffs[k].copy()
        missing = ~problem.dir_avail[k]
        if missing.any():
            if u is None:
                raise ValueError("one-sided fallback requires node values")
            dk[missing] = _one_sided_second_difference(grid, u, idx[missing], k, len2[k])
        vals += weights[k] * dk
    return vals


def _one_sided_second_difference(grid: Grid, u: np.ndarray, nodes: np.ndarray, k: int, len2: float):
    """Shifted three-point second difference using two steps on one side."""
    out = np.empty(len(nodes))
    for i, node in enumerate(nodes):
        for nb1_arr, nb2_query in ((grid.nbm, grid.nbm), (grid.nbp, grid.nbp)):
            nb1 = nb1_arr[k][node]
            nb2 = nb2_query[k][nb1] if nb1 >= 0 else -1
            if (
                nb1 >= 0 and nb2 >= 0
                and grid.classes[nb1] != NodeClass.EXTERIOR
                and grid.classes[nb2] != NodeClass.EXTERIOR
            ):
                out[i] = (u[node] - 2 * u[nb1] + u[nb2]) / len2
                break
        else:
            raise ValueError(f"no usable second difference at node {node} direction {k}")
    return out


def interior_residuals(problem: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """F_h[u] - f at every interior node (vectorized)."""
    op = problem.operator
    diffs = _second_differences(problem, u)
    idx = problem.grid.interior_idx
    if op.kind in ("pucci_plus", "pucci_minus"):
        fh = _pucci_from_diffs(problem, diffs, op.kind) + op.f0
    elif op.kind == "linear" and problem.coeff_per_column is None:
        fh = _linear_from_diffs(problem, diffs, problem.member_weights[0], u) + op.f0
    elif op.kind == "linear":
        fh = np.zeros(len(idx)) + op.f0
        cols = np.round(
            (problem.grid.positions[idx, 0] - problem.grid.origin[0]) / problem.grid.h
        ).astype(int)
        for ic, w in problem.coeff_per_column.items():
            sel = cols == ic
            if sel.any():
                sub = _linear_from_diffs_subset(problem, diffs, w, sel, u)
                fh[sel] += sub
        if problem.drift is not None:
            fh += _upwind_drift(problem, u)
    else:
        vals = np.stack(
            [
                _linear_from_diffs(problem, diffs, w, u) + ck
                for w, ck in zip(problem.member_weights, problem.member_constants)
            ],
            axis=0,
        )
        fh = vals.max(axis=0) + op.f0
    return fh - problem.f[idx]


def _linear_from_diffs_subset(problem, diffs, weights, sel, u):
    vals = np.zeros(int(sel.sum()))
    grid = problem.grid
    idx = grid.interior_idx[sel]
    len2 = (grid.directions[:, 0] ** 2 + grid.directions[:, 1] ** 2) * grid.h**2
    for k in range(len(grid.directions)):
        if weights[k] <= 1e-14:
            continue
        dk = diffs[k][sel].copy()
        missing = ~problem.dir_avail[k][sel]
        if missing.any():
            dk[missing] = _one_sided_second_difference(grid, u, idx[missing], k, len2[k])
        vals += weights[k] * dk
    return vals


def _upwind_drift(problem: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """b * du/dy2 by first differences upwinded by the sign of b (monotone)."""
    grid = problem.grid
    idx = grid.interior_idx
    k_up = next(i for i, d in enumerate(grid.directions) if tuple(d) == (0, 1))
    b = problem.drift
    out = np.zeros(len(idx))
    up = b > 0
    p = grid.nbp[k_up][idx]
    m = grid.nbm[k_up][idx]
    ok_p = (p >= 0) & (grid.classes[np.clip(p, 0, None)] != NodeClass.EXTERIOR)
    ok_m = (m >= 0) & (grid.classes[np.clip(m, 0, None)] != NodeClass.EXTERIOR)
    sel = up & ok_p
    out[sel] = b[sel] * (u[p[sel]] - u[idx[sel]]) / grid.h
    sel = ~up & ok_m
    out[sel] = b[sel] * (u[idx[sel]] - u[m[sel]]) / grid.h
    return out


def interior_residual(problem: DiscreteProblem, u: "GridField", node: int) -> float:
    grid = problem.grid
    if grid.classes[node] != NodeClass.INTERIOR:
        raise ValueError("node is not interior")
    pos = np.flatnonzero(grid.interior_idx == node)[0]
    return float(interior_residuals(problem, u.values)[pos])


def oblique_residuals(problem: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """beta . D_h u + gamma u - g at every oblique node."""
    r = problem.rows
    u0 = u[r.idx]
    interp = [
        np.einsum("mc,mc->m", r.interp_w[lvl], u[r.interp_idx[lvl]])
        for lvl in range(r.order)
    ]
    if r.order == 1:
        deriv = r.beta_norm * (interp[0] - u0) / r.s
    else:
        deriv = r.beta_norm * (-3 * u0 + 4 * interp[0] - interp[1]) / (2 * r.s)
    return deriv + r.gamma * u0 - r.g


def oblique_residual(problem: DiscreteProblem, u: "GridField", node: int) -> float:
    pos = np.flatnonzero(problem.rows.idx == node)
    if len(pos) == 0:
        raise ValueError("node is not on the oblique patch")
    return float(oblique_residuals(problem, u.values)[pos[0]])


def full_residual(problem: DiscreteProblem, u: "GridField"):
    """Residual field over all rows plus its max norm split by row kind."""
    u.assert_finite("residual input")
    grid = problem.grid
    res = np.zeros(grid.n_nodes)
    ri = interior_residuals(problem, u.values)
    res[grid.interior_idx] = ri
    ro = oblique_residuals(problem, u.values)
    res[problem.rows.idx] = ro
    rd = u.values[grid.dirichlet_idx] - problem.dirichlet
    res[grid.dirichlet_idx] = rd
    norms = {
        "interior": float(np.max(np.abs(ri))) if len(ri) else 0.0,
        "oblique": float(np.max(np.abs(ro))) if len(ro) else 0.0,
        "dirichlet": float(np.max(np.abs(rd))) if len(rd) else 0.0,
    }
    return GridField(grid, res), norms


def write_field_csv(field: GridField, path):
    grid = field.grid
    with open(path, "w") as fh:
        fh.write(f"# h={grid.h:.17g} nx={grid.nx} ny={grid.ny}\n")
        for idx in range(grid.n_nodes):
            i, j = divmod(idx, grid.ny)
            x, y = grid.positions[idx]
            fh.write(
                f"{i},{j},{x:.17g},{y:.17g},"
                f"{CLASS_NAMES[NodeClass(grid.classes[idx])]},{field.values[idx]:.17g}\n"
            )


def read_field_csv(path, grid: Grid | None = None):
    """Read a field CSV back; returns (header dict, rows array) or a GridField."""
    with open(path) as fh:
        header = fh.readline().strip().lstrip("# ").split()
        meta = dict(kv.split("=") for kv in header)
        vals = []
        for line in fh:
            parts = line.strip().split(",")
            vals.append(float(parts[5]))
    values = np.array(vals)
    if grid is not None:
        return GridField(grid, values)
    return meta, values
