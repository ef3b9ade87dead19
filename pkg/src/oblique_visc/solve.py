"""Solvers for the discrete oblique problem.

Two routes by design. Pseudo-time marching relaxes u by the residual with a
step obeying the CFL bound derived from the assembled frame weights, so each
sweep is a monotone (Jacobi-style, double-buffered) contraction; it works
for every operator kind and serves as ground truth. Policy iteration
(Howard's method) freezes the maximizing frame/member per node, solves the
resulting sparse linear system directly, and repeats; it requires the
max-form (convex) kinds and is the fast production path. Their agreement is
itself an audit of discrete uniqueness.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .discretize import (
    DiscreteProblem,
    GridField,
    NodeClass,
    full_residual,
    interior_residuals,
    oblique_residuals,
    _one_sided_second_difference,
    _second_differences,
)


@dataclass
class SolveReport:
    method: str
    iterations: int
    final_residual: float
    converged: bool
    tolerance: float
    wall_ms: float
    history: list = field(default_factory=list)

    def lines(self) -> list[str]:
        return [
            f"iterations={self.iterations}",
            f"final_residual={self.final_residual:.17g}",
            f"method={self.method}",
            f"converged={int(self.converged)}",
            f"tolerance={self.tolerance:.17g}",
        ]


def default_tolerance(problem: DiscreteProblem) -> float:
    """Scale-invariant stopping tolerance 1e-8 (1 + |f| + |g| + |phi|)."""
    scale = 1.0
    if len(problem.f):
        scale += float(np.max(np.abs(problem.f[problem.grid.interior_idx])))
    if len(problem.rows.g):
        scale += float(np.max(np.abs(problem.rows.g)))
    if len(problem.dirichlet):
        scale += float(np.max(np.abs(problem.dirichlet)))
    return 1e-8 * scale


def _interior_diag_bound(problem: DiscreteProblem) -> float:
    """Upper bound on |d(row)/d(u0)| over interior rows, from assembled weights."""
    grid = problem.grid
    len2 = (grid.directions[:, 0] ** 2 + grid.directions[:, 1] ** 2) * grid.h**2
    op = problem.operator
    if op.kind in ("pucci_plus", "pucci_minus"):
        worst = max(2.0 / len2[a] + 2.0 / len2[b] for a, b in grid.frames)
        return op.ellipticity.Lam * worst
    bound = 0.0
    weight_sets = list(problem.member_weights)
    if problem.coeff_per_column is not None:
        weight_sets += list(problem.coeff_per_column.values())
    for w in weight_sets:
        bound = max(bound, float(np.sum(2.0 * w / len2)))
    if problem.drift is not None:
        bound += float(np.max(np.abs(problem.drift))) / grid.h
    return bound


def cfl_dt(problem: DiscreteProblem) -> float:
    return 1.0 / _interior_diag_bound(problem)


def _oblique_dt(problem: DiscreteProblem) -> np.ndarray:
    """Per-node stable step for the boundary relaxation."""
    r = problem.rows
    own = r.idx
    if r.order == 1:
        self_w = np.einsum(
            "mc,mc->m", r.interp_w[0], (r.interp_idx[0] == own[:, None]).astype(float)
        )
        transport = r.beta_norm * (1.0 - self_w) / r.s
    else:
        w1 = np.einsum(
            "mc,mc->m", r.interp_w[0], (r.interp_idx[0] == own[:, None]).astype(float)
        )
        w2 = np.einsum(
            "mc,mc->m", r.interp_w[1], (r.interp_idx[1] == own[:, None]).astype(float)
        )
        transport = r.beta_norm * (3.0 - 4.0 * w1 + w2) / (2 * r.s)
    return 0.9 / (np.abs(transport) + np.abs(r.gamma) + 1e-300)


def _residual_norm(problem: DiscreteProblem, u: np.ndarray) -> float:
    """Max residual over non-Dirichlet rows."""
    ri = interior_residuals(problem, u)
    ro = oblique_residuals(problem, u)
    ni = float(np.max(np.abs(ri))) if len(ri) else 0.0
    no = float(np.max(np.abs(ro))) if len(ro) else 0.0
    return max(ni, no)


def _initial_field(problem: DiscreteProblem, u0) -> np.ndarray:
    if u0 is None:
        u = np.zeros(problem.grid.n_nodes)
    else:
        u0.assert_finite("initial guess")
        u = u0.values.copy()
    u[problem.grid.dirichlet_idx] = problem.dirichlet
    return u


def solve_pseudo_time(
    problem: DiscreteProblem,
    u0: GridField | None = None,
    tol: float | None = None,
    max_iter: int = 400000,
    check_every: int = 25,
):
    """March u by +dt * residual until the residual drops below tol.

    Interior nodes use the CFL step from the assembled weights, oblique
    nodes a per-row step; Dirichlet nodes are assigned exactly. The update
    is nondecreasing in every neighbor value, hence a sup-norm contraction
    toward the unique discrete fixed point.
    """
    t0 = time.perf_counter()
    tol = default_tolerance(problem) if tol is None else float(tol)
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    u = _initial_field(problem, u0)
    grid = problem.grid
    int_idx, obl_idx = grid.interior_idx, problem.rows.idx
    dt = cfl_dt(problem)
    dtb = _oblique_dt(problem)

    history = [_residual_norm(problem, u)]
    if history[0] <= tol:
        return GridField(grid, u), _finalize(
            problem, u, "pseudo_time", 0, True, tol, t0, history
        )
    it = 0
    while it < max_iter:
        for _ in range(check_every):
            ri = interior_residuals(problem, u)
            ro = oblique_residuals(problem, u)
            un = u.copy()
            un[int_idx] = u[int_idx] + dt * ri
            un[obl_idx] = u[obl_idx] + dtb * ro
            u = un
            it += 1
        if not np.all(np.isfinite(u[grid.in_domain])):
            raise FloatingPointError("pseudo-time iteration produced non-finite values")
        res = _residual_norm(problem, u)
        history.append(res)
        if res <= tol:
            return GridField(grid, u), _finalize(
                problem, u, "pseudo_time", it, True, tol, t0, history
            )
    return GridField(grid, u), _finalize(
        problem, u, "pseudo_time", it, False, tol, t0, history
    )


def _finalize(problem, u, method, iterations, converged, tol, t0, history):
    _, norms = full_residual(problem, GridField(problem.grid, u))
    final = max(norms["interior"], norms["oblique"])
    return SolveReport(
        method=method,
        iterations=iterations,
        final_residual=final,
        converged=converged,
        tolerance=tol,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        history=history,
    )


def _select_policy(problem: DiscreteProblem, u: np.ndarray):
    """Frozen linearization of the max-form interior rows at the current iterate."""
    op = problem.operator
    diffs = _second_differences(problem, u)
    if op.kind == "pucci_plus":
        e = op.ellipticity
        g = e.Lam * np.clip(diffs, 0, None) + e.lam * np.clip(diffs, None, 0)
        frame_vals = np.stack(
            [
                np.where(problem.frame_avail[fi], g[a] + g[b], -np.inf)
                for fi, (a, b) in enumerate(problem.grid.frames)
            ],
            axis=0,
        )
        best = np.argmax(frame_vals, axis=0)
        frames = np.array(problem.grid.frames)
        dirs = frames[best].T  # (2, n_int)
        mus = np.where(
            np.nan_to_num(diffs[dirs, np.arange(diffs.shape[1])]) >= 0, e.Lam, e.lam
        )
        return ("pucci", dirs, mus)
    if op.kind == "bellman":
        vals = np.stack(
            [
                _sum_weighted(problem, diffs, w, u) + ck
                for w, ck in zip(problem.member_weights, problem.member_constants)
            ],
            axis=0,
        )
        return ("bellman", np.argmax(vals, axis=0))
    return ("linear",)


def _sum_weighted(problem, diffs, weights, u):
    from .discretize import _linear_from_diffs

    return _linear_from_diffs(problem, diffs, weights, u)


def _assemble(problem: DiscreteProblem, policy):
    """Sparse system A u = b whose rows are the frozen residual rows = 0."""
    grid = problem.grid
    sysidx = -np.ones(grid.n_nodes, dtype=np.int64)
    nodes = np.flatnonzero(grid.in_domain)
    sysidx[nodes] = np.arange(len(nodes))
    n_sys = len(nodes)
    len2 = (grid.directions[:, 0] ** 2 + grid.directions[:, 1] ** 2) * grid.h**2

    rows_l, cols_l, vals_l = [], [], []
    rhs = np.zeros(n_sys)
    int_idx = grid.interior_idx
    r_int = sysidx[int_idx]
    op = problem.operator
    rhs[r_int] = problem.f[int_idx] - op.f0

    def add(r, c, v):
        rows_l.append(r)
        cols_l.append(c)
        vals_l.append(v)

    def add_direction_rows(sel, k, w):
        """w * (u+ - 2u0 + u-)/len2 at interior nodes sel (boolean over int_idx)."""
        nodes_k = int_idx[sel]
        w_arr = np.broadcast_to(np.asarray(w, dtype=float), nodes_k.shape)
        avail = problem.dir_avail[k][sel]
        reg = nodes_k[avail]
        if len(reg):
            wk = w_arr[avail]
            add(sysidx[reg], sysidx[grid.nbp[k][reg]], wk / len2[k])
            add(sysidx[reg], sysidx[grid.nbm[k][reg]], wk / len2[k])
            add(sysidx[reg], sysidx[reg], -2 * wk / len2[k])
        for node, wv in zip(nodes_k[~avail], w_arr[~avail]):
            _add_one_sided(problem, add, sysidx, node, k, len2[k], float(wv))

    if policy[0] == "pucci":
        dirs, mus = policy[1], policy[2]
        for k in range(len(grid.directions)):
            for slot in range(2):
                sel = dirs[slot] == k
                if sel.any():
                    add_direction_rows(sel, k, mus[slot][sel])
    elif policy[0] == "bellman":
        member = policy[1]
        rhs[r_int] -= problem.member_constants[member]
        for m, w in enumerate(problem.member_weights):
            msel = member == m
            if not msel.any():
                continue
            for k in range(len(grid.directions)):
                if w[k] > 1e-14:
                    add_direction_rows(msel, k, w[k])
    else:
        if problem.coeff_per_column is None:
            w = problem.member_weights[0]
            all_sel = np.ones(len(int_idx), dtype=bool)
            for k in range(len(grid.directions)):
                if w[k] > 1e-14:
                    add_direction_rows(all_sel, k, w[k])
        else:
            cols = np.round(
                (grid.positions[int_idx, 0] - grid.origin[0]) / grid.h
            ).astype(int)
            for ic, w in problem.coeff_per_column.items():
                csel = cols == ic
                if not csel.any():
                    continue
                for k in range(len(grid.directions)):
                    if w[k] > 1e-14:
                        add_direction_rows(csel, k, w[k])
        if problem.drift is not None:
            _add_drift_rows(problem, add, sysidx)

    r = problem.rows
    r_obl = sysidx[r.idx]
    if r.order == 1:
        a = r.beta_norm / r.s
        add(r_obl, r_obl, -a + r.gamma)
        _add_interp(add, sysidx, grid, r_obl, r.interp_idx[0], r.interp_w[0], a)
    else:
        a = r.beta_norm / (2 * r.s)
        add(r_obl, r_obl, -3 * a + r.gamma)
        _add_interp(add, sysidx, grid, r_obl, r.interp_idx[0], r.interp_w[0], 4 * a)
        _add_interp(add, sysidx, grid, r_obl, r.interp_idx[1], r.interp_w[1], -a)
    rhs[r_obl] = r.g

    d_idx = grid.dirichlet_idx
    add(sysidx[d_idx], sysidx[d_idx], np.ones(len(d_idx)))
    rhs[sysidx[d_idx]] = problem.dirichlet

    rows_a = np.concatenate([np.atleast_1d(x) for x in rows_l])
    cols_a = np.concatenate([np.atleast_1d(x) for x in cols_l])
    vals_a = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in vals_l])
    A = sp.coo_matrix((vals_a, (rows_a, cols_a)), shape=(n_sys, n_sys)).tocsr()
    return A, rhs, sysidx, nodes


def _add_interp(add, sysidx, grid, row_ids, corners, weights, coef):
    for c in range(4):
        w = weights[:, c] * coef
        col = corners[:, c]
        ok = (np.abs(w) > 1e-14) & (grid.classes[col] != NodeClass.EXTERIOR)
        if ok.any():
            add(row_ids[ok], sysidx[col[ok]], w[ok])


def _add_drift_rows(problem, add, sysidx):
    grid = problem.grid
    idx = grid.interior_idx
    k_up = next(i for i, d in enumerate(grid.directions) if tuple(d) == (0, 1))
    b = problem.drift
    p = grid.nbp[k_up][idx]
    m = grid.nbm[k_up][idx]
    up = (b > 0) & (p >= 0)
    dn = (b <= 0) & (m >= 0) & (b != 0)
    r = sysidx[idx]
    if up.any():
        add(r[up], sysidx[p[up]], b[up] / grid.h)
        add(r[up], r[up], -b[up] / grid.h)
    if dn.any():
        add(r[dn], r[dn], b[dn] / grid.h)
        add(r[dn], sysidx[m[dn]], -b[dn] / grid.h)


def _add_one_sided(problem, add, sysidx, node, k, len2_k, w):
    grid = problem.grid
    for nb_arr in (grid.nbm, grid.nbp):
        nb1 = nb_arr[k][node]
        nb2 = nb_arr[k][nb1] if nb1 >= 0 else -1
        if (
            nb1 >= 0 and nb2 >= 0
            and grid.classes[nb1] != NodeClass.EXTERIOR
            and grid.classes[nb2] != NodeClass.EXTERIOR
        ):
            add(np.array([sysidx[node]]), np.array([sysidx[node]]), np.array([w / len2_k]))
            add(np.array([sysidx[node]]), np.array([sysidx[nb1]]), np.array([-2 * w / len2_k]))
            add(np.array([sysidx[node]]), np.array([sysidx[nb2]]), np.array([w / len2_k]))
            return
    raise ValueError(f"no usable one-sided stencil at node {node}")


def solve_policy_iteration(
    problem: DiscreteProblem,
    u0: GridField | None = None,
    tol: float | None = None,
    max_iter: int = 100,
):
    """Howard iteration: freeze the maximizing policy, solve, repeat.

    Restricted to the max-form kinds (linear, bellman, pucci_plus); the
    linear kind converges in a single outer solve. A singular policy system
    signals a monotonicity violation and is raised as a bug condition.
    """
    op = problem.operator
    if op.kind not in ("linear", "bellman", "pucci_plus"):
        raise ValueError(f"policy iteration needs a max-form operator, got {op.kind}")
    t0 = time.perf_counter()
    tol = default_tolerance(problem) if tol is None else float(tol)
    u = _initial_field(problem, u0)
    grid = problem.grid
    history = [_residual_norm(problem, u)]
    if history[0] <= tol:
        return GridField(grid, u), _finalize(
            problem, u, "policy_iteration", 0, True, tol, t0, history
        )
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        policy = _select_policy(problem, u)
        A, rhs, sysidx, nodes = _assemble(problem, policy)
        try:
            sol = spsolve(A.tocsc(), rhs)
        except RuntimeError as err:  # pragma: no cover - bug condition
            raise RuntimeError(f"singular policy system (monotonicity bug): {err}")
        if not np.all(np.isfinite(sol)):
            raise RuntimeError("singular policy system (monotonicity bug)")
        u = np.zeros(grid.n_nodes)
        u[nodes] = sol
        res = _residual_norm(problem, u)
        history.append(res)
        if res <= tol:
            converged = True
            break
        if op.kind == "linear":
            converged = res <= 10 * tol
            break
    return GridField(grid, u), _finalize(
        problem, u, "policy_iteration", it, converged, tol, t0, history
    )


def solve(problem: DiscreteProblem, method: str = "policy", **kw):
    if method in ("policy", "policy_iteration"):
        return solve_policy_iteration(problem, **kw)
    if method in ("pseudo", "pseudo_time"):
        return solve_pseudo_time(problem, **kw)
    raise ValueError(f"unknown method {method!r}")
