"""Computational domains with an oblique/Dirichlet boundary decomposition.

A Domain is represented by a signed distance function (negative inside),
patch predicates splitting the boundary into a relatively open oblique part
and its Dirichlet complement, an exact nearest-boundary projection and an
exact inner normal. Supported shapes: the upper half-disk, spherical caps
(flat base, spherical Dirichlet part) and graph domains bounded below by a
polynomial curve. Everything is immutable and dimension n = 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class CapSpec:
    """Spherical cap with base radius r and height 0 < h <= r.

    The big radius R = (r^2 + h^2) / (2h) satisfies (R-h)^2 + r^2 = R^2; the
    cap is the ball of radius R centered at -(R-h) e_n intersected with the
    upper half plane.
    """

    r: float
    h: float

    def __post_init__(self):
        if not (0 < self.h <= self.r):
            raise ValueError(f"cap needs 0 < h <= r, got r={self.r}, h={self.h}")

    @property
    def big_radius(self) -> float:
        return (self.r**2 + self.h**2) / (2 * self.h)

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, -(self.big_radius - self.h)])


@dataclass(frozen=True)
class Domain:
    kind: str
    signed_distance: Callable[[np.ndarray], np.ndarray]
    bounding_box: tuple
    oblique_patch: Callable[[np.ndarray], np.ndarray]
    project_to_boundary: Callable[[np.ndarray], np.ndarray]
    inner_normal: Callable[[np.ndarray], np.ndarray]
    sample_boundary: Callable
    params: dict = field(default_factory=dict)
    dimension: int = 2

    def dirichlet_patch(self, pts: np.ndarray) -> np.ndarray:
        return ~self.oblique_patch(pts)


def _as_points(x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    return pts[None, :] if pts.ndim == 1 else pts


def sdf_inner_normal(domain: Domain, x, step: float = 1e-6) -> np.ndarray:
    """Inner normal from the signed distance by central differences.

    The signed distance increases outward, so the inner normal is the
    negated, normalized gradient. Exact normals are available on
    `domain.inner_normal`; this generic path exists so the unit-length
    invariant of the distance field itself can be audited.
    """
    pts = _as_points(x)
    grad = np.empty_like(pts)
    for k in range(2):
        dp = pts.copy()
        dm = pts.copy()
        dp[:, k] += step
        dm[:, k] -= step
        grad[:, k] = (domain.signed_distance(dp) - domain.signed_distance(dm)) / (2 * step)
    norm = np.linalg.norm(grad, axis=1, keepdims=True)
    out = -grad / norm
    return out[0] if np.asarray(x).ndim == 1 else out


def sdf_gradient_norm(domain: Domain, x, step: float = 1e-6) -> np.ndarray:
    pts = _as_points(x)
    grad = np.empty_like(pts)
    for k in range(2):
        dp = pts.copy()
        dm = pts.copy()
        dp[:, k] += step
        dm[:, k] -= step
        grad[:, k] = (domain.signed_distance(dp) - domain.signed_distance(dm)) / (2 * step)
    out = np.linalg.norm(grad, axis=1)
    return out[0] if np.asarray(x).ndim == 1 else out


def make_half_disk(radius: float) -> Domain:
    """Upper half-disk {|x| < radius, x2 > 0}.

    The oblique patch is the open flat segment {x2 = 0, |x1| < radius}; the
    Dirichlet patch is the closed arc including the two corner points.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    r = float(radius)

    def sdf(x):
        pts = _as_points(x)
        d = np.maximum(np.linalg.norm(pts, axis=1) - r, -pts[:, 1])
        return d[0] if np.asarray(x).ndim == 1 else d

    def oblique(x):
        pts = _as_points(x)
        on = (np.abs(pts[:, 1]) <= _EDGE_EPS) & (np.abs(pts[:, 0]) < r - _EDGE_EPS)
        return on[0] if np.asarray(x).ndim == 1 else on

    def project(x):
        pts = _as_points(x)
        seg = np.stack([np.clip(pts[:, 0], -r, r), np.zeros(len(pts))], axis=1)
        norms = np.linalg.norm(pts, axis=1)
        safe = np.where(norms > 1e-14, norms, 1.0)
        arc = r * pts / safe[:, None]
        low = arc[:, 1] < 0
        arc[low] = np.stack([np.sign(pts[low, 0] + 1e-300) * r, np.zeros(low.sum())], axis=1)
        arc[norms <= 1e-14] = [0.0, r]
        d_seg = np.linalg.norm(pts - seg, axis=1)
        d_arc = np.linalg.norm(pts - arc, axis=1)
        out = np.where((d_seg <= d_arc)[:, None], seg, arc)
        return out[0] if np.asarray(x).ndim == 1 else out

    def normal(x):
        pts = _as_points(x)
        out = np.zeros_like(pts)
        flat = np.abs(pts[:, 1]) <= _EDGE_EPS
        out[flat] = [0.0, 1.0]
        nrm = np.linalg.norm(pts[~flat], axis=1, keepdims=True)
        out[~flat] = -pts[~flat] / nrm
        return out[0] if np.asarray(x).ndim == 1 else out

    def sample(n, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        # perimeter-weighted mix of segment and arc points
        n_seg = int(round(n * (2 * r) / (2 * r + np.pi * r)))
        xs = rng.uniform(-r, r, size=n_seg)
        seg = np.stack([xs, np.zeros(n_seg)], axis=1)
        th = rng.uniform(0, np.pi, size=n - n_seg)
        arc = r * np.stack([np.cos(th), np.sin(th)], axis=1)
        return np.concatenate([seg, arc], axis=0)

    box = (np.array([-r, 0.0]), np.array([r, r]))
    return Domain("half_disk", sdf, box, oblique, project, normal, sample, {"radius": r})


def make_spherical_cap(spec: CapSpec) -> Domain:
    """Cap domain: ball of radius R centered at -(R-h) e_2, upper half plane.

    Flat base (oblique patch) {x2 = 0, |x1| < r}; spherical Dirichlet part.
    """
    r, h, R = spec.r, spec.h, spec.big_radius
    c = spec.center

    def sdf(x):
        pts = _as_points(x)
        d = np.maximum(np.linalg.norm(pts - c, axis=1) - R, -pts[:, 1])
        return d[0] if np.asarray(x).ndim == 1 else d

    def oblique(x):
        pts = _as_points(x)
        on = (np.abs(pts[:, 1]) <= _EDGE_EPS) & (np.abs(pts[:, 0]) < r - _EDGE_EPS)
        return on[0] if np.asarray(x).ndim == 1 else on

    def project(x):
        pts = _as_points(x)
        seg = np.stack([np.clip(pts[:, 0], -r, r), np.zeros(len(pts))], axis=1)
        rel = pts - c
        norms = np.linalg.norm(rel, axis=1)
        safe = np.where(norms > 1e-14, norms, 1.0)
        sph = c + R * rel / safe[:, None]
        low = sph[:, 1] < 0
        sph[low] = np.stack([np.sign(pts[low, 0] + 1e-300) * r, np.zeros(low.sum())], axis=1)
        d_seg = np.linalg.norm(pts - seg, axis=1)
        d_sph = np.linalg.norm(pts - sph, axis=1)
        out = np.where((d_seg <= d_sph)[:, None], seg, sph)
        return out[0] if np.asarray(x).ndim == 1 else out

    def normal(x):
        pts = _as_points(x)
        out = np.zeros_like(pts)
        flat = np.abs(pts[:, 1]) <= _EDGE_EPS
        out[flat] = [0.0, 1.0]
        rel = pts[~flat] - c
        nrm = np.linalg.norm(rel, axis=1, keepdims=True)
        out[~flat] = -rel / nrm
        return out[0] if np.asarray(x).ndim == 1 else out

    def sample(n, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        th_max = np.arcsin(r / R)
        n_seg = int(round(n * (2 * r) / (2 * r + 2 * th_max * R)))
        xs = rng.uniform(-r, r, size=n_seg)
        seg = np.stack([xs, np.zeros(n_seg)], axis=1)
        th = rng.uniform(np.pi / 2 - th_max, np.pi / 2 + th_max, size=n - n_seg)
        sph = c + R * np.stack([np.cos(th), np.sin(th)], axis=1)
        sph[:, 1] = np.clip(sph[:, 1], 0.0, None)
        return np.concatenate([seg, sph], axis=0)

    box = (np.array([-r, 0.0]), np.array([r, h]))
    return Domain(
        "cap", sdf, box, oblique, project, normal, sample, {"r": r, "h": h, "R": R}
    )


@dataclass(frozen=True)
class PolyGraph:
    """Polynomial chart function phi(x1) = sum_k coeffs[k] x1^k on |x1| <= halfwidth."""

    coeffs: tuple
    halfwidth: float

    def __call__(self, x1):
        return np.polynomial.polynomial.polyval(np.asarray(x1, dtype=float), self.coeffs)

    def derivative(self, x1):
        dc = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(np.asarray(x1, dtype=float), dc)

    def second_derivative(self, x1):
        dc = np.polynomial.polynomial.polyder(self.coeffs, 2)
        return np.polynomial.polynomial.polyval(np.asarray(x1, dtype=float), dc)

    def in_chart(self, x1) -> np.ndarray:
        return np.abs(np.asarray(x1, dtype=float)) <= self.halfwidth * (1 + 1e-12)


def flatten_transform(phi: PolyGraph, x) -> np.ndarray:
    """Map x = (x1, x2) to y = (x1, x2 - phi(x1)), flattening the graph of phi.

    Sends the curve {x2 = phi(x1)} to {y2 = 0} and preserves the sign of the
    vertical offset. Inverse: `unflatten_transform`.
    """
    pts = _as_points(x)
    if not np.all(phi.in_chart(pts[:, 0])):
        raise ValueError("point outside the chart of the graph function")
    out = pts.copy()
    out[:, 1] = pts[:, 1] - phi(pts[:, 0])
    return out[0] if np.asarray(x).ndim == 1 else out


def unflatten_transform(phi: PolyGraph, y) -> np.ndarray:
    pts = _as_points(y)
    if not np.all(phi.in_chart(pts[:, 0])):
        raise ValueError("point outside the chart of the graph function")
    out = pts.copy()
    out[:, 1] = pts[:, 1] + phi(pts[:, 0])
    return out[0] if np.asarray(y).ndim == 1 else out


def make_graph_domain(phi: PolyGraph, height: float) -> Domain:
    """Domain above the graph of phi: {|x1| < w, phi(x1) < x2 < phi(x1) + height}.

    Oblique patch: the open graph portion; Dirichlet: sides and top. Signed
    distances to the curved pieces are first-order normalized so the gradient
    is unit on the boundary.
    """
    if height <= 0:
        raise ValueError("height must be positive")
    w = phi.halfwidth

    def sdf(x):
        pts = _as_points(x)
        slope = phi.derivative(pts[:, 0])
        scale = np.sqrt(1.0 + slope**2)
        bottom = (phi(pts[:, 0]) - pts[:, 1]) / scale
        top = (pts[:, 1] - phi(pts[:, 0]) - height) / scale
        sides = np.abs(pts[:, 0]) - w
        d = np.maximum.reduce([bottom, top, sides])
        return d[0] if np.asarray(x).ndim == 1 else d

    def oblique(x):
        pts = _as_points(x)
        on = (np.abs(pts[:, 1] - phi(pts[:, 0])) <= 1e-7) & (
            np.abs(pts[:, 0]) < w - _EDGE_EPS
        )
        return on[0] if np.asarray(x).ndim == 1 else on

    def project(x):
        pts = _as_points(x)
        # bottom graph: Newton on the nearest-point condition along the curve
        t = np.clip(pts[:, 0], -w, w)
        for _ in range(12):
            r1 = t - pts[:, 0] + (phi(t) - pts[:, 1]) * phi.derivative(t)
            r2 = (
                1.0
                + phi.derivative(t) ** 2
                + (phi(t) - pts[:, 1]) * phi.second_derivative(t)
            )
            t = np.clip(t - r1 / np.where(np.abs(r2) > 1e-12, r2, 1.0), -w, w)
        bottom = np.stack([t, phi(t)], axis=1)
        s = np.clip(pts[:, 0], -w, w)
        for _ in range(12):
            r1 = s - pts[:, 0] + (phi(s) + height - pts[:, 1]) * phi.derivative(s)
            r2 = (
                1.0
                + phi.derivative(s) ** 2
                + (phi(s) + height - pts[:, 1]) * phi.second_derivative(s)
            )
            s = np.clip(s - r1 / np.where(np.abs(r2) > 1e-12, r2, 1.0), -w, w)
        top = np.stack([s, phi(s) + height], axis=1)
        side_x = np.where(pts[:, 0] >= 0, w, -w)
        side_y = np.clip(
            pts[:, 1], phi(side_x), phi(side_x) + height
        )
        side = np.stack([side_x, side_y], axis=1)
        cands = np.stack([bottom, top, side], axis=0)
        dists = np.linalg.norm(cands - pts[None], axis=2)
        pick = np.argmin(dists, axis=0)
        out = cands[pick, np.arange(len(pts))]
        return out[0] if np.asarray(x).ndim == 1 else out

    def normal(x):
        pts = _as_points(x)
        out = np.zeros_like(pts)
        rel = pts[:, 1] - phi(pts[:, 0])
        on_bottom = np.abs(rel) <= 1e-7
        on_top = np.abs(rel - height) <= 1e-7
        slope = phi.derivative(pts[:, 0])
        scale = np.sqrt(1.0 + slope**2)
        out[on_bottom] = np.stack([-slope, np.ones_like(slope)], axis=1)[on_bottom] / scale[
            on_bottom, None
        ]
        out[on_top] = np.stack([slope, -np.ones_like(slope)], axis=1)[on_top] / scale[
            on_top, None
        ]
        rest = ~(on_bottom | on_top)
        out[rest] = np.stack(
            [-np.sign(pts[rest, 0]), np.zeros(rest.sum())], axis=1
        )
        return out[0] if np.asarray(x).ndim == 1 else out

    def sample(n, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        n_bot = n // 2
        xs = rng.uniform(-w, w, size=n_bot)
        bot = np.stack([xs, phi(xs)], axis=1)
        n_top = (n - n_bot) // 2
        xt = rng.uniform(-w, w, size=n_top)
        top = np.stack([xt, phi(xt) + height], axis=1)
        n_side = n - n_bot - n_top
        sx = rng.choice([-w, w], size=n_side)
        sy = phi(sx) + rng.uniform(0, height, size=n_side)
        side = np.stack([sx, sy], axis=1)
        return np.concatenate([bot, top, side], axis=0)

    xs = np.linspace(-w, w, 257)
    ymin = float(np.min(phi(xs)))
    ymax = float(np.max(phi(xs))) + height
    box = (np.array([-w, ymin]), np.array([w, ymax]))
    return Domain(
        "graph", sdf, box, oblique, project, normal, sample,
        {"phi": phi, "height": height, "halfwidth": w},
    )


def make_box_domain(halfwidth: float, height: float) -> Domain:
    """Flat strip {|x1| < w, 0 < x2 < height} with oblique bottom edge.

    The flattened image of a graph domain; sides and top are Dirichlet.
    """
    if halfwidth <= 0 or height <= 0:
        raise ValueError("box dimensions must be positive")
    w, ht = float(halfwidth), float(height)

    def sdf(x):
        pts = _as_points(x)
        d = np.maximum.reduce([np.abs(pts[:, 0]) - w, -pts[:, 1], pts[:, 1] - ht])
        return d[0] if np.asarray(x).ndim == 1 else d

    def oblique(x):
        pts = _as_points(x)
        on = (np.abs(pts[:, 1]) <= _EDGE_EPS) & (np.abs(pts[:, 0]) < w - _EDGE_EPS)
        return on[0] if np.asarray(x).ndim == 1 else on

    def project(x):
        pts = _as_points(x)
        bot = np.stack([np.clip(pts[:, 0], -w, w), np.zeros(len(pts))], axis=1)
        top = np.stack([np.clip(pts[:, 0], -w, w), np.full(len(pts), ht)], axis=1)
        sx = np.where(pts[:, 0] >= 0, w, -w)
        side = np.stack([sx, np.clip(pts[:, 1], 0, ht)], axis=1)
        cands = np.stack([bot, top, side], axis=0)
        dists = np.linalg.norm(cands - pts[None], axis=2)
        out = cands[np.argmin(dists, axis=0), np.arange(len(pts))]
        return out[0] if np.asarray(x).ndim == 1 else out

    def normal(x):
        pts = _as_points(x)
        out = np.zeros_like(pts)
        bot = np.abs(pts[:, 1]) <= _EDGE_EPS
        top = np.abs(pts[:, 1] - ht) <= _EDGE_EPS
        out[bot] = [0.0, 1.0]
        out[top] = [0.0, -1.0]
        rest = ~(bot | top)
        out[rest] = np.stack([-np.sign(pts[rest, 0]), np.zeros(rest.sum())], axis=1)
        return out[0] if np.asarray(x).ndim == 1 else out

    def sample(n, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        per = 2 * (2 * w) + 2 * ht
        n_bot = int(round(n * (2 * w) / per))
        n_top = n_bot
        n_side = n - n_bot - n_top
        bot = np.stack([rng.uniform(-w, w, n_bot), np.zeros(n_bot)], axis=1)
        top = np.stack([rng.uniform(-w, w, n_top), np.full(n_top, ht)], axis=1)
        sx = rng.choice([-w, w], size=n_side)
        side = np.stack([sx, rng.uniform(0, ht, n_side)], axis=1)
        return np.concatenate([bot, top, side], axis=0)

    box = (np.array([-w, 0.0]), np.array([w, ht]))
    return Domain("box", sdf, box, oblique, project, normal, sample, {"halfwidth": w, "height": ht})


def beta_projection(x, beta) -> np.ndarray:
    """Project x to the hyperplane {x_n = 0} along beta (beta_n != 0).

    Components x_i - (beta_i / beta_n) x_n for i < n; the displacement
    satisfies |x - (x', 0)| = (|beta| / |beta_n|) |x_n| exactly.
    """
    beta = np.asarray(beta, dtype=float)
    if abs(beta[-1]) < 1e-14:
        raise ValueError("projection undefined for beta_n = 0")
    pts = _as_points(x)
    out = pts[:, :-1] - np.outer(pts[:, -1], beta[:-1] / beta[-1])
    if np.asarray(x).ndim == 1:
        return out[0] if out.shape[1] > 1 else float(out[0, 0])
    return out


@dataclass(frozen=True)
class ObliqueField:
    """Boundary data (beta, gamma, g) on the oblique patch.

    beta maps boundary points to vectors with |beta| <= 1 and
    beta . n >= delta0 > 0 on the patch (transversality).
    """

    beta: Callable[[np.ndarray], np.ndarray]
    gamma: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    delta0: float

    def __post_init__(self):
        if self.delta0 <= 0:
            raise ValueError("delta0 must be positive")

    @staticmethod
    def constant(beta=(0.0, 1.0), gamma=0.0, g=0.0, delta0: float | None = None):
        b = np.asarray(beta, dtype=float)
        if np.linalg.norm(b) > 1 + 1e-12:
            raise ValueError("|beta| <= 1 required")
        d0 = float(b[1]) if delta0 is None else float(delta0)
        return ObliqueField(
            beta=lambda pts: np.broadcast_to(b, (_as_points(pts).shape[0], 2)).copy(),
            gamma=lambda pts: np.full(_as_points(pts).shape[0], float(gamma)),
            g=lambda pts: np.full(_as_points(pts).shape[0], float(g)),
            delta0=d0,
        )


def check_obliqueness(domain: Domain, oblique: ObliqueField, n_samples: int = 256, rng=None):
    """Verify beta . n >= delta0 at sampled oblique-patch points.

    Returns the worst sampled margin; raises naming the offending point when
    the transversality fails.
    """
    pts = domain.sample_boundary(n_samples, rng=rng)
    pts = pts[domain.oblique_patch(pts)]
    if len(pts) == 0:
        raise ValueError("no oblique-patch samples; degenerate patch")
    b = oblique.beta(pts)
    if np.max(np.linalg.norm(b, axis=1)) > 1 + 1e-9:
        raise ValueError("|beta| <= 1 violated on the oblique patch")
    dots = np.einsum("ij,ij->i", b, domain.inner_normal(pts))
    worst = int(np.argmin(dots))
    if dots[worst] < oblique.delta0 - 1e-12:
        raise ValueError(
            f"obliqueness beta.n >= {oblique.delta0} fails at "
            f"({pts[worst, 0]:.6g}, {pts[worst, 1]:.6g}): beta.n = {dots[worst]:.6g}"
        )
    return float(dots[worst])


def one_direction_constant(beta_samples: np.ndarray, n_theta: int = 8192) -> float:
    """delta1 = max over unit xi of min over samples of beta . xi.

    The best single direction uniformly transversal to all sampled beta
    vectors; equals |beta| for a constant field.
    """
    th = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    xi = np.stack([np.cos(th), np.sin(th)], axis=1)
    dots = beta_samples @ xi.T
    return float(np.max(np.min(dots, axis=0)))


def validate_cap_height(domain: Domain, oblique: ObliqueField, n: int = 64) -> float:
    """Check beta(x) . n(y) < 0 for x on the base and y on the spherical part.

    The condition certifies that rays from the base in direction beta cannot
    re-enter through the Dirichlet part; it holds for caps flat enough
    relative to the tilt of beta. Returns the worst sampled value.
    """
    if domain.kind != "cap":
        raise ValueError("cap condition only applies to cap domains")
    r, h, R = domain.params["r"], domain.params["h"], domain.params["R"]
    xs = np.stack([np.linspace(-r * (1 - 1e-6), r * (1 - 1e-6), n), np.zeros(n)], axis=1)
    # sample the spherical part strictly away from the corners, where the
    # patch predicate would otherwise see the flat base
    th_max = np.arcsin(r / R) * (1 - 1e-9)
    th = np.linspace(np.pi / 2 - th_max, np.pi / 2 + th_max, n + 2)[1:-1]
    c = np.array([0.0, -(R - h)])
    ys = c + R * np.stack([np.cos(th), np.sin(th)], axis=1)
    ys[:, 1] = np.clip(ys[:, 1], 1e-8, None)
    b = oblique.beta(xs)
    nrm = domain.inner_normal(ys)
    vals = b @ nrm.T
    worst = float(np.max(vals))
    if worst >= 0:
        raise ValueError(
            f"cap height {h} too large for this beta: max beta(x).n(y) = {worst:.3g} >= 0"
        )
    return worst
