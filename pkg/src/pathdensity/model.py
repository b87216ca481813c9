"""Generative mixture of filaments, clusters, and a uniform background.

The density is alpha_0 * uniform(box) + sum_i alpha_i * integral of
w_i(s) * N2(x - f_i(s), sigma_i^2 I) ds + sum_j alpha_j * N2(x - z_j, sigma_j^2 I).
Line integrals run over arclength-parameterized polylines; the model exposes
value / gradient / hessian and so can be traced like any other field.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .geometry import (as_points, point_on_polyline, polyline_arclength,
                       polyline_self_intersects)
from .kernels import PointCloud, squared_distance_matrix

_EVAL_CHUNK = 2048


@dataclass(frozen=True)
class QuadratureSpec:
    """Line-integral rule. Nodes are placed through the weight CDF, densely
    enough for roughly nodes_per_sigma evaluation points per sigma of
    arclength wherever the weight density is not vanishing."""

    nodes_per_sigma: int = 8
    rule: str = "gauss-legendre-per-segment"

    def __post_init__(self):
        if self.nodes_per_sigma < 2:
            raise ValueError("nodes_per_sigma must be >= 2")
        if self.rule not in ("trapezoid", "gauss-legendre-per-segment"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")


DEFAULT_QUAD = QuadratureSpec()


class Filament:
    """An arclength-parameterized curve with a length-position weight density
    and a Gaussian noise scale."""

    def __init__(self, vertices, sigma: float, weight: str = "uniform",
                 beta_a: float = 0.5, beta_b: float = 0.5, validate: bool = True):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise ValueError("filament needs a polyline of at least 2 vertices")
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if weight not in ("uniform", "beta"):
            raise ValueError(f"unknown weight density {weight!r}")
        self.vertices = v
        self.sigma = float(sigma)
        self.weight = weight
        self.beta_a = float(beta_a)
        self.beta_b = float(beta_b)
        self.arclength = polyline_arclength(v)
        self.length = float(self.arclength[-1])
        if self.length <= 0:
            raise ValueError("filament has zero length")
        if validate and polyline_self_intersects(v):
            raise ValueError("filament polyline self-intersects")

    @classmethod
    def from_endpoints(cls, a, b, sigma: float, weight: str = "uniform",
                       beta_a: float = 0.5, beta_b: float = 0.5,
                       vertices_per_sigma: int = 32):
        """A straight filament densified to the standard polyline resolution."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        length = float(np.hypot(*(b - a)))
        k = max(2, int(np.ceil(vertices_per_sigma * length / sigma)) + 1)
        t = np.linspace(0.0, 1.0, k)[:, None]
        return cls(a[None, :] * (1 - t) + b[None, :] * t, sigma,
                   weight=weight, beta_a=beta_a, beta_b=beta_b)

    def point_at(self, s) -> np.ndarray:
        return point_on_polyline(self.vertices, self.arclength, s)

    def weight_ppf(self, u):
        """Arclength position with weight-CDF value u."""
        u = np.asarray(u, dtype=float)
        if self.weight == "uniform":
            return self.length * u
        return self.length * beta_dist.ppf(u, self.beta_a, self.beta_b)

    def weight_pdf(self, s):
        s = np.asarray(s, dtype=float)
        if self.weight == "uniform":
            return np.full(s.shape, 1.0 / self.length)
        return beta_dist.pdf(s / self.length, self.beta_a, self.beta_b) / self.length

    def _n_intervals(self, nodes_per_interval: int, nodes_per_sigma: int) -> int:
        # enough CDF intervals for the target node density over the central
        # 99.8% of the weight mass
        us = np.linspace(0.001, 0.999, 513)
        s = self.weight_ppf(us)
        dsdu = np.max(np.diff(s)) / (us[1] - us[0])
        n = int(np.ceil(dsdu * nodes_per_sigma / (self.sigma * nodes_per_interval)))
        return max(8, n)

    def quadrature(self, spec: QuadratureSpec):
        """(points (N,2), weights (N,)) approximating integral w(s) g(f(s)) ds
        as sum weights * g(points); the weight density is absorbed by placing
        nodes through its CDF."""
        if spec.rule == "trapezoid":
            n = self._n_intervals(1, spec.nodes_per_sigma)
            u = np.linspace(0.0, 1.0, n + 1)
            w = np.full(n + 1, 1.0 / n)
            w[0] *= 0.5
            w[-1] *= 0.5
        else:
            n = self._n_intervals(2, spec.nodes_per_sigma)
            edges = np.linspace(0.0, 1.0, n + 1)
            du = 1.0 / n
            off = du / (2.0 * np.sqrt(3.0))
            centers = (edges[:-1] + edges[1:]) / 2.0
            u = np.sort(np.concatenate([centers - off, centers + off]))
            w = np.full(2 * n, du / 2.0)
        pts = self.point_at(self.weight_ppf(u))
        return pts, w

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        s = self.weight_ppf(rng.random(n))
        return self.point_at(s) + self.sigma * rng.standard_normal((n, 2))


@dataclass(frozen=True)
class Cluster:
    center: tuple[float, float]
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("cluster sigma must be positive")


class _SigmaGroup:
    """All Gaussian mass at one noise scale, flattened to weighted nodes."""

    def __init__(self, sigma: float, nodes: np.ndarray, weights: np.ndarray):
        self.sigma = sigma
        self.nodes = np.ascontiguousarray(nodes)
        self.w = np.ascontiguousarray(weights)
        self.wx = self.w * self.nodes[:, 0]
        self.wy = self.w * self.nodes[:, 1]
        self.wxx = self.wx * self.nodes[:, 0]
        self.wxy = self.wx * self.nodes[:, 1]
        self.wyy = self.wy * self.nodes[:, 1]

    def _phi(self, pts):
        d2 = squared_distance_matrix(pts, self.nodes)
        s2 = self.sigma * self.sigma
        np.multiply(d2, -0.5 / s2, out=d2)
        np.exp(d2, out=d2)
        return d2 / (2.0 * np.pi * s2)

    def value(self, pts) -> np.ndarray:
        return self._phi(pts) @ self.w

    def gradient(self, pts) -> np.ndarray:
        phi = self._phi(pts)
        s0 = phi @ self.w
        g = np.empty((len(pts), 2))
        g[:, 0] = pts[:, 0] * s0 - phi @ self.wx
        g[:, 1] = pts[:, 1] * s0 - phi @ self.wy
        g *= -1.0 / self.sigma**2
        return g

    def hessian(self, pts) -> np.ndarray:
        phi = self._phi(pts)
        s0 = phi @ self.w
        s1x = phi @ self.wx
        s1y = phi @ self.wy
        px, py = pts[:, 0], pts[:, 1]
        m00 = px * px * s0 - 2 * px * s1x + phi @ self.wxx
        m11 = py * py * s0 - 2 * py * s1y + phi @ self.wyy
        m01 = px * py * s0 - px * s1y - py * s1x + phi @ self.wxy
        s2, s4 = self.sigma**2, self.sigma**4
        out = np.empty((len(pts), 2, 2))
        out[:, 0, 0] = m00 / s4 - s0 / s2
        out[:, 1, 1] = m11 / s4 - s0 / s2
        out[:, 0, 1] = m01 / s4
        out[:, 1, 0] = out[:, 0, 1]
        return out


class FilamentModel:
    """The full mixture; immutable after construction and safe to share."""

    def __init__(self, filaments, filament_weights, clusters, cluster_weights,
                 background_weight: float, box, quad: QuadratureSpec = DEFAULT_QUAD):
        self.filaments = list(filaments)
        self.filament_weights = np.asarray(filament_weights, dtype=float).reshape(-1)
        self.clusters = [c if isinstance(c, Cluster) else Cluster(tuple(c[0]), float(c[1]))
                         for c in clusters]
        self.cluster_weights = np.asarray(cluster_weights, dtype=float).reshape(-1)
        self.background_weight = float(background_weight)
        self.box = tuple(float(b) for b in box)
        self.quad = quad
        self._group_cache: dict[QuadratureSpec, list[_SigmaGroup]] = {}

        weights = np.concatenate([[self.background_weight], self.filament_weights,
                                  self.cluster_weights])
        if np.any(weights < 0) or np.any(weights > 1):
            raise ValueError("component weights must lie in [0, 1]")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("component weights must sum to 1")
        if len(self.filaments) != len(self.filament_weights):
            raise ValueError("one weight per filament required")
        if len(self.clusters) != len(self.cluster_weights):
            raise ValueError("one weight per cluster required")
        xmin, xmax, ymin, ymax = self.box
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("degenerate box")

    # -- geometry helpers -------------------------------------------------

    @property
    def box_area(self) -> float:
        xmin, xmax, ymin, ymax = self.box
        return (xmax - xmin) * (ymax - ymin)

    @property
    def max_sigma(self) -> float:
        sigmas = [f.sigma for f in self.filaments] + [c.sigma for c in self.clusters]
        return max(sigmas) if sigmas else 0.0

    def anchor_points(self) -> np.ndarray:
        """Filament polyline vertices plus cluster centers (the set the
        detector is meant to recover)."""
        parts = [f.vertices for f in self.filaments]
        parts += [np.asarray([c.center]) for c in self.clusters]
        return np.concatenate(parts) if parts else np.empty((0, 2))

    def with_quad(self, quad: QuadratureSpec) -> "FilamentModel":
        return FilamentModel(self.filaments, self.filament_weights, self.clusters,
                             self.cluster_weights, self.background_weight,
                             self.box, quad=quad)

    def _in_box(self, pts):
        xmin, xmax, ymin, ymax = self.box
        return ((pts[:, 0] >= xmin) & (pts[:, 0] <= xmax)
                & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax))

    def _on_box_edge(self, pts, tol=1e-12):
        xmin, xmax, ymin, ymax = self.box
        scale = max(xmax - xmin, ymax - ymin)
        near = lambda a, b: np.abs(a - b) <= tol * scale
        on_x = (near(pts[:, 0], xmin) | near(pts[:, 0], xmax)) & \
               (pts[:, 1] >= ymin - tol) & (pts[:, 1] <= ymax + tol)
        on_y = (near(pts[:, 1], ymin) | near(pts[:, 1], ymax)) & \
               (pts[:, 0] >= xmin - tol) & (pts[:, 0] <= xmax + tol)
        return on_x | on_y

    def _groups(self, quad: QuadratureSpec) -> list[_SigmaGroup]:
        if quad not in self._group_cache:
            by_sigma: dict[float, list] = {}
            for alpha, f in zip(self.filament_weights, self.filaments):
                if alpha == 0:
                    continue
                nodes, w = f.quadrature(quad)
                by_sigma.setdefault(f.sigma, []).append((nodes, alpha * w))
            for alpha, c in zip(self.cluster_weights, self.clusters):
                if alpha == 0:
                    continue
                by_sigma.setdefault(c.sigma, []).append(
                    (np.asarray([c.center], dtype=float), np.asarray([alpha])))
            self._group_cache[quad] = [
                _SigmaGroup(s, np.concatenate([n for n, _ in parts]),
                            np.concatenate([w for _, w in parts]))
                for s, parts in sorted(by_sigma.items())
            ]
        return self._group_cache[quad]

    # -- field interface ---------------------------------------------------

    def value(self, x, quad: QuadratureSpec | None = None):
        groups = self._groups(quad or self.quad)
        pts = as_points(x)
        out = np.zeros(len(pts))
        if self.background_weight > 0:
            out += self.background_weight * self._in_box(pts) / self.box_area
        for s in range(0, len(pts), _EVAL_CHUNK):
            sl = slice(s, min(s + _EVAL_CHUNK, len(pts)))
            for g in groups:
                out[sl] += g.value(pts[sl])
        return float(out[0]) if np.ndim(x) == 1 else out

    def _check_differentiable(self, pts):
        if self.background_weight > 0 and bool(self._on_box_edge(pts).any()):
            raise ValueError("density is not differentiable on the box boundary")

    def gradient(self, x, quad: QuadratureSpec | None = None):
        groups = self._groups(quad or self.quad)
        pts = as_points(x)
        self._check_differentiable(pts)
        out = np.zeros((len(pts), 2))
        for s in range(0, len(pts), _EVAL_CHUNK):
            sl = slice(s, min(s + _EVAL_CHUNK, len(pts)))
            for g in groups:
                out[sl] += g.gradient(pts[sl])
        return out[0] if np.ndim(x) == 1 else out

    def hessian(self, x, quad: QuadratureSpec | None = None):
        groups = self._groups(quad or self.quad)
        pts = as_points(x)
        self._check_differentiable(pts)
        out = np.zeros((len(pts), 2, 2))
        for s in range(0, len(pts), _EVAL_CHUNK):
            sl = slice(s, min(s + _EVAL_CHUNK, len(pts)))
            for g in groups:
                out[sl] += g.hessian(pts[sl])
        return out[0] if np.ndim(x) == 1 else out

    # -- sampling ----------------------------------------------------------

    def sample(self, n: int, rng: np.random.Generator) -> PointCloud:
        """n independent draws; component per point, then the component draw."""
        if n < 1:
            raise ValueError("n must be >= 1")
        weights = np.concatenate([[self.background_weight], self.filament_weights,
                                  self.cluster_weights])
        comp = rng.choice(len(weights), size=n, p=weights)
        out = np.empty((n, 2))
        idx = np.nonzero(comp == 0)[0]
        if len(idx):
            xmin, xmax, ymin, ymax = self.box
            u = rng.random((len(idx), 2))
            out[idx, 0] = xmin + (xmax - xmin) * u[:, 0]
            out[idx, 1] = ymin + (ymax - ymin) * u[:, 1]
        for i, f in enumerate(self.filaments):
            idx = np.nonzero(comp == 1 + i)[0]
            if len(idx):
                out[idx] = f.sample(len(idx), rng)
        base = 1 + len(self.filaments)
        for j, c in enumerate(self.clusters):
            idx = np.nonzero(comp == base + j)[0]
            if len(idx):
                out[idx] = np.asarray(c.center) + c.sigma * rng.standard_normal((len(idx), 2))
        return PointCloud(out)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "box": list(self.box),
            "background_weight": self.background_weight,
            "filaments": [
                {
                    "vertices": f.vertices.tolist(),
                    "sigma": f.sigma,
                    "weight": float(self.filament_weights[i]),
                    "length_density": (
                        {"kind": "uniform"} if f.weight == "uniform"
                        else {"kind": "beta", "a": f.beta_a, "b": f.beta_b}
                    ),
                }
                for i, f in enumerate(self.filaments)
            ],
            "clusters": [
                {"center": list(c.center), "sigma": c.sigma,
                 "weight": float(self.cluster_weights[j])}
                for j, c in enumerate(self.clusters)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilamentModel":
        filaments, fw = [], []
        for spec in d.get("filaments", []):
            dens = spec.get("length_density", {"kind": "uniform"})
            filaments.append(Filament(
                np.asarray(spec["vertices"], dtype=float),
                sigma=float(spec["sigma"]),
                weight=dens["kind"],
                beta_a=float(dens.get("a", 0.5)),
                beta_b=float(dens.get("b", 0.5)),
            ))
            fw.append(float(spec["weight"]))
        clusters, cw = [], []
        for spec in d.get("clusters", []):
            clusters.append(Cluster(tuple(spec["center"]), float(spec["sigma"])))
            cw.append(float(spec["weight"]))
        return cls(filaments, fw, clusters, cw,
                   background_weight=float(d.get("background_weight", 0.0)),
                   box=tuple(d["box"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "FilamentModel":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


# -- spec-shaped module functions ------------------------------------------

def density(model: FilamentModel, x, quad: QuadratureSpec | None = None):
    return model.value(x, quad=quad)


def gradient(model: FilamentModel, x, quad: QuadratureSpec | None = None):
    return model.gradient(x, quad=quad)


def hessian(model: FilamentModel, x, quad: QuadratureSpec | None = None):
    return model.hessian(x, quad=quad)


def sample(model: FilamentModel, n: int, rng: np.random.Generator) -> PointCloud:
    return model.sample(n, rng)


# -- builtin models ----------------------------------------------------------

def cluster_model(centers, sigma: float, box, weights=None,
                  background_weight: float = 0.0) -> FilamentModel:
    centers = as_points(centers)
    k = len(centers)
    if weights is None:
        weights = np.full(k, (1.0 - background_weight) / k)
    return FilamentModel([], [], [(tuple(c), sigma) for c in centers], weights,
                         background_weight=background_weight, box=box)


def two_gaussian_model(separation: float = 2.0, sigma: float = 0.5,
                       box=(-3.0, 3.0, -2.5, 2.5)) -> FilamentModel:
    half = separation / 2.0
    return cluster_model([(-half, 0.0), (half, 0.0)], sigma, box)


def _largest_remainder_counts(total: int, proportions: np.ndarray) -> np.ndarray:
    """Integer allocation with each count within 1 of total * proportion."""
    exact = total * proportions / proportions.sum()
    counts = np.floor(exact).astype(int)
    rem = exact - counts
    short = total - counts.sum()
    for i in np.argsort(-rem)[:short]:
        counts[i] += 1
    return counts


def random_pentagon_model(rng: np.random.Generator, n: int = 500,
                          sigma: float = 0.03, background: bool = False,
                          max_tries: int = 100):
    """Five random vertices on the unit square joined into a simple pentagon;
    each side is a filament with an endpoint-heavy beta(1/2, 1/2) weight.

    Points are split across sides proportionally to side length (each count
    within 1 of the exact share). With background=True, n uniform points on
    the square are appended and the mixture gets a 0.5 background weight.
    Returns (model, cloud).
    """
    for _ in range(max_tries):
        verts = rng.random((5, 2))
        centroid = verts.mean(axis=0)
        order = np.argsort(np.arctan2(verts[:, 1] - centroid[1],
                                      verts[:, 0] - centroid[0]))
        ring = verts[order]
        closed = np.vstack([ring, ring[:1]])
        if not polyline_self_intersects(closed):
            break
    else:
        raise RuntimeError("could not draw a simple pentagon")

    edges = [(ring[i], ring[(i + 1) % 5]) for i in range(5)]
    filaments = [Filament.from_endpoints(a, b, sigma, weight="beta",
                                         beta_a=0.5, beta_b=0.5)
                 for a, b in edges]
    lengths = np.asarray([f.length for f in filaments])
    shares = lengths / lengths.sum()
    bg = 0.5 if background else 0.0
    model = FilamentModel(filaments, (1.0 - bg) * shares, [], [],
                          background_weight=bg, box=(0.0, 1.0, 0.0, 1.0))

    counts = _largest_remainder_counts(n, lengths)
    parts = [f.sample(c, rng) for f, c in zip(filaments, counts) if c > 0]
    pts = np.concatenate(parts)
    if background:
        pts = np.concatenate([pts, rng.random((n, 2))])
    return model, PointCloud(pts)
