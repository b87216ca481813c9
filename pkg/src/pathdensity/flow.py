"""Steepest-ascent integral curves, mean-shift trajectories, and critical points.

Any object with vectorized value(x) / gradient(x) / hessian(x) methods works as
a field source; points may be a single (2,) coordinate or an (m, 2) batch.
"""

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .geometry import as_points
from .kernels import KernelSpec, PointCloud, squared_distance_matrix


class ScalarField(Protocol):
    def value(self, x): ...
    def gradient(self, x): ...
    def hessian(self, x): ...


class FlowNumericalError(RuntimeError):
    """Non-finite field value along a path; carries the last valid prefix."""

    def __init__(self, message, partial_path=None):
        super().__init__(message)
        self.partial_path = partial_path


class MeanShiftUnderflowError(RuntimeError):
    """All kernel weights underflowed to zero: start too far from data."""


@dataclass(frozen=True)
class FlowConfig:
    """Step control for ascent tracing.

    step_scale is a target arc length per step: the time step is
    step_scale / max(||grad||, grad_tolerance), further capped by
    max_time_step and halved whenever the field value would decrease.
    """

    step_scale: float
    grad_tolerance: float = 1e-8
    min_displacement: float = 1e-9
    max_steps: int = 10_000
    max_time_step: float = 0.25
    ascent_tolerance: float = 1e-12
    max_halvings: int = 40
    trim_fraction: float = 0.1

    def __post_init__(self):
        for name in ("step_scale", "grad_tolerance", "min_displacement",
                     "max_steps", "max_time_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def kde_flow_config(cloud: PointCloud, kernel: KernelSpec, h: float,
                    **overrides) -> FlowConfig:
    """Defaults scaled to a KDE: tolerances tied to the peak height and h."""
    from .kernels import kde_density

    gmax = float(np.max(kde_density(cloud, kernel, h, cloud.points)))
    base = dict(
        step_scale=0.25 * h,
        grad_tolerance=1e-7 * gmax / h,
        min_displacement=1e-6 * h,
    )
    base.update(overrides)
    return FlowConfig(**base)


@dataclass
class AscentPath:
    """A discretized ascent trajectory with step metadata.

    times holds the accumulated flow time per vertex (iteration index for
    mean-shift paths). trim_hint is the first vertex whose field value has
    gained a configured fraction of the path's total value gain.
    """

    vertices: np.ndarray
    times: np.ndarray
    step_count: int
    terminal_gradient_norm: float
    converged: bool
    trim_hint: int

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]


@dataclass
class TracedSegments:
    """Flat polyline soup for a batch of trajectories, grouped by path.

    seg_a[k] -> seg_b[k] is one step of path path_of_seg[k]; segments are
    sorted by path. Paths that never moved contribute one degenerate segment
    so every path keeps at least one entry.
    """

    seg_a: np.ndarray
    seg_b: np.ndarray
    path_of_seg: np.ndarray
    offsets: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    terminal_gradient_norm: np.ndarray
    converged: np.ndarray

    @property
    def n_paths(self) -> int:
        return len(self.starts)

    def min_distances(self, point) -> np.ndarray:
        """Per-path minimum distance to one query point, shape (n_paths,)."""
        p = np.asarray(point).astype(self.seg_a.dtype)
        d = _point_segment_distance_flat(p, self.seg_a, self.seg_b)
        return np.minimum.reduceat(d, self.offsets[:-1])


def _point_segment_distance_flat(p, a, b):
    d = b - a
    len2 = d[:, 0] ** 2 + d[:, 1] ** 2
    diff0 = p[0] - a[:, 0]
    diff1 = p[1] - a[:, 1]
    t = diff0 * d[:, 0] + diff1 * d[:, 1]
    safe = np.where(len2 > 0, len2, 1.0)
    t = np.clip(t / safe, 0.0, 1.0)
    t = np.where(len2 > 0, t, 0.0)
    cx = diff0 - t * d[:, 0]
    cy = diff1 - t * d[:, 1]
    return np.hypot(cx, cy)


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    kind: str
    hessian_eigenvalues: tuple[float, float]


def _trim_hint(values: np.ndarray, fraction: float) -> int:
    gain = values[-1] - values[0]
    if gain <= 0:
        return 0
    idx = np.nonzero(values - values[0] >= fraction * gain)[0]
    return int(idx[0]) if len(idx) else 0


class _PathRecorder:
    """Accumulates per-step vertices; builds AscentPath objects."""

    def __init__(self, starts, values0):
        m = len(starts)
        self.vertices = [[p.copy()] for p in starts]
        self.times = [[0.0] for _ in range(m)]
        self.values = [[v] for v in values0]

    def record(self, idx, pos, t, val):
        for row, p, ti, v in zip(idx, pos, t, val):
            self.vertices[row].append(p.copy())
            self.times[row].append(ti)
            self.values[row].append(v)

    def build(self, terminal_gnorm, converged, trim_fraction):
        paths = []
        for i in range(len(self.vertices)):
            verts = np.asarray(self.vertices[i])
            vals = np.asarray(self.values[i])
            paths.append(AscentPath(
                vertices=verts,
                times=np.asarray(self.times[i]),
                step_count=len(verts) - 1,
                terminal_gradient_norm=float(terminal_gnorm[i]),
                converged=bool(converged[i]),
                trim_hint=_trim_hint(vals, trim_fraction),
            ))
        return paths


class _SegmentRecorder:
    """Accumulates flat (start, end, path-id) triples per step.

    Stored in float32: Monte-Carlo batches are large and hit tests only
    compare distances against radii far above float32 resolution.
    """

    def __init__(self, starts, values0):
        self.starts = starts.copy()
        self.prev = starts.copy()
        self.a = []
        self.b = []
        self.ids = []

    def record(self, idx, pos, t, val):
        self.a.append(self.prev[idx].astype(np.float32))
        self.b.append(pos.astype(np.float32))
        self.ids.append(idx.copy())
        self.prev[idx] = pos

    def build(self, terminal_gnorm, converged, trim_fraction):
        m = len(self.starts)
        if self.ids:
            ids = np.concatenate(self.ids)
            a = np.concatenate(self.a)
            b = np.concatenate(self.b)
        else:
            ids = np.empty(0, dtype=int)
            a = np.empty((0, 2), dtype=np.float32)
            b = np.empty((0, 2), dtype=np.float32)
        # paths with no motion still need one (degenerate) segment
        moved = np.zeros(m, dtype=bool)
        moved[ids] = True
        still = np.nonzero(~moved)[0]
        ids = np.concatenate([ids, still])
        a = np.concatenate([a, self.starts[still].astype(np.float32)])
        b = np.concatenate([b, self.starts[still].astype(np.float32)])
        order = np.argsort(ids, kind="stable")
        ids = ids[order]
        offsets = np.searchsorted(ids, np.arange(m + 1))
        return TracedSegments(
            seg_a=a[order], seg_b=b[order], path_of_seg=ids, offsets=offsets,
            starts=self.starts, ends=self.prev,
            terminal_gradient_norm=terminal_gnorm.copy(),
            converged=converged.copy(),
        )


def _refine_cap(pos, refine_disks):
    """Arc-length cap near query disks: r/4 within 3r of each disk."""
    if refine_disks is None:
        return None
    centers, radii = refine_disks
    d = np.hypot(pos[:, 0:1] - centers[None, :, 0],
                 pos[:, 1:2] - centers[None, :, 1])  # (m, k)
    cap = np.where(d <= 3.0 * radii[None, :], radii[None, :] / 4.0, np.inf)
    return cap.min(axis=1)


def _ascend(field: ScalarField, starts, cfg: FlowConfig, refine_disks, recorder_cls):
    starts = as_points(starts)
    if refine_disks is not None:
        centers = as_points(refine_disks[0])
        radii = np.atleast_1d(np.asarray(refine_disks[1], dtype=float))
        refine_disks = (centers, radii)

    m = len(starts)
    pos = starts.copy()
    t = np.zeros(m)
    val = np.asarray(field.value(pos), dtype=float).reshape(m)
    if not np.all(np.isfinite(val)):
        raise FlowNumericalError("non-finite field value at a start point")
    grad = np.asarray(field.gradient(pos), dtype=float).reshape(m, 2)
    gnorm = np.hypot(grad[:, 0], grad[:, 1])
    rec = recorder_cls(starts, val)

    active = gnorm >= cfg.grad_tolerance
    last_dt = np.full(m, np.inf)

    for _ in range(cfg.max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        p = pos[idx]
        g = grad[idx]
        gn = gnorm[idx]
        v0 = val[idx]

        dt = cfg.step_scale / np.maximum(gn, cfg.grad_tolerance)
        dt = np.minimum(dt, cfg.max_time_step)
        dt = np.minimum(dt, 4.0 * last_dt[idx])
        cap = _refine_cap(p, refine_disks)
        if cap is not None:
            dt = np.minimum(dt, cap / np.maximum(gn, cfg.grad_tolerance))

        def rk4(p0, k1, dt_):
            half = 0.5 * dt_[:, None]
            k2 = np.asarray(field.gradient(p0 + half * k1), dtype=float).reshape(-1, 2)
            k3 = np.asarray(field.gradient(p0 + half * k2), dtype=float).reshape(-1, 2)
            k4 = np.asarray(field.gradient(p0 + dt_[:, None] * k3), dtype=float).reshape(-1, 2)
            return p0 + (dt_[:, None] / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        trial = rk4(p, g, dt)
        v1 = np.asarray(field.value(trial), dtype=float).reshape(len(idx))
        stalled = np.zeros(len(idx), dtype=bool)
        for _h in range(cfg.max_halvings):
            bad = ~np.isfinite(v1) | (v1 < v0 - cfg.ascent_tolerance)
            if not bad.any():
                break
            dt[bad] *= 0.5
            trial[bad] = rk4(p[bad], g[bad], dt[bad])
            v1[bad] = np.asarray(field.value(trial[bad]), dtype=float).reshape(-1)
        else:
            stalled = ~np.isfinite(v1) | (v1 < v0 - cfg.ascent_tolerance)

        if np.any(~np.isfinite(trial[~stalled])):
            raise FlowNumericalError(
                "non-finite position along an ascent path",
                partial_path=rec.build(gnorm, gnorm < cfg.grad_tolerance,
                                       cfg.trim_fraction))

        ok = ~stalled
        moved = idx[ok]
        disp = np.hypot(trial[ok, 0] - p[ok, 0], trial[ok, 1] - p[ok, 1])
        pos[moved] = trial[ok]
        t[moved] += dt[ok]
        val[moved] = v1[ok]
        last_dt[moved] = dt[ok]
        rec.record(moved, trial[ok], t[moved], v1[ok])

        g_new = np.asarray(field.gradient(pos[moved]), dtype=float).reshape(-1, 2)
        grad[moved] = g_new
        gnorm[moved] = np.hypot(g_new[:, 0], g_new[:, 1])

        done = np.zeros(len(idx), dtype=bool)
        done[ok] = (gnorm[moved] < cfg.grad_tolerance) | (disp < cfg.min_displacement)
        done[stalled] = True
        active[idx[done]] = False

    converged = gnorm < cfg.grad_tolerance
    return rec.build(gnorm, converged, cfg.trim_fraction)


def trace_ascent_paths(field: ScalarField, starts, cfg: FlowConfig,
                       refine_disks=None) -> list[AscentPath]:
    """Trace the gradient flow of `field` forward from each start.

    Classic RK4 on dx/dt = grad(x) with per-path adaptive time steps; a step
    is halved until the field value does not decrease (up to max_halvings).
    Stops per path when the gradient norm or the displacement drops below its
    tolerance, or after max_steps.
    """
    return _ascend(field, starts, cfg, refine_disks, _PathRecorder)


def trace_ascent_segments(field: ScalarField, starts, cfg: FlowConfig,
                          refine_disks=None) -> TracedSegments:
    """Like trace_ascent_paths but returns a flat segment soup (cheap for
    large Monte-Carlo batches)."""
    return _ascend(field, starts, cfg, refine_disks, _SegmentRecorder)


def trace_ascent_path(field: ScalarField, x0, cfg: FlowConfig,
                      refine_disks=None) -> AscentPath:
    return trace_ascent_paths(field, [x0], cfg, refine_disks=refine_disks)[0]


_MS_CHUNK = 1024


def mean_shift_paths(cloud: PointCloud, kernel: KernelSpec, h: float,
                     starts, cfg: FlowConfig) -> list[AscentPath]:
    """Kernel-weighted-mean iteration from each start, recorded as paths.

    Each iterate moves to the kernel-weighted mean of the data; the sequence
    ascends the KDE and stops when the displacement drops below
    min_displacement (or at max_steps).
    """
    from .kernels import kde_density, kde_gradient

    if h <= 0:
        raise ValueError("bandwidth h must be positive")
    starts = as_points(starts)
    data = cloud.points
    m = len(starts)
    pos = starts.copy()
    val0 = np.asarray(kde_density(cloud, kernel, h, pos), dtype=float).reshape(m)
    rec = _PathRecorder(starts, val0)
    active = np.ones(m, dtype=bool)

    for step in range(cfg.max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        new = np.empty((len(idx), 2))
        for s in range(0, len(idx), _MS_CHUNK):
            rows = idx[s:s + _MS_CHUNK]
            d2 = squared_distance_matrix(pos[rows], data)
            w = np.exp(d2 * (-0.5 / (h * h)))
            if kernel.profile == "truncated-gaussian":
                w[d2 > (kernel.cutoff * h) ** 2] = 0.0
            denom = w.sum(axis=1)
            if np.any(denom <= 0.0):
                raise MeanShiftUnderflowError(
                    "all kernel weights underflowed: start too far from data")
            new[s:s + _MS_CHUNK] = (w @ data) / denom[:, None]
        disp = np.hypot(new[:, 0] - pos[idx, 0], new[:, 1] - pos[idx, 1])
        pos[idx] = new
        v = np.asarray(kde_density(cloud, kernel, h, new), dtype=float).reshape(-1)
        rec.record(idx, new, np.full(len(idx), float(step + 1)), v)
        active[idx[disp < cfg.min_displacement]] = False

    grad = np.asarray(kde_gradient(cloud, kernel, h, pos), dtype=float).reshape(m, 2)
    gnorm = np.hypot(grad[:, 0], grad[:, 1])
    return rec.build(gnorm, gnorm < cfg.grad_tolerance, cfg.trim_fraction)


def mean_shift_path(cloud: PointCloud, kernel: KernelSpec, h: float, x0,
                    cfg: FlowConfig) -> AscentPath:
    return mean_shift_paths(cloud, kernel, h, [x0], cfg)[0]


def classify_critical_point(hessian, degeneracy_tol: float) -> str:
    """Eigenvalue-sign classification of a symmetric 2x2 Hessian."""
    ev = np.linalg.eigvalsh(np.asarray(hessian, dtype=float))
    if np.any(np.abs(ev) < degeneracy_tol):
        return "degenerate"
    if ev[1] < 0:
        return "maximum"
    if ev[0] > 0:
        return "minimum"
    return "saddle"


def find_critical_points(field: ScalarField, domain, cfg: FlowConfig,
                         seeds_per_axis: int = 24,
                         merge_radius: float | None = None,
                         degeneracy_tol: float | None = None,
                         max_newton_steps: int = 60) -> list[CriticalPoint]:
    """Locate and classify zeros of the gradient inside a bounded rectangle.

    Newton iteration on grad = 0 from a seed grid; roots are deduplicated
    within the merge radius and classified by Hessian eigenvalue signs.
    Seeds that diverge (leave the padded domain, or hit a singular Hessian
    away from a root) are dropped.
    """
    xmin, xmax, ymin, ymax = map(float, domain)
    diam = float(np.hypot(xmax - xmin, ymax - ymin))
    if merge_radius is None:
        merge_radius = 1e-3 * diam

    xs = np.linspace(xmin, xmax, seeds_per_axis + 2)[1:-1]
    ys = np.linspace(ymin, ymax, seeds_per_axis + 2)[1:-1]
    seeds = np.array([[x, y] for x in xs for y in ys])
    pad = 0.2 * diam
    step_tol = 1e-10 * diam

    roots = []
    for seed in seeds:
        p = seed.copy()
        gn = np.hypot(*np.asarray(field.gradient(p), dtype=float))
        accepted = False
        for _ in range(max_newton_steps):
            g = np.asarray(field.gradient(p), dtype=float)
            H = np.asarray(field.hessian(p), dtype=float)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)):
                break
            # damp very long Newton steps so seeds do not fly out immediately
            norm = np.hypot(*step)
            if norm > 0.5 * diam:
                step *= 0.5 * diam / norm
            # guard: backtrack until the gradient norm actually drops, which
            # widens the basins (bare Newton's basins are narrow and ragged)
            t = 1.0
            while t > 1e-4:
                q = p - t * step
                gq = np.hypot(*np.asarray(field.gradient(q), dtype=float))
                if gq <= (1.0 - 0.25 * t) * gn or gq < cfg.grad_tolerance:
                    break
                t *= 0.5
            else:
                break
            p, gn = q, gq
            if not (xmin - pad <= p[0] <= xmax + pad and ymin - pad <= p[1] <= ymax + pad):
                break
            # a root is where the Newton increment collapses, not merely where
            # the gradient is small (flat tails have tiny gradients everywhere)
            if t == 1.0 and norm < step_tol:
                accepted = True
                break
        if accepted and gn < cfg.grad_tolerance:
            roots.append(p)

    merged: list[np.ndarray] = []
    for p in roots:
        if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
            continue
        for q in merged:
            if np.hypot(*(p - q)) < merge_radius:
                break
        else:
            merged.append(p)

    out = []
    for p in merged:
        H = np.asarray(field.hessian(p), dtype=float)
        tol = degeneracy_tol if degeneracy_tol is not None else 1e-9 * max(
            1.0, float(np.max(np.abs(H))))
        ev = np.linalg.eigvalsh(H)
        out.append(CriticalPoint(
            location=p,
            kind=classify_critical_point(H, tol),
            hessian_eigenvalues=(float(ev[0]), float(ev[1])),
        ))
    out.sort(key=lambda c: (c.location[0], c.location[1]))
    return out
