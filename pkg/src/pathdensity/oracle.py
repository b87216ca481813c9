"""Brute-force ground truth by Monte Carlo.

Paths are traced on the true model field from fresh model draws; the chance
that a random path meets a ball, estimated by counting, stands in for the
path measure, and a two-radius extrapolation of hit-fraction / radius stands
in for the path density. A rasterized variant provides reference fields for
level-set work, and a harness measures how the estimation error shrinks
with the sample size.
"""

from dataclasses import dataclass, field

import numpy as np

from .flow import (FlowConfig, TracedSegments, find_critical_points,
                   kde_flow_config, mean_shift_paths, trace_ascent_segments)
from .grids import GridField, GridSpec
from .kernels import KernelSpec, PointCloud
from .model import FilamentModel
from .path_density import PathEnsemble, default_bandwidths, estimate_path_density


@dataclass(frozen=True)
class PathMeasureEstimate:
    value: float
    std_error: float
    n_mc: int

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ValueError("a probability estimate must lie in [0, 1]")


@dataclass(frozen=True)
class PathDensityEstimate:
    value: float
    std_error: float
    r1: float
    r2: float
    n_mc: int


def model_flow_config(model: FilamentModel, **overrides) -> FlowConfig:
    """Tracing defaults scaled to the model's noise scale and peak height."""
    sigma = model.max_sigma
    if sigma <= 0:
        raise ValueError("model has no Gaussian components to scale against")
    anchors = model.anchor_points()
    vmax = float(np.max(model.value(anchors))) if len(anchors) else 1.0
    base = dict(
        step_scale=sigma / 6.0,
        grad_tolerance=1e-7 * vmax / sigma,
        min_displacement=1e-6 * sigma,
        max_halvings=30,
    )
    base.update(overrides)
    return FlowConfig(**base)


def sample_and_trace(field, sampler: FilamentModel, n_mc: int,
                     rng: np.random.Generator, cfg: FlowConfig | None = None,
                     refine_disks=None) -> TracedSegments:
    """Draw n_mc points from the sampler and trace their ascent on `field`."""
    if cfg is None:
        cfg = model_flow_config(sampler)
    cloud = sampler.sample(n_mc, rng)
    return trace_ascent_segments(field, cloud.points, cfg, refine_disks=refine_disks)


def ball_hit_estimate(segs: TracedSegments, center, r: float) -> PathMeasureEstimate:
    """Fraction of traced paths passing within r of the center."""
    md = segs.min_distances(center)
    hits = md <= r
    v = float(hits.mean())
    se = float(np.sqrt(v * (1.0 - v) / segs.n_paths))
    return PathMeasureEstimate(value=v, std_error=se, n_mc=segs.n_paths)


def point_density_estimate(segs: TracedSegments, x, r1: float,
                           r2: float | None = None) -> PathDensityEstimate:
    """Two-radius extrapolation of hit-fraction / radius.

    With hit fractions f1, f2 at radii r1 and r2 = 2 r1, the combination
    2 f1/r1 - f2/r2 removes the term linear in r from f(r)/r; the spread of
    the per-path contributions gives the standard error.
    """
    if r2 is None:
        r2 = 2.0 * r1
    if not (0 < r1 < r2):
        raise ValueError("need 0 < r1 < r2")
    md = segs.min_distances(x)
    a = (2.0 / r1) * (md <= r1) - (1.0 / r2) * (md <= r2)
    value = float(a.mean())
    n = segs.n_paths
    se = float(a.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    if not np.any(md <= r2):
        value = 0.0
    return PathDensityEstimate(value=value, std_error=se, r1=r1, r2=float(r2), n_mc=n)


def path_measure(field, sampler: FilamentModel, center, r: float, n_mc: int,
                 rng: np.random.Generator, cfg: FlowConfig | None = None) -> PathMeasureEstimate:
    """Probability that the ascent path of a random draw meets the closed ball."""
    segs = sample_and_trace(field, sampler, n_mc, rng, cfg=cfg,
                            refine_disks=([center], [r]))
    return ball_hit_estimate(segs, center, r)


def path_density_oracle(field, sampler: FilamentModel, x, r1: float, n_mc: int,
                        rng: np.random.Generator, cfg: FlowConfig | None = None,
                        r2: float | None = None) -> PathDensityEstimate:
    """Monte-Carlo path density at a regular point."""
    if r2 is None:
        r2 = 2.0 * r1
    segs = sample_and_trace(field, sampler, n_mc, rng, cfg=cfg,
                            refine_disks=([x], [r1]))
    return point_density_estimate(segs, x, r1, r2)


def path_hit_counts(segs: TracedSegments, grid: GridSpec, radii) -> np.ndarray:
    """Per-node counts of paths passing within each radius.

    Returns an int array of shape (len(radii), nx, ny); each path is counted
    at most once per node. Costs O(total segments x local stencil).
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    rmax = radii[-1]
    seg_len = np.hypot(segs.seg_b[:, 0] - segs.seg_a[:, 0],
                       segs.seg_b[:, 1] - segs.seg_a[:, 1])
    max_len = float(seg_len.max()) if len(seg_len) else 0.0

    hx = int(np.ceil((rmax + 0.5 * max_len) / grid.dx)) + 1
    hy = int(np.ceil((rmax + 0.5 * max_len) / grid.dy)) + 1
    offs_x, offs_y = np.meshgrid(np.arange(-hx, hx + 1), np.arange(-hy, hy + 1),
                                 indexing="ij")
    offs_x = offs_x.ravel()
    offs_y = offs_y.ravel()

    counts = np.zeros((len(radii), grid.nx, grid.ny), dtype=np.int64)
    xs0, ys0 = grid.xmin, grid.ymin
    dx, dy = grid.dx, grid.dy

    for i in range(segs.n_paths):
        lo, hi = segs.offsets[i], segs.offsets[i + 1]
        a = segs.seg_a[lo:hi]
        b = segs.seg_b[lo:hi]
        mid = 0.5 * (a + b)
        bi = np.rint((mid[:, 0] - xs0) / dx).astype(np.int64)
        bj = np.rint((mid[:, 1] - ys0) / dy).astype(np.int64)
        ii = bi[:, None] + offs_x[None, :]
        jj = bj[:, None] + offs_y[None, :]
        ok = (ii >= 0) & (ii < grid.nx) & (jj >= 0) & (jj < grid.ny)
        if not ok.any():
            continue
        nx_ = xs0 + ii * dx
        ny_ = ys0 + jj * dy
        # point-to-segment distance, broadcast over (segments, stencil)
        d0 = b - a
        len2 = (d0[:, 0] ** 2 + d0[:, 1] ** 2)[:, None]
        px = nx_ - a[:, 0][:, None]
        py = ny_ - a[:, 1][:, None]
        t = px * d0[:, 0][:, None] + py * d0[:, 1][:, None]
        safe = np.where(len2 > 0, len2, 1.0)
        t = np.clip(t / safe, 0.0, 1.0)
        t = np.where(len2 > 0, t, 0.0)
        cx = px - t * d0[:, 0][:, None]
        cy = py - t * d0[:, 1][:, None]
        dist = np.hypot(cx, cy)
        flat = ii * grid.ny + jj
        for k, r in enumerate(radii):
            sel = ok & (dist <= r)
            if sel.any():
                nodes = np.unique(flat[sel])
                counts[k].ravel()[nodes] += 1
    return counts


def oracle_field(field, sampler: FilamentModel, grid: GridSpec, n_mc: int,
                 rng: np.random.Generator, r1: float | None = None,
                 cfg: FlowConfig | None = None, maxima=None,
                 segs: TracedSegments | None = None) -> GridField:
    """Monte-Carlo path-density raster on the grid.

    r1 defaults to max(2 tracing steps, sigma/20). Nodes within r2 = 2 r1 of
    a known maximum are flagged saturated (the density diverges there).
    A pre-traced batch can be passed through `segs` (n_mc and rng are then
    ignored), so several rasters can share one set of paths.
    """
    if cfg is None:
        cfg = model_flow_config(sampler)
    if r1 is None:
        r1 = max(2.0 * cfg.step_scale, sampler.max_sigma / 20.0)
    r2 = 2.0 * r1
    if segs is None:
        segs = sample_and_trace(field, sampler, n_mc, rng, cfg=cfg)
    counts = path_hit_counts(segs, grid, [r1, r2])
    f1 = counts[0] / segs.n_paths
    f2 = counts[1] / segs.n_paths
    values = np.maximum(2.0 * f1 / r1 - f2 / r2, 0.0)
    saturated = None
    if maxima is not None and len(maxima):
        maxima = np.asarray(maxima, dtype=float).reshape(-1, 2)
        nodes = grid.nodes()
        d = np.min(np.hypot(nodes[:, 0][:, None] - maxima[:, 0][None, :],
                            nodes[:, 1][:, None] - maxima[:, 1][None, :]), axis=1)
        saturated = (d <= r2).reshape(grid.nx, grid.ny)
    return GridField(spec=grid, values=values, saturated=saturated)


def true_path_ensemble(cloud: PointCloud, field, cfg: FlowConfig | None = None,
                       trim: int = 0) -> PathEnsemble:
    """Ascent paths of the data points traced on the true field."""
    if cfg is None and isinstance(field, FilamentModel):
        cfg = model_flow_config(field)
    if cfg is None:
        raise ValueError("cfg required for non-model fields")
    from .flow import trace_ascent_paths

    return PathEnsemble(trace_ascent_paths(field, cloud.points, cfg), trim=trim)


def estimate_with_true_paths(cloud: PointCloud, field, kernel: KernelSpec,
                             nu: float, x, cfg: FlowConfig | None = None):
    """The path-density estimator fed with true-field paths of the data.

    Splits off the field-estimation error: comparing this against the full
    estimator isolates the effect of tracing on an estimated field.
    """
    ensemble = true_path_ensemble(cloud, field, cfg=cfg)
    return estimate_path_density(ensemble, kernel, nu, x)


@dataclass
class RateTable:
    """Sup-error rows over (sample size, replicate) plus a log-log fit.

    median_rows carries the companion median-over-probes error per run
    (same ordering as rows; not part of the CSV schema).
    """

    rows: list  # (n, replicate, sup_error)
    slope: float
    slope_stderr: float
    ci95: tuple[float, float]
    median_rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @staticmethod
    def _medians(rows) -> dict[int, float]:
        out: dict[int, list[float]] = {}
        for n, _rep, err in rows:
            out.setdefault(int(n), []).append(float(err))
        return {n: float(np.median(v)) for n, v in sorted(out.items())}

    def median_by_n(self) -> dict[int, float]:
        return self._medians(self.rows)

    def median_error_by_n(self) -> dict[int, float]:
        return self._medians(self.median_rows)


def _loglog_fit(rows):
    x = np.log([r[0] for r in rows])
    y = np.log([max(r[2], 1e-300) for r in rows])
    A = np.column_stack([np.ones_like(x), x])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(((y - fitted) ** 2).sum()) / dof
    xvar = float(((x - x.mean()) ** 2).sum())
    stderr = np.sqrt(s2 / xvar) if xvar > 0 else np.inf
    slope = float(coef[1])
    return slope, float(stderr), (slope - 1.96 * stderr, slope + 1.96 * stderr)


def convergence_experiment(model: FilamentModel, n_list, replicates: int,
                           probe_grid: GridSpec, seed: int,
                           kernel: KernelSpec | None = None,
                           c_h: float = 0.125, c_nu: float = 0.125,
                           oracle_n_mc: int = 100_000,
                           oracle_r1: float = 0.02,
                           exclusion_factor: float = 2.0) -> RateTable:
    """Sup-norm error of the estimator against the Monte-Carlo truth.

    For each sample size and replicate: draw, trace mean-shift paths, estimate
    on the probe grid with the rate-optimal bandwidths, and take the sup of
    |estimate - truth| over the kept probes. The probe set is fixed across the
    whole sweep: probes within exclusion_factor times the largest nu of the
    sweep of any true maximum or saddle are dropped (a per-run exclusion would
    expose more of the near-mode divergence as n grows and mask the decay).
    The truth raster is shared across runs.
    """
    kernel = kernel or KernelSpec()
    seq = np.random.SeedSequence(seed)
    oracle_seed, *run_seeds = seq.spawn(1 + len(n_list) * replicates)

    cfg_true = model_flow_config(model)
    crit = find_critical_points(model, model.box, cfg_true)
    excl = np.asarray([c.location for c in crit
                       if c.kind in ("maximum", "saddle")], dtype=float)

    segs = sample_and_trace(model, model, oracle_n_mc,
                            np.random.default_rng(oracle_seed), cfg=cfg_true)
    counts = path_hit_counts(segs, probe_grid, [oracle_r1, 2 * oracle_r1])
    truth = np.maximum(2.0 * counts[0] / (oracle_n_mc * oracle_r1)
                       - counts[1] / (oracle_n_mc * 2.0 * oracle_r1), 0.0)

    nodes = probe_grid.nodes()
    if len(excl):
        d_excl = np.min(np.hypot(nodes[:, 0][:, None] - excl[:, 0][None, :],
                                 nodes[:, 1][:, None] - excl[:, 1][None, :]), axis=1)
    else:
        d_excl = np.full(len(nodes), np.inf)

    runs = []
    k = 0
    nu_max = 0.0
    for n in n_list:
        for rep in range(replicates):
            rng = np.random.default_rng(run_seeds[k])
            k += 1
            cloud = model.sample(int(n), rng)
            bw = default_bandwidths(cloud.n, cloud.spread, c_h=c_h, c_nu=c_nu)
            nu_max = max(nu_max, bw.nu)
            cfg = kde_flow_config(cloud, kernel, bw.h)
            paths = mean_shift_paths(cloud, kernel, bw.h, cloud.points, cfg)
            ensemble = PathEnsemble(paths)
            est = estimate_path_density(ensemble, kernel, bw.nu, nodes)
            runs.append((int(n), rep, est))

    keep = d_excl > exclusion_factor * nu_max
    rows = [(n, rep, float(np.max(np.abs(est[keep] - truth.ravel()[keep]))))
            for n, rep, est in runs]
    median_rows = [(n, rep, float(np.median(np.abs(est[keep] - truth.ravel()[keep]))))
                   for n, rep, est in runs]

    slope, stderr, ci = _loglog_fit(rows)
    return RateTable(rows=rows, slope=slope, slope_stderr=stderr, ci95=ci,
                     median_rows=median_rows,
                     meta={"seed": seed, "oracle_n_mc": oracle_n_mc,
                           "oracle_r1": oracle_r1, "c_h": c_h, "c_nu": c_nu,
                           "exclusion_factor": exclusion_factor})
