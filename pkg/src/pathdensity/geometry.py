"""Planar computational-geometry primitives: point/segment distances and polylines."""

import numpy as np


def as_points(x) -> np.ndarray:
    """Coerce to an (m, 2) float array; a single (2,) point becomes (1, 2)."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"expected points of shape (m, 2), got {a.shape}")
    return a


def segment_distances(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to each segment.

    points: (m, 2); seg_a, seg_b: (s, 2) segment endpoints.
    Returns (m, s). Zero-length segments degrade to point distances.
    """
    points = np.asarray(points, dtype=float)
    d = seg_b - seg_a                                   # (s, 2)
    len2 = np.einsum("ij,ij->i", d, d)                  # (s,)
    diff = points[:, None, :] - seg_a[None, :, :]       # (m, s, 2)
    t = np.einsum("msj,sj->ms", diff, d)
    safe = np.where(len2 > 0.0, len2, 1.0)
    t = np.clip(t / safe, 0.0, 1.0)
    t = np.where(len2 > 0.0, t, 0.0)
    closest = diff - t[:, :, None] * d[None, :, :]
    return np.sqrt(np.einsum("msj,msj->ms", closest, closest))


def polyline_min_distance(points, vertices: np.ndarray) -> np.ndarray:
    """Min distance from each point to the polyline through `vertices`.

    A single-vertex polyline is treated as a point.
    """
    pts = as_points(points)
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim == 1:
        vertices = vertices[None, :]
    if len(vertices) == 1:
        return np.hypot(pts[:, 0] - vertices[0, 0], pts[:, 1] - vertices[0, 1])
    d = segment_distances(pts, vertices[:-1], vertices[1:])
    return d.min(axis=1)


def polyline_arclength(vertices: np.ndarray) -> np.ndarray:
    """Cumulative arclength at each vertex, starting at 0."""
    vertices = np.asarray(vertices, dtype=float)
    steps = np.hypot(np.diff(vertices[:, 0]), np.diff(vertices[:, 1]))
    return np.concatenate([[0.0], np.cumsum(steps)])


def point_on_polyline(vertices: np.ndarray, arclen: np.ndarray, s) -> np.ndarray:
    """Point(s) at arclength position(s) s along the polyline."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x = np.interp(s, arclen, vertices[:, 0])
    y = np.interp(s, arclen, vertices[:, 1])
    return np.column_stack([x, y])


def _orient(a, b, c):
    # sign of the cross product (b-a) x (c-a); (m,) for broadcast inputs
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
        b[..., 1] - a[..., 1]
    ) * (c[..., 0] - a[..., 0])


def polyline_self_intersects(vertices: np.ndarray) -> bool:
    """True when any two non-adjacent segments of the polyline properly cross.

    Touching at shared endpoints (adjacent segments) does not count.
    """
    v = np.asarray(vertices, dtype=float)
    n = len(v) - 1
    if n < 3:
        return False
    a, b = v[:-1], v[1:]
    i, j = np.triu_indices(n, k=2)  # skip self and adjacent pairs
    p1, p2 = a[i], b[i]
    q1, q2 = a[j], b[j]
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    return bool(proper.any())


def convex_hull_contains(hull_points: np.ndarray, query: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Membership of query points in the convex hull of `hull_points`, padded by tol."""
    from scipy.spatial import ConvexHull

    hull_points = np.asarray(hull_points, dtype=float)
    q = as_points(query)
    if len(hull_points) < 3:
        # degenerate hull: fall back to distance to the point set / segment
        d = polyline_min_distance(q, hull_points)
        return d <= tol
    hull = ConvexHull(hull_points)
    # hull.equations: outward normals, A x + b <= 0 inside
    vals = q @ hull.equations[:, :2].T + hull.equations[:, 2][None, :]
    return (vals <= tol).all(axis=1)
