"""Generators for variable-dimensional fractals and Euclidean reference clouds.

Each fractal family replaces a cell by scaled copies of itself while an
angle or contraction-ratio window narrows along the construction, so the
local dimension drifts across the space.  Stage n is returned as the cloud
of cell vertices with a per-point construction parameter:

* curve families (``koch``): parameter is the arc position t = k / 4**n;
* cell families (``gasket``, ``carpet``, ``vicsek``): parameter is the
  radix address of the cell the vertex was first emitted from.

All generators are deterministic and dedupe repeated vertices by exact
coordinate equality, keeping the first occurrence in generation order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import MeasureWeights, PointCloud

KOCH_STAGE_CAP = 9
GASKET_STAGE_CAP = 10
CARPET_STAGE_CAP = 6
VICSEK_STAGE_CAP = 7


def _check_stage(stage: int, cap: int, family: str) -> None:
    if not (0 <= stage <= cap):
        raise ValidationError(f"{family} stage must lie in 0..{cap}, got {stage}")


@dataclass(frozen=True)
class KochParams:
    """Koch-type curve with the generator angle sliding from theta1 to theta2.

    Angles are radians in (0, pi/2); theta1 == theta2 gives a classical
    self-similar Koch curve.
    """

    theta1: float
    theta2: float
    stage: int

    def __post_init__(self):
        if not (0.0 < self.theta1 <= self.theta2 < np.pi / 2):
            raise ValidationError(
                f"need 0 < theta1 <= theta2 < pi/2, got ({self.theta1}, {self.theta2})")
        if self.stage < 0:
            raise ValidationError("stage must be nonnegative")


@dataclass(frozen=True)
class GasketParams:
    """Triangular gasket whose contraction ratio slides from r1 to r2 (each <= 1/2)."""

    r1: float
    r2: float
    side: float = 1.0
    stage: int = 0

    def __post_init__(self):
        if not (0.0 < self.r1 <= 0.5 and 0.0 < self.r2 <= 0.5):
            raise ValidationError(f"ratios must lie in (0, 1/2], got ({self.r1}, {self.r2})")
        if not (self.side > 0):
            raise ValidationError("side must be positive")
        if self.stage < 0:
            raise ValidationError("stage must be nonnegative")


@dataclass(frozen=True)
class CarpetParams:
    """Carpet on a b-by-h rectangle; the kept frame of 8 sub-rectangles is set
    by width and height fractions sliding from r1 to r2 (each < 1)."""

    b: float = 1.0
    h: float = 1.0
    r1: float = 1.0 / 3.0
    r2: float = 1.0 / 3.0
    stage: int = 0

    def __post_init__(self):
        if not (self.b > 0 and self.h > 0):
            raise ValidationError("rectangle sides must be positive")
        if not (0.0 < self.r1 < 1.0 and 0.0 < self.r2 < 1.0):
            raise ValidationError(f"fractions must lie in (0, 1), got ({self.r1}, {self.r2})")
        if self.stage < 0:
            raise ValidationError("stage must be nonnegative")


@dataclass(frozen=True)
class VicsekParams:
    """Plus-sign tree on an L-by-L square; center-square fraction slides r1 to r2."""

    L: float = 1.0
    r1: float = 1.0 / 3.0
    r2: float = 1.0 / 3.0
    stage: int = 0

    def __post_init__(self):
        if not (self.L > 0):
            raise ValidationError("square side must be positive")
        if not (0.0 < self.r1 < 1.0 and 0.0 < self.r2 < 1.0):
            raise ValidationError(f"fractions must lie in (0, 1), got ({self.r1}, {self.r2})")
        if self.stage < 0:
            raise ValidationError("stage must be nonnegative")


def koch_alpha(t, theta1: float, theta2: float):
    """Local dimension of the variable Koch curve at arc position t.

    The value is 2 log 2 / log(2 + 2 cos theta(t)) with the angle
    interpolated linearly between the two window ends.  Accepts scalars or
    arrays in [0, 1].
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > 1):
        raise ValidationError("arc position t must lie in [0, 1]")
    if not (0.0 < theta1 <= theta2 < np.pi / 2):
        raise ValidationError(f"need 0 < theta1 <= theta2 < pi/2, got ({theta1}, {theta2})")
    theta = theta1 + t_arr * (theta2 - theta1)
    out = 2.0 * np.log(2.0) / np.log(2.0 + 2.0 * np.cos(theta))
    return out if out.ndim else float(out)


def _dedupe(points: np.ndarray, params: np.ndarray):
    """Drop exact duplicate rows, keeping the first occurrence in order."""
    seen = {}
    keep = []
    for i, row in enumerate(points):
        key = row.tobytes()
        if key not in seen:
            seen[key] = i
            keep.append(i)
    keep = np.asarray(keep, dtype=np.intp)
    return points[keep], params[keep]


def koch_stage(p: KochParams, stage_cap: int = KOCH_STAGE_CAP) -> PointCloud:
    """Vertex cloud of the stage-n variable Koch curve from (0,0) to (1,0).

    Every segment [a, b] with angle window [lo, hi] is replaced by the
    four-segment generator with bend angle (lo + hi) / 2, and the children
    inherit the window split into quarters.  Stage n therefore has
    4**n + 1 vertices; vertex k sits at arc position t = k / 4**n.
    """
    _check_stage(p.stage, stage_cap, "koch")
    a = np.array([[0.0, 0.0]])
    b = np.array([[1.0, 0.0]])
    lo = np.array([p.theta1])
    hi = np.array([p.theta2])
    for _ in range(p.stage):
        theta = 0.5 * (lo + hi)
        c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
        chord = b - a
        length = np.sqrt(np.einsum("ij,ij->i", chord, chord))[:, None]
        u = chord / length
        v = np.stack([-u[:, 1], u[:, 0]], axis=1)  # left normal: bends point up
        seg = length / (2.0 + 2.0 * c)
        q1 = a + seg * u
        q2 = q1 + seg * (c * u + s * v)
        q3 = a + seg * (1.0 + 2.0 * c) * u
        # children keep the parent endpoints bitwise, so the curve chains exactly
        a = np.stack([a, q1, q2, q3], axis=1).reshape(-1, 2)
        b = np.stack([q1, q2, q3, b], axis=1).reshape(-1, 2)
        dq = (hi - lo) / 4.0
        lo = (lo[:, None] + dq[:, None] * np.arange(4)).reshape(-1)
        hi = lo + np.repeat(dq, 4)
    pts = np.vstack([a, b[-1:]])
    n = 4**p.stage
    params = np.arange(n + 1, dtype=float) / n
    return PointCloud(pts, params, label=f"koch-stage{p.stage}")


def gasket_stage(p: GasketParams, stage_cap: int = GASKET_STAGE_CAP) -> PointCloud:
    """Vertex cloud of the stage-n variable gasket.

    Each triangle spawns one contracted copy at each of its three corners
    with ratio (lo + hi) / 2 of its window, and the window splits into
    thirds (corner order: bottom-left, bottom-right, top).  Parameters are
    ternary cell addresses read as base-3 fractions.
    """
    _check_stage(p.stage, stage_cap, "gasket")
    L = p.side
    tri = np.array([[[0.0, 0.0], [L, 0.0], [0.5 * L, np.sqrt(3.0) / 2.0 * L]]])
    lo = np.array([min(p.r1, p.r2)])
    hi = np.array([max(p.r1, p.r2)])
    addr = np.array([0.0])
    for level in range(p.stage):
        r = (0.5 * (lo + hi))[:, None, None]
        children = []
        for corner in range(3):
            v = tri[:, corner : corner + 1, :]
            children.append(v + r * (tri - v))
        tri = np.stack(children, axis=1).reshape(-1, 3, 2)
        dq = (hi - lo) / 3.0
        lo = (lo[:, None] + dq[:, None] * np.arange(3)).reshape(-1)
        hi = lo + np.repeat(dq, 3)
        addr = (addr[:, None] + np.arange(3) / 3.0 ** (level + 1)).reshape(-1)
    pts = tri.reshape(-1, 2)
    params = np.repeat(addr, 3)
    pts, params = _dedupe(pts, params)
    return PointCloud(pts, params, label=f"gasket-stage{p.stage}")


def carpet_stage(p: CarpetParams, stage_cap: int = CARPET_STAGE_CAP) -> PointCloud:
    """Corner cloud of the stage-n variable carpet.

    A b-by-h cell splits into a 3-by-3 grid with middle column width r*b
    and middle row height r*h; the center is dropped and the 8 frame cells
    survive, numbered counterclockwise from the bottom-left corner.  The
    window splits into eighths; parameters are octal cell addresses.
    """
    _check_stage(p.stage, stage_cap, "carpet")
    org = np.array([[0.0, 0.0]])
    size = np.array([[p.b, p.h]])
    lo = np.array([min(p.r1, p.r2)])
    hi = np.array([max(p.r1, p.r2)])
    addr = np.array([0.0])
    for level in range(p.stage):
        r = (0.5 * (lo + hi))[:, None]
        mid = r * size            # middle column width, middle row height
        side = (size - mid) / 2.0  # outer column width, outer row height
        x0, y0 = org[:, :1], org[:, 1:]
        wx, wy = side[:, :1], side[:, 1:]
        mx, my = mid[:, :1], mid[:, 1:]
        cells = [  # (origin, size) counterclockwise from bottom-left
            (np.hstack([x0, y0]), np.hstack([wx, wy])),
            (np.hstack([x0 + wx, y0]), np.hstack([mx, wy])),
            (np.hstack([x0 + wx + mx, y0]), np.hstack([wx, wy])),
            (np.hstack([x0 + wx + mx, y0 + wy]), np.hstack([wx, my])),
            (np.hstack([x0 + wx + mx, y0 + wy + my]), np.hstack([wx, wy])),
            (np.hstack([x0 + wx, y0 + wy + my]), np.hstack([mx, wy])),
            (np.hstack([x0, y0 + wy + my]), np.hstack([wx, wy])),
            (np.hstack([x0, y0 + wy]), np.hstack([wx, my])),
        ]
        org = np.stack([c[0] for c in cells], axis=1).reshape(-1, 2)
        size = np.stack([c[1] for c in cells], axis=1).reshape(-1, 2)
        dq = (hi - lo) / 8.0
        lo = (lo[:, None] + dq[:, None] * np.arange(8)).reshape(-1)
        hi = lo + np.repeat(dq, 8)
        addr = (addr[:, None] + np.arange(8) / 8.0 ** (level + 1)).reshape(-1)
    zeros = np.zeros_like(org[:, :1])
    corners = np.stack([
        org,
        org + np.hstack([size[:, :1], zeros]),
        org + size,
        org + np.hstack([zeros, size[:, 1:]]),
    ], axis=1).reshape(-1, 2)
    params = np.repeat(addr, 4)
    pts, params = _dedupe(corners, params)
    return PointCloud(pts, params, label=f"carpet-stage{p.stage}")


def vicsek_stage(p: VicsekParams, stage_cap: int = VICSEK_STAGE_CAP) -> PointCloud:
    """Corner cloud of the stage-n variable plus-sign tree.

    An L-by-L cell splits 3-by-3 with center square of side r*L; the four
    corner squares and the center survive.  Corner cells take the outer
    thirds of the ratio window and the center takes the middle third;
    parameters are base-5 cell addresses.
    """
    _check_stage(p.stage, stage_cap, "vicsek")
    org = np.array([[0.0, 0.0]])
    side = np.array([p.L])
    lo = np.array([min(p.r1, p.r2)])
    hi = np.array([max(p.r1, p.r2)])
    addr = np.array([0.0])
    for level in range(p.stage):
        r = 0.5 * (lo + hi)
        mid = r * side
        arm = (side - mid) / 2.0
        x0, y0 = org[:, 0], org[:, 1]
        cells = [  # (origin_x, origin_y, side, window third)
            (x0, y0, arm, 0),
            (x0 + arm + mid, y0, arm, 2),
            (x0 + arm, y0 + arm, mid, 1),
            (x0, y0 + arm + mid, arm, 0),
            (x0 + arm + mid, y0 + arm + mid, arm, 2),
        ]
        org = np.stack([np.stack([cx, cy], axis=1) for cx, cy, _, _ in cells],
                       axis=1).reshape(-1, 2)
        side = np.stack([cs for _, _, cs, _ in cells], axis=1).reshape(-1)
        third = (hi - lo) / 3.0
        lo = np.stack([lo + third * k for _, _, _, k in cells], axis=1).reshape(-1)
        hi = lo + np.repeat(third, 5)
        addr = (addr[:, None] + np.arange(5) / 5.0 ** (level + 1)).reshape(-1)
    s = side[:, None]
    zeros = np.zeros_like(s)
    corners = np.stack([
        org,
        org + np.hstack([s, zeros]),
        org + np.hstack([s, s]),
        org + np.hstack([zeros, s]),
    ], axis=1).reshape(-1, 2)
    params = np.repeat(addr, 4)
    pts, params = _dedupe(corners, params)
    return PointCloud(pts, params, label=f"vicsek-stage{p.stage}")


def euclidean_cloud(kind: str, resolution: int, half_width: float = 1.0) -> PointCloud:
    """Regular grid sample of an interval, square, or closed disk.

    ``resolution`` counts grid points per axis over [-W, W], so the spacing
    is 2 W / (resolution - 1).  The disk keeps grid points with |x| <= W.
    """
    if resolution < 2:
        raise ValidationError("resolution must be at least 2")
    if not (half_width > 0):
        raise ValidationError("half_width must be positive")
    xs = np.linspace(-half_width, half_width, resolution)
    if kind == "interval":
        pts = xs[:, None]
    elif kind in ("square", "disk"):
        gx, gy = np.meshgrid(xs, xs, indexing="xy")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)  # y-major, x fastest
        if kind == "disk":
            r2 = np.einsum("ij,ij->i", pts, pts)
            pts = pts[r2 <= half_width * half_width]
    else:
        raise ValidationError(f"unknown euclidean kind {kind!r}")
    return PointCloud(pts, label=f"{kind}-res{resolution}")


def koch_natural_weights(cloud: PointCloud, theta1: float, theta2: float) -> MeasureWeights:
    """Weights matching the natural gauge of a variable Koch curve.

    Each edge of the polygonal stage contributes its length raised to the
    local dimension at the edge midpoint, split evenly between its two
    endpoint vertices.  The cloud must come from ``koch_stage`` so vertices
    are in arc order.
    """
    t = cloud.params
    if len(cloud) < 2 or np.any(np.diff(t) <= 0):
        raise ValidationError("expected a koch_stage cloud with increasing arc parameters")
    seg = np.diff(cloud.coords, axis=0)
    lengths = np.sqrt(np.einsum("ij,ij->i", seg, seg))
    mids = 0.5 * (t[:-1] + t[1:])
    gauge = lengths ** koch_alpha(mids, theta1, theta2)
    w = np.zeros(len(cloud))
    w[:-1] += 0.5 * gauge
    w[1:] += 0.5 * gauge
    return MeasureWeights(w)
