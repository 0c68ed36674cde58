"""Finite point-cloud model of a compact metric space.

A cloud is an (n, d) array of coordinates with one scalar parameter per
point (curve parameter, cell address, or zero).  The metric is Euclidean
in the ambient coordinates.

Ball membership is always decided by an exact floating-point comparison of
squared distances; the k-d tree is only used to shortlist candidates with a
slightly inflated radius, so query results are identical to a brute-force
scan regardless of the index.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree, ConvexHull
from scipy.spatial import QhullError

from .errors import ValidationError
from .util import fmt_float

# relative slack on the shortlist radius; candidates are re-checked exactly
_TREE_SLACK = 1e-9


def squared_dist(coords, center):
    """Canonical squared Euclidean distances from each row to ``center``.

    Every ball predicate in the package routes through this expression, so
    membership decisions agree bitwise everywhere.
    """
    diff = np.atleast_2d(coords) - np.asarray(center)
    return np.einsum("ij,ij->i", diff, diff)


@dataclass(frozen=True)
class BallSpec:
    """A metric ball given by a cloud point index and a radius.

    ``closed`` picks between d <= r and d < r.  Exit balls default to
    closed; jump kernels use open balls throughout.
    """

    center_index: int
    radius: float
    closed: bool = True

    def __post_init__(self):
        if self.center_index < 0:
            raise ValidationError(f"ball center index {self.center_index} is negative")
        if not (self.radius > 0) or not np.isfinite(self.radius):
            raise ValidationError(f"ball radius must be positive and finite, got {self.radius}")


class PointCloud:
    """Immutable finite sample of a compact space.

    Parameters
    ----------
    coords : array_like, shape (n, d) or (n,)
        Point coordinates.  A flat array is treated as points on a line.
    params : array_like, shape (n,), optional
        Per-point scalar parameter (defaults to zeros).
    label : str
        Free-form tag carried through persistence.
    """

    def __init__(self, coords, params=None, label=""):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] == 0:
            raise ValidationError("coords must be a nonempty (n, d) array")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("coords must be finite")
        if params is None:
            params = np.zeros(coords.shape[0])
        params = np.asarray(params, dtype=float)
        if params.shape != (coords.shape[0],):
            raise ValidationError("params must have one entry per point")
        coords = coords.copy()
        params = params.copy()
        coords.setflags(write=False)
        params.setflags(write=False)
        self.coords = coords
        self.params = params
        self.label = str(label)
        self._tree = None
        self._diameter = None
        self._resolution = None

    def __len__(self):
        return self.coords.shape[0]

    def __repr__(self):
        return f"PointCloud(n={len(self)}, dim={self.ambient_dim}, label={self.label!r})"

    @property
    def ambient_dim(self) -> int:
        return self.coords.shape[1]

    def point(self, i: int) -> np.ndarray:
        return self.coords[i]

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.coords)
        return self._tree

    def distance(self, i: int, j: int) -> float:
        n = len(self)
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"point index out of range for cloud of size {n}")
        return float(np.sqrt(squared_dist(self.coords[i : i + 1], self.coords[j])[0]))

    def ball_query(self, ball: BallSpec | None = None, *, center_index: int | None = None,
                   radius: float | None = None, closed: bool = True) -> np.ndarray:
        """Indices of points in a ball, ascending.

        Accepts either a ``BallSpec`` or explicit keyword arguments.  The
        comparison is exact on squared distances.
        """
        if ball is not None:
            center_index, radius, closed = ball.center_index, ball.radius, ball.closed
        if center_index is None or radius is None:
            raise ValidationError("ball_query needs a BallSpec or center_index and radius")
        if not (0 <= center_index < len(self)):
            raise ValidationError(f"ball center {center_index} out of range")
        if not (radius > 0):
            raise ValidationError("ball radius must be positive")
        center = self.coords[center_index]
        cand = self.tree.query_ball_point(center, radius * (1.0 + _TREE_SLACK))
        cand = np.asarray(sorted(cand), dtype=np.intp)
        if cand.size == 0:
            return cand
        d2 = squared_dist(self.coords[cand], center)
        r2 = radius * radius
        keep = d2 <= r2 if closed else d2 < r2
        return cand[keep]

    def diameter(self) -> float:
        """Largest pairwise distance, equal to the brute-force maximum."""
        if self._diameter is None:
            if len(self) == 1:
                self._diameter = 0.0
            elif self.ambient_dim == 1:
                x = self.coords[:, 0]
                self._diameter = float(x.max() - x.min())
            else:
                try:
                    hull = ConvexHull(self.coords)
                    pts = self.coords[hull.vertices]
                except QhullError:
                    pts = self.coords  # degenerate cloud, brute force
                best = 0.0
                for k in range(len(pts) - 1):
                    d2 = squared_dist(pts[k + 1 :], pts[k])
                    best = max(best, float(d2.max()))
                self._diameter = float(np.sqrt(best))
        return self._diameter

    def resolution(self) -> float:
        """Sample density: the largest nearest-neighbor distance.

        Scale grids should stay well above this value; estimators enforce
        that precondition.
        """
        if self._resolution is None:
            if len(self) == 1:
                self._resolution = 0.0
            else:
                d, _ = self.tree.query(self.coords, k=2)
                self._resolution = float(d[:, 1].max())
        return self._resolution

    # -- persistence ------------------------------------------------------

    def to_csv(self, path) -> None:
        """Write ``x0,...,x{d-1},param`` rows at full round-trip precision."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{k}" for k in range(self.ambient_dim)] + ["param"])
        for row, p in zip(self.coords, self.params):
            w.writerow([fmt_float(v) for v in row] + [fmt_float(p)])
        from .util import write_text_atomic

        write_text_atomic(path, buf.getvalue())

    @classmethod
    def from_csv(cls, path, label=None) -> "PointCloud":
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            if not header or header[-1] != "param":
                raise ValidationError(f"{path}: expected header x0,...,param")
            d = len(header) - 1
            coords, params = [], []
            for row in r:
                if not row:
                    continue
                if len(row) != d + 1:
                    raise ValidationError(f"{path}: ragged row {row}")
                coords.append([float(v) for v in row[:d]])
                params.append(float(row[d]))
        if label is None:
            label = os.path.splitext(os.path.basename(str(path)))[0]
        return cls(np.asarray(coords), np.asarray(params), label=label)


@dataclass(frozen=True)
class MeasureWeights:
    """Strictly positive weight per cloud point; a finite measure of full support."""

    weights: np.ndarray
    total: float = None  # filled from the weights when omitted

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValidationError("weights must be a nonempty 1-d array")
        if not np.all(np.isfinite(w)) or not np.all(w > 0):
            raise ValidationError("weights must be finite and strictly positive")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        total = float(w.sum())
        if self.total is None:
            object.__setattr__(self, "total", total)
        elif not np.isclose(self.total, total, rtol=1e-12, atol=0.0):
            raise ValidationError(f"stated total {self.total} != sum of weights {total}")

    def __len__(self):
        return self.weights.size

    @classmethod
    def uniform(cls, n, total=1.0) -> "MeasureWeights":
        if isinstance(n, PointCloud):
            n = len(n)
        if n <= 0:
            raise ValidationError("need at least one point")
        return cls(np.full(n, total / n))

    def mass(self, indices) -> float:
        """Measure of a subset given by indices."""
        return float(self.weights[np.asarray(indices, dtype=np.intp)].sum())

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "weight"])
        for i, v in enumerate(self.weights):
            w.writerow([i, fmt_float(v)])
        from .util import write_text_atomic

        write_text_atomic(path, buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "MeasureWeights":
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            if header != ["index", "weight"]:
                raise ValidationError(f"{path}: expected header index,weight")
            vals = {}
            for row in r:
                if not row:
                    continue
                vals[int(row[0])] = float(row[1])
        n = len(vals)
        if sorted(vals) != list(range(n)):
            raise ValidationError(f"{path}: indices must cover 0..{n - 1}")
        return cls(np.array([vals[i] for i in range(n)]))
