"""Epsilon-nets and the walk graphs built on them.

A net is a maximal subset of the cloud with pairwise distances >= eps,
grown by a greedy scan in index order so nets are reproducible.  Two graph
kinds connect net points:

* ``covering`` (dilation eta >= 1): x ~ y when some cloud point lies in
  both eta*eps balls, i.e. the enlarged balls visibly overlap in the sample;
* ``proximity`` (factor rho >= 2): x ~ y when d(x, y) < rho * eps.

Every vertex carries a self-loop, and the uniform walk steps to a neighbor
(including the loop) with equal probability.
"""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .geometry import PointCloud, squared_dist

_TREE_SLACK = 1e-9


@dataclass
class EpsilonNet:
    """Greedy net over a cloud.

    ``net_indices`` lists member cloud indices in acceptance order;
    ``cover_of`` maps every cloud index to the position (into net_indices)
    of its nearest net point, ties broken toward the lowest cloud index.
    """

    epsilon: float
    net_indices: np.ndarray
    cover_of: np.ndarray

    def __len__(self):
        return self.net_indices.size

    def net_coords(self, cloud: PointCloud) -> np.ndarray:
        return cloud.coords[self.net_indices]


def build_epsilon_net(cloud: PointCloud, epsilon: float, seed_index: int = 0,
                      initial=()) -> EpsilonNet:
    """Greedy maximal eps-separated subset, scanning from seed_index upward.

    The scan wraps around, and a point joins exactly when it is at distance
    >= eps from every point already accepted.  ``initial`` seeds the net
    with given members (they must themselves be eps-separated), which makes
    the greedy extension property directly testable.
    """
    n = len(cloud)
    if not (epsilon > 0) or not np.isfinite(epsilon):
        raise ValidationError(f"epsilon must be positive and finite, got {epsilon}")
    if not (0 <= seed_index < n):
        raise ValidationError(f"seed index {seed_index} out of range for {n} points")
    coords = cloud.coords
    tree = cloud.tree
    eps2 = epsilon * epsilon
    blocked = np.zeros(n, dtype=bool)
    accepted: list[int] = []

    def accept(i: int) -> None:
        accepted.append(i)
        cand = tree.query_ball_point(coords[i], epsilon * (1.0 + _TREE_SLACK))
        cand = np.asarray(cand, dtype=np.intp)
        close = cand[squared_dist(coords[cand], coords[i]) < eps2]
        blocked[close] = True

    for i in initial:
        i = int(i)
        if not (0 <= i < n):
            raise ValidationError(f"initial member {i} out of range")
        if blocked[i]:
            raise ValidationError("initial members must be pairwise >= epsilon apart")
        accept(i)
    order = np.r_[seed_index:n, 0:seed_index]
    for i in order:
        if not blocked[i]:
            accept(int(i))

    net_indices = np.asarray(accepted, dtype=np.intp)
    cover_of = _assign_cover(cloud, net_indices)
    return EpsilonNet(epsilon=float(epsilon), net_indices=net_indices, cover_of=cover_of)


def _assign_cover(cloud: PointCloud, net_indices: np.ndarray) -> np.ndarray:
    """Nearest net position per cloud point, exact ties to the lowest cloud index."""
    m = net_indices.size
    net_tree = cKDTree(cloud.coords[net_indices])
    k = min(m, 12)  # enough candidates to cover exact ties on symmetric grids
    _, nearest = net_tree.query(cloud.coords, k=k)
    nearest = np.atleast_2d(nearest.reshape(len(cloud), k))
    cover = np.empty(len(cloud), dtype=np.intp)
    for i in range(len(cloud)):
        cand = nearest[i]
        d2 = squared_dist(cloud.coords[net_indices[cand]], cloud.coords[i])
        best = d2.min()
        tied = cand[d2 == best]
        cover[i] = tied[np.argmin(net_indices[tied])]
    return cover


@dataclass
class WalkGraph:
    """Undirected graph over net points with per-vertex sorted adjacency.

    Adjacency lists are positions into ``net.net_indices`` and always
    contain the vertex itself.  ``degrees[i] == len(adjacency[i])`` counts
    the self-loop, matching the uniform walk that may stand still.
    """

    net: EpsilonNet
    kind: str
    param: float
    adjacency: list[np.ndarray]
    degrees: np.ndarray

    def __len__(self):
        return len(self.net)

    def edge_list(self) -> list[tuple[int, int]]:
        """Edges (u, v) with u <= v as positions, sorted, self-loops included."""
        edges = set()
        for u, nbrs in enumerate(self.adjacency):
            for v in nbrs:
                edges.add((u, int(v)) if u <= v else (int(v), u))
        return sorted(edges)


def build_walk_graph(cloud: PointCloud, net: EpsilonNet, kind: str = "covering",
                     param: float | None = None) -> WalkGraph:
    if kind == "covering":
        param = 1.0 if param is None else float(param)
        if param < 1.0:
            raise ValidationError(f"covering dilation must be >= 1, got {param}")
        neighbor_sets = _covering_edges(cloud, net, param)
    elif kind == "proximity":
        param = 2.0 if param is None else float(param)
        if param < 2.0:
            raise ValidationError(f"proximity factor must be >= 2, got {param}")
        neighbor_sets = _proximity_edges(cloud, net, param)
    else:
        raise ValidationError(f"unknown graph kind {kind!r}")
    adjacency = []
    for u, s in enumerate(neighbor_sets):
        s.add(u)
        adjacency.append(np.asarray(sorted(s), dtype=np.intp))
    degrees = np.asarray([len(a) for a in adjacency], dtype=np.intp)
    return WalkGraph(net=net, kind=kind, param=param, adjacency=adjacency, degrees=degrees)


def _proximity_edges(cloud, net, rho):
    coords = net.net_coords(cloud)
    tree = cKDTree(coords)
    cut = rho * net.epsilon
    cut2 = cut * cut
    sets = [set() for _ in range(len(net))]
    for u, v in tree.query_pairs(cut * (1.0 + _TREE_SLACK)):
        if squared_dist(coords[u : u + 1], coords[v])[0] < cut2:
            sets[u].add(int(v))
            sets[v].add(int(u))
    return sets


def _covering_edges(cloud, net, eta):
    # x ~ y when a cloud sample point witnesses the overlap of both
    # eta*eps balls; each sample point links every pair it witnesses
    coords = net.net_coords(cloud)
    tree = cKDTree(coords)
    cut = eta * net.epsilon
    cut2 = cut * cut
    sets = [set() for _ in range(len(net))]
    hits = tree.query_ball_point(cloud.coords, cut * (1.0 + _TREE_SLACK))
    for z, cand in enumerate(hits):
        if not cand:
            continue
        cand = np.asarray(cand, dtype=np.intp)
        wit = cand[squared_dist(coords[cand], cloud.coords[z]) < cut2]
        for a in range(wit.size):
            u = int(wit[a])
            for b in range(a + 1, wit.size):
                v = int(wit[b])
                sets[u].add(v)
                sets[v].add(u)
    return sets


def graph_is_connected(graph: WalkGraph) -> bool:
    m = len(graph)
    if m == 0:
        return True
    seen = np.zeros(m, dtype=bool)
    queue = deque([0])
    seen[0] = True
    while queue:
        u = queue.popleft()
        for v in graph.adjacency[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(int(v))
    return bool(seen.all())


def save_walk_graph_csv(graph: WalkGraph, path) -> None:
    """Edge list as cloud-index pairs u <= v, one row per edge, self-loops kept."""
    idx = graph.net.net_indices
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "v"])
    rows = sorted(
        (min(int(idx[a]), int(idx[b])), max(int(idx[a]), int(idx[b])))
        for a, b in graph.edge_list()
    )
    for u, v in rows:
        w.writerow([u, v])
    from .util import write_text_atomic

    write_text_atomic(path, buf.getvalue())


def save_net_membership_csv(net: EpsilonNet, path) -> None:
    """Per cloud point: net membership flag and the covering net point."""
    member = np.zeros(net.cover_of.size, dtype=bool)
    member[net.net_indices] = True
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cloud_index", "is_net", "cover_of"])
    for i in range(net.cover_of.size):
        w.writerow([i, int(member[i]), int(net.net_indices[net.cover_of[i]])])
    from .util import write_text_atomic

    write_text_atomic(path, buf.getvalue())
