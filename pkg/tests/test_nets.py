"""Epsilon nets and walk graphs against brute-force constructions."""
import numpy as np
import pytest

from walkdim.errors import ValidationError
from walkdim.fractals import euclidean_cloud
from walkdim.geometry import PointCloud, squared_dist
from walkdim.nets import (
    build_epsilon_net,
    build_walk_graph,
    graph_is_connected,
    save_net_membership_csv,
    save_walk_graph_csv,
)


def random_cloud(gen, n, dim=2):
    return PointCloud(gen.standard_normal((n, dim)))


def test_net_is_packing_and_covering(rng):
    for trial in range(25):
        cloud = random_cloud(rng, int(rng.integers(5, 120)))
        eps = float(rng.uniform(0.2, 1.5))
        net = build_epsilon_net(cloud, eps)
        pts = cloud.coords[net.net_indices]
        for a in range(len(pts)):
            others = np.delete(pts, a, axis=0)
            if len(others):
                assert squared_dist(others, pts[a]).min() >= eps * eps - 1e-12
        for i in range(len(cloud)):
            j = net.cover_of[i]
            gap2 = squared_dist(cloud.coords[i], pts[j])
            assert gap2 < eps * eps


def test_net_starts_at_seed_and_is_maximal(rng):
    cloud = random_cloud(rng, 60)
    for seed in (0, 17, 59):
        net = build_epsilon_net(cloud, 0.7, seed_index=seed)
        assert net.net_indices[0] == seed
        # maximality: every cloud point is within eps of some member
        pts = cloud.coords[net.net_indices]
        for i in range(len(cloud)):
            d2 = squared_dist(cloud.coords[i], pts)
            assert d2.min() < 0.7**2


def test_net_extension_keeps_prior_members(rng):
    cloud = random_cloud(rng, 150)
    coarse = build_epsilon_net(cloud, 1.0)
    fine = build_epsilon_net(cloud, 0.4, initial=coarse.net_indices)
    assert list(fine.net_indices[:len(coarse.net_indices)]) == list(coarse.net_indices)
    assert set(coarse.net_indices) <= set(fine.net_indices)


def test_net_size_monotone_in_epsilon(rng):
    cloud = random_cloud(rng, 200)
    sizes = [len(build_epsilon_net(cloud, e).net_indices)
             for e in (0.2, 0.4, 0.8, 1.6)]
    assert sizes == sorted(sizes, reverse=True)


def test_net_initial_members_too_close_rejected():
    cloud = PointCloud(np.arange(6, dtype=float)[:, None])
    with pytest.raises(ValidationError):
        build_epsilon_net(cloud, 2.0, initial=(0, 1))


def test_cover_assignment_prefers_lowest_cloud_index():
    # point 1 is exactly 1.0 from both members 0 and 2; tie goes to index 0
    cloud = PointCloud(np.array([0.0, 1.0, 2.0])[:, None])
    net = build_epsilon_net(cloud, 1.5)
    assert list(net.net_indices) == [0, 2]
    assert net.cover_of[1] == 0


def _brute_proximity_edges(cloud, net, rho_eps):
    pts = cloud.coords[net.net_indices]
    m = len(pts)
    edges = set()
    for a in range(m):
        for b in range(a, m):
            if squared_dist(pts[a], pts[b]) < rho_eps * rho_eps:
                edges.add((a, b))
    return edges


def _brute_covering_edges(cloud, net, eta_eps):
    pts = cloud.coords[net.net_indices]
    m = len(pts)
    edges = set()
    for i in range(len(cloud)):
        near = [a for a in range(m)
                if squared_dist(cloud.coords[i], pts[a]) < eta_eps * eta_eps]
        for ai in range(len(near)):
            for bi in range(ai, len(near)):
                edges.add((near[ai], near[bi]))
    return edges


def test_proximity_graph_matches_brute_force(rng):
    for _ in range(10):
        cloud = random_cloud(rng, int(rng.integers(10, 80)))
        eps = float(rng.uniform(0.3, 1.0))
        net = build_epsilon_net(cloud, eps)
        g = build_walk_graph(cloud, net, kind="proximity", param=2.0)
        assert set(g.edge_list()) == _brute_proximity_edges(cloud, net, 2.0 * eps)


def test_covering_graph_matches_brute_force(rng):
    for _ in range(10):
        cloud = random_cloud(rng, int(rng.integers(10, 80)))
        eps = float(rng.uniform(0.3, 1.0))
        net = build_epsilon_net(cloud, eps)
        g = build_walk_graph(cloud, net, kind="covering", param=1.0)
        assert set(g.edge_list()) == _brute_covering_edges(cloud, net, eps)


def test_proximity_two_contains_covering_one(rng):
    for _ in range(8):
        cloud = random_cloud(rng, int(rng.integers(15, 90)))
        net = build_epsilon_net(cloud, 0.6)
        cov = build_walk_graph(cloud, net, kind="covering", param=1.0)
        prox = build_walk_graph(cloud, net, kind="proximity", param=2.0)
        assert set(cov.edge_list()) <= set(prox.edge_list())


def test_walk_graph_self_loops_and_degrees(rng):
    cloud = random_cloud(rng, 50)
    net = build_epsilon_net(cloud, 0.5)
    g = build_walk_graph(cloud, net, kind="proximity", param=2.0)
    edges = g.edge_list()
    m = len(net.net_indices)
    assert {(a, a) for a in range(m)} <= set(edges)
    assert edges == sorted(edges)
    assert all(a <= b for a, b in edges)
    deg = np.zeros(m, dtype=int)
    for a, b in edges:
        deg[a] += 1
        if a != b:
            deg[b] += 1
    np.testing.assert_array_equal(deg, g.degrees)


def test_walk_graph_degree_bounded_on_uniform_grid():
    cloud = euclidean_cloud("interval", 401, 1.0)
    net = build_epsilon_net(cloud, 0.05)
    g = build_walk_graph(cloud, net, kind="proximity", param=2.0)
    # 1-d proximity at rho=2: at most self, two left, two right
    assert g.degrees.max() <= 5


def test_graph_connectivity_detection():
    near = PointCloud(np.arange(5, dtype=float)[:, None])
    net = build_epsilon_net(near, 1.5)
    g = build_walk_graph(near, net, kind="proximity", param=2.0)
    assert graph_is_connected(g)

    split = PointCloud(np.array([0.0, 1.0, 50.0, 51.0])[:, None])
    net2 = build_epsilon_net(split, 0.9)
    g2 = build_walk_graph(split, net2, kind="proximity", param=2.0)
    assert not graph_is_connected(g2)


def test_walk_graph_csv_rows_are_cloud_index_pairs(tmp_path, rng):
    cloud = random_cloud(rng, 40)
    net = build_epsilon_net(cloud, 0.6)
    g = build_walk_graph(cloud, net, kind="proximity", param=2.0)
    path = tmp_path / "graph.csv"
    save_walk_graph_csv(g, path)
    text = path.read_text().splitlines()
    assert text[0] == "u,v"
    pairs = [tuple(int(t) for t in line.split(",")) for line in text[1:]]
    idx = net.net_indices
    want = sorted((min(int(idx[a]), int(idx[b])), max(int(idx[a]), int(idx[b])))
                  for a, b in g.edge_list())
    assert pairs == want


def test_net_membership_csv_layout(tmp_path):
    cloud = PointCloud(np.array([0.0, 1.0, 2.0])[:, None])
    net = build_epsilon_net(cloud, 1.5)
    path = tmp_path / "members.csv"
    save_net_membership_csv(net, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "cloud_index,is_net,cover_of"
    assert rows[1] == "0,1,0"
    assert rows[2] == "1,0,0"   # covered by cloud point 0
    assert rows[3] == "2,1,2"


def test_net_and_graph_validation():
    cloud = PointCloud(np.arange(4, dtype=float)[:, None])
    net = build_epsilon_net(cloud, 1.5)
    with pytest.raises(ValidationError):
        build_epsilon_net(cloud, 0.0)
    with pytest.raises(ValidationError):
        build_epsilon_net(cloud, 1.0, seed_index=4)
    with pytest.raises(ValidationError):
        build_walk_graph(cloud, net, kind="proximity", param=1.5)
    with pytest.raises(ValidationError):
        build_walk_graph(cloud, net, kind="covering", param=0.5)
    with pytest.raises(ValidationError):
        build_walk_graph(cloud, net, kind="nearest")
