"""Exit-time solvers and walk simulators against dense solves and closed forms."""
import numpy as np
import pytest

from walkdim.errors import NoExitError, PathCapWarning, ValidationError
from walkdim.fractals import euclidean_cloud
from walkdim.geometry import BallSpec, MeasureWeights, PointCloud, squared_dist
from walkdim.nets import build_epsilon_net, build_walk_graph
from walkdim.walks import (
    BetaField,
    ball_volumes,
    exit_time_graph,
    exit_time_measure,
    exit_time_renormalized,
    inside_mask,
    mc_exit_time,
    measure_kernel_rows,
    simulate_ct_walk,
)


def path_graph(n):
    """Path on n unit-spaced points; every point is a net member."""
    cloud = PointCloud(np.arange(n, dtype=float)[:, None])
    net = build_epsilon_net(cloud, 0.9)
    return cloud, build_walk_graph(cloud, net, kind="proximity", param=2.0)


def interior_ball(n):
    # open ball around the middle holding exactly states 1 .. n-2
    return BallSpec(center_index=(n - 1) // 2, radius=(n - 1) / 2 - 0.5)


def test_path_graph_exit_matches_closed_form():
    # lazy walk with self-loops: E(k) = 1.5 k (n-1-k) on interior states
    for n in (3, 5, 7, 9):
        cloud, graph = path_graph(n)
        field = exit_time_graph(graph, cloud, interior_ball(n))
        k = np.arange(n, dtype=float)
        want = np.where((k >= 1) & (k <= n - 2), 1.5 * k * (n - 1 - k), 0.0)
        np.testing.assert_allclose(field.values, want, rtol=1e-9)
        assert field.mode == "graph"
        assert field.solver_residual <= 1e-10
        assert field.solver_iterations >= 1
        assert field.sup_value == pytest.approx(field.values.max())


def test_single_interior_vertex_exit_is_three_halves():
    cloud, graph = path_graph(3)
    field = exit_time_graph(graph, cloud, BallSpec(center_index=1, radius=0.5))
    assert field.values[1] == pytest.approx(1.5, rel=1e-10)
    assert field.values[0] == field.values[2] == 0.0


def dense_graph_oracle(graph, inside):
    pos = np.flatnonzero(inside)
    loc = {int(u): a for a, u in enumerate(pos)}
    m = pos.size
    P = np.zeros((m, m))
    for a, u in enumerate(pos):
        p = 1.0 / graph.degrees[u]
        for v in graph.adjacency[u]:
            if int(v) in loc:
                P[a, loc[int(v)]] = p
    return np.linalg.solve(np.eye(m) - P, np.ones(m)), pos


def test_graph_exit_matches_dense_solve_on_random_clouds(rng):
    compared = 0
    for _ in range(10):
        cloud = PointCloud(rng.standard_normal((60, 2)))
        net = build_epsilon_net(cloud, 0.45)
        graph = build_walk_graph(cloud, net, kind="proximity", param=2.0)
        ball = BallSpec(center_index=int(net.net_indices[0]), radius=1.2)
        d2 = squared_dist(cloud.coords[net.net_indices], cloud.coords[ball.center_index])
        inside = d2 < ball.radius**2
        if inside.all() or not all_inside_states_can_exit(graph.adjacency, inside):
            continue
        field = exit_time_graph(graph, cloud, ball)
        want, pos = dense_graph_oracle(graph, inside)
        np.testing.assert_allclose(field.values[pos], want, rtol=1e-8)
        compared += 1
    assert compared >= 3


def all_inside_states_can_exit(adj, inside):
    """True when every inside state connects (within the ball) to one that
    borders the outside; otherwise the exit time is genuinely infinite."""
    doomed = {int(u) for u in np.flatnonzero(inside)}
    frontier = [u for u in doomed if any(not inside[int(v)] for v in adj[u])]
    reached = set(frontier)
    while frontier:
        u = frontier.pop()
        for v in adj[u]:
            v = int(v)
            if inside[v] and v not in reached:
                reached.add(v)
                frontier.append(v)
    return reached == doomed


def dense_measure_oracle(cloud, mu, r, ball):
    inside = inside_mask(cloud, ball)
    pos = np.flatnonzero(inside)
    loc = {int(i): a for a, i in enumerate(pos)}
    m = pos.size
    P = np.zeros((m, m))
    for a, i in enumerate(pos):
        d2 = squared_dist(cloud.coords, cloud.coords[i])
        hit = np.flatnonzero(d2 < r * r)
        vol = mu.weights[hit].sum()
        for j in hit:
            if int(j) in loc:
                P[a, loc[int(j)]] = mu.weights[j] / vol
    return np.linalg.solve(np.eye(m) - P, np.ones(m)), pos


def test_measure_exit_matches_dense_solve(rng):
    compared = 0
    for _ in range(8):
        cloud = PointCloud(rng.uniform(-1, 1, size=(70, 2)))
        mu = MeasureWeights.uniform(cloud)
        ball = BallSpec(center_index=0, radius=0.8)
        inside = inside_mask(cloud, ball)
        adj = {int(i): np.flatnonzero(squared_dist(cloud.coords, cloud.coords[i]) < 0.09)
               for i in np.flatnonzero(inside)}
        if not all_inside_states_can_exit(adj, inside):
            continue
        field = exit_time_measure(cloud, mu, 0.3, ball)
        want, pos = dense_measure_oracle(cloud, mu, 0.3, ball)
        np.testing.assert_allclose(field.values[pos], want, rtol=1e-8)
        assert field.solver_residual <= 1e-10
        compared += 1
    assert compared >= 3


def test_renormalized_with_zero_beta_equals_plain_exit(interval_801):
    cloud, mu = interval_801
    ball = BallSpec(center_index=400, radius=0.4)
    plain = exit_time_measure(cloud, mu, 0.02, ball)
    phi = exit_time_renormalized(cloud, mu, 0.02, ball, BetaField.constant(len(cloud), 0.0))
    np.testing.assert_allclose(phi.values, plain.values, rtol=1e-12)
    assert phi.renormalized and not plain.renormalized


def test_renormalized_scales_by_power_of_r_for_constant_beta(interval_801):
    cloud, mu = interval_801
    ball = BallSpec(center_index=400, radius=0.4)
    r, beta = 0.02, 1.7
    plain = exit_time_measure(cloud, mu, r, ball)
    phi = exit_time_renormalized(cloud, mu, r, ball, BetaField.constant(len(cloud), beta))
    np.testing.assert_allclose(phi.values, r**beta * plain.values, rtol=1e-9)


def test_exit_time_domain_monotone():
    cloud, graph = path_graph(9)
    big = exit_time_graph(graph, cloud, interior_ball(9))
    small = exit_time_graph(graph, cloud, BallSpec(center_index=4, radius=2.5))
    assert np.all(small.values <= big.values + 1e-12)

    mu = MeasureWeights.uniform(cloud)
    mb = exit_time_measure(cloud, mu, 1.5, interior_ball(9))
    ms = exit_time_measure(cloud, mu, 1.5, BallSpec(center_index=4, radius=2.5))
    assert np.all(ms.values <= mb.values + 1e-12)


def test_exit_count_at_least_distance_over_jump_radius(interval_801):
    # each jump moves strictly less than r
    cloud, mu = interval_801
    ball = BallSpec(center_index=400, radius=0.3)
    r = 0.011
    field = exit_time_measure(cloud, mu, r, ball)
    outside = cloud.coords[~field.inside]
    for i in np.flatnonzero(field.inside):
        gap = np.sqrt(squared_dist(outside, cloud.coords[i]).min())
        assert field.values[i] + 1e-9 >= gap / r


def test_graph_exit_with_no_interior_states_is_zero():
    cloud = PointCloud(np.arange(5, dtype=float)[:, None])
    net = build_epsilon_net(cloud, 1.5)   # members 0, 2, 4
    graph = build_walk_graph(cloud, net, kind="proximity", param=2.0)
    field = exit_time_graph(graph, cloud, BallSpec(center_index=1, radius=0.4))
    assert not field.inside.any()
    np.testing.assert_array_equal(field.values, 0.0)
    assert field.solver_iterations == 0
    assert field.solver_residual == 0.0


def test_no_exit_raises():
    cloud, graph = path_graph(5)
    with pytest.raises(NoExitError):
        exit_time_graph(graph, cloud, BallSpec(center_index=2, radius=10.0))
    mu = MeasureWeights.uniform(cloud)
    with pytest.raises(NoExitError):
        exit_time_measure(cloud, mu, 1.5, BallSpec(center_index=2, radius=10.0))


def test_mc_exit_graph_mode_deterministic_and_calibrated():
    cloud, graph = path_graph(5)
    ball = interior_ball(5)
    exact = exit_time_graph(graph, cloud, ball)
    a = mc_exit_time(cloud, graph, graph.net.epsilon, ball, start=2,
                     n_paths=400, rng_seed=11)
    b = mc_exit_time(cloud, graph, graph.net.epsilon, ball, start=2,
                     n_paths=400, rng_seed=11)
    assert a == b
    assert abs(a.mean - exact.values[2]) <= a.ci95
    c = mc_exit_time(cloud, graph, graph.net.epsilon, ball, start=2,
                     n_paths=400, rng_seed=12)
    assert c.mean != a.mean


def test_mc_exit_measure_mode_calibrated(interval_801):
    cloud, mu = interval_801
    ball = BallSpec(center_index=400, radius=0.1)
    exact = exit_time_measure(cloud, mu, 0.04, ball)
    got = mc_exit_time(cloud, mu, 0.04, ball, start=400, n_paths=300, rng_seed=5)
    assert abs(got.mean - exact.values[400]) <= got.ci95


def test_mc_exit_start_outside_ball_is_zero():
    cloud, graph = path_graph(5)
    res = mc_exit_time(cloud, graph, 0.9, interior_ball(5), start=0,
                       n_paths=10, rng_seed=0)
    assert res.mean == 0.0 and res.ci95 == 0.0 and res.n_paths == 10


def test_mc_exit_single_path_has_infinite_halfwidth():
    cloud, graph = path_graph(5)
    res = mc_exit_time(cloud, graph, 0.9, interior_ball(5), start=1,
                       n_paths=1, rng_seed=3)
    assert res.ci95 == float("inf")


def test_mc_exit_step_cap_warns_and_drops_capped_paths():
    cloud, graph = path_graph(5)
    ball = interior_ball(5)
    with pytest.warns(PathCapWarning):
        hopeless = mc_exit_time(cloud, graph, 0.9, ball, start=2,
                                n_paths=8, rng_seed=1, step_cap=1)
    assert np.isnan(hopeless.mean)
    assert hopeless.capped_paths == 8

    with pytest.warns(PathCapWarning):
        partial = mc_exit_time(cloud, graph, 0.9, ball, start=1,
                               n_paths=40, rng_seed=1, step_cap=1)
    # survivors exited on their single step, so the mean is exactly 1
    assert partial.mean == 1.0
    assert 0 < partial.capped_paths < 40


def test_mc_exit_validation():
    cloud, graph = path_graph(5)
    ball = interior_ball(5)
    with pytest.raises(ValidationError):
        mc_exit_time(cloud, graph, 0.9, ball, start=2, n_paths=0, rng_seed=0)
    with pytest.raises(ValidationError):
        mc_exit_time(cloud, graph, 0.9, ball, start=99, n_paths=2, rng_seed=0)
    with pytest.raises(ValidationError):
        mc_exit_time(cloud, "walk", 0.9, ball, start=2, n_paths=2, rng_seed=0)


def test_ball_volumes_uniform_interval():
    cloud = PointCloud(np.arange(5, dtype=float)[:, None])
    mu = MeasureWeights.uniform(cloud)
    np.testing.assert_allclose(ball_volumes(cloud, mu, 1.5),
                               np.array([2, 3, 3, 3, 2]) / 5.0)
    np.testing.assert_allclose(ball_volumes(cloud, mu, 1.5, subset=np.array([2])),
                               [3 / 5.0])
    with pytest.raises(ValidationError):
        ball_volumes(cloud, mu, 0.0)


def test_measure_kernel_rows_use_strictly_open_balls():
    cloud = PointCloud(np.arange(5, dtype=float)[:, None])
    mu = MeasureWeights.uniform(cloud)
    nbrs, vols = measure_kernel_rows(cloud, mu, 1.0, np.array([2]))
    np.testing.assert_array_equal(nbrs[0], [2])   # distance exactly 1.0 excluded
    assert vols[0] == pytest.approx(0.2)
    nbrs2, vols2 = measure_kernel_rows(cloud, mu, 1.5, np.array([2]))
    np.testing.assert_array_equal(nbrs2[0], [1, 2, 3])
    assert vols2[0] == pytest.approx(0.6)


def test_ct_walk_reproducible_and_bounded(interval_801):
    cloud, mu = interval_801
    beta = BetaField.constant(len(cloud), 2.0)
    a = simulate_ct_walk(cloud, mu, 0.05, beta, t_max=3.0, start=400, rng_seed=9)
    b = simulate_ct_walk(cloud, mu, 0.05, beta, t_max=3.0, start=400, rng_seed=9)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.states, b.states)
    assert a.times[0] == 0.0 and a.states[0] == 400
    assert a.times[-1] <= 3.0
    assert np.all(np.diff(a.times) > 0)


def test_ct_walk_holding_times_match_requested_mean():
    cloud = euclidean_cloud("interval", 41, 1.0)
    mu = MeasureWeights.uniform(cloud)
    r, b = 0.5, 2.0
    path = simulate_ct_walk(cloud, mu, r, BetaField.constant(41, b),
                            t_max=600.0, start=20, rng_seed=21)
    holds = np.diff(path.times)
    want = r**b
    assert abs(holds.mean() - want) <= 4 * want / np.sqrt(holds.size)


def test_ct_walk_with_zero_beta_and_global_radius_jumps_uniformly():
    cloud = euclidean_cloud("interval", 21, 1.0)
    mu = MeasureWeights.uniform(cloud)
    path = simulate_ct_walk(cloud, mu, 2.5, BetaField.constant(21, 0.0),
                            t_max=4000.0, start=10, rng_seed=4)
    holds = np.diff(path.times)
    assert abs(holds.mean() - 1.0) <= 4 / np.sqrt(holds.size)
    # every state reachable in one jump; occupancy roughly uniform
    counts = np.bincount(path.states, minlength=21)
    assert counts.min() > 0.5 * counts.mean()


def test_ct_walk_empirical_exit_matches_renormalized_solve():
    cloud = euclidean_cloud("interval", 41, 1.0)
    mu = MeasureWeights.uniform(cloud)
    r, ball = 0.3, BallSpec(center_index=20, radius=0.5)
    beta = BetaField.constant(41, 2.0)
    phi = exit_time_renormalized(cloud, mu, r, ball, beta)
    inside = inside_mask(cloud, ball)
    samples = []
    for seed in range(250):
        path = simulate_ct_walk(cloud, mu, r, beta, t_max=50.0, start=20, rng_seed=seed)
        left = np.flatnonzero(~inside[path.states])
        assert left.size, "t_max too small for the exit event"
        samples.append(path.times[left[0]])
    samples = np.asarray(samples)
    half = 3 * samples.std(ddof=1) / np.sqrt(samples.size)
    assert abs(samples.mean() - phi.values[20]) <= half


def test_ct_walk_validation(interval_801):
    cloud, mu = interval_801
    beta = BetaField.constant(len(cloud), 2.0)
    with pytest.raises(ValidationError):
        simulate_ct_walk(cloud, mu, 0.05, BetaField.constant(3, 2.0), 1.0, 0, 0)
    with pytest.raises(ValidationError):
        simulate_ct_walk(cloud, mu, 0.05, beta, 1.0, len(cloud), 0)
    with pytest.raises(ValidationError):
        simulate_ct_walk(cloud, mu, 0.05, beta, 0.0, 0, 0)


def test_beta_field_constructors():
    f = BetaField.constant(4, 1.5)
    np.testing.assert_array_equal(f.values, [1.5] * 4)
    with pytest.raises(ValidationError):
        BetaField(np.array([1.0, np.nan]))
