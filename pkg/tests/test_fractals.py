"""Fractal stage generators against counting and geometry oracles."""
import numpy as np
import pytest
from scipy.spatial import cKDTree

from walkdim.errors import ValidationError
from walkdim.fractals import (
    CarpetParams,
    GasketParams,
    KochParams,
    VicsekParams,
    carpet_stage,
    euclidean_cloud,
    gasket_stage,
    koch_alpha,
    koch_natural_weights,
    koch_stage,
    vicsek_stage,
)
from walkdim.geometry import PointCloud


def moran_dimension(theta):
    """Solve 4 s^d = 1 for the similarity dimension by bisection, s = 1/(2+2cos theta)."""
    s = 1.0 / (2.0 + 2.0 * np.cos(theta))
    lo, hi = 0.5, 2.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 4.0 * s**mid > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def hausdorff(a: PointCloud, b: PointCloud) -> float:
    da, _ = cKDTree(b.coords).query(a.coords)
    db, _ = cKDTree(a.coords).query(b.coords)
    return max(da.max(), db.max())


def test_koch_vertex_counts_and_arc_params():
    for n in range(6):
        cl = koch_stage(KochParams(0.2, 1.3, n))
        assert len(cl) == 4**n + 1
        np.testing.assert_array_equal(cl.params, np.arange(4**n + 1) / 4**n)


def test_koch_endpoints_pinned():
    cl = koch_stage(KochParams(0.3, 1.2, 5))
    np.testing.assert_array_equal(cl.coords[0], [0.0, 0.0])
    np.testing.assert_array_equal(cl.coords[-1], [1.0, 0.0])


def test_koch_alpha_matches_moran_bisection():
    for theta in (0.1, np.pi / 3, 1.2, 1.5):
        got = koch_alpha(0.5, theta, theta)
        assert got == pytest.approx(moran_dimension(theta), abs=1e-10)


def test_koch_alpha_classic_sixty_degrees():
    # the self-similar Koch curve: log 4 / log 3
    assert koch_alpha(0.0, np.pi / 3, np.pi / 3) == pytest.approx(
        np.log(4) / np.log(3), abs=1e-14)


def test_koch_alpha_monotone_and_bounded():
    t1, t2 = 0.1, 1.4
    t = np.linspace(0.0, 1.0, 101)
    a = koch_alpha(t, t1, t2)
    assert np.all(np.diff(a) > 0)
    assert np.all(a > 1.0)
    assert a.max() == pytest.approx(koch_alpha(1.0, t1, t2))
    assert a.max() <= 2.0 * np.log(2.0) / np.log(2.0 + 2.0 * np.cos(t2)) + 1e-12


def test_koch_alpha_validation():
    with pytest.raises(ValidationError):
        koch_alpha(1.5, 0.2, 0.4)
    with pytest.raises(ValidationError):
        koch_alpha(0.5, 0.4, 0.2)  # window reversed
    with pytest.raises(ValidationError):
        koch_alpha(0.5, 0.0, 0.4)
    with pytest.raises(ValidationError):
        KochParams(0.4, np.pi / 2, 1)


def test_koch_consecutive_stages_converge_geometrically():
    p = lambda n: KochParams(0.2, 1.2, n)
    s_max = 1.0 / (2.0 + 2.0 * np.cos(1.2))
    gaps = [hausdorff(koch_stage(p(n)), koch_stage(p(n + 1))) for n in range(1, 6)]
    for a, b in zip(gaps, gaps[1:]):
        assert b <= a * s_max * 1.2


def test_koch_natural_weights_self_similar_total_is_one():
    # each stage-n edge has length s^n and gauge (s^n)^alpha = 4^-n exactly
    for theta in (0.5, np.pi / 3):
        for n in (2, 4, 6):
            cl = koch_stage(KochParams(theta, theta, n))
            w = koch_natural_weights(cl, theta, theta)
            assert w.total == pytest.approx(1.0, abs=1e-9)
            interior = w.weights[1:-1]
            np.testing.assert_allclose(interior, 4.0**-n, rtol=1e-9)
            assert w.weights[0] == pytest.approx(0.5 * 4.0**-n, rel=1e-9)


def test_koch_natural_weights_reject_unordered_cloud():
    cl = koch_stage(KochParams(0.3, 0.9, 2))
    shuffled = PointCloud(cl.coords[::-1], cl.params[::-1])
    with pytest.raises(ValidationError):
        koch_natural_weights(shuffled, 0.3, 0.9)


def test_gasket_counts_at_ratio_half():
    # touching corners merge: 3 (3^n + 1) / 2 distinct vertices
    for n, want in ((0, 3), (1, 6), (2, 15), (3, 42), (4, 123)):
        assert len(gasket_stage(GasketParams(0.5, 0.5, stage=n))) == want


def test_gasket_vertices_nest_at_ratio_half():
    a = gasket_stage(GasketParams(0.5, 0.5, stage=3))
    b = gasket_stage(GasketParams(0.5, 0.5, stage=4))
    keys = {row.tobytes() for row in b.coords}
    assert all(row.tobytes() in keys for row in a.coords)


def _gasket_cells(r1, r2, side, stage):
    """Independent re-derivation of the stage-n triangle list."""
    tris = [np.array([[0.0, 0.0], [side, 0.0], [side / 2, np.sqrt(3) / 2 * side]])]
    windows = [(min(r1, r2), max(r1, r2))]
    for _ in range(stage):
        nxt, nwin = [], []
        for tri, (lo, hi) in zip(tris, windows):
            r = 0.5 * (lo + hi)
            dq = (hi - lo) / 3.0
            for c in range(3):
                v = tri[c]
                nxt.append(v + r * (tri - v))
                nwin.append((lo + c * dq, lo + (c + 1) * dq))
        tris, windows = nxt, nwin
    return tris


def _in_triangle(p, tri, tol=1e-9):
    a, b, c = tri
    m = np.column_stack([b - a, c - a])
    u, v = np.linalg.solve(m, p - a)
    return u >= -tol and v >= -tol and u + v <= 1 + tol


def test_gasket_stages_nest_in_parent_cells():
    for r in (0.5, 0.35):
        for n in (1, 2, 3):
            cells = _gasket_cells(r, r, 1.0, n)
            child = gasket_stage(GasketParams(r, r, stage=n + 1))
            for p in child.coords:
                assert any(_in_triangle(p, tri) for tri in cells)


def test_carpet_counts():
    for n, want in ((0, 4), (1, 16), (2, 96), (3, 912)):
        assert len(carpet_stage(CarpetParams(stage=n))) == want


def _rect_cells(split, stage, b=1.0, h=1.0, r=1.0 / 3.0):
    """Rectangles (origin, size) after ``stage`` rounds of the 3x3 split."""
    cells = [(np.zeros(2), np.array([b, h]))]
    for _ in range(stage):
        cells = [c for org, size in cells for c in split(org, size, r)]
    return cells


def _carpet_split(org, size, r):
    mid = r * size
    side = (size - mid) / 2.0
    x0, y0 = org
    wx, wy = side
    mx, my = mid
    return [
        (np.array([x0, y0]), np.array([wx, wy])),
        (np.array([x0 + wx, y0]), np.array([mx, wy])),
        (np.array([x0 + wx + mx, y0]), np.array([wx, wy])),
        (np.array([x0 + wx + mx, y0 + wy]), np.array([wx, my])),
        (np.array([x0 + wx + mx, y0 + wy + my]), np.array([wx, wy])),
        (np.array([x0 + wx, y0 + wy + my]), np.array([mx, wy])),
        (np.array([x0, y0 + wy + my]), np.array([wx, wy])),
        (np.array([x0, y0 + wy]), np.array([wx, my])),
    ]


def _vicsek_split(org, size, r):
    mid = r * size[0]
    arm = (size[0] - mid) / 2.0
    x0, y0 = org
    return [
        (np.array([x0, y0]), np.array([arm, arm])),
        (np.array([x0 + arm + mid, y0]), np.array([arm, arm])),
        (np.array([x0 + arm, y0 + arm]), np.array([mid, mid])),
        (np.array([x0, y0 + arm + mid]), np.array([arm, arm])),
        (np.array([x0 + arm + mid, y0 + arm + mid]), np.array([arm, arm])),
    ]


def _in_some_rect(p, cells, tol=1e-9):
    return any(np.all(p >= org - tol) and np.all(p <= org + size + tol)
               for org, size in cells)


def test_carpet_stages_nest_in_parent_cells():
    for n in (1, 2):
        cells = _rect_cells(_carpet_split, n)
        child = carpet_stage(CarpetParams(stage=n + 1))
        assert all(_in_some_rect(p, cells) for p in child.coords)


def test_vicsek_counts():
    for n, want in ((0, 4), (1, 16), (2, 76), (3, 395)):
        assert len(vicsek_stage(VicsekParams(stage=n))) == want


def test_vicsek_stages_nest_in_parent_cells():
    for n in (1, 2):
        cells = _rect_cells(_vicsek_split, n)
        child = vicsek_stage(VicsekParams(stage=n + 1))
        assert all(_in_some_rect(p, cells) for p in child.coords)


def test_generators_deterministic():
    pairs = [
        (koch_stage, KochParams(0.3, 1.1, 4)),
        (gasket_stage, GasketParams(0.4, 0.5, stage=4)),
        (carpet_stage, CarpetParams(r1=0.3, r2=0.4, stage=2)),
        (vicsek_stage, VicsekParams(r1=0.3, r2=0.4, stage=2)),
    ]
    for fn, params in pairs:
        a, b = fn(params), fn(params)
        assert a.coords.tobytes() == b.coords.tobytes()
        assert a.params.tobytes() == b.params.tobytes()


def test_cell_addresses_lie_in_unit_interval():
    for cl in (gasket_stage(GasketParams(0.45, 0.5, stage=3)),
               carpet_stage(CarpetParams(stage=2)),
               vicsek_stage(VicsekParams(stage=2))):
        assert np.all((cl.params >= 0) & (cl.params < 1))


def test_stage_caps_and_param_validation():
    with pytest.raises(ValidationError):
        koch_stage(KochParams(0.3, 0.9, 10))
    with pytest.raises(ValidationError):
        gasket_stage(GasketParams(0.5, 0.5, stage=11))
    with pytest.raises(ValidationError):
        carpet_stage(CarpetParams(stage=7))
    with pytest.raises(ValidationError):
        vicsek_stage(VicsekParams(stage=8))
    with pytest.raises(ValidationError):
        GasketParams(0.6, 0.5)
    with pytest.raises(ValidationError):
        GasketParams(0.5, 0.5, side=-1.0)
    with pytest.raises(ValidationError):
        CarpetParams(r1=1.0)
    with pytest.raises(ValidationError):
        VicsekParams(L=0.0)
    with pytest.raises(ValidationError):
        KochParams(0.3, 0.9, -1)


def test_euclidean_cloud_small_grids():
    cl = euclidean_cloud("interval", 5, 1.0)
    np.testing.assert_array_equal(cl.coords[:, 0], [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert len(euclidean_cloud("square", 3, 1.0)) == 9
    disk = euclidean_cloud("disk", 3, 1.0)  # center plus 4 edge midpoints
    assert len(disk) == 5
    assert np.all(np.einsum("ij,ij->i", disk.coords, disk.coords) <= 1.0)


def test_euclidean_cloud_validation():
    with pytest.raises(ValidationError):
        euclidean_cloud("interval", 1)
    with pytest.raises(ValidationError):
        euclidean_cloud("interval", 5, 0.0)
    with pytest.raises(ValidationError):
        euclidean_cloud("torus", 5)
