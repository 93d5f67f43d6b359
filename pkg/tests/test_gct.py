import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from kgrass import gct
from kgrass import grassmann as gr
from kgrass.errors import InputError, SolverError, ValidationError
from kgrass.metrics import accuracy

from oracles import sparse_objective as oracle_objective
from oracles import sparse_oracle


def line(deg):
    a = math.radians(deg)
    return gr.GrassmannPoint(np.array([[math.cos(a)], [math.sin(a)], [0.0]]))


def bundle(rng, base, n, max_angle):
    """``n`` points around ``base`` whose principal angles to it stay below ``max_angle``."""
    pts = []
    for _ in range(n):
        H = rng.normal(size=base.shape)
        H -= base @ (base.T @ H)
        H *= rng.uniform(0.2, 1.0) * max_angle / np.linalg.norm(H)
        pts.append(gr.exp_map(base, H))
    return pts


@pytest.fixture(scope="module")
def bundles():
    rng = np.random.default_rng(0)
    D, r = 6, 2
    B1 = gr.orthonormalize(rng.normal(size=(D, r)))
    H = rng.normal(size=(D, r))
    H -= B1 @ (B1.T @ H)
    U, _, Vt = np.linalg.svd(H, full_matrices=False)
    # both principal angles of the second base are 1.1 rad
    B2 = gr.orthonormalize(B1 @ Vt.T * math.cos(1.1) @ Vt + U * math.sin(1.1) @ Vt)
    pts = bundle(rng, B1, 20, 0.05) + bundle(rng, B2, 20, 0.05)
    return pts, np.repeat([0, 1], 20)


def test_bundle_geometry(bundles):
    pts, truth = bundles
    D = gr.pairwise_distances(pts)
    same = truth[:, None] == truth[None, :]
    for i in range(len(pts)):
        for j in range(len(pts)):
            a = gr.principal_angles(pts[i].basis, pts[j].basis)
            if same[i, j]:
                assert a.max() <= 0.1 + 1e-12
            else:
                assert a.min() >= 0.8
    assert D[same].max() < D[~same].min()


# --------------------------------------------------------------------------- neighbours


def test_knn_picks_closest_line():
    pts = [line(0), line(10), line(80)]
    assert gct.knn_neighbors(pts, 0, 1) == [1]
    assert gct.knn_neighbors(pts, 0, 2) == [1, 2]


def test_knn_ties_lower_index_first():
    pts = [line(0), line(30), line(-30), line(60)]
    assert gct.knn_neighbors(pts, 0, 2) == [1, 2]
    D = np.array([[0, 1, 1, 1], [1, 0, 1, 1], [1, 1, 0, 1], [1, 1, 1, 0]], dtype=float)
    assert gct.knn_neighbors(pts, 3, 3, distances=D) == [0, 1, 2]


def test_knn_rejects_k_too_large():
    with pytest.raises(InputError):
        gct.knn_neighbors([line(0), line(1)], 0, 2)


# --------------------------------------------------------------------------- sparse coding


def test_single_neighbour_gets_full_weight():
    assert gct.sparse_code([[0.3, -2.0]], 1.0).tolist() == [1.0]


def test_two_neighbours_match_fine_grid():
    rng = np.random.default_rng(11)
    for _ in range(5):
        V = rng.normal(size=(2, 4)) * 0.7
        a = gct.sparse_code(V, 1.0)
        grid = np.arange(-3.0, 4.0 + 1e-12, 1e-4)
        vals = [oracle_objective([x, 1 - x], V, 1.0) for x in grid]
        assert abs(a[0] - grid[int(np.argmin(vals))]) < 2e-3


@pytest.mark.parametrize("k", [2, 3])
def test_sparse_code_matches_oracle(k):
    rng = np.random.default_rng(100 + k)
    for _ in range(25):
        d = int(rng.integers(2, 7))
        V = rng.normal(size=(k, d)) * rng.uniform(0.1, 1.5)
        s = float(rng.choice([0.5, 1.0, 2.0]))
        a = gct.sparse_code(V, s)
        f_ref, _ = sparse_oracle(V, s)
        assert abs(a.sum() - 1.0) < 1e-9
        assert abs(gct.sparse_objective(a, V, s) - f_ref) < 1e-6


def test_far_neighbour_gets_smaller_weight():
    rng = np.random.default_rng(5)
    for _ in range(10):
        V = rng.normal(size=(3, 4))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        V *= np.array([[0.2], [0.2], [2.0]])
        a = gct.sparse_code(V, 1.0)
        _, a_ref = sparse_oracle(V, 1.0)
        assert abs(a[2]) <= min(abs(a[0]), abs(a[1])) + 1e-12
        assert np.allclose(a, a_ref, atol=1e-4)


def test_sparse_code_never_worse_than_uniform():
    rng = np.random.default_rng(6)
    for _ in range(100):
        k = int(rng.integers(2, 8))
        V = rng.normal(size=(k, 5)) * rng.uniform(0.01, 2.0)
        a = gct.sparse_code(V, 1.0)
        assert abs(a.sum() - 1.0) < 1e-9
        assert gct.sparse_objective(a, V, 1.0) <= gct.sparse_objective(np.full(k, 1 / k), V, 1.0) + 1e-12


def test_sparse_code_reports_non_convergence():
    rng = np.random.default_rng(8)
    V = rng.normal(size=(6, 5))
    with pytest.raises(SolverError, match="objective"):
        gct.sparse_code(V, 1.0, tol=1e-300, max_iter=3)


# --------------------------------------------------------------------------- local PCA


def test_covariance_examples():
    assert np.array_equal(gct.local_covariance([[1.0, 2.0], [1.0, 2.0]]), np.zeros((2, 2)))
    X = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    mean = X.mean(axis=0)
    ref = sum(np.outer(x - mean, x - mean) for x in X) / 2
    C = gct.local_covariance(X)
    assert np.allclose(C, ref, atol=1e-15)
    assert np.allclose(C, [[4 / 3, -2 / 3], [-2 / 3, 4 / 3]], atol=1e-15)
    with pytest.raises(InputError):
        gct.local_covariance([[1.0, 2.0]])


def test_covariance_psd():
    rng = np.random.default_rng(9)
    for _ in range(50):
        C = gct.local_covariance(rng.normal(size=(int(rng.integers(2, 7)), 6)))
        assert np.array_equal(C, C.T) or np.allclose(C, C.T, atol=1e-15)
        assert np.linalg.eigvalsh(C).min() >= -1e-10


def test_principal_subspace_examples():
    S, flag = gct.principal_subspace(np.diag([9.0, 1.0, 0.0]), 0.9)
    assert S.shape == (3, 1) and not flag
    assert np.allclose(np.abs(S[:, 0]), [1, 0, 0])
    assert gct.principal_subspace(np.diag([5.0, 5.0, 0.0]), 0.9)[0].shape[1] == 2
    assert gct.principal_subspace(np.eye(2), 1.0)[0].shape[1] == 2
    S, flag = gct.principal_subspace(np.zeros((3, 3)))
    assert flag and S.shape == (3, 1) and np.linalg.norm(S) == 1.0


def test_row_shortcut_matches_covariance_route():
    rng = np.random.default_rng(10)
    for _ in range(20):
        X = rng.normal(size=(6, 8)) * rng.uniform(0.1, 3, size=8)
        S1, _ = gct.principal_subspace(gct.local_covariance(X), 0.9)
        S2, _ = gct._principal_subspace_rows(X, 0.9)
        assert S1.shape == S2.shape
        assert gr.distance(S1, S2) < 1e-8


# --------------------------------------------------------------------------- affinity


def test_affinity_modes(bundles):
    pts, _ = bundles
    masked = gct.build_affinity(pts, gct.GctParams(k_nn=3))
    literal = gct.build_affinity(pts, gct.GctParams(k_nn=3, affinity_support="literal_paper"))
    for W in (masked, literal):
        assert np.array_equal(W, W.T)
        assert np.all(np.diag(W) == 0) and np.all(W >= 0)
    D = gr.pairwise_distances(pts)
    nbr = np.zeros_like(D, dtype=bool)
    for i in range(len(pts)):
        nbr[i, gct.knn_neighbors(pts, i, 3, distances=D)] = True
    off = ~(nbr | nbr.T) & ~np.eye(len(pts), dtype=bool)
    assert off.any()
    assert np.all(literal[off] == 1.0)
    assert np.all(masked[off] == 0.0)
    assert np.array_equal(masked[~off], literal[~off])


def test_affinity_formula_value():
    # mutual neighbours with alpha 0.5 each way and zero angle
    alpha = 0.5
    theta = 0.0
    assert math.exp(alpha + alpha) * math.exp(-(theta + theta) / 1.0) == pytest.approx(math.e)
    # three points on one geodesic: the middle point codes itself with weight 0.5 on each side
    pts = [line(-10), line(0), line(10)]
    res = gct.run_gct(pts, gct.GctParams(k_nn=2))
    assert res.alpha[1, 0] == pytest.approx(0.5, abs=1e-9)
    assert res.alpha[1, 2] == pytest.approx(0.5, abs=1e-9)
    expected = math.exp(abs(res.alpha[1, 0]) + abs(res.alpha[0, 1])) * math.exp(-(res.theta[1, 0] + res.theta[0, 1]))
    assert res.affinity[0, 1] == pytest.approx(expected, rel=1e-12)


# --------------------------------------------------------------------------- clustering


def test_bundles_louvain(bundles):
    pts, truth = bundles
    lab = gct.gct_cluster(pts, gct.GctParams(k_nn=5, backend=gct.LouvainBackend(resolution=0.5)))
    assert lab.n_clusters == 2
    assert accuracy(lab.labels, truth) == 1.0


@pytest.mark.filterwarnings("ignore:Graph is not fully connected")
def test_bundles_spectral_agrees(bundles):
    pts, truth = bundles
    lv = gct.gct_cluster(pts, gct.GctParams(k_nn=5, backend=gct.LouvainBackend(resolution=0.5)))
    sp = gct.gct_cluster(pts, gct.GctParams(k_nn=5, backend=gct.SpectralBackend(2)))
    assert accuracy(sp.labels, truth) == 1.0
    assert accuracy(sp.labels, lv.labels) == 1.0


def test_identical_points_single_cluster():
    base = gr.orthonormalize(np.random.default_rng(1).normal(size=(5, 2)))
    lab = gct.gct_cluster([gr.GrassmannPoint(base.copy()) for _ in range(12)], gct.GctParams(k_nn=4))
    assert lab.n_clusters == 1


def test_right_orthogonal_rebasing_invariance(bundles):
    pts, _ = bundles
    rng = np.random.default_rng(3)
    moved = [gr.GrassmannPoint(p.basis @ ortho_group.rvs(2, random_state=rng)) for p in pts]
    params = gct.GctParams(k_nn=5, backend=gct.LouvainBackend(resolution=0.5))
    assert np.array_equal(gct.gct_cluster(pts, params).labels, gct.gct_cluster(moved, params).labels)


def test_deterministic(bundles):
    pts, _ = bundles
    params = gct.GctParams(k_nn=5)
    a, b = gct.run_gct(pts, params), gct.run_gct(pts, params)
    assert np.array_equal(a.labeling.labels, b.labeling.labels)
    assert np.array_equal(a.affinity, b.affinity)


def test_cut_locus_neighbour_dropped():
    pts = [line(0), line(90), line(1), line(2), line(3)]
    res = gct.run_gct(pts, gct.GctParams(k_nn=3))
    # the orthogonal line is the fourth-nearest of point 0 and is never used
    assert 1 not in res.neighbors[0]
    res = gct.run_gct(pts, gct.GctParams(k_nn=4))
    assert any("cut locus" in d for d in res.diagnostics)
    assert 1 not in res.neighbors[0]


@pytest.mark.parametrize(
    "kwargs",
    [dict(k_nn=1), dict(k_nn=5, sigma_alpha=0.0), dict(k_nn=5, sigma_theta=-1.0), dict(k_nn=5, pca_energy=1.5),
     dict(k_nn=5, backend=gct.SpectralBackend(0)), dict(k_nn=5, backend=gct.LouvainBackend(resolution=0.0))],
)
def test_params_validation(kwargs):
    with pytest.raises(ValidationError):
        gct.GctParams(**kwargs)


def test_too_few_points():
    with pytest.raises(InputError):
        gct.gct_cluster([line(0), line(5), line(10)], gct.GctParams(k_nn=3))
