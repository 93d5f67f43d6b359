"""Geodesic clustering by tangent spaces.

For every feature the algorithm looks at its nearest neighbours on the
Grassmannian, lifts them to the tangent space with the logarithm map, and
measures how well they agree with the local principal directions there. Two
per-pair scores come out of this: sparse affine coding weights and angles to
the local principal subspace. They are combined into an affinity matrix, which
is then partitioned by Louvain (number of clusters unknown) or by spectral
clustering (number known).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from . import grassmann as gr
from .errors import CutLocusError, InputError, SolverError, ValidationError
from .labeling import Labeling
from .louvain import louvain as _louvain

log = logging.getLogger(__name__)

__all__ = [
    "AffinitySupport",
    "LouvainBackend",
    "SpectralBackend",
    "GctParams",
    "GctResult",
    "knn_neighbors",
    "sparse_code",
    "sparse_objective",
    "local_covariance",
    "principal_subspace",
    "build_affinity",
    "louvain",
    "spectral",
    "gct_cluster",
    "run_gct",
]

DEGENERATE_TRACE = 1e-14


class AffinitySupport(str, Enum):
    KNN_MASKED = "knn_masked"
    LITERAL_PAPER = "literal_paper"


@dataclass(frozen=True)
class LouvainBackend:
    resolution: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class SpectralBackend:
    k: int
    seed: int = 0


@dataclass
class GctParams:
    k_nn: int = 5
    sigma_alpha: float = 1.0
    sigma_theta: float = 1.0
    pca_energy: float = 0.9
    affinity_support: AffinitySupport = AffinitySupport.KNN_MASKED
    backend: Union[LouvainBackend, SpectralBackend] = field(default_factory=LouvainBackend)
    sparse_solver_tol: float = 1e-8
    sparse_solver_max_iter: int = 10000

    def __post_init__(self):
        self.affinity_support = AffinitySupport(self.affinity_support)
        if isinstance(self.k_nn, bool) or not isinstance(self.k_nn, (int, np.integer)) or self.k_nn < 2:
            raise ValidationError("k_nn must be an integer >= 2")
        for name in ("sigma_alpha", "sigma_theta", "sparse_solver_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive")
        if not 0 < self.pca_energy <= 1:
            raise ValidationError("pca_energy must lie in (0, 1]")
        if self.sparse_solver_max_iter < 1:
            raise ValidationError("sparse_solver_max_iter must be positive")
        b = self.backend
        if isinstance(b, LouvainBackend):
            if not b.resolution > 0:
                raise ValidationError("Louvain resolution must be positive")
        elif isinstance(b, SpectralBackend):
            if b.k < 1:
                raise ValidationError("spectral k must be positive")
        else:
            raise ValidationError(f"unknown backend {b!r}")


# --------------------------------------------------------------------------- neighbours


def _neighbor_order(D: np.ndarray, i: int) -> np.ndarray:
    order = np.argsort(D[i], kind="stable")
    return order[order != i]


def knn_neighbors(points, i: int, k_nn: int, distances: Optional[np.ndarray] = None) -> list[int]:
    """Indices of the ``k_nn`` points closest to ``points[i]``, nearest first.

    Ties are broken by lower index.
    """
    n = len(points)
    if not 0 < k_nn < n:
        raise InputError(f"k_nn={k_nn} must lie in 1..{n - 1}")
    if distances is None:
        d = np.array([0.0 if j == i else gr.distance(points[i], points[j]) for j in range(n)])
        D = np.zeros((n, n))
        D[i] = d
    else:
        D = distances
    return [int(j) for j in _neighbor_order(D, i)[:k_nn]]


# --------------------------------------------------------------------------- sparse coding


def sparse_objective(alpha, vectors, sigma_alpha: float) -> float:
    """``||sum_k alpha_k v_k||^2 + sum_k exp(||v_k|| / sigma_alpha) |alpha_k|``."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    alpha = np.asarray(alpha, dtype=float)
    w = np.exp(np.linalg.norm(V, axis=1) / sigma_alpha)
    r = alpha @ V
    return float(r @ r + w @ np.abs(alpha))


def _prox_affine_l1(v: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """argmin_a 1/2||a - v||^2 + sum tau_k |a_k|  s.t.  sum a = 1 (exact)."""

    def soft(lam):
        z = v + lam
        return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)

    bps = np.sort(np.concatenate([-v - tau, -v + tau]))
    z = v[None, :] + bps[:, None]
    h = (np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)).sum(axis=1)
    idx = int(np.searchsorted(h, 1.0))
    if idx >= len(bps):
        lam = bps[-1] + (1.0 - h[-1]) / len(v)
    else:
        # idx >= 1 because h(bps[0]) <= 0 < 1
        l0, l1, h0, h1 = bps[idx - 1], bps[idx], h[idx - 1], h[idx]
        lam = l1 if h1 == h0 else l0 + (1.0 - h0) * (l1 - l0) / (h1 - h0)
    a = soft(lam)
    # absorb the remaining round-off into the largest active coordinate
    a[np.argmax(np.abs(a))] += 1.0 - a.sum()
    return a


def _kkt_polish(Q: np.ndarray, w: np.ndarray, alpha: np.ndarray, tol: float):
    """Solve the optimality system on the support of ``alpha``; None if not optimal."""
    k = len(w)
    scale = max(1.0, float(np.max(np.abs(Q))), float(w.max()))
    S = np.flatnonzero(np.abs(alpha) > 1e-10)
    if len(S) == 0:
        return None
    s = np.sign(alpha[S])
    A = np.zeros((len(S) + 1, len(S) + 1))
    A[: len(S), : len(S)] = 2.0 * Q[np.ix_(S, S)]
    A[: len(S), -1] = -1.0
    A[-1, : len(S)] = 1.0
    b = np.concatenate([-w[S] * s, [1.0]])
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    if np.linalg.norm(A @ sol - b) > 1e-9 * scale:
        return None
    a = np.zeros(k)
    a[S] = sol[:-1]
    lam = sol[-1]
    if np.any(a[S] * s < -1e-12):
        return None
    g = 2.0 * Q @ a
    off = np.setdiff1d(np.arange(k), S)
    if np.any(np.abs(lam - g[off]) > w[off] * (1.0 + tol) + 1e-12 * scale):
        return None
    return a


def sparse_code(
    vectors,
    sigma_alpha: float,
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> np.ndarray:
    """Affine-constrained weighted-l1 coding of the zero vector by its neighbours.

    Minimises ``||sum_k a_k v_k||^2 + sum_k exp(||v_k|| / sigma_alpha) |a_k|``
    subject to ``sum_k a_k = 1``.

    Parameters
    ----------
    vectors
        Array ``(k, d)``; row ``k`` is the flattened tangent vector of neighbour ``k``.
    sigma_alpha
        Bandwidth of the distance penalty.
    tol
        Stopping tolerance on the relative objective change and step length.
    max_iter
        Iteration cap for the accelerated proximal-gradient loop.

    Returns
    -------
    numpy.ndarray
        Coefficients of length ``k``; they sum to one.

    Notes
    -----
    Monotone FISTA with the exact proximal operator of the weighted l1 norm
    restricted to the affine hyperplane. Every few iterations the optimality
    system is solved on the current support; if the solution passes the KKT
    test it is returned directly.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    k = V.shape[0]
    if k < 1:
        raise InputError("need at least one neighbour")
    if k == 1:
        return np.ones(1)
    Q = V @ V.T
    w = np.exp(np.linalg.norm(V, axis=1) / sigma_alpha)

    def F(a):
        return float(a @ Q @ a + w @ np.abs(a))

    L = 2.0 * float(np.linalg.eigvalsh(Q)[-1])
    step = 1.0 / L if L > 1e-300 else 1e300
    x = np.full(k, 1.0 / k)
    Fx = F(x)
    y, tk = x.copy(), 1.0
    best_polish = None
    for it in range(1, max_iter + 1):
        z = _prox_affine_l1(y - step * 2.0 * (Q @ y), step * w)
        Fz = F(z)
        x_old, F_old = x, Fx
        if Fz <= Fx:
            x, Fx = z, Fz
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = x + (tk / t_next) * (z - x) + ((tk - 1.0) / t_next) * (x - x_old)
        tk = t_next
        if it % 10 == 0 or it == 1:
            p = _kkt_polish(Q, w, x, tol)
            if p is not None and F(p) <= Fx + 1e-15 * max(1.0, Fx):
                return p
        if abs(F_old - Fx) <= tol * max(1.0, abs(Fx)) and np.linalg.norm(x - x_old) <= tol:
            # stalled momentum can trigger this once; require a clean prox step too
            z = _prox_affine_l1(x - step * 2.0 * (Q @ x), step * w)
            if np.linalg.norm(z - x) <= math.sqrt(tol):
                p = _kkt_polish(Q, w, z, tol)
                if p is not None and F(p) <= min(Fx, F(z)) + 1e-15 * max(1.0, Fx):
                    return p
                return z if F(z) <= Fx else x
            y, tk = x.copy(), 1.0
    z = _prox_affine_l1(x - step * 2.0 * (Q @ x), step * w)
    gap = Fx - F(z)
    raise SolverError(
        f"sparse coding did not converge in {max_iter} iterations "
        f"(objective {Fx:.6e}, last prox-step decrease {gap:.3e})"
    )


# --------------------------------------------------------------------------- local PCA


def local_covariance(vectors) -> np.ndarray:
    """Unbiased sample covariance of row vectors."""
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise InputError("need at least two vectors for a covariance")
    Xc = X - X.mean(axis=0)
    return Xc.T @ Xc / (n - 1)


def _energy_cut(eigvals: np.ndarray, energy: float) -> int:
    total = eigvals.sum()
    c = np.cumsum(eigvals)
    return int(np.searchsorted(c, energy * total - 1e-12 * total)) + 1


def principal_subspace(C, pca_energy: float = 0.9) -> tuple[np.ndarray, bool]:
    """Leading eigenvectors of ``C`` holding a ``pca_energy`` share of its trace.

    Returns the orthonormal basis (columns) and a flag that is True when the
    trace is numerically zero; in that case the basis is the first unit vector.
    """
    C = np.asarray(C, dtype=float)
    if np.trace(C) < DEGENERATE_TRACE:
        e = np.zeros((C.shape[0], 1))
        e[0, 0] = 1.0
        return e, True
    vals, vecs = np.linalg.eigh(C)
    vals, vecs = vals[::-1].clip(min=0.0), vecs[:, ::-1]
    d = min(_energy_cut(vals, pca_energy), C.shape[0])
    return vecs[:, :d], False


def _principal_subspace_rows(X: np.ndarray, pca_energy: float) -> tuple[np.ndarray, bool]:
    """Same as ``principal_subspace(local_covariance(X))`` without forming the matrix."""
    Xc = X - X.mean(axis=0)
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    vals = s**2 / (X.shape[0] - 1)
    if vals.sum() < DEGENERATE_TRACE:
        e = np.zeros((X.shape[1], 1))
        e[0, 0] = 1.0
        return e, True
    d = min(_energy_cut(vals, pca_energy), len(vals))
    return Vt[:d].T, False


# --------------------------------------------------------------------------- affinity


@dataclass
class GctResult:
    labeling: Labeling
    affinity: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    neighbors: list
    diagnostics: list = field(default_factory=list)
    modularity_history: list = field(default_factory=list)


def _local_scores(points, D, i, params: GctParams, diagnostics: list):
    order = _neighbor_order(D, i)
    nbrs, vecs = [], []
    Xi = points[i]
    for j in order:
        try:
            v = gr.log_map(Xi, points[j]).delta
        except CutLocusError:
            diagnostics.append(f"dropped neighbour {int(j)} of {i}: cut locus")
            continue
        nbrs.append(int(j))
        vecs.append(v.ravel())
        if len(nbrs) == params.k_nn:
            break
    if not nbrs:
        return [], np.zeros(0), np.zeros(0)
    V = np.array(vecs)
    alpha = sparse_code(V, params.sigma_alpha, params.sparse_solver_tol, params.sparse_solver_max_iter)
    # the zero self-vector joins the neighbourhood sample
    S, degenerate = _principal_subspace_rows(np.vstack([np.zeros(V.shape[1]), V]), params.pca_energy)
    if degenerate:
        diagnostics.append(f"degenerate neighbourhood at {i}")
        theta = np.full(len(nbrs), math.pi / 2)
    else:
        theta = np.array([gr.vector_subspace_angle(v, S) for v in V])
    return nbrs, alpha, theta


def build_affinity(points, params: GctParams, *, _details: Optional[dict] = None) -> np.ndarray:
    """Symmetric affinity matrix with zero diagonal.

    ``w_ij = exp(|a_ij| + |a_ji|) * exp(-(theta_ij + theta_ji) / sigma_theta)``,
    where scores of non-neighbour directions are zero. In the KNN-masked mode
    pairs that are neighbours in neither direction get weight 0 instead.
    """
    n = len(points)
    if n <= params.k_nn:
        raise InputError(f"need more than k_nn={params.k_nn} points, got {n}")
    bases = [p.basis if isinstance(p, gr.GrassmannPoint) else np.asarray(p, dtype=float) for p in points]
    D = gr.pairwise_distances(bases)
    alpha = np.zeros((n, n))
    theta = np.zeros((n, n))
    mask = np.zeros((n, n), dtype=bool)
    diagnostics: list = []
    neighbors = []
    for i in range(n):
        nbrs, a, t = _local_scores(bases, D, i, params, diagnostics)
        neighbors.append(nbrs)
        alpha[i, nbrs] = a
        theta[i, nbrs] = t
        mask[i, nbrs] = True
    A = np.abs(alpha)
    W = np.exp(A + A.T) * np.exp(-(theta + theta.T) / params.sigma_theta)
    if params.affinity_support is AffinitySupport.KNN_MASKED:
        W = np.where(mask | mask.T, W, 0.0)
    np.fill_diagonal(W, 0.0)
    if _details is not None:
        _details.update(alpha=alpha, theta=theta, neighbors=neighbors, diagnostics=diagnostics)
    return W


# --------------------------------------------------------------------------- backends


def louvain(W, resolution: float = 1.0, seed: int = 0) -> Labeling:
    """Louvain communities of the affinity graph as a :class:`Labeling`."""
    res = _louvain(W, resolution=resolution, seed=seed)
    return Labeling(res.labels, diagnostics=list(res.diagnostics))


def spectral(W, k: int, seed: int = 0) -> np.ndarray:
    """Normalised spectral clustering of ``W`` into ``k`` groups."""
    from sklearn.cluster import spectral_clustering

    W = np.asarray(W, dtype=float)
    if k == 1:
        return np.zeros(W.shape[0], dtype=int)
    labels = spectral_clustering(W, n_clusters=k, random_state=seed, assign_labels="kmeans")
    _, first = np.unique(labels, return_index=True)
    remap = np.empty(len(first), dtype=int)
    remap[np.argsort(first)] = np.arange(len(first))
    return remap[np.unique(labels, return_inverse=True)[1]]


def run_gct(points: Sequence, params: GctParams) -> GctResult:
    """Full clustering run, returning the intermediate scores as well."""
    details: dict = {}
    W = build_affinity(points, params, _details=details)
    history: list = []
    b = params.backend
    if isinstance(b, SpectralBackend):
        labels = spectral(W, b.k, b.seed)
    else:
        res = _louvain(W, resolution=b.resolution, seed=b.seed)
        labels = res.labels
        history = res.history
        details["diagnostics"].extend(res.diagnostics)
    for msg in details["diagnostics"]:
        log.debug(msg)
    items = [p.provenance for p in points] if points and isinstance(points[0], gr.GrassmannPoint) else []
    lab = Labeling(labels, items, list(details["diagnostics"]))
    return GctResult(
        lab,
        W,
        details["alpha"],
        details["theta"],
        details["neighbors"],
        list(details["diagnostics"]),
        history,
    )


def gct_cluster(points: Sequence, params: GctParams) -> Labeling:
    """Cluster Grassmannian features; one label per input point."""
    return run_gct(points, params).labeling
