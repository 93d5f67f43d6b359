"""Geometry of the Grassmannian Gr(rho, D) with orthonormal-basis representatives.

Points are ``D x rho`` matrices with orthonormal columns. Tangent vectors are
horizontal ``D x rho`` matrices tied to the exact basis of their base point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CutLocusError, InputError

__all__ = [
    "Provenance",
    "GrassmannPoint",
    "TangentVector",
    "principal_angles",
    "distance",
    "pairwise_distances",
    "log_map",
    "exp_map",
    "vector_subspace_angle",
    "orthonormalize",
]

ORTHO_TOL = 1e-10
CUT_LOCUS_TOL = 1e-12
ZERO_VECTOR_TOL = 1e-14


@dataclass(frozen=True)
class Provenance:
    """Where a feature came from.

    ``scope`` is ``"network"`` or ``"node"``; ``node`` is the node id (or
    ``"network"``); ``anchor`` is the anchor index in the panel's sample
    coordinates; ``state`` is the state id the window was extracted in, if any.
    """

    scope: str = "network"
    node: str = "network"
    anchor: int = 0
    state: Optional[int] = None


@dataclass
class GrassmannPoint:
    basis: np.ndarray
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        if self.basis.ndim != 2 or self.basis.shape[1] > self.basis.shape[0]:
            raise InputError(f"basis must be D x rho with rho <= D, got {self.basis.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.basis.shape

    def orthonormality_error(self) -> float:
        rho = self.basis.shape[1]
        return float(np.linalg.norm(self.basis.T @ self.basis - np.eye(rho)))


@dataclass
class TangentVector:
    at: GrassmannPoint
    delta: np.ndarray

    def horizontality_error(self) -> float:
        return float(np.linalg.norm(self.at.basis.T @ self.delta))


def _basis(X) -> np.ndarray:
    return X.basis if isinstance(X, GrassmannPoint) else np.asarray(X, dtype=float)


def _check_pair(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape != Y.shape:
        raise InputError(f"shape mismatch: {X.shape} vs {Y.shape}")


def orthonormalize(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space of a full-column-rank ``A``."""
    Q, R = np.linalg.qr(A)
    # make the representative independent of LAPACK's sign choice
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def _angles(X: np.ndarray, Ys: np.ndarray) -> np.ndarray:
    """Ascending principal angles between ``X`` (D x r) and each ``Ys[k]`` (D x r).

    Cosines lose accuracy for small angles, so angles below pi/4 are taken
    from the singular values of the residual ``Y - X X^T Y`` instead.
    """
    P = np.einsum("dr,kds->krs", X, Ys)
    cos = np.clip(np.linalg.svd(P, compute_uv=False), 0.0, 1.0)
    R = Ys - np.einsum("dr,krs->kds", X, P)
    sin = np.clip(np.linalg.svd(R, compute_uv=False), 0.0, 1.0)
    from_cos = np.sort(np.arccos(cos), axis=1)
    from_sin = np.sort(np.arcsin(sin), axis=1)
    return np.where(from_sin < np.pi / 4, from_sin, from_cos)


def principal_angles(X, Y) -> np.ndarray:
    """Principal angles between ``span(X)`` and ``span(Y)`` in ascending order."""
    X, Y = _basis(X), _basis(Y)
    _check_pair(X, Y)
    return _angles(X, Y[None])[0]


def distance(X, Y) -> float:
    """Geodesic (arc-length) distance, the 2-norm of the principal angles."""
    return float(np.linalg.norm(principal_angles(X, Y)))


def pairwise_distances(points) -> np.ndarray:
    """Symmetric matrix of geodesic distances between all pairs of points.

    Vectorised over pairs; entry ``[i, j]`` equals ``distance(points[i], points[j])``.
    """
    B = np.stack([_basis(p) for p in points])
    n = B.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        d = np.linalg.norm(_angles(B[i], B[i + 1 :]), axis=1)
        out[i, i + 1 :] = d
        out[i + 1 :, i] = d
    return out


def log_map(X, Y) -> TangentVector:
    """Riemannian logarithm of ``Y`` at ``X``.

    Raises
    ------
    CutLocusError
        If the smallest singular value of ``X^T Y`` is below ``1e-12``.
    """
    Xp = X if isinstance(X, GrassmannPoint) else GrassmannPoint(X)
    Xb, Yb = Xp.basis, _basis(Y)
    _check_pair(Xb, Yb)
    XtY = Xb.T @ Yb
    smin = np.linalg.svd(XtY, compute_uv=False).min()
    if smin < CUT_LOCUS_TOL:
        raise CutLocusError(f"point lies in the cut locus (sigma_min(X^T Y) = {smin:.3e})")
    G = (Yb - Xb @ XtY) @ np.linalg.inv(XtY)
    U, S, Vt = np.linalg.svd(G, full_matrices=False)
    delta = (U * np.arctan(S)) @ Vt
    # remove round-off components along X
    delta -= Xb @ (Xb.T @ delta)
    return TangentVector(Xp, delta)


def exp_map(X, v: TangentVector) -> GrassmannPoint:
    """Follow the geodesic from ``X`` with initial velocity ``v`` for unit time."""
    Xp = X if isinstance(X, GrassmannPoint) else GrassmannPoint(X)
    delta = v.delta if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
    _check_pair(Xp.basis, delta)
    U, S, Vt = np.linalg.svd(delta, full_matrices=False)
    Y = (Xp.basis @ Vt.T * np.cos(S)) @ Vt + (U * np.sin(S)) @ Vt
    return GrassmannPoint(orthonormalize(Y), Xp.provenance)


def vector_subspace_angle(v, S) -> float:
    """Angle between vector ``v`` and the column span of orthonormal ``S``.

    A (numerically) zero ``v`` gives 0, so the self-pair angle vanishes.
    """
    v = np.asarray(v, dtype=float).ravel()
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[0] != v.shape[0]:
        raise InputError(f"dimension mismatch: {v.shape[0]} vs {S.shape[0]}")
    nv = np.linalg.norm(v)
    if nv < ZERO_VECTOR_TOL:
        return 0.0
    c = np.linalg.norm(S.T @ v) / nv
    return float(np.arccos(np.clip(c, 0.0, 1.0)))
