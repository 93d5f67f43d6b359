"""Kernel-ARMA feature extraction: windowed cross-Gram matrices and their
dominant left singular subspaces.

For an anchor ``t`` the cross-Gram matrix has shape ``(m*N) x (tau_b*N)`` and
entries (0-based block indices ``i, n, j, n'`` and column index ``c``)::

    M[i*N + n, j*N + n'] = 1/tau_f * sum_c k(y[t+1+i+n+c], y[t-j+n'+c])

which is the kernelised product of the forward matrix at ``t+1`` with the
transposed backward matrix at ``t``. A single window touches the samples
``t - tau_b + 1 .. t + tau_f + m + N - 2``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateRankError, InputError, RangeError, ValidationError
from .grassmann import GrassmannPoint, Provenance

log = logging.getLogger(__name__)

__all__ = [
    "Scope",
    "TimeSeriesPanel",
    "WindowConfig",
    "Extraction",
    "assemble_vectors",
    "cross_gram",
    "extract_feature",
    "extract_all",
    "valid_anchors",
]

RANK_TOL = 1e-9


class Scope(str, Enum):
    NETWORK = "network"
    NODE = "node"


@dataclass
class TimeSeriesPanel:
    """Nodal time series, one row per node and one column per time sample."""

    samples: np.ndarray
    node_ids: list = None
    sample_period: Optional[float] = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.node_ids is None:
            self.node_ids = [str(i) for i in range(self.samples.shape[0])]
        self.node_ids = [str(n) for n in self.node_ids]
        if len(self.node_ids) != self.samples.shape[0]:
            raise InputError("need one node id per row")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise InputError("node ids must be unique")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("panel contains non-finite samples")
        if self.sample_period is not None and not self.sample_period > 0:
            raise ValidationError("sample_period must be positive")

    @property
    def n_nodes(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def node_index(self, node) -> int:
        try:
            return self.node_ids.index(str(node))
        except ValueError:
            raise InputError(f"unknown node id {node!r}") from None

    def slice(self, start: int, stop: int) -> "TimeSeriesPanel":
        """Columns ``start .. stop - 1`` as a new panel."""
        return TimeSeriesPanel(self.samples[:, start:stop], list(self.node_ids), self.sample_period)


@dataclass
class WindowConfig:
    N: int
    m: int
    rho: int
    tau_f: int
    tau_b: int
    buff: int = 1
    stride: int = 1
    scope: Scope = Scope.NETWORK

    def __post_init__(self):
        self.scope = Scope(self.scope)
        for name in ("N", "m", "rho", "tau_f", "tau_b", "buff", "stride"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ValidationError(f"{name} must be a positive integer (got {v!r})")
        if self.rho > self.m * self.N or self.rho > self.tau_b * self.N:
            raise ValidationError(
                f"rho={self.rho} exceeds min(m*N, tau_b*N) = {min(self.m, self.tau_b) * self.N}"
            )

    @property
    def span(self) -> int:
        """Number of consecutive observation vectors one window consumes."""
        return self.tau_b + self.tau_f + self.m + self.N - 2

    @property
    def sample_span(self) -> int:
        """Number of raw samples one window consumes in this scope."""
        return self.span + (self.buff - 1 if self.scope is Scope.NODE else 0)

    @property
    def dim(self) -> int:
        return self.m * self.N


@dataclass
class Extraction:
    """Result of a single SVD step; ``pi_hat`` is kept only for diagnostics."""

    point: GrassmannPoint
    singular_values: np.ndarray
    pi_hat: np.ndarray
    tie_at_cutoff: bool = False


def assemble_vectors(panel: TimeSeriesPanel, cfg: WindowConfig, node=None) -> np.ndarray:
    """Observation vectors as rows: ``(T, |nodes|)`` network-wide, ``(T - buff + 1, buff)`` per node."""
    if cfg.scope is Scope.NETWORK:
        if node is not None:
            raise InputError("network-wide scope does not take a node id")
        return panel.samples.T.copy()
    if node is None:
        raise InputError("per-node scope requires a node id")
    row = panel.samples[panel.node_index(node)]
    if row.shape[0] < cfg.buff:
        raise RangeError(f"buffer of {cfg.buff} samples exceeds series length {row.shape[0]}")
    return np.lib.stride_tricks.sliding_window_view(row, cfg.buff).copy()


def valid_anchors(n_vectors: int, cfg: WindowConfig) -> np.ndarray:
    """All anchors (stride applied) whose window fits in ``n_vectors`` vectors."""
    first = cfg.tau_b - 1
    last = n_vectors - (cfg.tau_f + cfg.m + cfg.N - 1)
    if last < first:
        return np.zeros(0, dtype=int)
    return np.arange(first, last + 1, cfg.stride)


def _check_anchor(n_vectors: int, t: int, cfg: WindowConfig) -> None:
    lo = t - cfg.tau_b + 1
    hi = t + cfg.tau_f + cfg.m + cfg.N - 2
    if lo < 0 or hi > n_vectors - 1:
        raise RangeError(
            f"window at anchor {t} needs vectors {lo}..{hi} "
            f"({cfg.span} required) but only 0..{n_vectors - 1} are available"
        )


def _offsets(cfg: WindowConfig):
    i, n = np.divmod(np.arange(cfg.m * cfg.N), cfg.N)
    j, n2 = np.divmod(np.arange(cfg.tau_b * cfg.N), cfg.N)
    return i + n, n2 - j


def _cross_gram_local(K: np.ndarray, base: int, t: int, cfg: WindowConfig) -> np.ndarray:
    """Cross-Gram from a precomputed kernel matrix ``K`` over vectors ``base..``."""
    P, Q = _offsets(cfg)
    p = np.arange(cfg.m + cfg.N - 1)
    q = np.arange(-(cfg.tau_b - 1), cfg.N)
    c = np.arange(cfg.tau_f)
    rows = (t + 1 - base) + p[:, None, None] + c
    cols = (t - base) + q[None, :, None] + c
    G = K[rows, cols].sum(axis=2) / cfg.tau_f
    return G[P[:, None], Q[None, :] + cfg.tau_b - 1]


def cross_gram(vectors, t: int, cfg: WindowConfig, kernel: kernels.KernelSpec) -> np.ndarray:
    """Kernelised cross-Gram matrix of the window anchored at ``t``.

    ``vectors`` holds one observation vector per row, as returned by
    :func:`assemble_vectors`.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    _check_anchor(vectors.shape[0], t, cfg)
    lo = t - cfg.tau_b + 1
    window = vectors[lo : lo + cfg.span]
    K = kernels.gram(kernel, window)
    return _cross_gram_local(K, lo, t, cfg)


def _sign_fix(U: np.ndarray) -> np.ndarray:
    """Per-column signs making each column's largest-magnitude entry positive."""
    idx = np.argmax(np.abs(U), axis=0)  # first index on ties
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return s


def extract_feature(M, rho: int, provenance: Provenance | None = None) -> Extraction:
    """Rank-``rho`` observability subspace of a cross-Gram matrix.

    Raises
    ------
    DegenerateRankError
        If ``sigma_rho <= 1e-9 * sigma_1``.
    """
    M = np.asarray(M, dtype=float)
    if rho < 1 or rho > min(M.shape):
        raise InputError(f"rho={rho} incompatible with matrix of shape {M.shape}")
    U, S, Vt = np.linalg.svd(M, full_matrices=False)
    where = f" at {provenance}" if provenance is not None else ""
    if not S[0] > 0 or S[rho - 1] <= RANK_TOL * S[0]:
        raise DegenerateRankError(
            f"cross-Gram matrix{where} has numerical rank below rho={rho} "
            f"(sigma_rho={S[rho - 1]:.3e}, sigma_1={S[0]:.3e})"
        )
    tie = rho < S.shape[0] and S[rho - 1] == S[rho]
    if tie:
        msg = f"equal singular values at the rank cutoff{where}; subspace is ambiguous"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    s = _sign_fix(U[:, :rho])
    basis = U[:, :rho] * s
    pi_hat = (S[:rho, None] * Vt[:rho]) * s[:, None]
    return Extraction(GrassmannPoint(basis, provenance or Provenance()), S, pi_hat, tie)


def extract_all(
    panel: TimeSeriesPanel,
    cfg: WindowConfig,
    kernel: kernels.KernelSpec,
    horizon: Optional[Sequence[int]] = None,
    *,
    nodes: Optional[Sequence] = None,
    state: Optional[int] = None,
    offset: int = 0,
    full: bool = False,
) -> list:
    """Features for every (scope instance, anchor) pair, node-major then time.

    ``horizon`` lists anchors in vector coordinates; by default every valid
    anchor at the configured stride. Provenance anchors are reported in sample
    coordinates shifted by ``offset`` so that features extracted from a panel
    slice point back into the full panel. With ``full=True`` the complete
    :class:`Extraction` records are returned instead of bare points.
    """
    kernels.validate(kernel)
    if cfg.scope is Scope.NETWORK:
        instances = [None]
    else:
        instances = list(panel.node_ids if nodes is None else nodes)
    points = []
    for node in instances:
        vectors = assemble_vectors(panel, cfg, node)
        anchors = valid_anchors(vectors.shape[0], cfg) if horizon is None else list(horizon)
        if len(anchors) == 0:
            raise RangeError(
                f"window needs {cfg.sample_span} samples but only {panel.n_samples} are available"
            )
        for t in anchors:
            _check_anchor(vectors.shape[0], int(t), cfg)
        lo = int(min(anchors)) - cfg.tau_b + 1
        hi = int(max(anchors)) + cfg.tau_f + cfg.m + cfg.N - 1
        # one kernel matrix per instance, rebuilt per anchor if windows are sparse
        dense = (hi - lo) <= 4 * cfg.span or (hi - lo) ** 2 <= len(anchors) * cfg.span**2
        K_all = kernels.gram(kernel, vectors[lo:hi], check=False) if dense else None
        for t in anchors:
            t = int(t)
            if dense:
                M = _cross_gram_local(K_all, lo, t, cfg)
            else:
                w0 = t - cfg.tau_b + 1
                K = kernels.gram(kernel, vectors[w0 : w0 + cfg.span], check=False)
                M = _cross_gram_local(K, w0, t, cfg)
            prov = Provenance(
                scope=cfg.scope.value,
                node="network" if node is None else str(node),
                anchor=t + offset,
                state=state,
            )
            ext = extract_feature(M, cfg.rho, prov)
            points.append(ext if full else ext.point)
    return points
