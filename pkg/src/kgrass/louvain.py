"""Two-phase Louvain modularity maximisation on a weighted undirected graph.

Moves are greedy and sequential, so the result depends on the visiting order;
that order is drawn from a seeded generator, which makes runs reproducible.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InputError

log = logging.getLogger(__name__)

__all__ = ["LouvainResult", "louvain", "modularity"]

GAIN_TOL = 1e-10


@dataclass
class LouvainResult:
    labels: np.ndarray
    modularity: float
    history: list = field(default_factory=list)
    levels: int = 0
    diagnostics: list = field(default_factory=list)


def _as_csr(W) -> sp.csr_matrix:
    A = sp.csr_matrix(W, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise InputError(f"adjacency must be square, got {A.shape}")
    if A.nnz and A.data.min() < 0:
        raise InputError("adjacency weights must be non-negative")
    if A.nnz and abs(A - A.T).max() > 1e-12 * max(1.0, A.data.max()):
        raise InputError("adjacency must be symmetric")
    return A


def modularity(W, labels, resolution: float = 1.0) -> float:
    """Newman modularity ``1/2m sum_ij (w_ij - gamma k_i k_j / 2m) [c_i == c_j]``."""
    A = _as_csr(W)
    labels = np.asarray(labels)
    k = np.asarray(A.sum(axis=1)).ravel()
    m2 = k.sum()
    if m2 == 0:
        return 0.0
    _, c = np.unique(labels, return_inverse=True)
    S = sp.csr_matrix((np.ones(len(c)), (np.arange(len(c)), c)))
    inner = (S.T @ A @ S).diagonal()
    tot = np.bincount(c, weights=k)
    return float((inner.sum() - resolution * np.sum(tot**2) / m2) / m2)


def _one_level(A: sp.csr_matrix, resolution: float, rng, history: list, init=None):
    n = A.shape[0]
    k = np.asarray(A.sum(axis=1)).ravel()
    m2 = k.sum()
    comm = np.arange(n) if init is None else np.array(init)
    tot = np.bincount(comm, weights=k, minlength=n)
    order = rng.permutation(n)
    indptr, indices, data = A.indptr, A.indices, A.data
    moved_any = False
    while True:
        moves = 0
        for i in order:
            ci = comm[i]
            lo, hi = indptr[i], indptr[i + 1]
            nbr = indices[lo:hi]
            w = data[lo:hi]
            keep = nbr != i
            ncomm = comm[nbr[keep]]
            cands, inv = np.unique(ncomm, return_inverse=True)
            cw = np.bincount(inv, weights=w[keep], minlength=len(cands))
            tot[ci] -= k[i]
            scale = resolution * k[i] / m2
            own_w = cw[cands == ci].sum() if np.any(cands == ci) else 0.0
            own_gain = own_w - scale * tot[ci]
            best, best_gain = ci, own_gain
            if len(cands):
                gains = cw - scale * tot[cands]
                # cands is sorted, so argmax picks the lowest id among equal gains
                j = int(np.argmax(gains))
                if cands[j] != ci and 2.0 * (gains[j] - own_gain) / m2 > GAIN_TOL:
                    best, best_gain = cands[j], gains[j]
            if best == ci and own_gain < 0 and -2.0 * own_gain / m2 > GAIN_TOL:
                # isolating the node beats every neighbouring community
                empty = np.flatnonzero(tot == 0)
                empty = empty[empty != ci]
                if len(empty):
                    best = int(empty[0])
            tot[best] += k[i]
            if best != ci:
                comm[i] = best
                moves += 1
        if moves == 0:
            break
        moved_any = True
        history.append(_level_modularity(A, comm, k, m2, resolution))
    return comm, moved_any


def _level_modularity(A, comm, k, m2, resolution) -> float:
    _, c = np.unique(comm, return_inverse=True)
    S = sp.csr_matrix((np.ones(len(c)), (np.arange(len(c)), c)))
    inner = (S.T @ A @ S).diagonal()
    tot = np.bincount(c, weights=k)
    return float((inner.sum() - resolution * np.sum(tot**2) / m2) / m2)


def louvain(W, resolution: float = 1.0, seed: int = 0) -> LouvainResult:
    """Partition the nodes of ``W`` into communities.

    Parameters
    ----------
    W
        Symmetric non-negative adjacency (dense or sparse). Diagonal entries are
        treated as self-loops.
    resolution
        Weight ``gamma`` of the null-model term.
    seed
        Seeds the node visiting order.

    Returns
    -------
    LouvainResult
        ``labels`` are renumbered ``0..K-1`` by first appearance; ``history``
        holds the modularity after every pass that moved a node, starting from
        the singleton partition.
    """
    if not resolution > 0:
        raise InputError("resolution must be positive")
    A = _as_csr(W)
    n = A.shape[0]
    labels = np.arange(n)
    k = np.asarray(A.sum(axis=1)).ravel()
    m2 = k.sum()
    if m2 == 0:
        msg = "all-zero affinity matrix; every node is its own community"
        log.warning(msg)
        return LouvainResult(labels, 0.0, [0.0], 0, [msg])
    rng = np.random.default_rng(seed)
    history = [_level_modularity(A, labels, k, m2, resolution)]
    levels = 0
    init = None
    while True:
        # multilevel sweep; later sweeps restart on the original nodes from the
        # current partition so single nodes can leave a poor aggregate
        Ak, mapping, moved_sweep = A, np.arange(n), False
        while True:
            comm, moved = _one_level(Ak, resolution, rng, history, init)
            init = None
            if not moved:
                break
            moved_sweep = True
            levels += 1
            _, comm = np.unique(comm, return_inverse=True)
            mapping = comm[mapping]
            S = sp.csr_matrix((np.ones(len(comm)), (np.arange(len(comm)), comm)))
            Ak = sp.csr_matrix(S.T @ Ak @ S)
        if not moved_sweep:
            break
        labels = mapping
        init = labels
    _, first = np.unique(labels, return_index=True)
    remap = np.empty(len(first), dtype=int)
    remap[np.argsort(first)] = np.arange(len(first))
    labels = remap[labels]
    return LouvainResult(labels, modularity(W, labels, resolution), history, levels, [])
