"""The three clustering modes: network states, communities within states, and
subnetwork state sequences pooled across states.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .errors import RangeError, ValidationError
from .features import Scope, TimeSeriesPanel, WindowConfig, extract_all
from .gct import GctParams, gct_cluster
from .grassmann import GrassmannPoint
from .labeling import Labeling
from .metrics import accuracy, nmi

log = logging.getLogger(__name__)

__all__ = [
    "Mode",
    "StatePartition",
    "PipelineConfig",
    "CommunityResult",
    "cluster_states",
    "detect_communities",
    "track_sequences",
    "run",
    "windows_to_partition",
    "smooth_runs",
    "score_states",
    "score_communities",
    "score_sequences",
    "instrumentation",
]

# counts calls into feature extraction, keyed by scope
instrumentation: Counter = Counter()


class Mode(str, Enum):
    STATES = "states"
    COMMUNITIES = "communities"
    SEQUENCES = "sequences"


@dataclass
class StatePartition:
    """Contiguous ``(start, end, state)`` segments with inclusive ends."""

    segments: list

    def __post_init__(self):
        self.segments = [(int(a), int(b), int(s)) for a, b, s in self.segments]
        if not self.segments:
            raise ValidationError("partition needs at least one segment")
        if self.segments[0][0] != 0:
            raise ValidationError("partition must start at sample 0")
        for (a0, b0, _), (a1, b1, _) in zip(self.segments, self.segments[1:]):
            if a1 != b0 + 1:
                raise ValidationError("segments must be contiguous and ordered")
        for a, b, _ in self.segments:
            if b < a:
                raise ValidationError(f"empty segment {a}..{b}")

    @property
    def horizon(self) -> int:
        return self.segments[-1][1] + 1

    @property
    def states(self) -> list:
        return sorted({s for _, _, s in self.segments})

    def sample_labels(self) -> np.ndarray:
        out = np.empty(self.horizon, dtype=int)
        for a, b, s in self.segments:
            out[a : b + 1] = s
        return out

    def as_dict(self) -> dict:
        return {"segments": [list(s) for s in self.segments]}

    @classmethod
    def from_dict(cls, d) -> "StatePartition":
        segs = d["segments"] if isinstance(d, dict) else d
        return cls([tuple(s) for s in segs])

    @classmethod
    def from_labels(cls, labels) -> "StatePartition":
        labels = np.asarray(labels)
        cuts = np.flatnonzero(np.diff(labels)) + 1
        starts = np.concatenate([[0], cuts])
        ends = np.concatenate([cuts - 1, [len(labels) - 1]])
        return cls([(a, b, labels[a]) for a, b in zip(starts, ends)])


@dataclass
class PipelineConfig:
    """Settings for all modes.

    ``window``/``kernel``/``gct`` drive the network-wide state stage.
    ``node_window``/``node_kernel``/``node_gct`` drive the per-node stage used
    by community detection and sequence tracking; each defaults to its
    state-stage counterpart (with per-node scope for the window).
    """

    window: WindowConfig
    kernel: kernels.KernelSpec = field(default_factory=kernels.Linear)
    gct: GctParams = field(default_factory=GctParams)
    mode: Mode = Mode.STATES
    min_segment_len: Optional[int] = None
    known_states: Optional[StatePartition] = None
    node_window: Optional[WindowConfig] = None
    node_kernel: Optional[kernels.KernelSpec] = None
    node_gct: Optional[GctParams] = None

    def __post_init__(self):
        self.mode = Mode(self.mode)
        kernels.validate(self.kernel)
        if self.node_kernel is not None:
            kernels.validate(self.node_kernel)
        if self.window.scope is not Scope.NETWORK:
            raise ValidationError("the state-stage window must use network scope")
        if self.node_window is not None and self.node_window.scope is not Scope.NODE:
            raise ValidationError("node_window must use per-node scope")
        if self.min_segment_len is not None and self.min_segment_len < 1:
            raise ValidationError("min_segment_len must be positive")

    @property
    def segment_len(self) -> int:
        return self.window.span if self.min_segment_len is None else self.min_segment_len

    @property
    def per_node_window(self) -> WindowConfig:
        if self.node_window is not None:
            return self.node_window
        return replace(self.window, scope=Scope.NODE)

    @property
    def per_node_kernel(self) -> kernels.KernelSpec:
        return self.kernel if self.node_kernel is None else self.node_kernel

    @property
    def per_node_gct(self) -> GctParams:
        return self.gct if self.node_gct is None else self.node_gct


@dataclass
class CommunityResult:
    partition: StatePartition
    node_labels: dict  # state id -> Labeling over node ids
    feature_labels: dict  # state id -> Labeling over features


def _extract(panel, cfg, kernel, **kw) -> list[GrassmannPoint]:
    instrumentation[cfg.scope.value] += 1
    return extract_all(panel, cfg, kernel, **kw)


# --------------------------------------------------------------------------- window votes


def smooth_runs(labels, min_len: int) -> np.ndarray:
    """Absorb runs shorter than ``min_len`` into their longer neighbouring run.

    The shortest offending run is handled first (earliest on ties); it joins
    the longer adjacent run, the earlier one when both are equally long.
    """
    labels = np.asarray(labels).copy()
    while True:
        part = StatePartition.from_labels(labels)
        runs = part.segments
        if len(runs) == 1:
            return labels
        short = [(b - a + 1, k) for k, (a, b, _) in enumerate(runs) if b - a + 1 < min_len]
        if not short:
            return labels
        _, k = min(short)
        a, b, _ = runs[k]
        left = runs[k - 1] if k > 0 else None
        right = runs[k + 1] if k + 1 < len(runs) else None
        if right is None or (left is not None and left[1] - left[0] >= right[1] - right[0]):
            labels[a : b + 1] = left[2]
        else:
            labels[a : b + 1] = right[2]


def windows_to_partition(
    window_labels, anchors, cfg: WindowConfig, n_samples: int, min_segment_len: int
) -> StatePartition:
    """Turn per-window cluster labels into a contiguous state partition.

    Each sample takes the majority label of the windows covering it (the
    earliest covering window decides ties); uncovered samples copy the nearest
    covered one. Short runs are then smoothed away.
    """
    window_labels = np.asarray(window_labels)
    anchors = np.asarray(anchors)
    starts = anchors - cfg.tau_b + 1
    ends = starts + cfg.sample_span  # exclusive
    ids, lab = np.unique(window_labels, return_inverse=True)
    diff = np.zeros((n_samples + 1, len(ids)))
    np.add.at(diff, (starts, lab), 1)
    np.add.at(diff, (np.minimum(ends, n_samples), lab), -1)
    counts = np.cumsum(diff[:-1], axis=0)
    top = counts.max(axis=1)
    covered = top > 0
    out = ids[np.argmax(counts, axis=1)]
    for t in np.flatnonzero(covered & ((counts == top[:, None]).sum(axis=1) > 1)):
        tied = set(np.flatnonzero(counts[t] == top[t]))
        for w in np.flatnonzero((starts <= t) & (ends > t)):
            if lab[w] in tied:
                out[t] = ids[lab[w]]
                break
    if not covered.all():
        idx = np.flatnonzero(covered)
        nearest = idx[np.clip(np.searchsorted(idx, np.arange(n_samples)), 0, len(idx) - 1)]
        prev = idx[np.clip(np.searchsorted(idx, np.arange(n_samples)) - 1, 0, len(idx) - 1)]
        pick = np.where(np.abs(prev - np.arange(n_samples)) <= np.abs(nearest - np.arange(n_samples)), prev, nearest)
        out = np.where(covered, out, out[pick])
    return StatePartition.from_labels(smooth_runs(out, min_segment_len))


# --------------------------------------------------------------------------- modes


def cluster_states(panel: TimeSeriesPanel, config: PipelineConfig) -> tuple[Labeling, StatePartition]:
    """Network-wide features, GCT, then window votes into a state partition."""
    if config.known_states is not None:
        if config.known_states.horizon != panel.n_samples:
            raise ValidationError(
                f"known_states covers {config.known_states.horizon} samples, panel has {panel.n_samples}"
            )
        return Labeling(np.zeros(0, dtype=int)), config.known_states
    points = _extract(panel, config.window, config.kernel)
    labels = gct_cluster(points, config.gct)
    anchors = [p.provenance.anchor for p in points]
    part = windows_to_partition(labels.labels, anchors, config.window, panel.n_samples, config.segment_len)
    return labels, part


def _state_features(panel, part: StatePartition, config: PipelineConfig, state: Optional[int] = None):
    cfg = config.per_node_window
    points = []
    for a, b, s in part.segments:
        if state is not None and s != state:
            continue
        if b - a + 1 < cfg.sample_span:
            raise RangeError(
                f"segment {a}..{b} (state {s}) has {b - a + 1} samples; "
                f"per-node window needs {cfg.sample_span}"
            )
        points += _extract(panel.slice(a, b + 1), cfg, config.per_node_kernel, state=s, offset=a)
    return points


def _node_vote(points, labels: np.ndarray, node_ids) -> Labeling:
    """Group nodes whose features share a cluster at most anchors.

    For every node pair the agreement is the fraction of common anchors at
    which their features received the same label. Nodes joined by agreement
    above one half form a community (connected components of that graph).
    """
    nodes = [str(n) for n in node_ids]
    index = {n: k for k, n in enumerate(nodes)}
    anchors = sorted({p.provenance.anchor for p in points})
    col = {a: k for k, a in enumerate(anchors)}
    grid = np.full((len(nodes), len(anchors)), -1)
    for p, lab in zip(points, labels):
        grid[index[p.provenance.node], col[p.provenance.anchor]] = lab
    seen = grid >= 0
    both = seen.astype(float) @ seen.T.astype(float)
    same = np.zeros_like(both)
    for lab in np.unique(labels):
        hit = (grid == lab).astype(float)
        same += hit @ hit.T
    agree = np.divide(same, both, out=np.zeros_like(same), where=both > 0)
    _, comp = connected_components(csr_matrix(agree > 0.5), directed=False)
    # number communities by first appearance
    _, first = np.unique(comp, return_index=True)
    order = np.argsort(first)
    remap = np.empty(len(order), dtype=int)
    remap[order] = np.arange(len(order))
    return Labeling(remap[comp], nodes)


def detect_communities(panel: TimeSeriesPanel, config: PipelineConfig) -> CommunityResult:
    """Per-state node communities.

    Features from all segments of a state are pooled and clustered once; nodes
    whose features usually land in the same cluster form a community.
    """
    _, part = cluster_states(panel, config)
    node_labels, feature_labels = {}, {}
    for s in part.states:
        points = _state_features(panel, part, config, state=s)
        lab = gct_cluster(points, config.per_node_gct)
        feature_labels[s] = lab
        node_labels[s] = _node_vote(points, lab.labels, panel.node_ids)
    return CommunityResult(part, node_labels, feature_labels)


def track_sequences(panel: TimeSeriesPanel, config: PipelineConfig) -> tuple[Labeling, StatePartition]:
    """Cluster per-node features pooled over every state in one GCT pass."""
    _, part = cluster_states(panel, config)
    points = _state_features(panel, part, config)
    return gct_cluster(points, config.per_node_gct), part


def run(panel: TimeSeriesPanel, config: PipelineConfig):
    if config.mode is Mode.STATES:
        return cluster_states(panel, config)
    if config.mode is Mode.COMMUNITIES:
        return detect_communities(panel, config)
    return track_sequences(panel, config)


# --------------------------------------------------------------------------- scoring


def score_states(part: StatePartition, truth_states) -> dict:
    """Per-sample accuracy and NMI of a partition against true sample states."""
    pred = part.sample_labels()
    truth_states = np.asarray(truth_states)
    return {"accuracy": accuracy(pred, truth_states), "nmi": nmi(pred, truth_states)}


def _true_state_of(part_states: np.ndarray, truth_states: np.ndarray) -> dict:
    """Map each estimated state to the true state it overlaps most."""
    out = {}
    for s in np.unique(part_states):
        vals, counts = np.unique(truth_states[part_states == s], return_counts=True)
        out[int(s)] = int(vals[np.argmax(counts)])
    return out


def score_communities(result: CommunityResult, truth) -> dict:
    """Node accuracy/NMI per estimated state (against its dominant true state) and their mean."""
    tmap = _true_state_of(result.partition.sample_labels(), truth.sample_states())
    per_state = {}
    for s, lab in result.node_labels.items():
        blocks = truth.node_blocks[tmap[s]]
        per_state[int(s)] = {"accuracy": accuracy(lab, blocks), "nmi": nmi(lab, blocks)}
    return {
        "per_state": per_state,
        "accuracy": float(np.mean([v["accuracy"] for v in per_state.values()])),
        "nmi": float(np.mean([v["nmi"] for v in per_state.values()])),
    }


def sequence_truth(points, truth, cfg: WindowConfig) -> np.ndarray:
    """True subnetwork-process id of each per-node feature.

    A window straddling a state change takes the state holding most of its samples.
    """
    states = truth.sample_states()
    out = []
    for p in points:
        a = p.provenance.anchor - cfg.tau_b + 1
        vals, counts = np.unique(states[a : a + cfg.sample_span], return_counts=True)
        s = int(vals[np.argmax(counts)])
        out.append(truth.sequence_labels[s][int(p.provenance.node)])
    return np.array(out)


def score_sequences(labeling: Labeling, truth, cfg: WindowConfig) -> dict:
    """Feature-level accuracy/NMI of sequence tracking; every feature counts."""
    t = sequence_truth(
        [GrassmannPoint(np.eye(1), prov) for prov in labeling.items], truth, cfg
    )
    return {"accuracy": accuracy(labeling, t), "nmi": nmi(labeling, t)}
