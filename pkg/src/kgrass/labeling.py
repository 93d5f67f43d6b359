from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class Labeling:
    """Cluster ids for an ordered collection of items.

    ``items`` carries whatever identifies each labelled element (a feature
    provenance, a node id, a time index); it is parallel to ``labels``.
    """

    labels: np.ndarray
    items: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.items and len(self.items) != len(self.labels):
            raise ValueError("items and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_clusters(self) -> int:
        return len(np.unique(self.labels))

    def as_dict(self) -> dict[str, Any]:
        return {str(k): int(v) for k, v in zip(self.items or range(len(self)), self.labels)}
