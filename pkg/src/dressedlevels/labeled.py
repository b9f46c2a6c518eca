"""Dense real symmetric matrix carrying one label per basis state."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LabeledMatrix:
    """Immutable symmetric matrix with ``labels[i]`` naming row/column ``i``.

    Entries are copied on construction and the copy is marked read-only, so
    instances can be shared freely.
    """

    labels: tuple
    entries: np.ndarray

    def __init__(self, labels: Sequence[Any], entries):
        arr = np.array(entries, dtype=float)
        labels = tuple(labels)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        if arr.shape[0] != len(labels):
            raise ValueError(
                f"{len(labels)} labels for a {arr.shape[0]}x{arr.shape[0]} matrix")
        scale = max(1.0, float(np.max(np.abs(arr)))) if arr.size else 1.0
        if arr.size and np.max(np.abs(arr - arr.T)) > SYMMETRY_TOL * scale:
            raise ValueError("matrix is not symmetric")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "entries", arr)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        return self.labels.index(label)

    def submatrix(self, indices: Sequence[int]) -> "LabeledMatrix":
        idx = list(indices)
        return LabeledMatrix([self.labels[i] for i in idx],
                             self.entries[np.ix_(idx, idx)])

    def permuted(self, perm: Sequence[int]) -> "LabeledMatrix":
        return self.submatrix(perm)

    def __add__(self, other: "LabeledMatrix") -> "LabeledMatrix":
        if self.labels != other.labels:
            raise ValueError("cannot add matrices over different bases")
        return LabeledMatrix(self.labels, self.entries + other.entries)

    def __sub__(self, other: "LabeledMatrix") -> "LabeledMatrix":
        if self.labels != other.labels:
            raise ValueError("cannot subtract matrices over different bases")
        return LabeledMatrix(self.labels, self.entries - other.entries)
