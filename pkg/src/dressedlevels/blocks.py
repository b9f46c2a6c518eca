"""Symmetry blocks of the coupled Hamiltonian and Reverse Cuthill-McKee ordering.

The drive conserves m̃ = m_j + m_I - n_p, with n_p = q for states of the upper
manifold (a photon has been absorbed) and 0 for the lower one. Blocks are found
as connected components of the off-diagonal pattern; the m̃ label is attached
afterwards and cross-checked, because states sharing m̃ can still be
unreachable from each other.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .angmom import HalfInt
from .errors import SymmetryViolationError
from .labeled import LabeledMatrix
from .model import UPPER, BasisState

__all__ = [
    "Block",
    "BlockDecomposition",
    "mtilde",
    "structural_pattern",
    "decompose",
    "rcm_order",
    "display_order",
    "bandwidth",
]

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Block:
    mtilde: HalfInt
    indices: tuple

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class BlockDecomposition:
    blocks: tuple
    dark_singletons: tuple
    permutation: tuple
    singleton_mtilde: tuple = field(default=())

    def block_for(self, index: int) -> int | None:
        """Position in ``blocks`` of the block containing basis ``index``."""
        for k, b in enumerate(self.blocks):
            if index in b.indices:
                return k
        return None

    def by_mtilde(self, m) -> list[Block]:
        m = HalfInt.of(m)
        return [b for b in self.blocks if b.mtilde == m]

    def sizes(self) -> dict:
        out = {}
        for b in self.blocks:
            out.setdefault(b.mtilde, []).append(b.size)
        return out


def mtilde(state: BasisState, q: int) -> HalfInt:
    n_p = q if state.manifold == UPPER else 0
    return state.m_j + state.m_I - n_p


def structural_pattern(H, tol: float = ZERO_TOL) -> np.ndarray:
    """Boolean off-diagonal adjacency; entries below ``tol * max|H|`` are zeros."""
    M = H.entries if isinstance(H, LabeledMatrix) else np.asarray(H, dtype=float)
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    adj = np.abs(M) > tol * scale if scale > 0 else np.zeros(M.shape, dtype=bool)
    np.fill_diagonal(adj, False)
    return adj | adj.T


def _components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        comp, queue = [start], deque([start])
        while queue:
            v = queue.popleft()
            for w in np.flatnonzero(adj[v]):
                if not seen[w]:
                    seen[w] = True
                    comp.append(int(w))
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


def decompose(H: LabeledMatrix, q: int) -> BlockDecomposition:
    """Split the basis of ``H`` into independent blocks and dark singletons.

    Multi-state blocks are sorted by descending m̃, ties by first basis index.

    Raises
    ------
    SymmetryViolationError
        If a connected component contains states of different m̃, which means
        the couplings do not respect the declared polarisation.
    """
    adj = structural_pattern(H)
    blocks, singles, single_m = [], [], []
    for comp in _components(adj):
        labels = {mtilde(H.labels[i], q) for i in comp}
        if len(labels) != 1:
            members = ", ".join(str(H.labels[i]) for i in comp)
            raise SymmetryViolationError(
                f"component mixes m~ values {sorted(labels)}: {members}")
        m = labels.pop()
        if len(comp) == 1:
            singles.append(comp[0])
            single_m.append(m)
        else:
            blocks.append(Block(m, tuple(comp)))
    blocks.sort(key=lambda b: (-b.mtilde.twice, b.indices[0]))
    return BlockDecomposition(
        blocks=tuple(blocks),
        dark_singletons=tuple(singles),
        permutation=tuple(rcm_order(H)),
        singleton_mtilde=tuple(single_m),
    )


def bandwidth(M, perm=None) -> int:
    adj = structural_pattern(M)
    if perm is not None:
        perm = list(perm)
        adj = adj[np.ix_(perm, perm)]
    rows, cols = np.nonzero(adj)
    return int(np.max(np.abs(rows - cols))) if rows.size else 0


def _cuthill_mckee(adj: np.ndarray, vertices=None) -> list[int]:
    """Reverse Cuthill-McKee, reversing each connected component in place.

    Each component starts at its minimum-degree vertex; neighbours are queued
    by ascending degree, then ascending index. Components are emitted in the
    order their start vertices are found, so an empty pattern maps to the
    identity.
    """
    n = adj.shape[0]
    verts = list(range(n)) if vertices is None else list(vertices)
    deg = adj.sum(axis=1)
    seen = set()
    order = []
    allowed = set(verts)
    for start in sorted(verts, key=lambda v: (deg[v], v)):
        if start in seen:
            continue
        seen.add(start)
        comp, queue = [], deque([start])
        while queue:
            v = queue.popleft()
            comp.append(v)
            nbrs = [int(w) for w in np.flatnonzero(adj[v]) if w in allowed and w not in seen]
            nbrs.sort(key=lambda w: (deg[w], w))
            for w in nbrs:
                seen.add(w)
                queue.append(w)
        order.extend(reversed(comp))
    return order


def rcm_order(H) -> list[int]:
    """Reverse Cuthill-McKee permutation of the structural pattern of ``H``.

    Falls back to the identity when the reordering would not reduce the
    bandwidth, so the result never widens the band.
    """
    adj = structural_pattern(H)
    n = adj.shape[0]
    perm = _cuthill_mckee(adj)
    identity = list(range(n))
    if bandwidth(adj.astype(float), perm) > bandwidth(adj.astype(float)):
        return identity
    return perm


def display_order(H: LabeledMatrix, decomp: BlockDecomposition) -> list[int]:
    """Blocks by descending m̃ (each RCM-ordered internally), then singletons."""
    adj = structural_pattern(H)
    order = []
    for b in decomp.blocks:
        order.extend(_cuthill_mckee(adj, b.indices))
    order.extend(decomp.dark_singletons)
    return order
