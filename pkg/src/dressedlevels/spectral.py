"""Eigensolver, drive-strength sweeps and the analytic reference models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .angmom import HalfInt, lande_energy
from .blocks import Block, BlockDecomposition, decompose, mtilde
from .errors import ConvergenceError, PreconditionError
from .labeled import LabeledMatrix
from .model import (LOWER, UPPER, BasisState, SystemSpec, build_hamiltonian,
                    coupling_block, detuning, hyperfine_levels)

log = logging.getLogger(__name__)

__all__ = [
    "eigh_symmetric",
    "EigenBranchSet",
    "Branch",
    "ClassificationPolicy",
    "sweep",
    "classify",
    "admixture_turnover",
    "two_level_reference",
    "morris_shore_reference",
    "morris_shore_spectrum",
    "two_level_extrapolation",
    "DARK",
    "BRIGHT",
    "CHAMELEON",
]

DARK = "dark"
BRIGHT = "bright"
CHAMELEON = "chameleon-candidate"


# ----------------------------------------------------------------- eigensolver

def _round_robin(m: int):
    """Yield the m-1 rounds of a round-robin tournament on m (even) players."""
    players = list(range(m))
    for _ in range(m - 1):
        yield [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        players = [players[0], players[-1]] + players[1:-1]


def eigh_symmetric(M, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of real symmetric matrices by cyclic Jacobi rotations.

    Rotations are scheduled in round-robin order so that every round applies
    n/2 disjoint rotations at once. A sweep covers all n(n-1)/2 pairs. The
    iteration stops once the off-diagonal Frobenius norm drops below
    ``tol * ||M||_F``; one further sweep is then applied to polish.

    ``M`` may also be a stack of shape ``(..., n, n)``; all matrices are
    rotated together, each with its own angles, which is much faster than
    looping over many small blocks.

    Returns
    -------
    w : ndarray
        Eigenvalues, ascending, shape ``(..., n)``.
    V : ndarray
        Orthonormal eigenvectors as columns, ``M @ V = V @ diag(w)``.

    Raises
    ------
    PreconditionError
        If ``M`` is not square, not finite or not symmetric to 1e-9 relative.
    ConvergenceError
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    A = np.array(M, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise PreconditionError(f"expected square matrices, got shape {A.shape}")
    batch_shape, n = A.shape[:-2], A.shape[-1]
    if A.size == 0:
        return np.zeros(batch_shape + (n,)), np.zeros(batch_shape + (n, n))
    A = A.reshape((-1, n, n))
    if not np.all(np.isfinite(A)):
        raise PreconditionError("matrix has non-finite entries")
    scale = np.max(np.abs(A), axis=(1, 2))
    asym = np.max(np.abs(A - A.transpose(0, 2, 1)), axis=(1, 2))
    if np.any(asym > 1e-9 * scale):
        raise PreconditionError("matrix is not symmetric")
    # work at unit scale so the squared norms neither underflow nor overflow
    scale = np.where(scale > 0, scale, 1.0)
    A = 0.5 * (A + A.transpose(0, 2, 1)) / scale[:, None, None]
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    norm = np.linalg.norm(A, axis=(1, 2))
    m = n + (n % 2)
    rounds = []
    for pairs in _round_robin(m):
        # drop the phantom player when n is odd
        pq = [(p, q) if p < q else (q, p) for p, q in pairs if p < n and q < n]
        if pq:
            rounds.append((np.array([p for p, _ in pq]), np.array([q for _, q in pq])))
    diag_mask = np.eye(n, dtype=bool)

    def off_norm():
        return np.linalg.norm(np.where(diag_mask, 0.0, A), axis=(1, 2))

    polish = False
    off = off_norm()
    for sweep_no in range(max_sweeps + 1):
        if np.all(off <= tol * norm):
            if polish or not np.any(off):
                break
            polish = True
        elif sweep_no == max_sweeps:
            worst = int(np.argmax(off / np.where(norm > 0, norm, 1.0)))
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps",
                {"off_norm": float(off[worst]), "norm": float(norm[worst]), "dim": n,
                 "sweeps": sweep_no})
        for P, Q in rounds:
            apq = A[:, P, Q]
            if not np.any(apq):
                continue
            app = A[:, P, P]
            aqq = A[:, Q, Q]
            act = apq != 0.0
            safe = np.where(act, apq, 1.0)
            with np.errstate(over="ignore"):
                # |tau| = inf simply yields t = 0
                tau = (aqq - app) / (2.0 * safe)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(act, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            cp, cq = A[:, :, P], A[:, :, Q]
            A[:, :, P] = cp * c[:, None, :] - cq * s[:, None, :]
            A[:, :, Q] = cp * s[:, None, :] + cq * c[:, None, :]
            rp, rq = A[:, P, :], A[:, Q, :]
            A[:, P, :] = c[:, :, None] * rp - s[:, :, None] * rq
            A[:, Q, :] = s[:, :, None] * rp + c[:, :, None] * rq
            A[:, P, Q] = 0.0
            A[:, Q, P] = 0.0
            vp, vq = V[:, :, P], V[:, :, Q]
            V[:, :, P] = vp * c[:, None, :] - vq * s[:, None, :]
            V[:, :, Q] = vp * s[:, None, :] + vq * c[:, None, :]
        off = off_norm()
    w = np.diagonal(A, axis1=1, axis2=2) * scale[:, None]
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    return w.reshape(batch_shape + (n,)), V.reshape(batch_shape + (n, n))


# ------------------------------------------------------------ reference models

def two_level_reference(omega: float, delta: float):
    """Exact eigenvalues ``(δ ∓ sqrt(δ² + Ω²)) / 2`` of ``[[0, Ω/2], [Ω/2, δ]]``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be non-negative")
    root = np.sqrt(np.square(delta) + np.square(omega))
    return (delta - root) / 2.0, (delta + root) / 2.0


def morris_shore_reference(coupling, delta: float) -> np.ndarray:
    """Eigenvalues of two degenerate manifolds joined by ``coupling``.

    ``coupling`` is the ``n_upper x n_lower`` block W (already carrying the
    factor 1/2). Lower states sit at 0 and upper states at ``delta``. Each
    nonzero singular value s of W yields a bright pair
    ``(δ ± sqrt(δ² + (2s)²)) / 2``; the remaining lower and upper dimensions
    are dark at 0 and δ. Returned ascending.
    """
    W = np.atleast_2d(np.asarray(coupling, dtype=float))
    n_up, n_low = W.shape
    sv = np.linalg.svd(W, compute_uv=False) if W.size else np.zeros(0)
    cutoff = 1e-12 * (sv.max() if sv.size else 0.0)
    bright = sv[sv > cutoff] if sv.size and sv.max() > 0 else np.zeros(0)
    rank = bright.size
    root = np.sqrt(delta * delta + 4.0 * bright * bright)
    vals = np.concatenate([
        (delta - root) / 2.0,
        (delta + root) / 2.0,
        np.zeros(n_low - rank),
        np.full(n_up - rank, float(delta)),
    ])
    return np.sort(vals)


def morris_shore_spectrum(spec: SystemSpec, omega: float) -> np.ndarray:
    """Morris-Shore eigenvalues for a scenario; only valid without hyperfine terms.

    Raises
    ------
    PreconditionError
        If either manifold has a nonzero hyperfine constant.
    """
    if spec.lower.hyperfine_A != 0.0 or spec.upper.hyperfine_A != 0.0:
        raise PreconditionError(
            "Morris-Shore reference requires degenerate manifolds (hyperfine_A = 0)")
    e_low = spec.lower.base_energy
    e_up = spec.upper.base_energy + detuning(spec)
    return morris_shore_reference(coupling_block(spec, omega), e_up - e_low) + e_low


def two_level_extrapolation(spec: SystemSpec, block: Block, basis: Sequence[BasisState],
                            omega_grid) -> dict:
    """Weak-coupling two-level lines for each lower hyperfine level in a block.

    For every ``|F, m_F>`` spanned by the block's lower states, the effective
    Rabi frequency is ``Ω_F = 2 ||W |F, m_F>||`` and the detuning is the gap
    between the upper level and ``E_F``. Returns ``{F: array (n_grid, 2)}``
    holding ``E_F + two_level_reference(Ω_F, δ_F)``.
    """
    grid = np.asarray(omega_grid, dtype=float)
    lowers = [basis[i] for i in block.indices if basis[i].manifold == LOWER]
    if not lowers:
        return {}
    m_F = lowers[0].m_j + lowers[0].m_I
    low = spec.lower
    W1 = coupling_block(spec, 1.0)
    e_up = spec.upper.base_energy + detuning(spec)
    out = {}
    for F, vec in hyperfine_levels(low, m_F).items():
        e_F = low.base_energy + low.hyperfine_A * lande_energy(F, low.J, low.I)
        rabi_per_omega = 2.0 * np.linalg.norm(W1 @ vec)
        lo, hi = two_level_reference(rabi_per_omega * grid, e_up - e_F)
        out[F] = np.column_stack([lo + e_F, hi + e_F])
    return out


# --------------------------------------------------------------------- sweeps

@dataclass
class Branch:
    """One dressed state followed across the grid.

    ``vectors[i]`` is the eigenvector at grid point ``i`` in the block's own
    coordinates (``indices`` maps them into the full basis).
    """

    block_id: int
    mtilde: HalfInt
    indices: tuple
    energies: np.ndarray
    vectors: np.ndarray

    def full_vector(self, i: int, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        out[list(self.indices)] = self.vectors[i]
        return out

    def admixture(self, local_index: Optional[int]) -> np.ndarray:
        if local_index is None:
            return np.zeros(len(self.energies))
        return self.vectors[:, local_index] ** 2


@dataclass
class ClassificationPolicy:
    """Thresholds for :func:`classify`.

    ``window_fraction`` is the upper part of the grid on which the probed
    admixture must decrease strictly; ``min_admixture`` ignores branches whose
    admixture never rises above numerical noise.
    """

    dark_rel_tol: float = 1e-6
    window_fraction: float = 0.25
    min_admixture: float = 1e-6


@dataclass
class EigenBranchSet:
    spec: SystemSpec
    basis: list
    omega_grid: np.ndarray
    decomposition: BlockDecomposition
    branches: list
    probe_state: Optional[BasisState] = None
    classifications: list = field(default_factory=list)

    def local_index(self, branch: Branch, state: BasisState) -> Optional[int]:
        try:
            full = self.basis.index(state)
        except ValueError:
            return None
        try:
            return branch.indices.index(full)
        except ValueError:
            return None

    def admixture(self, branch_id: int, state: Optional[BasisState] = None) -> np.ndarray:
        """``|<state|Ψ(Ω)>|²`` along the grid (defaults to the probe state)."""
        state = state if state is not None else self.probe_state
        br = self.branches[branch_id]
        if state is None:
            return np.zeros(len(self.omega_grid))
        return br.admixture(self.local_index(br, state))

    def upper_fraction(self, branch_id: int) -> np.ndarray:
        br = self.branches[branch_id]
        mask = [self.basis[i].manifold == UPPER for i in br.indices]
        return np.sum(br.vectors[:, mask] ** 2, axis=1)

    def signal_weight(self, branch_id: int) -> np.ndarray:
        """Probe admixture times Rydberg (upper-manifold) fraction, per grid point."""
        return self.admixture(branch_id) * self.upper_fraction(branch_id)

    def block_branches(self, block_id: int) -> list[int]:
        """Branch ids of a block, ordered by energy at the last grid point."""
        ids = [k for k, b in enumerate(self.branches) if b.block_id == block_id]
        return sorted(ids, key=lambda k: self.branches[k].energies[-1])

    def block_id_for(self, m) -> list[int]:
        m = HalfInt.of(m)
        return [k for k, b in enumerate(self.decomposition.blocks) if b.mtilde == m]

    def energies_at(self, i: int) -> np.ndarray:
        return np.sort([b.energies[i] for b in self.branches])


def _cluster_slices(w: np.ndarray, tol: float):
    start = 0
    for k in range(1, len(w) + 1):
        if k == len(w) or w[k] - w[k - 1] > tol:
            if k - start > 1:
                yield slice(start, k)
            start = k


def _align_degenerate(w, V, ref, tol):
    """Rotate each degenerate eigenvector cluster of ``V`` towards ``ref``.

    Inside a cluster the eigenvectors are arbitrary; the rotation picks the
    orthonormal basis of the cluster that best matches the reference columns
    with the largest projection onto it (orthogonal Procrustes).
    """
    V = V.copy()
    for sl in _cluster_slices(w, tol):
        U = V[:, sl]
        d = U.shape[1]
        proj = U.T @ ref
        pick = np.argsort(-np.linalg.norm(proj, axis=0), kind="stable")[:d]
        X, _, Yt = np.linalg.svd(proj[:, pick])
        V[:, sl] = U @ (X @ Yt)
    return V


def _pair(prev_vecs, prev_e, vecs, e, amb_tol=1e-6):
    """Greedy max-overlap matching; returns ``assign[prev] = new``."""
    ov = np.abs(prev_vecs.T @ vecs)
    n = ov.shape[0]
    assign = np.full(n, -1)
    free_r, free_c = set(range(n)), set(range(n))
    while free_r:
        rows, cols = sorted(free_r), sorted(free_c)
        sub = ov[np.ix_(rows, cols)]
        best = sub.max()
        cand = np.argwhere(sub >= best - amb_tol)
        if len(cand) > 1:
            log.debug("ambiguous branch pairing (%d candidates); using energy proximity", len(cand))
            r, c = min(cand, key=lambda rc: (abs(prev_e[rows[rc[0]]] - e[cols[rc[1]]]), rc[0], rc[1]))
        else:
            r, c = cand[0]
        assign[rows[r]] = cols[c]
        free_r.discard(rows[r])
        free_c.discard(cols[c])
    return assign


def _diagonalize_grid(H0, coupling, indices, grid):
    ix = np.ix_(indices, indices)
    stack = H0[ix][None] + grid[:, None, None] * coupling[ix][None]
    w, V = eigh_symmetric(stack)
    return list(zip(w, V))


def sweep(spec: SystemSpec, omega_grid, probe_state: Optional[BasisState] = None,
          policy: Optional[ClassificationPolicy] = None) -> EigenBranchSet:
    """Diagonalise every block over an ascending grid of drive strengths.

    The block structure is taken from the coupled Hamiltonian (at the largest
    grid value, or Ω = 1 when the grid is all zeros). Branches are paired
    between consecutive grid points by maximum eigenvector overlap. Exactly
    degenerate eigenvectors (for instance at Ω = 0) are first rotated to
    match the neighbouring grid point so tracking starts from the correct
    limit. Singleton states become one-point branches of their own.
    """
    grid = np.asarray(omega_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("omega_grid must be a non-empty 1-D sequence")
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("omega_grid must be ascending and non-negative")
    policy = policy or ClassificationPolicy()
    basis_H = build_hamiltonian(spec, 0.0)
    coupling = build_hamiltonian(spec, 1.0).entries - basis_H.entries
    H0 = basis_H.entries

    def H_at(om):
        return H0 + om * coupling

    basis = list(basis_H.labels)
    struct_omega = grid[-1] if grid[-1] > 0 else 1.0
    decomp = decompose(LabeledMatrix(basis, H_at(struct_omega)), spec.polarization_q)
    scale = max(1.0, float(np.max(np.abs(H_at(grid[-1])))))
    deg_tol = 1e-9 * scale

    branches = []
    for block_id, blk in enumerate(decomp.blocks):
        idx = list(blk.indices)
        raw = _diagonalize_grid(H0, coupling, idx, grid)
        n = len(idx)
        energies = np.zeros((grid.size, n))
        vectors = np.zeros((grid.size, n, n))
        for i, (w, V) in enumerate(raw):
            if i == 0:
                ref = raw[1][1] if grid.size > 1 else V
                V = _align_degenerate(w, V, ref, deg_tol)
                energies[0], vectors[0] = w, V.T
                continue
            prev_V = vectors[i - 1].T
            V = _align_degenerate(w, V, prev_V, deg_tol)
            assign = _pair(prev_V, energies[i - 1], V, w)
            for b in range(n):
                col = V[:, assign[b]]
                if col @ prev_V[:, b] < 0:
                    col = -col
                energies[i, b] = w[assign[b]]
                vectors[i, b] = col
        for b in range(n):
            branches.append(Branch(block_id, blk.mtilde, tuple(idx),
                                   energies[:, b].copy(), vectors[:, b, :].copy()))

    for s, m in zip(decomp.dark_singletons, decomp.singleton_mtilde):
        e = np.array([H_at(om)[s, s] for om in grid])
        branches.append(Branch(-1, m, (s,), e, np.ones((grid.size, 1))))

    result = EigenBranchSet(spec, basis, grid, decomp, branches, probe_state)
    result.classifications = [classify(result, k, probe_state, policy)
                              for k in range(len(branches))]
    return result


def admixture_turnover(admixture, omega_grid) -> Optional[float]:
    """Ω at the interior maximum of an admixture curve, or None if it peaks at an end."""
    a = np.asarray(admixture)
    k = int(np.argmax(a))
    if k == 0 or k == a.size - 1:
        return None
    return float(np.asarray(omega_grid)[k])


def classify(branch_set: EigenBranchSet, branch_id: int,
             probe_state: Optional[BasisState] = None,
             policy: Optional[ClassificationPolicy] = None) -> str:
    """Tag a branch as dark, bright or chameleon-candidate.

    Dark: energy never moves by more than ``dark_rel_tol * max(Ω)``.
    Chameleon-candidate: the probed admixture rises to an interior maximum and
    then decreases strictly over the top ``window_fraction`` of the grid.
    Everything else is bright.
    """
    policy = policy or ClassificationPolicy()
    grid = branch_set.omega_grid
    br = branch_set.branches[branch_id]
    if np.max(np.abs(br.energies - br.energies[0])) <= policy.dark_rel_tol * grid.max():
        return DARK
    if probe_state is None:
        probe_state = branch_set.probe_state
    if probe_state is None:
        return BRIGHT
    a = branch_set.admixture(branch_id, probe_state)
    k = int(np.argmax(a))
    start = int(np.floor((1.0 - policy.window_fraction) * grid.size))
    if a[k] < policy.min_admixture or k == 0 or k >= start or grid.size - start < 2:
        return BRIGHT
    if np.all(np.diff(a[start:]) < 0):
        return CHAMELEON
    return BRIGHT
