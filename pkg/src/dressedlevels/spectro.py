"""Probe signal weights, broadened spectra and multi-Gaussian peak fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .angmom import HalfInt, half
from .blocks import decompose
from .errors import ConfigurationError, FitError, PreconditionError
from .labeled import LabeledMatrix
from .model import LOWER, UPPER, BasisState, SystemSpec, build_hamiltonian
from .spectral import eigh_symmetric

__all__ = [
    "ProbeSpec",
    "OmegaDistribution",
    "TrapGeometry",
    "Spectrum",
    "Peak",
    "FitResult",
    "signal_weight",
    "stick_spectrum",
    "trap_omega_distribution",
    "synthesize_spectrum",
    "fit_peaks",
    "normalize_heights",
    "gaussian",
]

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class ProbeSpec:
    """Weak probe from a ground state ``(m_j, m_I)`` with polarisation ``probe_q``.

    The probed lower-manifold state has ``m_j = ground m_j + probe_q`` and the
    same ``m_I``. ``linewidth`` is the Gaussian sigma of one homogeneous line.
    """

    probe_q: int = -1
    ground_mj: HalfInt = half("1/2")
    ground_mI: HalfInt = half("3/2")
    linewidth: float = 6.0

    def __post_init__(self):
        if self.probe_q not in (-1, 0, 1):
            raise ConfigurationError(f"probe_q must be -1, 0 or +1, got {self.probe_q}")
        object.__setattr__(self, "ground_mj", half(self.ground_mj))
        object.__setattr__(self, "ground_mI", half(self.ground_mI))
        if not self.linewidth > 0:
            raise ConfigurationError(f"linewidth must be positive, got {self.linewidth}")

    @property
    def probed_lower_state(self) -> BasisState:
        return BasisState(LOWER, self.ground_mj + self.probe_q, self.ground_mI)

    def probed_state_in(self, spec: SystemSpec) -> BasisState:
        st = self.probed_lower_state
        if abs(st.m_j) > spec.lower.J or abs(st.m_I) > spec.lower.I \
                or (spec.lower.J - st.m_j).twice % 2 or (spec.lower.I - st.m_I).twice % 2:
            raise ConfigurationError(f"probed state {st} does not exist in {spec.lower.label}")
        return st

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeSpec":
        try:
            return cls(probe_q=int(d.get("q", -1)), ground_mj=half(d.get("ground_mj", "1/2")),
                       ground_mI=half(d.get("ground_mI", "3/2")),
                       linewidth=float(d.get("linewidth_MHz", 6.0)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"probe: {exc}") from None


@dataclass(frozen=True)
class OmegaDistribution:
    """Weighted samples of the local Rabi frequency (MHz); weights sum to one."""

    omegas: np.ndarray
    weights: np.ndarray
    model: str = "homogeneous"
    seed: Optional[int] = None

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if om.shape != w.shape or om.size == 0:
            raise ConfigurationError("omegas and weights must be non-empty and equally long")
        if np.any(w < 0) or np.any(om < 0):
            raise ConfigurationError("omegas and weights must be non-negative")
        total = w.sum()
        if not total > 0:
            raise ConfigurationError("weights sum to zero")
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "weights", w / total)

    @classmethod
    def homogeneous(cls, omega: float) -> "OmegaDistribution":
        return cls(np.array([float(omega)]), np.array([1.0]), "homogeneous")

    def __len__(self):
        return self.omegas.size


@dataclass(frozen=True)
class TrapGeometry:
    """Crossed Gaussian-beam dipole trap; the first beam is the coupling laser.

    Depths and temperature are in microkelvin (only their ratio matters),
    lengths in micrometres. The coupling beam runs along x, the crossing beam
    in the x-y plane at ``crossing_angle_deg`` to it.
    """

    coupling_waist_um: float = 40.0
    crossing_waist_um: float = 40.0
    coupling_depth_uK: float = 400.0
    crossing_depth_uK: float = 400.0
    temperature_uK: float = 60.0
    crossing_angle_deg: float = 45.0
    wavelength_um: float = 1.03

    def __post_init__(self):
        for name in ("coupling_waist_um", "crossing_waist_um", "wavelength_um"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not self.coupling_depth_uK > 0 or self.crossing_depth_uK < 0:
            raise ConfigurationError("trap depths must be positive")
        if self.temperature_uK < 0:
            raise ConfigurationError("temperature must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "TrapGeometry":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown trap fields: {sorted(unknown)}")
        try:
            return cls(**{k: float(v) for k, v in d.items()})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"trap: {exc}") from None

    def _beams(self):
        th = math.radians(self.crossing_angle_deg)
        return [
            (np.array([1.0, 0.0, 0.0]), self.coupling_waist_um, self.coupling_depth_uK),
            (np.array([math.cos(th), math.sin(th), 0.0]), self.crossing_waist_um, self.crossing_depth_uK),
        ]

    def _intensity(self, r, axis, waist):
        zr = math.pi * waist ** 2 / self.wavelength_um
        z = r @ axis
        rho2 = np.sum(r * r, axis=1) - z * z
        wz2 = 1.0 + (z / zr) ** 2
        return np.exp(-2.0 * rho2 / (waist ** 2 * wz2)) / wz2

    def potential(self, r) -> np.ndarray:
        """Trap potential (µK) at positions ``r`` (µm), shape ``(n, 3)``."""
        r = np.atleast_2d(r)
        return -sum(depth * self._intensity(r, ax, w) for ax, w, depth in self._beams())

    def coupling_intensity(self, r) -> np.ndarray:
        """Coupling-beam intensity relative to its focus value."""
        ax, w, _ = self._beams()[0]
        return self._intensity(np.atleast_2d(r), ax, w)

    def harmonic_stiffness(self) -> np.ndarray:
        """K with ``U(r) ≈ U(0) + rᵀ K r`` near the trap centre."""
        K = np.zeros((3, 3))
        for ax, w, depth in self._beams():
            zr = math.pi * w ** 2 / self.wavelength_um
            outer = np.outer(ax, ax)
            K += depth * ((2.0 / w ** 2) * (np.eye(3) - outer) + outer / zr ** 2)
        return K


def trap_omega_distribution(trap: TrapGeometry, peak_omega: float, n_samples: int = 2000,
                            seed: int = 20240601, cutoff_kT: float = 20.0) -> OmegaDistribution:
    """Monte-Carlo distribution of the local Rabi frequency over a thermal cloud.

    Positions follow ``exp(-U(r)/kT)`` in the crossed-beam potential. They are
    drawn from the harmonic approximation of the trap and reweighted to the
    exact Boltzmann factor; positions more than ``cutoff_kT`` above the trap
    bottom get zero weight. The local Rabi frequency is
    ``peak_omega * sqrt(I_c(r) / I_c(0))``, so the beam focus sees the nominal
    value.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be at least 1")
    if peak_omega < 0:
        raise ConfigurationError("peak_omega must be non-negative")
    T = trap.temperature_uK
    if T == 0:
        return OmegaDistribution(np.array([float(peak_omega)]), np.array([1.0]), "trap-sampled", seed)
    K = trap.harmonic_stiffness()
    cov = 0.5 * T * np.linalg.inv(K)
    L = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((n_samples, 3)) @ L.T
    u_min = -(trap.coupling_depth_uK + trap.crossing_depth_uK)
    excess = trap.potential(r) - u_min
    harm = np.einsum("ni,ij,nj->n", r, K, r)
    logw = (harm - excess) / T
    w = np.where(excess <= cutoff_kT * T, np.exp(logw - logw[excess <= cutoff_kT * T].max()), 0.0)
    omegas = peak_omega * np.sqrt(trap.coupling_intensity(r))
    return OmegaDistribution(omegas, w, "trap-sampled", seed)


@dataclass(frozen=True)
class Spectrum:
    detuning: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.detuning, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if d.shape != s.shape or d.ndim != 1:
            raise ValueError("detuning and signal must be 1-D arrays of equal length")
        object.__setattr__(self, "detuning", d)
        object.__setattr__(self, "signal", s)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["detuning_MHz", "signal"])
        for d, s in zip(self.detuning, self.signal):
            wr.writerow([repr(float(d)), repr(float(s))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0][:2]] != ["detuning_MHz", "signal"]:
            raise ConfigurationError(f"{path}: expected header 'detuning_MHz,signal'")
        try:
            data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=float)
        except ValueError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        data = data.reshape(-1, 2)
        return cls(data[:, 0], data[:, 1])


def gaussian(x, center, sigma, amplitude=1.0):
    return amplitude * np.exp(-0.5 * ((np.asarray(x) - center) / sigma) ** 2)


def signal_weight(eigenvector, labels: Sequence[BasisState], probed_state: BasisState) -> float:
    """Probe overlap times Rydberg fraction of a dressed state.

    ``|<probed|Ψ>|² * Σ_upper |<upper|Ψ>|²``. Both factors are probabilities,
    so the product lies in [0, 1].
    """
    v = np.asarray(eigenvector, dtype=float)
    try:
        overlap = v[list(labels).index(probed_state)] ** 2
    except ValueError:
        return 0.0
    upper = sum(v[k] ** 2 for k, lab in enumerate(labels) if lab.manifold == UPPER)
    return float(overlap * upper)


class _ProbedBlock:
    """The one block of the Hamiltonian a probe can see, for repeated solves."""

    def __init__(self, spec: SystemSpec, probed: BasisState, omega_hint: float):
        H0 = build_hamiltonian(spec, 0.0)
        self.coupling = build_hamiltonian(spec, 1.0).entries - H0.entries
        self.H0 = H0.entries
        labels = list(H0.labels)
        hint = omega_hint if omega_hint > 0 else 1.0
        decomp = decompose(LabeledMatrix(labels, self.H0 + hint * self.coupling), spec.polarization_q)
        p = labels.index(probed)
        k = decomp.block_for(p)
        self.indices = list(decomp.blocks[k].indices) if k is not None else [p]
        self.local_probe = self.indices.index(p)
        self.upper_mask = np.array([labels[i].manifold == UPPER for i in self.indices])

    def lines(self, omega):
        """Energies and weights at one Ω, or stacked along axis 0 for an array of Ω."""
        ix = np.ix_(self.indices, self.indices)
        om = np.asarray(omega, dtype=float)
        H = self.H0[ix] + om[..., None, None] * self.coupling[ix]
        w, V = eigh_symmetric(H)
        p = V[..., self.local_probe, :] ** 2 * np.sum(V[..., self.upper_mask, :] ** 2, axis=-2)
        return w, p


def stick_spectrum(spec: SystemSpec, probe: ProbeSpec, omega: float):
    """Eigenenergies and signal weights of the probed block at one Ω."""
    blk = _ProbedBlock(spec, probe.probed_state_in(spec), omega)
    return blk.lines(omega)


def synthesize_spectrum(spec: SystemSpec, probe: ProbeSpec, dist: OmegaDistribution,
                        detuning_grid) -> Spectrum:
    """Probe spectrum averaged over a distribution of local Rabi frequencies.

    ``signal(δ) = Σ_s w_s Σ_i p_i(Ω_s) G(δ - E_i(Ω_s))`` with ``G`` a unit-area
    Gaussian of width ``probe.linewidth``. Samples are accumulated in their
    stored order, so the output is bit-reproducible.
    """
    grid = np.asarray(detuning_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("detuning grid must be a non-empty 1-D array")
    blk = _ProbedBlock(spec, probe.probed_state_in(spec), float(dist.omegas.max()))
    sig = probe.linewidth
    norm = 1.0 / (sig * math.sqrt(2.0 * math.pi))
    keep = dist.weights > 0.0
    energies, p = blk.lines(dist.omegas[keep])
    amp = (dist.weights[keep][:, None] * p * norm).ravel()
    centers = energies.ravel()
    signal = np.zeros_like(grid)
    for e, a in zip(centers, amp):
        if a > 0.0:
            signal += a * np.exp(-0.5 * ((grid - e) / sig) ** 2)
    return Spectrum(grid, signal)


# ------------------------------------------------------------------ fitting

@dataclass
class Peak:
    center: float
    sigma: float
    amplitude: float
    normalized_height: Optional[float] = None


@dataclass
class FitResult:
    peaks: list
    baseline: Optional[float]
    residual_norm: float
    iterations: int
    converged: bool
    covariance: Optional[np.ndarray] = None
    message: str = ""
    reseeded: bool = False

    def centers(self) -> np.ndarray:
        return np.array([p.center for p in self.peaks])

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "peaks": [
                {"center_MHz": p.center, "sigma_MHz": p.sigma, "amplitude": p.amplitude,
                 **({"normalized_height": p.normalized_height} if p.normalized_height is not None else {})}
                for p in self.peaks
            ],
            "baseline": self.baseline,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "reseeded": self.reseeded,
            "message": self.message,
            "covariance": None if self.covariance is None else self.covariance.tolist(),
        }


def _model(x, theta, n_peaks, baseline):
    y = np.full_like(x, theta[-1] if baseline else 0.0)
    J = np.empty((x.size, theta.size))
    for k in range(n_peaks):
        c, s, a = theta[3 * k:3 * k + 3]
        d = (x - c) / s
        g = np.exp(-0.5 * d * d)
        y += a * g
        J[:, 3 * k] = a * g * d / s
        J[:, 3 * k + 1] = a * g * d * d / s
        J[:, 3 * k + 2] = g
    if baseline:
        J[:, -1] = 1.0
    return y, J


def _local_maxima(y):
    inner = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    return inner[np.argsort(-y[inner], kind="stable")]


def _width_estimate(x, y, i, base):
    half_h = base + 0.5 * (y[i] - base)
    lo = i
    while lo > 0 and y[lo] > half_h:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi] > half_h:
        hi += 1
    return max((x[hi] - x[lo]) / FWHM_PER_SIGMA, 2.0 * (x[1] - x[0]))


def _initial_guess(x, y, n_peaks, min_sep, base, reseed):
    chosen = []
    for i in _local_maxima(y):
        if all(abs(x[i] - x[j]) >= min_sep for j in chosen):
            chosen.append(int(i))
        if len(chosen) == n_peaks:
            break
    if len(chosen) < n_peaks and reseed:
        # place the rest at the largest leftover signal, away from existing picks
        resid = y - base
        for j in chosen:
            resid = resid - (y[j] - base) * np.exp(
                -0.5 * ((x - x[j]) / _width_estimate(x, y, j, base)) ** 2)
        for i in np.argsort(-resid, kind="stable"):
            if len(chosen) == n_peaks or resid[i] <= 0.0:
                break
            if all(abs(x[i] - x[j]) >= min_sep for j in chosen):
                chosen.append(int(i))
    if len(chosen) < n_peaks:
        return None
    theta = []
    for i in sorted(chosen, key=lambda j: x[j]):
        theta += [x[i], _width_estimate(x, y, i, base), y[i] - base]
    return np.array(theta)


def _levenberg_marquardt(x, y, theta, n_peaks, baseline, max_iter, xtol, ftol):
    lam = 1e-3
    model, J = _model(x, theta, n_peaks, baseline)
    r = model - y
    cost = r @ r
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        JTJ = J.T @ J
        g = J.T @ r
        diag = np.diag(JTJ).copy()
        diag[diag == 0] = 1.0
        try:
            step = -np.linalg.solve(JTJ + lam * np.diag(diag), g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = theta + step
        m2, J2 = _model(x, trial, n_peaks, baseline)
        r2 = m2 - y
        cost2 = r2 @ r2
        if np.isfinite(cost2) and cost2 <= cost:
            small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(trial) + xtol)
            small_gain = cost - cost2 <= ftol * cost
            theta, J, r, cost = trial, J2, r2, cost2
            lam = max(lam / 10.0, 1e-12)
            if small_step or small_gain or cost == 0.0:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > 1e16:
                # no downhill direction left at machine precision
                converged = True
                break
    return theta, J, r, cost, it, converged


def fit_peaks(spectrum: Spectrum, n_peaks: int, baseline: bool = False,
              min_separation: Optional[float] = None, max_iter: int = 200,
              xtol: float = 1e-12, ftol: float = 1e-15) -> FitResult:
    """Fit a sum of ``n_peaks`` Gaussians (plus optional constant) by Levenberg-Marquardt.

    Initial centres are the highest local maxima at least ``min_separation``
    apart (default: five grid steps). If too few qualify, the remaining
    centres are seeded once from the leftover signal; if that also fails the
    fit is abandoned.

    Raises
    ------
    PreconditionError
        For ``n_peaks < 1`` or fewer than ``9 * n_peaks`` samples.
    FitError
        On a degenerate initialisation, or when ``max_iter`` iterations do
        not converge (``best`` then holds the last accepted parameters).
    """
    if n_peaks < 1:
        raise PreconditionError("n_peaks must be at least 1")
    x, y = spectrum.detuning, spectrum.signal
    if x.size < 9 * n_peaks:
        raise PreconditionError(f"need at least {9 * n_peaks} samples for {n_peaks} peaks")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if min_separation is None:
        min_separation = 5.0 * float(np.median(np.diff(x)))
    base = float(np.min(y)) if baseline else 0.0
    reseeded = False
    theta = _initial_guess(x, y, n_peaks, min_separation, base, reseed=False)
    if theta is None:
        reseeded = True
        theta = _initial_guess(x, y, n_peaks, min_separation, base, reseed=True)
        if theta is None:
            raise FitError(f"could not place {n_peaks} separated initial peaks")
    if baseline:
        theta = np.append(theta, base)
    theta, J, r, cost, it, converged = _levenberg_marquardt(
        x, y, theta, n_peaks, baseline, max_iter, xtol, ftol)

    cov = None
    dof = x.size - theta.size
    if dof > 0:
        try:
            cov = np.linalg.inv(J.T @ J) * (cost / dof)
        except np.linalg.LinAlgError:
            cov = None
    peaks = [Peak(float(theta[3 * k]), float(abs(theta[3 * k + 1])), float(theta[3 * k + 2]))
             for k in range(n_peaks)]
    peaks.sort(key=lambda p: p.center)
    result = FitResult(peaks, float(theta[-1]) if baseline else None, float(math.sqrt(cost)),
                       it, converged, cov, "converged" if converged else "iteration cap reached",
                       reseeded)
    if not converged:
        raise FitError(f"fit did not converge in {max_iter} iterations", best=theta, report=result)
    return result


def normalize_heights(result: FitResult, reference: Optional[float] = None) -> FitResult:
    """Fill ``normalized_height`` = amplitude / reference (default: largest amplitude)."""
    ref = reference if reference is not None else max(abs(p.amplitude) for p in result.peaks)
    if not ref:
        raise ValueError("reference height must be nonzero")
    for p in result.peaks:
        p.normalized_height = p.amplitude / ref
    return result
