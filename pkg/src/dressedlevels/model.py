"""System description, uncoupled basis and Hamiltonian assembly.

Energies are ordinary frequencies in MHz with h = 1. The Hamiltonian in the
rotating frame (no counter-rotating terms) is

    H = [[A_low (I·J)_low + E_low,   W^T              ],
         [W,                         A_up (I·J)_up + E_up + Δ]]

where W holds the dipole couplings (Ω/2 times a Clebsch-Gordan ratio) and Δ is
either given explicitly or chosen so the drive is resonant with one hyperfine
level of the lower manifold. Ω is normalised so the reference transition
couples with exactly Ω/2, i.e. an isolated resonant pair on that transition
splits by Ω.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np

from .angmom import HalfInt, clebsch_gordan, half, idotj_matrix, lande_energy, projections
from .errors import ConfigurationError
from .labeled import LabeledMatrix

__all__ = [
    "ManifoldSpec",
    "SystemSpec",
    "BasisState",
    "LOWER",
    "UPPER",
    "build_basis",
    "coupling_block",
    "build_coupling",
    "build_hamiltonian",
    "detuning",
    "hyperfine_levels",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "default_scenario",
    "SCHEMA_VERSION",
]

LOWER = "lower"
UPPER = "upper"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ManifoldSpec:
    label: str
    J: HalfInt
    I: HalfInt
    hyperfine_A: float = 0.0
    base_energy: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "J", half(self.J))
        object.__setattr__(self, "I", half(self.I))
        if self.J.twice < 0 or self.I.twice < 0:
            raise ConfigurationError(f"{self.label}: J and I must be non-negative")

    @property
    def dim(self) -> int:
        return (self.J.twice + 1) * (self.I.twice + 1)

    def f_values(self) -> list[HalfInt]:
        """Allowed total F, ascending."""
        lo = abs(self.J - self.I)
        return [HalfInt(t) for t in range(lo.twice, (self.J + self.I).twice + 1, 2)]


@dataclass(frozen=True)
class SystemSpec:
    """Two manifolds coupled by a polarised drive.

    ``resonant_F`` and ``delta`` are mutually exclusive: with ``resonant_F``
    set, the drive is tuned onto that hyperfine level of the lower manifold;
    otherwise ``delta`` (MHz) is used as given. ``reference_transition`` is
    the ``(lower m_j, upper m_j)`` pair that defines Ω.
    """

    lower: ManifoldSpec
    upper: ManifoldSpec
    polarization_q: int = 1
    resonant_F: Optional[HalfInt] = None
    delta: float = 0.0
    reference_transition: tuple = (half("3/2"), half("5/2"))
    name: str = ""

    def __post_init__(self):
        if self.polarization_q not in (-1, 0, 1):
            raise ConfigurationError(f"polarization_q must be -1, 0 or +1, got {self.polarization_q}")
        if self.resonant_F is not None:
            F = half(self.resonant_F)
            object.__setattr__(self, "resonant_F", F)
            if F not in self.lower.f_values():
                raise ConfigurationError(
                    f"resonant F={F} is outside |J-I|..J+I for the {self.lower.label} manifold")
        ml, mu = (half(x) for x in self.reference_transition)
        object.__setattr__(self, "reference_transition", (ml, mu))
        if mu - ml != self.polarization_q:
            raise ConfigurationError(
                f"reference transition {ml} -> {mu} violates Δm_j = q = {self.polarization_q}")
        try:
            ref = clebsch_gordan(self.lower.J, ml, 1, self.polarization_q, self.upper.J, mu)
        except ValueError as exc:
            raise ConfigurationError(f"invalid reference transition: {exc}") from None
        if ref == 0.0:
            raise ConfigurationError(f"reference transition {ml} -> {mu} has zero coupling")

    @property
    def reference_cg(self) -> float:
        ml, mu = self.reference_transition
        return clebsch_gordan(self.lower.J, ml, 1, self.polarization_q, self.upper.J, mu)


class BasisState(NamedTuple):
    manifold: str
    m_j: HalfInt
    m_I: HalfInt

    def __str__(self):
        return f"{self.manifold}(m_j={self.m_j}, m_I={self.m_I})"


def _manifold_states(man: ManifoldSpec, tag: str) -> list[BasisState]:
    return [BasisState(tag, mj, mi) for mj in projections(man.J) for mi in projections(man.I)]


def build_basis(spec: SystemSpec) -> list[BasisState]:
    """Lower manifold first; within a manifold m_j descending, then m_I descending."""
    return _manifold_states(spec.lower, LOWER) + _manifold_states(spec.upper, UPPER)


def detuning(spec: SystemSpec) -> float:
    """Effective upper-manifold offset Δ (MHz) applied on top of its base energy."""
    if spec.resonant_F is None:
        return float(spec.delta)
    low = spec.lower
    target = low.base_energy + low.hyperfine_A * lande_energy(spec.resonant_F, low.J, low.I)
    return target - spec.upper.base_energy


def coupling_block(spec: SystemSpec, omega: float) -> np.ndarray:
    """Rectangular ``n_upper x n_lower`` block W of drive couplings (MHz)."""
    if omega < 0:
        raise ValueError(f"omega must be non-negative, got {omega}")
    lows = _manifold_states(spec.lower, LOWER)
    ups = _manifold_states(spec.upper, UPPER)
    up_pos = {(s.m_j, s.m_I): k for k, s in enumerate(ups)}
    q = spec.polarization_q
    scale = 0.5 * omega / spec.reference_cg
    W = np.zeros((len(ups), len(lows)))
    for a, s in enumerate(lows):
        b = up_pos.get((s.m_j + q, s.m_I))
        if b is None:
            continue
        W[b, a] = scale * clebsch_gordan(spec.lower.J, s.m_j, 1, q, spec.upper.J, s.m_j + q)
    return W


def build_coupling(spec: SystemSpec, omega: float) -> LabeledMatrix:
    """Full-size matrix holding only the lower<->upper couplings."""
    basis = build_basis(spec)
    n_low = spec.lower.dim
    W = coupling_block(spec, omega)
    mat = np.zeros((len(basis), len(basis)))
    mat[n_low:, :n_low] = W
    mat[:n_low, n_low:] = W.T
    return LabeledMatrix(basis, mat)


def build_hamiltonian(spec: SystemSpec, omega: float) -> LabeledMatrix:
    basis = build_basis(spec)
    n_low = spec.lower.dim
    mat = build_coupling(spec, omega).entries.copy()
    low, up = spec.lower, spec.upper
    mat[:n_low, :n_low] += low.hyperfine_A * idotj_matrix(low.J, low.I).entries
    mat[:n_low, :n_low] += low.base_energy * np.eye(n_low)
    mat[n_low:, n_low:] += up.hyperfine_A * idotj_matrix(up.J, up.I).entries
    mat[n_low:, n_low:] += (up.base_energy + detuning(spec)) * np.eye(up.dim)
    return LabeledMatrix(basis, mat)


def hyperfine_levels(man: ManifoldSpec, m_F) -> dict:
    """Coupled states ``|F, m_F>`` of a manifold expanded in its uncoupled basis.

    Returns ``{F: vector}`` where each vector is indexed like the manifold's
    part of :func:`build_basis`. Only F with ``|m_F| <= F`` appear.
    """
    m_F = half(m_F)
    states = [(mj, mi) for mj in projections(man.J) for mi in projections(man.I)]
    out = {}
    for F in man.f_values():
        if abs(m_F) > F:
            continue
        vec = np.array([
            clebsch_gordan(man.J, mj, man.I, mi, F, m_F) if mj + mi == m_F else 0.0
            for mj, mi in states])
        out[F] = vec
    return out


# ---------------------------------------------------------------- scenarios

def _manifold_from_dict(d: dict, key: str) -> ManifoldSpec:
    try:
        return ManifoldSpec(
            label=str(d.get("label", key)),
            J=half(d["J"]),
            I=half(d.get("I", 0)),
            hyperfine_A=float(d.get("hyperfine_A_MHz", 0.0)),
            base_energy=float(d.get("base_energy_MHz", 0.0)),
        )
    except KeyError as exc:
        raise ConfigurationError(f"manifold '{key}' is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"manifold '{key}': {exc}") from None


def scenario_from_dict(doc: dict) -> SystemSpec:
    """Build a :class:`SystemSpec` from a parsed scenario document."""
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    for key in ("lower", "upper"):
        if key not in doc:
            raise ConfigurationError(f"scenario is missing '{key}'")
    lower = _manifold_from_dict(doc["lower"], "lower")
    upper = _manifold_from_dict(doc["upper"], "upper")
    det = doc.get("detuning", {"mode": "resonant", "F": str(lower.J + lower.I)})
    mode = det.get("mode")
    try:
        if mode == "resonant":
            resonant_F, delta = half(det["F"]), 0.0
        elif mode == "explicit":
            resonant_F, delta = None, float(det["delta_MHz"])
        else:
            raise ConfigurationError(f"detuning mode must be 'resonant' or 'explicit', got {mode!r}")
        ref = doc.get("reference_transition", {})
        q = doc.get("polarization_q", 1)
        if isinstance(q, bool) or int(q) != q:
            raise ConfigurationError(f"polarization_q must be an integer, got {q!r}")
        ml = half(ref.get("lower_mj", lower.J))
        mu = half(ref.get("upper_mj", ml + int(q)))
    except KeyError as exc:
        raise ConfigurationError(f"detuning is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None
    return SystemSpec(lower=lower, upper=upper, polarization_q=int(q),
                      resonant_F=resonant_F, delta=delta,
                      reference_transition=(ml, mu), name=str(doc.get("name", "")))


def scenario_to_dict(spec: SystemSpec) -> dict:
    def man(m: ManifoldSpec):
        return {"label": m.label, "J": str(m.J), "I": str(m.I),
                "hyperfine_A_MHz": m.hyperfine_A, "base_energy_MHz": m.base_energy}

    if spec.resonant_F is not None:
        det = {"mode": "resonant", "F": str(spec.resonant_F)}
    else:
        det = {"mode": "explicit", "delta_MHz": spec.delta}
    ml, mu = spec.reference_transition
    return {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "lower": man(spec.lower),
        "upper": man(spec.upper),
        "polarization_q": spec.polarization_q,
        "detuning": det,
        "reference_transition": {"lower_mj": str(ml), "upper_mj": str(mu)},
    }


DEFAULT_SCENARIO_FILE = "rb87_6p32_25d52.json"


def read_scenario_document(path: Union[str, Path, None] = None) -> dict:
    """Raw scenario JSON. ``None`` loads the packaged Rb-87 default."""
    try:
        if path is None:
            text = resources.files("dressedlevels.data").joinpath(DEFAULT_SCENARIO_FILE).read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"scenario is not valid JSON: {exc}") from None


def load_scenario(path: Union[str, Path, None] = None) -> SystemSpec:
    return scenario_from_dict(read_scenario_document(path))


def default_scenario() -> SystemSpec:
    return load_scenario(None)


def with_overrides(doc: dict, overrides: dict) -> dict:
    """Copy of ``doc`` with dotted-path keys (``lower.hyperfine_A_MHz``) replaced."""
    out = copy.deepcopy(doc)
    for dotted, value in overrides.items():
        node = out
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"cannot set '{dotted}': '{p}' is not an object")
        node[parts[-1]] = value
    return out
