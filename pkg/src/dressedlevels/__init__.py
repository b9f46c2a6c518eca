"""Dressed-state structure of two hyperfine manifolds under a strong drive."""

from .angmom import HalfInt, clebsch_gordan, half, idotj_matrix, ladder_element
from .blocks import BlockDecomposition, decompose, mtilde, rcm_order
from .errors import (ConfigurationError, ConvergenceError, FitError, PreconditionError,
                     SymmetryViolationError)
from .labeled import LabeledMatrix
from .model import (BasisState, ManifoldSpec, SystemSpec, build_basis, build_coupling,
                    build_hamiltonian, default_scenario, load_scenario)
from .spectral import (EigenBranchSet, classify, eigh_symmetric, morris_shore_reference,
                       sweep, two_level_extrapolation, two_level_reference)
from .spectro import (OmegaDistribution, ProbeSpec, Spectrum, TrapGeometry, fit_peaks,
                      signal_weight, synthesize_spectrum, trap_omega_distribution)

__version__ = "0.1.0"
