import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dressedlevels.angmom import half
from dressedlevels.blocks import (bandwidth, decompose, display_order, mtilde, rcm_order,
                                  structural_pattern)
from dressedlevels.errors import SymmetryViolationError
from dressedlevels.labeled import LabeledMatrix
from dressedlevels.model import (LOWER, UPPER, BasisState, build_hamiltonian, read_scenario_document,
                                 scenario_from_dict, with_overrides)

from oracles import components_by_closure


def spec_with(**over):
    return scenario_from_dict(with_overrides(read_scenario_document(), over))


class TestMtilde:
    def test_examples(self):
        assert mtilde(BasisState(LOWER, half("3/2"), half("3/2")), 1) == 3
        assert mtilde(BasisState(UPPER, half("5/2"), half("3/2")), 1) == 3
        assert mtilde(BasisState(UPPER, half("-5/2"), half("1/2")), 1) == -3
        assert mtilde(BasisState(UPPER, half("-5/2"), half("1/2")), -1) == -1
        assert mtilde(BasisState(LOWER, half("-1/2"), half("-3/2")), 0) == -2


class TestCensus:
    def test_default_sigma_plus(self, spec):
        d = decompose(build_hamiltonian(spec, 200.0), 1)
        assert [float(b.mtilde) for b in d.blocks] == [3, 2, 1, 0, -1, -2, -3]
        assert [b.size for b in d.blocks] == [2, 4, 6, 8, 6, 4, 2]
        assert len(d.dark_singletons) == 8
        H = build_hamiltonian(spec, 200.0)
        for s in d.dark_singletons:
            st_ = H.labels[s]
            assert st_.manifold == UPPER and st_.m_j in (half("-3/2"), half("-5/2"))

    def test_mirror_sigma_minus(self):
        s = spec_with(polarization_q=-1, **{"reference_transition.lower_mj": "-3/2",
                                            "reference_transition.upper_mj": "-5/2"})
        d = decompose(build_hamiltonian(s, 200.0), -1)
        assert [float(b.mtilde) for b in d.blocks] == [3, 2, 1, 0, -1, -2, -3]
        assert [b.size for b in d.blocks] == [2, 4, 6, 8, 6, 4, 2]
        assert len(d.dark_singletons) == 8

    def test_blocks_match_closure_oracle(self, spec):
        H = build_hamiltonian(spec, 123.0)
        d = decompose(H, 1)
        comps = components_by_closure(structural_pattern(H))
        ours = sorted([tuple(b.indices) for b in d.blocks] + [(s,) for s in d.dark_singletons])
        assert ours == comps

    def test_zero_omega_all_singletons(self, spec):
        d = decompose(build_hamiltonian(spec, 0.0), 1)
        # only the hyperfine term couples, and only inside the lower manifold
        labels = build_hamiltonian(spec, 0.0).labels
        assert all(labels[i].manifold == LOWER for b in d.blocks for i in b.indices)
        assert [b.size for b in d.blocks] == [2, 3, 4, 3, 2]
        assert len(d.dark_singletons) == 24 + 2

    def test_no_hyperfine_gives_pairs(self, spec_A0):
        d = decompose(build_hamiltonian(spec_A0, 200.0), 1)
        assert all(b.size == 2 for b in d.blocks)
        assert len(d.blocks) == 16
        assert len(d.dark_singletons) == 8

    def test_symmetry_violation(self, spec):
        H = build_hamiltonian(spec, 50.0)
        M = H.entries.copy()
        M[0, 17] = M[17, 0] = 1.0  # couple m~=3 to m~=2
        with pytest.raises(SymmetryViolationError):
            decompose(LabeledMatrix(H.labels, M), 1)

    @given(st.floats(1.0, 1000.0), st.floats(0.5, 60.0))
    @settings(max_examples=100, deadline=None)
    def test_block_union_spectrum(self, omega, A):
        s = spec_with(**{"lower.hyperfine_A_MHz": A})
        H = build_hamiltonian(s, omega)
        d = decompose(H, 1)
        parts = [np.linalg.eigvalsh(H.entries[np.ix_(b.indices, b.indices)]) for b in d.blocks]
        parts.append(np.diag(H.entries)[list(d.dark_singletons)])
        union = np.sort(np.concatenate(parts))
        assert union == pytest.approx(np.linalg.eigvalsh(H.entries), abs=1e-9)

    @given(st.floats(1.0, 1000.0), st.floats(1.1, 5.0))
    @settings(max_examples=25, deadline=None)
    def test_structure_independent_of_omega(self, omega, factor):
        from dressedlevels.model import default_scenario
        s = default_scenario()
        a = decompose(build_hamiltonian(s, omega), 1)
        b = decompose(build_hamiltonian(s, omega * factor), 1)
        assert a.blocks == b.blocks and a.dark_singletons == b.dark_singletons

    def test_dark_singletons_are_eigenvectors(self, spec):
        for om in (0.0, 100.0, 800.0):
            H = build_hamiltonian(spec, om).entries
            d = decompose(build_hamiltonian(spec, 200.0), 1)
            for s in d.dark_singletons:
                e = np.zeros(len(H))
                e[s] = 1.0
                assert H @ e == pytest.approx(H[s, s] * e, abs=1e-12)


class TestRCM:
    def test_diagonal_is_identity(self):
        assert rcm_order(np.eye(5)) == [0, 1, 2, 3, 4]

    def test_tridiagonal_keeps_bandwidth_one(self):
        T = np.eye(7) + np.eye(7, k=1) + np.eye(7, k=-1)
        assert bandwidth(T, rcm_order(T)) == 1

    def test_default_pattern_reduced(self, spec):
        H = build_hamiltonian(spec, 200.0)
        perm = rcm_order(H)
        assert sorted(perm) == list(range(40))
        assert bandwidth(H) == 16
        assert bandwidth(H, perm) <= 3

    def test_display_order(self, spec):
        H = build_hamiltonian(spec, 200.0)
        d = decompose(H, 1)
        order = display_order(H, d)
        assert sorted(order) == list(range(40))
        assert order[-8:] == list(d.dark_singletons)
        assert set(order[:2]) == set(d.blocks[0].indices)

    @given(st.integers(2, 30), st.floats(0.02, 0.4), st.integers(0, 2**31 - 1))
    @settings(max_examples=80, deadline=None)
    def test_never_widens_and_is_permutation(self, n, density, seed):
        r = np.random.default_rng(seed)
        M = (r.random((n, n)) < density).astype(float)
        M = np.triu(M, 1)
        M = M + M.T + np.eye(n)
        perm = rcm_order(M)
        assert sorted(perm) == list(range(n))
        assert bandwidth(M, perm) <= bandwidth(M)

    def test_against_scipy_on_banded_shuffle(self):
        sp = pytest.importorskip("scipy.sparse")
        csgraph = pytest.importorskip("scipy.sparse.csgraph")
        r = np.random.default_rng(3)
        n = 30
        band = sum(np.eye(n, k=k) for k in range(-2, 3))
        p = r.permutation(n)
        M = band[np.ix_(p, p)]
        ours = bandwidth(M, rcm_order(M))
        theirs = bandwidth(M, csgraph.reverse_cuthill_mckee(sp.csr_matrix(M), symmetric_mode=True))
        assert ours <= max(theirs, 4)
        assert ours < bandwidth(M)
