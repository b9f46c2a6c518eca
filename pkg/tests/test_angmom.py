import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dressedlevels.angmom import (HalfInt, clebsch_gordan, half, idotj_matrix,
                                  ladder_element, lande_energy, projections)
from dressedlevels.errors import PreconditionError

from oracles import cg_oracle, coupled_states, lande

# ladder-oracle values, frozen
CG_3H_1H_1_1_5H_3H = 0.7745966692414833
CG_1H_1H_1H_m1H_0_0 = 0.7071067811865477


class TestHalfInt:
    def test_storage_is_doubled(self):
        assert HalfInt(3).twice == 3
        assert half("3/2") == HalfInt(3)
        assert half(1.5) == HalfInt(3)
        assert half(Fraction(-5, 2)).twice == -5
        assert half(2) == 2

    def test_rejects_non_half_integers(self):
        with pytest.raises(ValueError):
            half(0.3)
        with pytest.raises(ValueError):
            half("1/3")
        with pytest.raises(TypeError):
            HalfInt(1.5)

    def test_str(self):
        assert str(half("-3/2")) == "-3/2"
        assert str(half(3)) == "3"

    @given(st.integers(-40, 40), st.integers(-40, 40))
    def test_arithmetic_is_exact(self, a, b):
        x, y = HalfInt(a), HalfInt(b)
        assert (x + y).twice == a + b
        assert (x - y).twice == a - b
        assert (-x).twice == -a
        assert (x < y) == (a < b)
        assert float(x + y) == (a + b) / 2

    def test_immutable_and_hashable(self):
        x = half("1/2")
        with pytest.raises(AttributeError):
            x.twice = 5
        assert {x: 1}[HalfInt(1)] == 1

    def test_projections(self):
        assert [str(m) for m in projections("3/2")] == ["3/2", "1/2", "-1/2", "-3/2"]
        assert projections(0) == [HalfInt(0)]


class TestClebschGordan:
    def test_stretched(self):
        assert clebsch_gordan("3/2", "3/2", 1, 1, "5/2", "5/2") == 1.0

    def test_projection_mismatch(self):
        assert clebsch_gordan("3/2", "3/2", 1, -1, "5/2", "5/2") == 0.0

    def test_sqrt_point_six(self):
        assert clebsch_gordan("3/2", "1/2", 1, 1, "5/2", "3/2") == pytest.approx(
            CG_3H_1H_1_1_5H_3H, abs=1e-14)
        assert CG_3H_1H_1_1_5H_3H == pytest.approx(np.sqrt(0.6), abs=1e-14)

    def test_singlet(self):
        assert clebsch_gordan("1/2", "1/2", "1/2", "-1/2", 0, 0) == pytest.approx(
            CG_1H_1H_1H_m1H_0_0, abs=1e-14)

    def test_triangle_violation_is_zero(self):
        assert clebsch_gordan(1, 0, 1, 0, 3, 0) == 0.0
        assert clebsch_gordan("3/2", "1/2", 1, 0, "1/2", "1/2") != 0.0

    def test_parity_mismatch_raises(self):
        with pytest.raises(PreconditionError):
            clebsch_gordan("3/2", 1, 1, 0, "5/2", 1)
        with pytest.raises(PreconditionError):
            clebsch_gordan(1, 2, 1, 0, 2, 2)

    @pytest.mark.parametrize("j1,j2", [(0.5, 0.5), (1.5, 1), (1.5, 1.5), (2.5, 1.5), (2, 1)])
    def test_matches_ladder_oracle(self, j1, j2):
        prod, states = coupled_states(j1, j2)
        for (J, M), vec in states.items():
            for k, (m1, m2) in enumerate(prod):
                got = clebsch_gordan(half(j1), half(m1), half(j2), half(m2), half(J), half(M))
                assert got == pytest.approx(vec[k], abs=1e-12)

    @pytest.mark.parametrize("j1t,j2t", [(a, b) for a in range(0, 7) for b in range(0, 7)])
    def test_symmetry_exhaustive(self, j1t, j2t):
        # <j1 m1; j2 m2|J M> = (-1)^(j1+j2-J) <j2 m2; j1 m1|J M>, all j <= 3
        j1, j2 = HalfInt(j1t), HalfInt(j2t)
        for Jt in range(abs(j1t - j2t), j1t + j2t + 1, 2):
            J = HalfInt(Jt)
            sign = -1 if ((j1t + j2t - Jt) // 2) % 2 else 1
            for m1 in projections(j1):
                for m2 in projections(j2):
                    M = m1 + m2
                    if abs(M) > J:
                        continue
                    a = clebsch_gordan(j1, m1, j2, m2, J, M)
                    b = clebsch_gordan(j2, m2, j1, m1, J, M)
                    assert a == pytest.approx(sign * b, abs=1e-13)

    @pytest.mark.parametrize("j1t,j2t", [(1, 1), (3, 2), (3, 3), (5, 3), (4, 2), (6, 5)])
    def test_orthonormality(self, j1t, j2t):
        j1, j2 = HalfInt(j1t), HalfInt(j2t)
        Js = [HalfInt(t) for t in range(abs(j1t - j2t), j1t + j2t + 1, 2)]
        for m1 in projections(j1):
            for m2 in projections(j2):
                tot = sum(clebsch_gordan(j1, m1, j2, m2, J, m1 + m2) ** 2
                          for J in Js if abs(m1 + m2) <= J)
                assert tot == pytest.approx(1.0, abs=1e-12)
        for J in Js:
            for M in projections(J):
                tot = sum(clebsch_gordan(j1, m1, j2, M - m1, J, M) ** 2
                          for m1 in projections(j1) if abs(M - m1) <= j2)
                assert tot == pytest.approx(1.0, abs=1e-12)


class TestLadder:
    def test_examples(self):
        assert ladder_element("1/2", "-1/2", "raise") == 1.0
        assert ladder_element("1/2", "1/2", "raise") == 0.0
        assert ladder_element("1/2", "-1/2", "lower") == 0.0
        # sqrt((j+m)(j-m+1)) = sqrt(3 * 3); confirmed by the algebra oracle below
        assert ladder_element("5/2", "1/2", "lower") == pytest.approx(3.0, abs=1e-14)

    @pytest.mark.parametrize("jt", range(1, 8))
    def test_operator_algebra(self, jt):
        # [J+, J-] = 2 Jz and J+J- + Jz^2 - Jz = j(j+1) fix the ladder uniquely
        j = HalfInt(jt)
        ms = projections(j)
        n = len(ms)
        L = np.zeros((n, n))
        for a, m in enumerate(ms[:-1]):
            L[a + 1, a] = ladder_element(j, m, "lower")
            assert ladder_element(j, ms[a + 1], "raise") == pytest.approx(L[a + 1, a], abs=1e-14)
        Jz = np.diag([float(m) for m in ms])
        Jp = L.T
        assert Jp @ L - L @ Jp == pytest.approx(2 * Jz, abs=1e-12)
        jj = jt / 2
        assert Jp @ L + Jz @ Jz - Jz == pytest.approx(jj * (jj + 1) * np.eye(n), abs=1e-12)

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            ladder_element(1, 0, "up")


class TestIdotJ:
    def _spectrum(self, J, I):
        return np.linalg.eigvalsh(idotj_matrix(J, I).entries)

    def test_singlet_triplet(self):
        w = self._spectrum("1/2", "1/2")
        assert w == pytest.approx([-0.75, 0.25, 0.25, 0.25], abs=1e-13)

    def test_rb_6p(self):
        w = self._spectrum("3/2", "3/2")
        expected = sorted([-15 / 4] + [-11 / 4] * 3 + [-3 / 4] * 5 + [9 / 4] * 7)
        assert w == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("Jt,It", [(a, b) for a in range(0, 6) for b in range(0, 6)])
    def test_lande_spectrum_and_trace(self, Jt, It):
        J, I = HalfInt(Jt), HalfInt(It)
        M = idotj_matrix(J, I)
        assert M.dim == (Jt + 1) * (It + 1)
        assert np.trace(M.entries) == pytest.approx(0.0, abs=1e-12)
        expected = []
        for Ft in range(abs(Jt - It), Jt + It + 1, 2):
            expected += [lande(Ft / 2, Jt / 2, It / 2)] * (Ft + 1)
        assert np.linalg.eigvalsh(M.entries) == pytest.approx(sorted(expected), abs=1e-12)
        assert lande_energy(HalfInt(Jt + It), J, I) == pytest.approx(lande((Jt + It) / 2, Jt / 2, It / 2))

    def test_conserves_total_projection(self):
        M = idotj_matrix("5/2", "3/2")
        for a, (mj, mi) in enumerate(M.labels):
            for b, (mj2, mi2) in enumerate(M.labels):
                if mj + mi != mj2 + mi2:
                    assert M.entries[a, b] == 0.0

    def test_symmetric(self):
        M = idotj_matrix("3/2", "3/2").entries
        assert np.max(np.abs(M - M.T)) == 0.0
