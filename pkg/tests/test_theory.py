from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from threshold_dynamics import (
    DegenerateScheme,
    GammaMatrix,
    InvalidGamma,
    beta_recursion,
    consistency_residuals,
    exact_gamma4,
    stability_certificate,
)
from threshold_dynamics import _gamma_constants as gc


def _load_regen():
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "scripts" / "regen_gamma_constants.py"
    spec = importlib.util.spec_from_file_location("regen_gamma_constants", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def mp_recursion(rows):
    """Independent extended-precision transcription of the beta recursion."""
    b = [[mp.mpf(0)] for _ in range(5)]
    for row in rows:
        row = [mp.mpf(g.numerator) / g.denominator if isinstance(g, Fraction) else mp.mpf(g) for g in row]
        s = lambda k, p=1: mp.fsum(g * v**p for g, v in zip(row, b[k]))  # noqa: E731
        s1 = s(0)
        new = [
            1 + s1,
            mp.mpf(1) / 2 + s(1) + s(3),
            mp.mpf(2) / 3 + s1**3 / 6 - s1 * s(0, 2) / 4 + s(0, 3) / 12 + s(2) + s(4),
            1 + s(3),
            2 + s(4),
        ]
        for k in range(5):
            b[k].append(new[k])
    return b


class TestGammaMatrix:
    def test_row_sum_violation_names_row(self):
        with pytest.raises(InvalidGamma) as exc:
            GammaMatrix(((1.0,), (0.5, 0.4)))
        assert exc.value.row == 2

    def test_row_length(self):
        with pytest.raises(InvalidGamma):
            GammaMatrix(((1.0,), (1.0,)))

    def test_nonfinite(self):
        with pytest.raises(InvalidGamma):
            GammaMatrix(((float("nan"),),))

    def test_is_value_error(self):
        with pytest.raises(ValueError):
            GammaMatrix(((0.9,),))

    def test_exact_gamma4_entries(self):
        g = exact_gamma4()
        assert g.M == 4
        assert g[2, 0] == -0.25
        assert round(g[4, 3], 2) == 1.96
        assert np.allclose(g.to_array().sum(axis=1), 1.0, atol=1e-12)

    def test_roundtrip_array(self):
        g = exact_gamma4()
        assert np.array_equal(GammaMatrix.from_array(g.to_array()).to_array(), g.to_array())


class TestBetaRecursion:
    def test_mbo_base_case(self):
        beta = beta_recursion(GammaMatrix(((Fraction(1),),)))
        assert [list(x) for x in beta.as_array().T] == [[0, 0, 0, 0, 0], [1, Fraction(1, 2), Fraction(2, 3), 1, 2]]

    def test_mbo_residuals_exact(self):
        r1, r2 = consistency_residuals(beta_recursion(GammaMatrix(((Fraction(1),),))))
        assert (r1, r2) == (0, Fraction(-1, 3))

    def test_two_stage_against_mp_oracle(self):
        rows = ((Fraction(1),), (Fraction(-1, 4), Fraction(5, 4)))
        beta = beta_recursion(GammaMatrix(rows))
        oracle = mp_recursion(rows)
        for k in range(5):
            assert float(beta.as_array()[k, -1]) == pytest.approx(float(oracle[k][-1]), rel=1e-15)
        # frozen from the extended-precision oracle
        assert beta.beta1[-1] == Fraction(9, 4)
        assert beta.beta2[-1] == Fraction(19, 8)
        assert beta.beta3[-1] == Fraction(517, 128)
        r1, r2 = consistency_residuals(beta)
        assert (r1, r2) == (Fraction(-5, 162), Fraction(-131, 648))
        assert r1 != 0 and r2 != 0

    def test_gamma4_matches_high_precision(self):
        regen = _load_regen()
        with mp.workdps(60):
            g40, g42, g43 = regen.exact_fourth_row(60)
            rows = ((1,), (mp.mpf(-1) / 4, mp.mpf(5) / 4), (mp.mpf(5) / 6, mp.mpf(-2) / 3, mp.mpf(5) / 6), (g40, mp.mpf(1) / 2, g42, g43))
            b = mp_recursion(rows)
            r1 = b[1][-1] / b[0][-1] ** 2 - mp.mpf(1) / 2
            r2 = b[2][-1] / b[0][-1] ** 2 - 1
            assert abs(r1) < mp.mpf(10) ** -40 and abs(r2) < mp.mpf(10) ** -40
            for name, value in (("GAMMA_40", g40), ("GAMMA_42", g42), ("GAMMA_43", g43)):
                assert abs(mp.mpf(getattr(gc, name)) - value) < mp.mpf(10) ** -55

    def test_gamma4_residuals_float(self):
        r1, r2 = consistency_residuals(beta_recursion(exact_gamma4()))
        assert abs(r1) <= 1e-10 and abs(r2) <= 1e-10

    @pytest.mark.parametrize("M", range(1, 7))
    def test_repeated_mbo_stages(self, M):
        rows = tuple(tuple([0] * (m - 1) + [1]) for m in range(1, M + 1))
        beta = beta_recursion(GammaMatrix(rows))
        assert list(beta.beta4) == list(range(M + 1))
        assert list(beta.beta5) == [2 * m for m in range(M + 1)]
        assert list(beta.beta1) == list(range(M + 1))

    def test_index_zero_entries(self):
        beta = beta_recursion(exact_gamma4())
        assert np.all(beta.as_array()[:, 0] == 0)

    def test_degenerate(self):
        beta = beta_recursion(GammaMatrix(((1.0,),)))
        zeroed = type(beta)(beta.beta1 * 0, beta.beta2, beta.beta3, beta.beta4, beta.beta5)
        with pytest.raises(DegenerateScheme):
            consistency_residuals(zeroed)

    @given(st.lists(st.floats(-2, 2), min_size=1, max_size=3))
    def test_exact_and_float_agree(self, free):
        # second row (a, 1 - a), third row (b, c, 1 - b - c)
        fr = [Fraction(x).limit_denominator(1000) for x in free]
        rows = [(Fraction(1),)]
        if len(fr) >= 1:
            rows.append((fr[0], 1 - fr[0]))
        if len(fr) >= 3:
            rows.append((fr[1], fr[2], 1 - fr[1] - fr[2]))
        exact = beta_recursion(GammaMatrix(tuple(rows))).as_array()
        approx = beta_recursion(GammaMatrix(tuple(tuple(float(v) for v in r) for r in rows))).as_array()
        assert np.allclose(approx, exact.astype(float), rtol=1e-12, atol=1e-12)


class TestStability:
    def test_single_stage_passes(self):
        cert = stability_certificate(GammaMatrix(((1.0,),)))
        assert cert.passed and cert.diagonal.tolist() == [1.0]

    def test_gamma4_passes(self):
        cert = stability_certificate(exact_gamma4())
        assert cert.passed
        assert np.all(cert.diagonal > 0) and cert.diagonal.size == 4

    def test_hand_recursion_failure(self):
        cert = stability_certificate(GammaMatrix(((1.0,), (2.0, -1.0))))
        assert cert.tilde_gamma[1, :2].tolist() == [2.0, -1.0]
        assert cert.S[1, 1] == 1.0 and cert.S[1, 0] == 2.0
        assert cert.tilde_gamma[0, 0] == -3.0
        assert not cert.passed and "1" in cert.reason

    def test_S_is_prefix_sum(self):
        cert = stability_certificate(exact_gamma4())
        for j in range(4):
            for m in range(1, j + 2):
                assert cert.S[j, m - 1] == pytest.approx(cert.tilde_gamma[j, :m].sum(), abs=1e-15)

    def test_appending_trivial_stage_recomputes(self):
        rows = [tuple(r) for r in exact_gamma4().rows] + [(0.0, 0.0, 0.0, 0.0, 1.0)]
        cert = stability_certificate(GammaMatrix(tuple(rows)))
        assert cert.diagonal.size == 5 and np.all(np.isfinite(cert.diagonal))

    def test_zero_diagonal_reported(self):
        # third row forces S[2,2] = 1 - (a + b)^2 = 0, needed to back-substitute row 1
        cert = stability_certificate(GammaMatrix(((1.0,), (0.5, 0.5), (1.0, 0.0, 0.0))))
        assert not cert.passed and "indeterminate" in cert.reason

    def test_zero_first_diagonal_fails(self):
        cert = stability_certificate(GammaMatrix(((1.0,), (1.0, 0.0))))
        assert not cert.passed and cert.diagonal[0] == 0
