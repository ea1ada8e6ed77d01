import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from threshold_dynamics import DerivativeBundle, SchemeSpec, beta_recursion, exact_gamma4, make_scheme
from threshold_dynamics.schemes import (
    StageDef,
    Term,
    predict_mbo_displacement,
    predict_mcf_displacement,
    predict_twokernel_displacement,
)

bundles = st.builds(DerivativeBundle, *[st.floats(-1, 1)] * 6)


class TestSpecs:
    def test_mbo(self):
        s = make_scheme("mbo")
        assert s.n_stages == 1 and len(s.stages[0].terms) == 1
        assert s.stages[0].terms[0].width == 1.0 and s.stages[0].level == 0.5
        assert s.is_binary

    def test_twokernel(self):
        s = make_scheme("twokernel")
        first, second = s.stages
        assert first.terms == (Term(0, 1.0, 0.5),) and first.level == 0.5
        assert second.terms == (Term(1, math.sqrt(2), 0.5), Term(0, -1.0, 1.0))
        assert second.level == pytest.approx((math.sqrt(2) - 1) / 2, abs=0)

    def test_ruuth_not_binary(self):
        s = make_scheme("ruuth")
        assert not s.is_binary and s.output == ((2, 2.0), (3, -1.0)) and s.report == 2

    def test_mstage4(self):
        s = make_scheme("mstage4")
        b1 = float(beta_recursion(exact_gamma4()).beta1[-1])
        assert s.n_stages == 4
        assert s.widths() == (pytest.approx(1 / b1, rel=1e-15),)
        assert s.energy_width == s.widths()[0]
        for stage in s.stages:
            assert stage.level == 0.5
            assert sum(t.coefficient for t in stage.terms) == pytest.approx(1.0, abs=1e-12)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_scheme("rk4")

    def test_mstage_needs_gamma(self):
        with pytest.raises(ValueError):
            make_scheme("mstage")

    def test_forward_reference_rejected(self):
        with pytest.raises(ValueError):
            SchemeSpec("bad", (StageDef((Term(1, 1.0, 1.0),)),))

    def test_nonpositive_width(self):
        with pytest.raises(ValueError):
            Term(0, 1.0, 0.0)


class TestPredictors:
    def test_zero(self):
        d = DerivativeBundle()
        for p in (predict_mcf_displacement, predict_mbo_displacement, predict_twokernel_displacement):
            assert p(d, 0.1) == 0.0

    def test_curve(self):
        d = DerivativeBundle(f_xx=1.0)
        t = 0.01
        assert predict_mcf_displacement(d, t) == pytest.approx(t - t * t, abs=1e-18)
        assert predict_mbo_displacement(d, t) == pytest.approx(t - 2 / 3 * t * t, abs=1e-18)
        assert predict_mbo_displacement(d, t) - predict_mcf_displacement(d, t) == pytest.approx(t * t / 3, abs=1e-18)

    def test_surface(self):
        d = DerivativeBundle(f_xx=1.0, f_yy=1.0)
        t = 0.02
        assert predict_mcf_displacement(d, t) == pytest.approx(2 * t - 2 * t * t, abs=1e-17)

    @given(bundles, st.floats(0, 0.1))
    def test_twokernel_is_mcf(self, d, t):
        assert predict_twokernel_displacement(d, t) == predict_mcf_displacement(d, t)

    def test_negative_t(self):
        with pytest.raises(ValueError):
            predict_mcf_displacement(DerivativeBundle(), -1.0)

    def test_nonfinite_bundle(self):
        with pytest.raises(ValueError):
            DerivativeBundle(f_xx=np.inf)

    def test_mcf_second_order_matches_pde(self):
        # independent check: integrate the surface PDE from a polynomial graph
        from threshold_dynamics import GraphInterface, evolve_pde

        d = DerivativeBundle(0.3, -0.5, 0.2, 0.4, -0.6, 0.1)

        def f(x, y):
            return (
                0.5 * d.f_xx * x**2 + d.f_xy * x * y + 0.5 * d.f_yy * y**2
                + d.f_xxxx * x**4 / 24 + d.f_xxyy * x**2 * y**2 / 4 + d.f_yyyy * y**4 / 24
            )

        n = 201
        g = GraphInterface.from_function(f, ((-0.5, 0.5), (-0.5, 0.5)), (n, n), "even")
        c = n // 2
        t = 2e-3
        u = evolve_pde(g, t, extrapolate=True)
        measured = u.heights[c, c]
        assert measured == pytest.approx(predict_mcf_displacement(d, t), abs=5e-8)
