"""Tests for energy expansions, brackets, the spinful formula, and fits."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pwavelab import expansion as ex
from pwavelab.errors import (
    InsufficientSamples,
    MissingEffectiveRange,
    UnsupportedDim,
)


# ---------------------------------------------------------------------------
# term breakdowns
# ---------------------------------------------------------------------------

def test_free_gas_totals():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MissingEffectiveRange)
        assert ex.energy_expansion(3, 0.0, 1.0).total == 0.6
    assert ex.energy_expansion(2, 0.0, 1.0).total == 0.5
    assert ex.energy_expansion(1, 0.0, 1.0).total == pytest.approx(1.0 / 3.0)


def test_one_dimensional_point():
    b = ex.energy_expansion(1, 0.1, 1.0)
    assert b.term("p-wave") == pytest.approx(0.0212207, abs=1e-7)
    assert b.total == pytest.approx(0.3545540, abs=1e-7)
    assert b.labels() == ("kinetic", "p-wave")


def test_second_order_coefficient_value():
    assert ex.SECOND_ORDER_COEF == pytest.approx(1.8030e-2, rel=2e-4)


def test_three_dimensional_terms_with_range():
    a, k_f, r_eff = 0.1, 1.0, 0.07
    b = ex.energy_expansion(3, a, k_f, N=100, R_eff=r_eff)
    assert b.labels() == ("kinetic", "p-wave", "effective-range",
                          "second-order")
    assert b.term("p-wave") == pytest.approx(
        2.0 / (5.0 * math.pi) * (a * k_f) ** 3)
    assert b.term("effective-range") == pytest.approx(
        -(a ** 6) * k_f ** 5 / (35.0 * math.pi * r_eff))
    assert b.term("effective-range") < 0.0
    assert b.term("second-order") == pytest.approx(
        ex.SECOND_ORDER_COEF * (a * k_f) ** 6)
    assert b.total == pytest.approx(sum(v for _, v in b.terms))
    assert b.flags == ()


def test_missing_range_flagged_and_warned():
    with pytest.warns(MissingEffectiveRange):
        b = ex.energy_expansion(3, 0.1, 1.0)
    assert "effective-range" not in b.labels()
    assert len(b.flags) == 1
    assert b.R_eff is None


def test_pwave_term_positive_in_all_dims():
    for dim in (1, 2, 3):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MissingEffectiveRange)
            b = ex.energy_expansion(dim, 0.05, 2.0)
        assert b.term("p-wave") > 0.0


def test_homogeneity_under_length_rescaling():
    s = 3.7
    base = ex.energy_expansion(3, 0.08, 1.4, R_eff=0.05)
    scaled = ex.energy_expansion(3, s * 0.08, 1.4 / s, R_eff=s * 0.05)
    for (_, v0), (_, v1) in zip(base.terms, scaled.terms):
        assert v1 == pytest.approx(v0, rel=1e-12)


def test_unsupported_dimension():
    with pytest.raises(UnsupportedDim):
        ex.energy_expansion(4, 0.1, 1.0)
    with pytest.raises(UnsupportedDim):
        ex.energy_expansion(0, 0.1, 1.0)


def test_negative_inputs_rejected():
    with pytest.raises(ValueError):
        ex.energy_expansion(2, -0.1, 1.0)
    with pytest.raises(ValueError):
        ex.energy_expansion(2, 0.1, 0.0)


def test_breakdown_invariants_enforced():
    with pytest.raises(ValueError):
        ex.EnergyBreakdown(dim=3, a=0.1, k_F=1.0, N=None, R_eff=None,
                           C_err=None, terms=(("bogus", 1.0),), total=1.0)
    with pytest.raises(ValueError):
        ex.EnergyBreakdown(dim=3, a=0.1, k_F=1.0, N=None, R_eff=None,
                           C_err=None, terms=(("kinetic", 0.6),), total=0.7)


# ---------------------------------------------------------------------------
# bracket intervals
# ---------------------------------------------------------------------------

def test_bracket_collapses_without_constants():
    for dim in (2, 3):
        lower, upper = ex.bound_bracket(dim, 0.05, 2.0, 1000,
                                        C_low=0.0, C_up=0.0, C_fs=0.0)
        x = 0.05 * 2.0
        leading = 4.0 * (ex.FREE_GAS_TERM[dim]
                         + ex.PWAVE_COEF[dim] * x ** ex.PWAVE_POWER[dim])
        assert lower == pytest.approx(leading, rel=1e-14)
        assert upper == pytest.approx(leading, rel=1e-14)


def test_three_dim_envelope_point():
    # x^{3.3} |log x| at x = 0.05
    err_low, err_up = ex.error_envelopes(3, 0.05, 1.0)
    assert err_low == pytest.approx(
        0.05 ** 3.3 * abs(math.log(0.05)), rel=1e-14)
    assert err_low == pytest.approx(1.524e-4, rel=1e-3)
    assert err_up == pytest.approx(0.05 ** 4 * abs(math.log(0.05)),
                                   rel=1e-14)
    lower, upper = ex.bound_bracket(3, 0.05, 1.0, 10 ** 6,
                                    C_low=1.0, C_up=0.0, C_fs=0.0)
    leading = 0.6 + 2.0 / (5.0 * math.pi) * 0.05 ** 3
    assert upper == pytest.approx(leading, rel=1e-14)
    assert lower == pytest.approx(leading - err_low, rel=1e-12)


def test_envelope_vanishes_at_zero_coupling():
    assert ex.error_envelopes(3, 0.0, 1.0) == (0.0, 0.0)
    lower, upper = ex.bound_bracket(3, 0.0, 1.0, 10 ** 9)
    assert lower == pytest.approx(0.6, abs=2e-3)  # only the N term is left
    assert upper > lower


def test_two_dim_envelope_symmetric():
    err_low, err_up = ex.error_envelopes(2, 0.1, 1.0)
    assert err_low == err_up
    assert err_low == pytest.approx(0.1 ** 2.25 * abs(math.log(0.1)),
                                    rel=1e-14)


def test_bracket_contains_leading_terms():
    for dim in (2, 3):
        for x in (1e-3, 1e-2, 0.1):
            b = ex.energy_expansion(dim, x, 1.0) if dim == 2 else None
            lower, upper = ex.bound_bracket(dim, x, 1.0, 10 ** 5)
            leading = (ex.FREE_GAS_TERM[dim]
                       + ex.PWAVE_COEF[dim] * x ** ex.PWAVE_POWER[dim])
            assert lower <= leading <= upper
            if b is not None:
                assert lower <= b.total <= upper


@settings(max_examples=50, deadline=None)
@given(x=st.floats(min_value=1e-4, max_value=1.0),
       c_low=st.floats(min_value=0.0, max_value=10.0),
       c_up=st.floats(min_value=0.0, max_value=10.0),
       c_fs=st.floats(min_value=0.0, max_value=10.0),
       dim=st.sampled_from([2, 3]))
def test_bracket_ordering_property(x, c_low, c_up, c_fs, dim):
    lower, upper = ex.bound_bracket(dim, x, 1.0, 64,
                                    C_low=c_low, C_up=c_up, C_fs=c_fs)
    assert lower <= upper


def test_no_bracket_in_one_dimension():
    with pytest.raises(UnsupportedDim):
        ex.bound_bracket(1, 0.05, 1.0, 100)
    with pytest.raises(UnsupportedDim):
        ex.error_envelopes(1, 0.05, 1.0)


# ---------------------------------------------------------------------------
# spinful comparison formula
# ---------------------------------------------------------------------------

def test_single_component_is_free():
    inp = ex.SpinfulInput(counts=(33,), a_s=0.2, L=10.0)
    free = 0.6 * 33 * (6.0 * math.pi ** 2 * 33 / 1000.0) ** (2.0 / 3.0)
    assert ex.spinful_energy(inp) == pytest.approx(free, rel=1e-14)


def test_zero_swave_is_free_sum():
    inp = ex.SpinfulInput(counts=(10, 20), a_s=0.0, L=5.0)
    free = sum(0.6 * n * (6.0 * math.pi ** 2 * n / 125.0) ** (2.0 / 3.0)
               for n in (10, 20))
    assert ex.spinful_energy(inp) == pytest.approx(free, rel=1e-14)


def test_balanced_two_component_cross_term():
    n, a_s, box = 40, 0.3, 7.0
    inp = ex.SpinfulInput(counts=(n // 2, n // 2), a_s=a_s, L=box)
    free = 2.0 * 0.6 * (n / 2) \
        * (6.0 * math.pi ** 2 * (n / 2) / box ** 3) ** (2.0 / 3.0)
    cross = 2.0 * math.pi * a_s * n ** 2 / box ** 3
    assert ex.spinful_energy(inp) == pytest.approx(free + cross, rel=1e-14)


def test_spinful_input_validation():
    with pytest.raises(ValueError):
        ex.SpinfulInput(counts=(-1, 2), a_s=0.1, L=1.0)
    with pytest.raises(ValueError):
        ex.SpinfulInput(counts=(1, 2), a_s=-0.1, L=1.0)
    with pytest.raises(ValueError):
        ex.SpinfulInput(counts=(1, 2), a_s=0.1, L=0.0)
    with pytest.raises(UnsupportedDim):
        ex.spinful_energy(ex.SpinfulInput(counts=(3,), a_s=0.1, L=1.0,
                                          dim=2))


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------

def test_pure_power_fit():
    x = np.array([0.3, 0.1, 0.03, 0.01, 0.003])
    table = ex.scaling_table({"cubic": list(zip(x, x ** 3))})
    fit = table["cubic"]
    assert fit.exponent == pytest.approx(3.0, abs=1e-9)
    assert not fit.log_flag


def test_log_corrected_fit_preferred():
    x = np.array([0.3, 0.1, 0.03, 0.01, 0.003])
    y = x ** 2 * np.abs(np.log(x))
    fit = ex.scaling_table({"q": list(zip(x, y))})["q"]
    assert fit.log_flag
    assert fit.exponent == pytest.approx(2.0, abs=1e-9)
    assert fit.residual_power_log < fit.residual_power


def test_system_size_fit_with_negative_exponent():
    n = np.array([10.0, 100.0, 1000.0, 10000.0])
    fit = ex.scaling_table({"fs": list(zip(n, n ** (-1.0 / 3.0)))})["fs"]
    assert fit.exponent == pytest.approx(-1.0 / 3.0, abs=1e-9)


def test_fit_input_guards():
    with pytest.raises(InsufficientSamples):
        ex.scaling_table({"short": [(0.1, 1.0), (0.2, 2.0), (0.3, 3.0)]})
    with pytest.raises(InsufficientSamples):
        ex.scaling_table({"flat": [(0.1, 1.0)] * 5})
    with pytest.raises(ValueError):
        ex.scaling_table({"zero": [(0.1, 0.0), (0.2, 1.0),
                                   (0.3, 1.0), (0.4, 1.0)]})
    with pytest.raises(ValueError):
        ex.scaling_table({"neg": [(-0.1, 1.0), (0.2, 1.0),
                                  (0.3, 1.0), (0.4, 1.0)]})


def test_multiple_quantities_reported():
    x = np.array([0.2, 0.1, 0.05, 0.02, 0.01])
    table = ex.scaling_table({
        "lin": list(zip(x, 7.0 * x)),
        "quad": list(zip(x, 0.1 * x ** 2)),
    })
    assert list(table) == ["lin", "quad"]
    assert table["lin"].exponent == pytest.approx(1.0, abs=1e-9)
    assert table["quad"].exponent == pytest.approx(2.0, abs=1e-9)
