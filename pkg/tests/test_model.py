import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharp_interface.errors import BalanceError, DominationError, PositivityError, RootCountError
from sharp_interface.model import (
    REFERENCE_WTILDE, ModelFunctions, ScalarFunction, build_quasilinear_from_wtilde, gauss_integrate,
    half_flux_model, load_model, model_from_dict, reference_model, validate_model,
)

coeffs = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=6)


def tilted(shift):
    m = reference_model()
    return ModelFunctions(m.P, m.B, m.D + shift, m.sigma, name="tilted")


@given(coeffs, st.floats(0.05, 0.95))
@settings(max_examples=50, deadline=None)
def test_polynomial_derivative_matches_central_difference(c, x):
    f = ScalarFunction.polynomial(c)
    h = 1e-5
    fd = (f(x + h) - f(x - h)) / (2 * h)
    assert f(x, 1) == pytest.approx(fd, abs=1e-6 * (1 + sum(abs(v) for v in c)))


@given(coeffs, coeffs, st.floats(0.0, 1.0))
@settings(max_examples=50, deadline=None)
def test_rational_arithmetic_matches_pointwise(a, b, x):
    f, g = ScalarFunction.polynomial(a), ScalarFunction.polynomial(b) + 5.0
    if abs(g(x)) < 1e-3:
        return
    assert (f + g)(x) == pytest.approx(f(x) + g(x), abs=1e-9)
    assert (f * g)(x) == pytest.approx(f(x) * g(x), abs=1e-9)
    assert (f / g)(x) == pytest.approx(f(x) / g(x), rel=1e-9, abs=1e-12)


def test_quotient_rule_on_rational():
    f = ScalarFunction.polynomial([1.0, 2.0]) / ScalarFunction.polynomial([3.0, 0.0, 1.0])
    x = 0.37
    expected = (2 * (3 + x**2) - (1 + 2 * x) * 2 * x) / (3 + x**2) ** 2
    assert f(x, 1) == pytest.approx(expected, rel=1e-13)


def test_scalar_function_dict_roundtrip():
    f = ScalarFunction((1.0, -2.0), (1.0, 0.5), kind="rational-of-polynomials")
    g = ScalarFunction.from_dict(json.loads(json.dumps(f.to_dict())))
    assert g(0.3) == pytest.approx(f(0.3), rel=1e-15)


def test_reference_roots_and_rates(ref_model):
    assert ref_model.roots == pytest.approx((0.25, 0.5, 0.75), abs=1e-12)
    assert ref_model.gamma("minus") == pytest.approx(0.5, rel=1e-12)
    assert ref_model.gamma("plus") == pytest.approx(0.5, rel=1e-12)
    assert abs(ref_model.balance) < 1e-14


def test_reference_potential_closed_form(ref_model):
    r = np.linspace(0.26, 0.74, 11)
    assert ref_model.W(r) == pytest.approx(0.5 * (r - 0.25) ** 2 * (0.75 - r) ** 2, abs=1e-14)
    assert ref_model.wtilde(r) == pytest.approx(0.5 * (r - 0.25) ** 2 * (0.75 - r) ** 2, abs=1e-14)


def test_wtilde_near_wells_keeps_relative_precision(ref_model):
    s = np.array([1e-9, 1e-7, 1e-5])
    exact = 0.5 * s**2 * (0.5 - s) ** 2
    assert ref_model.wtilde_split(s, 0.5 - s) == pytest.approx(exact, rel=1e-10)
    assert ref_model.wtilde_split(0.5 - s, s) == pytest.approx(exact, rel=1e-10)


def test_builtin_models_validate(ref_model):
    for m in (ref_model, half_flux_model()):
        rep = validate_model(m)
        assert rep.accepted
        assert rep.check("A4").passed


def test_quasilinear_model_is_balanced_by_construction():
    m = build_quasilinear_from_wtilde([0.0, 1.0, 1.0], REFERENCE_WTILDE, 1.0)
    rep = validate_model(m)
    assert rep.accepted and abs(rep.balance) < 1e-12
    assert m.gamma_max_v == pytest.approx(0.2, rel=1e-12)


def test_large_tilt_breaks_root_count():
    with pytest.raises(RootCountError):
        validate_model(tilted(0.05))


def test_small_tilt_breaks_balance():
    with pytest.raises(BalanceError):
        validate_model(tilted(0.005))
    rep = validate_model(tilted(0.005), raise_on_failure=False)
    assert not rep.accepted and rep.first_error is BalanceError


def test_nonpositive_rates_rejected():
    m = reference_model()
    bad = ModelFunctions(m.P, m.B - 1.0, m.D, m.sigma)
    with pytest.raises(PositivityError):
        validate_model(bad)


def test_weak_rate_sum_cannot_dominate():
    with pytest.raises(DominationError):
        build_quasilinear_from_wtilde([0.0, 1.0], REFERENCE_WTILDE, 0.01)


@given(st.floats(0.26, 0.74))
@settings(max_examples=30, deadline=None)
def test_p_inverse_roundtrip(r):
    m = half_flux_model()
    assert m.P_inverse(m.P(r)) == pytest.approx(r, abs=1e-12)


@given(st.floats(0.3, 0.7))
@settings(max_examples=30, deadline=None)
def test_wtilde_is_integral_of_tilted_force(r):
    m = build_quasilinear_from_wtilde([0.0, 1.0, 1.0], REFERENCE_WTILDE, 1.0)
    direct = gauss_integrate(lambda s: m.dW(s) * m.P(s, 1), m.rho_minus, r)
    assert m.wtilde(r) == pytest.approx(direct, abs=1e-13)


def test_model_document_forms(tmp_path, ref_model):
    doc = {"P": {"kind": "polynomial-coefficients", "coefficients": [0.0, 1.0]},
           "Wtilde": {"kind": "polynomial-coefficients", "coefficients": list(REFERENCE_WTILDE)},
           "S_sum": {"kind": "polynomial-coefficients", "coefficients": [1.0]}}
    m = model_from_dict(doc)
    assert m.roots == pytest.approx(ref_model.roots, abs=1e-12)
    path = tmp_path / "m.json"
    path.write_text(json.dumps(ref_model.to_dict()))
    back = load_model(path)
    x = np.linspace(0, 1, 7)
    for k in ("P", "B", "D", "sigma"):
        assert getattr(back, k)(x) == pytest.approx(getattr(ref_model, k)(x), abs=1e-15)
