import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isogauge import hermite
from isogauge.errors import (DegenerateActivation, InvalidInput, NotSquareIntegrable)
from isogauge.hermite import (activation, beta0, beta0_closed_form, dual, expand,
                              reduced_dual)


def relu_dual(rho):
    return (math.sqrt(1 - rho * rho) + (math.pi - math.acos(rho)) * rho) / (2 * math.pi)


# ------------------------------------------------------------ polynomials / rule

def test_hermite_eval_values():
    assert hermite.hermite_eval(0, 3.7) == 1.0
    assert hermite.hermite_eval(2, 0.0) == pytest.approx(-1 / math.sqrt(2), abs=1e-15)
    x = np.linspace(-3, 3, 7)
    assert np.allclose(hermite.hermite_eval(3, x), (x ** 3 - 3 * x) / math.sqrt(6), atol=1e-14)


def test_gauss_hermite_matches_numpy():
    for order in (10, 64, 128, 190):
        z, w = hermite.gauss_hermite(order)
        zr, wr = np.polynomial.hermite_e.hermegauss(order)
        assert np.max(np.abs(z - zr)) < 1e-12
        assert np.max(np.abs(w - wr / math.sqrt(2 * math.pi))) < 1e-14


def test_gauss_hermite_order_limits():
    with pytest.raises(InvalidInput):
        hermite.gauss_hermite(0)
    with pytest.raises(InvalidInput):
        hermite.gauss_hermite(hermite.MAX_QUAD_ORDER + 1)


def test_orthonormality_to_1e10():
    z, w = hermite.gauss_hermite(190)
    H = hermite.hermite_table(20, z)
    assert np.max(np.abs((H * w) @ H.T - np.eye(21))) <= 1e-10


def test_panel_rule_moments():
    z, w = hermite.gaussian_panel_rule((0.0,))
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert w @ z ** 2 == pytest.approx(1.0, abs=1e-13)
    assert w @ np.maximum(z, 0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-14)


# ------------------------------------------------------------------ activations

def test_activation_parsing():
    assert activation("leaky_relu:0.1").param == 0.1
    assert activation("he3").kind == "hermite_basis"
    assert activation("tanh", 2.0).name == "tanh"
    with pytest.raises(InvalidInput):
        activation("nope")
    with pytest.raises(InvalidInput):
        activation("relu", 0.0)


def test_gain_applied_inside():
    act = activation("sin", 2.0)
    assert act(0.3) == pytest.approx(math.sin(0.6))


def test_step_is_zero_at_origin():
    assert activation("step")(0.0) == 0.0


# ------------------------------------------------------------------ expansions

def test_identity_expansion():
    c = expand(activation("identity")).coeffs
    assert c[1] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(np.delete(c, 1))) <= 1e-12


def test_he2_expansion():
    c = expand(activation("he2")).coeffs
    assert c[2] == pytest.approx(math.sqrt(2), abs=1e-12)
    assert np.max(np.abs(np.delete(c, 2))) <= 1e-12


def test_relu_low_coefficients():
    c = expand(activation("relu")).coeffs
    assert c[0] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)
    assert c[1] == pytest.approx(0.5, abs=1e-12)
    # E relu(x) he_2(x) = 1/(2 sqrt(pi))
    assert c[2] == pytest.approx(1 / (2 * math.sqrt(math.pi)), abs=1e-12)


def test_expand_preconditions():
    with pytest.raises(InvalidInput):
        expand(activation("relu"), K=0)
    with pytest.raises(InvalidInput):
        expand(activation("sin"), K=40, quad_order=60)


def test_expand_not_square_integrable():
    act = hermite.ActivationSpec("custom", fn=lambda x: np.exp(x ** 2))
    with pytest.raises(NotSquareIntegrable):
        expand(act)


def test_coefficients_are_read_only():
    with pytest.raises(ValueError):
        expand(activation("tanh")).coeffs[0] = 1.0


@pytest.mark.parametrize("name", ["identity", "he2", "sin", "exp", "step", "relu", "tanh",
                                  "sigmoid", "selu", "leaky_relu:0.2"])
def test_parseval(name):
    e = expand(activation(name))
    assert e.total_power + e.tail_mass == pytest.approx(e.second_moment, rel=1e-6)
    assert e.tail_mass >= 0


def test_tail_fraction_reported():
    assert expand(activation("sin")).converged
    assert expand(activation("tanh")).tail_fraction < 1e-7
    relu = expand(activation("relu"))
    assert 1e-4 < relu.tail_fraction < 1e-3 and not relu.converged


# ------------------------------------------------------------------------ beta0

def test_beta0_examples():
    assert beta0(expand(activation("identity"))) == pytest.approx(1.0, abs=1e-12)
    assert beta0(expand(activation("he2"))) == pytest.approx(2.0, abs=1e-12)
    assert beta0(expand(activation("relu"))) == pytest.approx(
        (3 * math.pi - 4) / (2 * math.pi - 2), abs=1e-12)
    assert beta0(expand(activation("relu"))) == pytest.approx(1.26653, abs=1e-5)


def test_beta0_constant_activation():
    const = hermite.ActivationSpec("custom", fn=lambda x: np.ones_like(x))
    with pytest.raises(DegenerateActivation):
        beta0(expand(const))


def test_closed_form_table():
    cf = lambda n, g=1.0: beta0_closed_form(activation(n, g))
    assert cf("step") == pytest.approx(1.36338, abs=1e-5)
    assert cf("sin") == pytest.approx(1.14908, abs=1e-5)
    assert cf("exp") == pytest.approx(1.41802, abs=1e-5)
    assert cf("sin") == pytest.approx(2 - 2 * math.e / (math.e ** 2 - 1), abs=1e-15)
    assert cf("exp") == pytest.approx(2 - 1 / (math.e - 1), abs=1e-15)
    assert cf("relu", 3.0) == cf("relu")
    assert cf("tanh") is None


def test_closed_form_gain_formulas_match_written_forms():
    for a in (0.25, 0.5, 1.0, 2.0):
        e = math.exp(a * a)
        sin_written = 2 * (-1 + e * e - e * a * a) / (-1 + e * e)
        exp_written = (2 - 2 * e + a * a) / (1 - e)
        assert beta0_closed_form(activation("sin", a)) == pytest.approx(sin_written, rel=1e-12)
        assert beta0_closed_form(activation("exp", a)) == pytest.approx(exp_written, rel=1e-12)


@pytest.mark.parametrize("name", ["identity", "he2", "sin", "exp", "step", "relu"])
@pytest.mark.parametrize("gain", [0.5, 1.0, 2.0])
def test_quadrature_matches_closed_form(name, gain):
    act = activation(name, gain)
    assert abs(beta0(expand(act)) - beta0_closed_form(act)) <= 1e-6


def test_sin_small_gain_tends_to_linear():
    assert beta0(expand(activation("sin", 0.05))) == pytest.approx(1.0, abs=1e-5)


# ------------------------------------------------------------------------- duals

def test_dual_examples():
    ident = expand(activation("identity"))
    assert dual(ident, 0.3) == pytest.approx(0.3, abs=1e-14)
    relu = expand(activation("relu"))
    assert dual(relu, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert dual(relu, 0.0) == pytest.approx(relu.coeffs[0] ** 2, abs=1e-15)
    assert reduced_dual(relu, 1.0) == pytest.approx(0.5 - 1 / (2 * math.pi), abs=1e-12)
    he2 = expand(activation("he2"))
    assert reduced_dual(he2, 0.7) == pytest.approx(2 * 0.49, abs=1e-12)


def test_dual_rejects_out_of_range():
    with pytest.raises(InvalidInput):
        dual(expand(activation("relu")), 1.2)


def test_relu_dual_against_arc_cosine_kernel():
    e = expand(activation("relu"))
    for rho in np.linspace(-0.99, 0.99, 23):
        tol = e.tail_mass * abs(rho) ** (e.K + 1) + 1e-12
        assert abs(dual(e, rho) - relu_dual(rho)) <= tol


@pytest.mark.parametrize("name", ["relu", "tanh", "exp", "step", "sin"])
def test_reduced_dual_monotone_convex(name):
    e = expand(activation(name))
    rho = np.linspace(0, 1, 201)
    v = reduced_dual(e, rho)
    assert v[0] == 0.0
    assert np.all(np.diff(v) >= -1e-15)
    assert np.all(np.diff(v, 2) >= -1e-12)


# ----------------------------------------------------------------- contraction

def test_contraction_identity_is_equality():
    rep = hermite.contraction_check(expand(activation("identity")), [0.1, 0.5, 0.9])
    assert rep.passed
    assert np.allclose(rep.lhs, rep.rhs, rtol=1e-12)


def test_contraction_he2_hand_value():
    rep = hermite.contraction_check(expand(activation("he2")), [0.5])
    assert rep.lhs[0] == pytest.approx(1 / 3) and rep.rhs[0] == pytest.approx(0.5)
    assert rep.passed


def test_contraction_relu_grid():
    assert hermite.contraction_check(expand(activation("relu")),
                                     np.linspace(0.01, 0.99, 99)).passed


def test_contraction_grid_domain():
    with pytest.raises(InvalidInput):
        hermite.contraction_check(expand(activation("relu")), [0.0, 0.5])


# ----------------------------------------------------------------------- Mehler

def test_mehler_examples():
    assert hermite.mehler_check(0, 0, 0.42)[0] == pytest.approx(1.0, abs=1e-12)
    assert hermite.mehler_check(1, 1, 0.3)[0] == pytest.approx(0.3, abs=1e-12)
    assert abs(hermite.mehler_check(2, 3, 0.7)[0]) <= 1e-8


def test_mehler_preconditions():
    with pytest.raises(InvalidInput):
        hermite.mehler_check(21, 0, 0.1)
    with pytest.raises(InvalidInput):
        hermite.mehler_check(1, 1, 0.1, quad_order=50)


@pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.3, 0.9])
def test_mehler_grid(rho):
    for j in range(9):
        for k in range(9):
            measured, expected = hermite.mehler_check(j, k, rho)
            assert abs(measured - expected) <= 1e-8


# ------------------------------------------------------------------ properties

NAMES = ["sin", "exp", "tanh", "sigmoid", "relu", "step", "selu", "leaky_relu:0.3", "he3"]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(NAMES), st.sampled_from([0.25, 0.5, 1.0, 1.5, 2.0]))
def test_beta0_in_unit_interval(name, gain):
    b = beta0(expand(activation(name, gain)))
    assert 1.0 - 1e-12 <= b <= 2.0 + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(NAMES), st.floats(0.001, 0.999))
def test_contraction_property(name, rho):
    assert hermite.contraction_check(expand(activation(name)), [rho]).passed


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 8), st.integers(0, 8), st.floats(-0.95, 0.95))
def test_mehler_property(j, k, rho):
    measured, expected = hermite.mehler_check(j, k, rho)
    assert abs(measured - expected) <= 1e-8
