from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qonsager.errors import InvalidParameters
from qonsager.onsager import ModelParams
from qonsager.qseries import (Lambda, check_constraints, crossing_residual, eval_fn, g_const, kappa,
                              qpoch, qpoch_info, r_matrix, rho_norm, tau, theta)

Q = -0.4


def test_qpoch_trivial_cases():
    assert qpoch(0, 0.3) == 1
    assert qpoch(0.37, 0) == pytest.approx(1 - 0.37, abs=1e-16)
    with pytest.raises(InvalidParameters):
        qpoch(0.1, 1.2)


def test_qpoch_self_convergence():
    assert abs(qpoch(0.25, 1 / 16, terms=30) - qpoch(0.25, 1 / 16, terms=60)) < 1e-15
    assert qpoch_info(0.25, 1 / 16).error < 1e-17


@given(st.floats(-0.9, 0.9), st.floats(-0.6, 0.6))
@settings(max_examples=50, deadline=None)
def test_qpoch_matches_direct_product(z, p):
    direct = math.prod(1 - z * p ** n for n in range(200))
    assert qpoch(z, p) == pytest.approx(direct, rel=1e-13, abs=1e-15)


@given(st.floats(0.3, 3.0), st.floats(0.05, 0.5))
@settings(max_examples=50, deadline=None)
def test_theta_triple_product(z, p):
    series = sum((-1) ** n * p ** (n * (n - 1) / 2) * z ** n for n in range(-60, 61))
    assert theta(z, p) == pytest.approx(series, rel=1e-11, abs=1e-13)


def test_values_at_one():
    assert tau(1, Q) == pytest.approx(1, abs=1e-15)
    assert kappa(1, Q) == pytest.approx(1, abs=1e-15)
    assert Lambda(1, 0.3, Q) == pytest.approx(1, abs=1e-15)


def test_g_constant():
    direct = math.prod(1 - Q ** (4 * n + 2) for n in range(100)) / math.prod(
        1 - Q ** (4 * n + 4) for n in range(100))
    assert g_const(Q) == pytest.approx(direct, rel=1e-15)


def test_rho_at_one():
    assert rho_norm(1, 0.1, -1, Q) == pytest.approx(0.1 - 1, abs=1e-14)


def test_rho_product_constraint():
    ep, em, z = 0.1, -1.0, 0.8
    lhs = rho_norm(z, ep, em, Q) * rho_norm(1 / z, ep, em, Q)
    rhs = (ep + em) ** 2 + (z - 1 / z) ** 2 * ep * em
    assert abs(lhs - rhs) < 1e-10


@pytest.mark.parametrize("ep", [Fraction(1, 10), Fraction(100)])
def test_constraints(ep):
    p = ModelParams(q=Fraction(-2, 5), ep=ep, em=Fraction(-1))
    m = check_constraints(p, [0.7, 0.8, 0.9])["max"]
    assert max(m["constr_ratio"], m["constr_product"], m["constr_one"]) < 1e-10
    assert max(m["unitarity"], m["crossing"]) < 1e-12


def test_unitarity_and_crossing():
    for z in (0.6, 0.8, 1.3):
        assert np.abs(r_matrix(z, Q) @ r_matrix(1 / z, Q) - np.eye(4)).max() < 1e-12
        assert crossing_residual(z, Q) < 1e-12


def test_yang_baxter():
    I = np.eye(2)
    P = np.eye(4)[[0, 2, 1, 3]]
    P23 = np.kron(I, P)
    r12 = lambda z: np.kron(r_matrix(z, Q), I)
    r23 = lambda z: np.kron(I, r_matrix(z, Q))
    r13 = lambda z: P23 @ r12(z) @ P23
    a, b, c = 0.7, 1.3, 0.45
    lhs = r12(a / b) @ r13(a / c) @ r23(b / c)
    rhs = r23(b / c) @ r13(a / c) @ r12(a / b)
    assert np.abs(lhs - rhs).max() < 1e-13


def test_eval_fn_error_proxy():
    ev = eval_fn("tau", zeta=0.8, q=Q)
    assert ev.error < 1e-14 and ev.value == pytest.approx(tau(0.8, Q))
    with pytest.raises(InvalidParameters):
        eval_fn("nope")
