from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qonsager.errors import (BackendMismatch, ExactOnly, OutsideAnnulus, SiteOutOfRange,
                             VariableMismatch)
from qonsager.numerics import (EXACT, NUMERIC, LaurentPoly, Scalar, SparseMatrix, TruncatedSeries,
                               comm, laurent_arith, nullspace_exact, parse_rational, q_sigma_z,
                               series_eval, sigma_plus, sigma_z, solve_exact, tensor_embed,
                               u_variable)

fracs = st.fractions(min_value=-20, max_value=20, max_denominator=30)
polys = st.dictionaries(st.integers(-4, 4), fracs, max_size=5).map(lambda d: LaurentPoly("zeta", d))


def zeta(e, c=1):
    return LaurentPoly.monomial("zeta", e, F(c))


def test_difference_of_squares():
    a = zeta(1) + zeta(-1)
    b = zeta(1) - zeta(-1)
    assert laurent_arith(a, b, "mul") == zeta(2) - zeta(-2)


def test_zero_absorbs():
    p = zeta(3, 5) + zeta(-2, F(1, 3))
    assert (p * LaurentPoly("zeta")).is_zero()


def test_u_variable_at_half():
    u = u_variable(F(1, 2))
    assert u.coeffs == {2: F(1, 5), -2: F(4, 5)}


def test_mixed_variables_and_backends_raise():
    with pytest.raises(VariableMismatch):
        zeta(1) + LaurentPoly.monomial("w", 1, F(1))
    with pytest.raises(BackendMismatch):
        zeta(1) + LaurentPoly.monomial("zeta", 1, 1.0, NUMERIC)


def test_no_stored_zeros():
    p = zeta(1) - zeta(1)
    assert p.coeffs == {}


@given(polys, polys, polys)
@settings(max_examples=40, deadline=None)
def test_ring_axioms(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a + b == b + a


@given(polys, polys, fracs.filter(lambda x: x != 0))
@settings(max_examples=40, deadline=None)
def test_evaluation_is_a_ring_map(a, b, x):
    assert (a * b).evaluate(x) == a.evaluate(x) * b.evaluate(x)
    assert (a + b).evaluate(x) == a.evaluate(x) + b.evaluate(x)


def test_exact_scalars_do_not_round():
    a, b = Scalar.exact(F(7, 13)), Scalar.exact(F(13, 7))
    assert (a * b).equals(Scalar.exact(1))
    with pytest.raises(ValueError):
        Scalar.numeric(1.0).equals(Scalar.numeric(1.0))
    assert Scalar.numeric(1.0).equals(Scalar.numeric(1.0 + 1e-14), tol=1e-12)


def test_parse_rational():
    assert parse_rational("3/7") == F(3, 7)
    assert parse_rational("-0.25") == F(-1, 4)


def test_geometric_series():
    s = TruncatedSeries("z", {n: 1.0 for n in range(21)}, 0, 20, (0, 1))
    val, err = series_eval(s, 0.5)
    assert abs(val - (2 - 2 ** -20)) < 1e-15
    assert err == 0.5 ** 20


def test_empty_series_and_annulus():
    s = TruncatedSeries("z", {}, 0, 10, (0, 1))
    assert series_eval(s, 0.3) == (0, 0.0)
    with pytest.raises(OutsideAnnulus):
        series_eval(s, 2.0)


def test_q_geometric_series():
    q = -0.5
    s = TruncatedSeries("z", {n: q ** (2 * n) for n in range(30)}, 0, 29, (0, 1.9))
    val, _ = series_eval(s, 1.0)
    assert abs(val - 4 / 3) < 1e-15


def test_series_window_product_matches_convolution():
    rng = np.random.default_rng(3)
    a = rng.normal(size=6)
    b = rng.normal(size=6)
    sa = TruncatedSeries("z", dict(enumerate(a)), 0, 5)
    sb = TruncatedSeries("z", dict(enumerate(b)), 0, 5)
    prod = sa * sb
    assert prod.hi == 5
    full = np.convolve(a, b)
    for e in range(6):
        assert abs(prod.coeff(e) - full[e]) < 1e-13
    with pytest.raises(KeyError):
        prod.coeff(6)


def test_nullspace_examples():
    assert nullspace_exact([[F(1), F(0)], [F(0), F(1)]]) == []
    assert nullspace_exact([[F(1), F(-1)]]) == [[F(1), F(1)]]
    with pytest.raises(ExactOnly):
        nullspace_exact([[1.0, 2.0]])


@given(st.lists(st.lists(fracs, min_size=4, max_size=4), min_size=1, max_size=3))
@settings(max_examples=40, deadline=None)
def test_nullspace_vectors_annihilate(rows):
    basis = nullspace_exact(rows)
    for v in basis:
        assert all(sum(r[j] * v[j] for j in range(4)) == 0 for r in rows)
    rank = np.linalg.matrix_rank(np.array(rows, dtype=float))
    assert len(basis) == 4 - rank


def test_solve_exact():
    x, res = solve_exact([[F(1), F(0)], [F(1), F(1)]], [F(3), F(2)])
    assert x == [F(1), F(2)] and not any(res)


def test_tensor_embed_ordering():
    z = sigma_z()
    a = tensor_embed(z, 1, 2).to_dense()
    assert [a[i][i] for i in range(4)] == [1, -1, 1, -1]
    b = tensor_embed(z, 2, 2).to_dense()
    assert [b[i][i] for i in range(4)] == [1, 1, -1, -1]
    with pytest.raises(SiteOutOfRange):
        tensor_embed(z, 3, 2)


def test_dressed_raising_operator():
    q = F(1, 3)
    op = tensor_embed(q_sigma_z(q), 3, 3) @ tensor_embed(q_sigma_z(q), 2, 3) @ tensor_embed(sigma_plus(), 1, 3)
    assert op.nnz == 4
    dense = np.array(op.to_dense(), dtype=object)
    kron = np.kron(np.kron(np.diag([q, 1 / q]), np.diag([q, 1 / q])), np.array([[0, 1], [0, 0]]))
    assert (dense == kron).all()


def test_disjoint_embeddings_commute():
    a = tensor_embed(sigma_plus(), 1, 3)
    b = tensor_embed(sigma_z(), 3, 3)
    assert comm(a, b).is_zero()
