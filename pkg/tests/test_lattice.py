from fractions import Fraction as F

import pytest

from qonsager.lattice import (boundary_symmetry_residual, build_transfer, extract_hamiltonian,
                              fit_onsager_decomposition, k_duality_residual, symmetry_locality_scan,
                              transfer_commutes)
from qonsager.numerics import SparseMatrix
from qonsager.onsager import build_family, build_hierarchy, random_params

REGIMES = {"generic": "A_q", "left_diagonal": "A_q", "right_diagonal": "A_q_diag",
           "diagonal": "A_q_diag"}


@pytest.mark.parametrize("regime", list(REGIMES))
def test_transfer_commutes(regime):
    p = random_params(1, regime)
    for N in (1, 2, 3):
        ok, bad = transfer_commutes(build_transfer(p, N))
        assert ok, bad


def test_transfer_commutes_at_points(generic):
    t = build_transfer(generic, 1)
    a, b = t.evaluate(F(3, 7)), t.evaluate(F(-5, 2))
    assert (a @ b - b @ a).is_zero()


def test_t1_is_scalar(generic):
    t1 = build_transfer(generic, 2).evaluate(1)
    c = t1.entry(0, 0)
    assert c != 0 and (t1 - SparseMatrix.identity(4) * c).is_zero()


def test_diagonal_boundary_conserves_spin():
    t = build_transfer(random_params(2, "diagonal"), 2)
    for m in t.trace.coeffs.values():
        for i, row in m.rows.items():
            for j in row:
                assert bin(i).count("1") == bin(j).count("1")


@pytest.mark.parametrize("regime", list(REGIMES))
def test_hamiltonian_extraction(regime):
    p = random_params(3, regime)
    for N in (1, 2, 3):
        _, rep = extract_hamiltonian(build_transfer(p, N))
        assert rep["matches_direct"] and rep["identity_match"]


def test_no_boundary_fields_when_balanced():
    p = random_params(1, "diagonal")
    p = p.with_(em=p.ep, ebm=p.ebp)
    H, _ = extract_hamiltonian(build_transfer(p, 2))
    p2 = p.with_(ep=p.ep * 3, em=p.ep * 3, ebp=p.ebp * 5, ebm=p.ebp * 5)
    H2, _ = extract_hamiltonian(build_transfer(p2, 2))
    assert (H - H2).is_zero()


@pytest.mark.parametrize("regime", list(REGIMES))
def test_onsager_fit_exact(regime):
    p = random_params(2, regime)
    for N in (1, 2):
        t = build_transfer(p, N)
        fit = fit_onsager_decomposition(t, build_hierarchy(build_family(p, N, kind=REGIMES[regime]), p))
        assert fit["exact"] and all(fit["u_symmetric"])
        assert len(fit["F"]) == N + 1


def test_onsager_fit_negative_control(generic):
    t = build_transfer(generic, 2)
    junk = [SparseMatrix(4, {0: {1: F(1)}}), SparseMatrix(4, {2: {3: F(2)}})]
    fit = fit_onsager_decomposition(t, junk)
    assert not fit["exact"] and fit["offending_powers"]


def test_k_duality(generic):
    assert k_duality_residual(generic).is_zero()


def test_generic_symmetry_is_local(generic):
    scan = symmetry_locality_scan(generic, (2, 3, 4))
    assert scan["pass"]
    rep = boundary_symmetry_residual(generic, 3)
    assert rep["generators"]["W0"]["D_nonzero"]
    assert rep["boundary_commutator_matches_display"] and rep["bulk_cancels_boundary"]


def test_diagonal_k_modes_are_local(diagonal):
    rep = boundary_symmetry_residual(diagonal, 3, "diagonal")
    for name in ("K0", "K1"):
        assert rep["generators"][name]["factorizes"]
