from fractions import Fraction as Fr

import numpy as np
import pytest

from qonsager import fock
from qonsager.errors import InvalidParameters, OutsideAnnulus
from qonsager.fock import _item_coeffs, vertex_term
from qonsager.onsager import ModelParams

Q = -0.4
P0 = ModelParams(q=Fr(-2, 5), ep=Fr(1, 10), em=Fr(-1))
P1 = ModelParams(q=Fr(-2, 5), ep=Fr(100), em=Fr(-1))


def test_basis_count():
    mod = fock.build_fock(0, fock.Cutoffs(2, 2, 1), Q)
    assert len(mod.basis) == 12
    assert {b.charge for b in mod.basis} == {-1, 0, 1}
    assert {len([b for b in mod.basis if b.charge == 0])} == {4}


def test_heisenberg_commutator_on_vacuum():
    mod = fock.build_fock(0, fock.Cutoffs(2, 2, 1), Q)
    s = mod.space
    vac = s.vacuum(0)
    c = (mod.heisenberg(1) @ mod.heisenberg(-1) - mod.heisenberg(-1) @ mod.heisenberg(1)) @ vac
    assert np.allclose(c, (Q + 1 / Q) * vac, atol=1e-15)
    with pytest.raises(InvalidParameters):
        mod.heisenberg(0)


def test_d_eigenvalue():
    mod = fock.build_fock(1, fock.Cutoffs(2, 2, 1), Q)
    assert fock.FockBasisState(1, 0, ()).d_eigenvalue == 1
    vac = mod.space.vacuum(1)
    assert np.allclose(mod.d_operator() @ vac, vac)
    assert np.allclose(mod.z_d(0.5) @ vac, 0.5 * vac)
    assert np.allclose(mod.shift(-1) @ vac, mod.space.vacuum(0))


def test_annulus_guard(space4):
    with pytest.raises(OutsideAnnulus):
        fock.build_vertex("Phi-", 1.2, space4, fock.ANNULUS)
    with pytest.raises(OutsideAnnulus):
        fock.build_excited(fock.build_vacua("B+", Q, space4), [(1, 0.8)])


def test_zero_mode_factor_on_vacuum(space6):
    phi = fock.build_vertex("Phi-", 0.7, space6)
    assert phi.block(1, 0)[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_charge_and_sector_steps(space6):
    steps = {"Phi-": 1, "Phi+": -1, "Psi*-": -1, "Psi*+": 1}
    for kind, dm in steps.items():
        op = fock.build_vertex(kind, 0.7, space6)
        assert op.blocks and all(mo - mi == dm for mo, mi in op.blocks)


def _quadrature(const, shift, roots, powers, radius, n=4000):
    w = radius * np.exp(2j * np.pi * np.arange(n) / n)
    base = const * np.prod([(w - r) ** e for r, e, _ in roots], axis=0)
    return np.array([np.mean(w ** (p + shift + 1) * base) for p in powers])


@pytest.mark.parametrize("roots", [
    [(0.1, -1, True), (0.5, -1, False)],
    [(0.1 + 0.05j, -2, True), (0.6, -1, False), (0.3, 1, False)],
    [(0.2, -3, True), (0.7, -2, False)],
])
def test_contour_moments_against_quadrature(roots):
    powers = np.arange(-6, 7)
    got = fock.contour_moments(1.3, 2, roots, powers)
    ref = _quadrature(1.3, 2, roots, powers, radius=0.4)
    assert np.abs(got - ref).max() < 1e-12 * max(1.0, np.abs(ref).max())


def _laurent_oracle(kind, zeta, space):
    """Residue by dense convolution: the w-dependent exponentials are split
    by degree and the rational weight is expanded as a Laurent series in
    the annulus between its two poles."""
    q = space.q
    t = vertex_term(kind, zeta, q)
    (c,) = t.contours
    (a, _, _), (b, _, _) = sorted(c.roots, key=lambda r: abs(r[0]))
    D = space.cut.D

    def exps(side, fixed):
        m = np.eye(space.P)
        for it in t.items:
            if it.side == side and (it.var is None) == fixed:
                e = _item_coeffs(space, it)
                m = m @ (space.exp_creation(e) if side == "cre" else space.exp_annihilation(e))
        return m

    C0, A0 = exps("cre", True), exps("ann", True)
    Cw, Aw = exps("cre", False), exps("ann", False)
    C = [space.graded(Cw, d) for d in range(D + 1)]
    A = [space.graded(Aw, -e) for e in range(D + 1)]

    def weight(n):
        # coefficient of w^n in 1/((w - a)(w - b)) for |a| < |w| < |b|
        return sum(-a ** k / b ** (n + k + 2) for k in range(200) if n + k + 1 >= 0)

    blocks = {}
    for m in space.m_values:
        scal, pw, cur = t.coef, 0, m
        for z in t.zero:
            val, wp = z.value(q, cur)
            scal *= val
            pw += wp if z.var is not None else 0
            cur += z.dm
        if cur not in space.block:
            continue
        blk = sum(C0 @ C[d] @ A[e] @ A0 * weight(-1 - c.shift - pw - d + e)
                  for d in range(D + 1) for e in range(D + 1))
        blocks[(cur, m)] = scal * c.const * blk
    return fock.FockOperator(space, blocks)


def test_contour_vertex_against_convolution(space6):
    # Phi+ has its poles on either side of an annulus; the Psi*+ contour
    # separates them the other way, so it has no Laurent expansion of this kind
    op = fock.build_vertex("Phi+", 0.7, space6)
    ref = _laurent_oracle("Phi+", 0.7, space6)
    assert set(op.blocks) == set(ref.blocks)
    assert fock.relative_residual(op, ref, np.ones(space6.dim, bool)) < 1e-12


def test_chevalley_level_one(chev8, space8):
    assert chev8.convention == "right"
    mask = space8.faithful_mask()
    assert fock.relative_residual(chev8.k0 @ chev8.k1, Q * fock.identity(space8), mask) < 1e-15
    comm = chev8.e1 @ chev8.f1 - chev8.f1 @ chev8.e1
    assert fock.relative_residual(comm, (chev8.k1 - chev8.k1inv) * (1 / (Q - 1 / Q)), mask) < 1e-10
    for m in (-2, 1, 3):
        v = space8.vacuum(m)
        assert np.allclose(chev8.k1 @ v, Q ** m * v)
    assert max(chev8.report["tried"]["right"].values()) < 1e-8


def test_x_minus_annihilates_b_plus(space8):
    power, norm, _ = fock.x_minus_check(space8)
    assert power == -1 and norm <= 1e-8


def test_condk_formula():
    p = ModelParams(q=Fr(-2, 5), ep=Fr(3), em=Fr(2), kp=Fr(1))
    k = fock.nondiag_parameters(p)
    assert k["k''+"] == pytest.approx(1 / ((Q - 1 / Q) * 2))
    assert k["k'+"] == pytest.approx(-1 / ((Q - 1 / Q) * 3))
    assert k["k''-"] == 0.0


def test_nondiag_reduces_to_diag(space6):
    nd = fock.build_vacua("nondiag+0", P0, space6)
    d0 = fock.build_vacua("diag0", P0, space6)
    assert np.array_equal(nd.coeffs, d0.coeffs)


def test_r_to_zero_gives_b_plus(space6):
    p = P0.with_(ep=Fr(0))
    assert np.array_equal(fock.build_vacua("diag0", p, space6).coeffs,
                          fock.build_vacua("B+", Q, space6).coeffs)


def test_vacuum_guards(space6):
    with pytest.raises(InvalidParameters):
        fock.build_vacua("nondiag+0", P0.with_(km=Fr(1)), space6)
    with pytest.raises(InvalidParameters):
        fock.build_vacua("nope", P0, space6)


@pytest.mark.parametrize("relation", fock.ZF_RELATIONS)
def test_zf_relations(relation, space8):
    mask = space8.faithful_mask(4)
    assert fock.check_zf_relations(relation, 0.72, 0.9, space8, mask) <= 1e-6


def test_phipsi_at_equal_arguments(space6):
    assert fock.check_zf_relations("phipsi", 0.8, 0.8, space6) < 1e-12


def test_reflection_example():
    space = fock.FockSpace(Q, fock.Cutoffs(10, 10, 2))
    p = ModelParams(q=Fr(-2, 5), ep=Fr(3, 10), em=Fr(-1))
    assert fock.check_reflection("eqdiag1", p, space, [0.75])["max_residual"] <= 1e-6


def test_b_plus_reflection(space8):
    assert fock.check_reflection("eq1", Q, space8, [0.8])["max_residual"] <= 1e-5


def test_lambda_eigenvalue(space8):
    assert fock.lambda_check(Q, space8, [0.8])["max_residual"] <= 1e-6


def test_diagonal_eigenvalue_one(space8):
    rep = fock.eigencheck_transfer(0, P0, space8, [0.8])
    row = rep["rows"][0]
    assert row["expected"] == 1.0 and abs(row["measured"] - 1) < 1e-6
    assert rep["pass"]


def test_lambda_at_one():
    from qonsager.qseries import Lambda
    assert fock._expected_eigenvalue(1, 1.0, 100.0, Q) == pytest.approx(1.0, abs=1e-15)
    assert Lambda(1.0, 0.1, Q) == pytest.approx(1.0, abs=1e-15)


def test_upper_vacuum_same_spectrum(space8, chev8):
    rep = fock.eigencheck_transfer(0, P0.with_(kp=Fr(1)), space8, [0.8], "upper", chev8, tol=1e-5)
    assert rep["pass"] and rep["rows"][0]["expected"] == 1.0


def test_excited_without_insertions(space6):
    base = fock.build_vacua("diag0", P0, space6)
    st = fock.build_excited(base, [])
    assert st.vector is base and st.factor(0.8) == 1.0


def test_excited_single_insertion(space8):
    rep = fock.check_excited(P0, space8, 0, [(1, 2.5)], [0.8])
    assert rep["max_residual"] <= 1e-4
    assert rep["rows"][0]["expected"] != pytest.approx(1.0)


def test_excited_swap(space8):
    base = fock.build_vacua("diag0", P0, space8)
    assert fock.check_excited_swap(base, (1, 2.5), (-1, 2.0)) < 1e-10


def test_currents_commute(space8):
    assert fock.check_current_commutativity("W+", 0.7, 0.85, space8) < 1e-12


@pytest.mark.parametrize("ld", [4, 6, 8])
def test_current_vertex_relations(ld):
    space = fock.FockSpace(Q, fock.Cutoffs(ld, ld, 2))
    res = fock.check_current_vertex_relations(0.8, 0.7, space)
    assert len(res) == 8 and max(res.values()) < 1e-12


def test_vectors_csv_header_only(tmp_path):
    path = tmp_path / "v.csv"
    fock.write_vectors_csv([], path)
    assert path.read_text() == "state,m,sector,charge,occupation,re,im\n"
