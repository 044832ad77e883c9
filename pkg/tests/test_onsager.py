from fractions import Fraction as F

import pytest

from qonsager.errors import InsufficientDepth, InvalidParameters
from qonsager.numerics import SparseMatrix, nullspace_exact, q_sigma_z, qcomm, sigma_minus, sigma_plus
from qonsager.onsager import (KINDS, ModelParams, build_family, build_hierarchy, check_relations,
                              diagonal_consistency, find_linear_relations, footnote_identity,
                              fundamentals, hierarchy_commutes, random_params)


def test_seeds_at_zero_sites(generic):
    p = generic
    f = build_family(p, 0, 2, "A_q_diag")
    assert f.W_neg(0).to_dense() == [[p.ep]]
    assert f.W_pos(1).to_dense() == [[p.em]]
    g = build_family(p, 0, 2)
    assert g.G(1).to_dense() == g.Gt(1).to_dense() == [[p.ep * p.em * (p.q - 1 / p.q)]]


def test_single_site_w0(generic):
    p = generic
    expect = sigma_plus() * p.kp + sigma_minus() * p.km + q_sigma_z(p.q) * p.ep
    assert (build_family(p, 1).W_neg(0) - expect).is_zero()


@pytest.mark.parametrize("kind", KINDS)
def test_fundamentals_match_recursion(kind, generic):
    for N in (1, 2, 3):
        f = build_family(generic, N, 2, kind)
        fund = fundamentals(generic, N, kind)
        modes = [f.W_neg(0), f.W_pos(1)] + ([f.G(1), f.Gt(1)] if f.diagonal else [])
        assert all((a - b).is_zero() for a, b in zip(fund, modes))


def test_footnote_identity(generic):
    a, b = footnote_identity(build_family(generic, 2, 2))
    assert a.is_zero() and b.is_zero()


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_relations_pass_exactly(seed):
    p = random_params(seed, "generic")
    for N in (1, 2):
        assert check_relations(build_family(p, N, 4), "qDG")["all_pass"]
        assert check_relations(build_family(p, N, 4, "A_q_barred"), "Aq_full", 2)["all_pass"]
        diag = check_relations(build_family(p, N, 3, "A_q_diag"), "augmented")
        assert diag["all_pass"]
        assert "K0K1" in {i["relation"] for i in diag["instances"]}


def test_diagonal_zero_modes_commute(diagonal):
    f = build_family(diagonal, 2, 2, "A_q_diag")
    assert (f.W_neg(0) @ f.W_pos(1) - f.W_pos(1) @ f.W_neg(0)).is_zero()


def test_all_zero_parameters_degenerate():
    p = ModelParams(q=F(3, 7))
    f = build_family(p, 2, 3, "A_q_diag")
    assert all(m.is_zero() for m in f.neg + f.pos + f.g + f.gt)
    assert check_relations(f, "augmented")["all_pass"]
    rels, rep = find_linear_relations(f)
    assert rep["degenerate"]


def test_qons_needs_nonzero_k(diagonal):
    with pytest.raises(InvalidParameters):
        build_family(diagonal, 2)


def test_insufficient_depth(generic):
    f = build_family(generic, 1, 1)
    with pytest.raises(InsufficientDepth):
        f.W_neg(2)


def test_mode_nullspace_is_one_dimensional(generic):
    f = build_family(generic, 2, 3)
    cols = [f.W_neg(k).flatten() for k in range(3)] + [f.identity().flatten()]
    assert len(nullspace_exact([list(r) for r in zip(*cols)])) == 1


@pytest.mark.parametrize("N", [1, 2])
def test_davies_relations(N, generic):
    rels, rep = find_linear_relations(build_family(generic, N))
    assert rels and rep["all_annihilate"] and rep["shared_profile"]
    assert all(n >= 1 for n in rep["n_relations"].values())


def test_hierarchy_single_site_diagonal():
    p = random_params(4, "diagonal").with_(kbp=F(2, 3), kbm=F(-5, 7))
    f = build_family(p, 1, 2, "A_q_diag")
    (j1,) = build_hierarchy(f, p)
    expect = (f.W_neg(0) * p.ebp + f.W_pos(1) * p.ebm
              + (f.G(1) * p.kbm + f.Gt(1) * p.kbp) * (1 / (p.q ** 2 - p.q ** -2)))
    assert (j1 - expect).is_zero()


@pytest.mark.parametrize("kind", KINDS)
def test_hierarchy_commutes(kind, generic):
    assert hierarchy_commutes(build_hierarchy(build_family(generic, 3, kind=kind), generic))


def test_hierarchy_zero_boundary():
    p = random_params(2, "diagonal").with_(ebp=F(0), ebm=F(0))
    hier = build_hierarchy(build_family(p, 2, kind="A_q_diag"), p)
    assert all(h.is_zero() for h in hier)


def test_diagonal_limit(generic):
    assert diagonal_consistency(generic, 2)["all_pass"]
