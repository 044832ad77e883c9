from fractions import Fraction as F

import pytest

from qonsager.currents import (REGIMES, ac_leading_order, build_chevalley, build_coideal,
                               check_coassociativity, check_defUq, check_mode_expansion,
                               check_vertex_intertwining_finite, eval_images)
from qonsager.numerics import q_sigma_z, sigma_minus, sigma_plus
from qonsager.onsager import build_family, random_params


def test_single_site_images():
    q = F(3, 7)
    x = eval_images(q)
    assert x["e1"] == sigma_plus() and x["f1"] == sigma_minus() and x["e0"] == sigma_minus()
    assert x["k1"] == q_sigma_z(q) and x["k0"] == q_sigma_z(q, -1)


def test_defUq_three_sites(generic):
    rep = check_defUq(build_chevalley(generic, 3))
    assert rep["all_pass"]
    names = {i["relation"] for i in rep["instances"]}
    assert "[e1,f1]" in names and "serre e10" in names


def test_defUq_with_spectral_parameters(generic):
    assert check_defUq(build_chevalley(generic, 2, (F(2, 3), F(-5, 4))))["all_pass"]


@pytest.mark.parametrize("regime", REGIMES)
def test_coideal_matches_chain(regime, generic):
    p = generic if regime.startswith("qOnsager") else generic.with_(kp=F(0), km=F(0), kbp=F(0), kbm=F(0))
    for N in (1, 2, 3):
        assert build_coideal(p, N, regime).report["all_pass"]


def test_single_site_realization(generic):
    p = generic
    w0 = build_coideal(p, 1, "qOnsager_right").images[0]
    assert w0 == sigma_plus() * p.kp + sigma_minus() * p.km + q_sigma_z(p.q) * p.ep


def test_augmented_z1_matches_chain(diagonal):
    c = build_coideal(diagonal, 2, "augmented_right")
    f = build_family(diagonal, 2, 2, "A_q_diag")
    assert c.images[2] == f.G(1)


@pytest.mark.parametrize("regime", REGIMES)
def test_coassociativity(regime, generic):
    p = generic if regime.startswith("qOnsager") else generic.with_(kp=F(0), km=F(0), kbp=F(0), kbm=F(0))
    assert check_coassociativity(p, regime)["all_pass"]


@pytest.mark.parametrize("kind", ["A_q", "A_q_barred"])
def test_mode_expansion(kind, generic):
    rep = check_mode_expansion(build_family(generic, 2, 3, kind), 2)
    assert rep["all_pass"] and rep["constant_shift"]


@pytest.mark.parametrize("kind", ["A_q_diag", "A_q_diag_barred"])
def test_mode_expansion_diagonal(kind, diagonal):
    rep = check_mode_expansion(build_family(diagonal, 2, 3, kind), 2)
    assert rep["all_pass"] and not rep["constant_shift"]


def test_vertex_intertwining(generic, diagonal):
    assert check_vertex_intertwining_finite(generic, 2, "qOnsager_right", F(3, 7))["all_pass"]
    assert check_vertex_intertwining_finite(diagonal, 2, "augmented_right", F(3, 7))["all_pass"]


def test_ac_leading_order(generic, diagonal):
    assert ac_leading_order(generic, F(5, 11), "qOnsager_right")["all_pass"]
    assert ac_leading_order(diagonal, F(5, 11), "augmented_right")["all_pass"]


def test_ac_prefactor_invariance():
    # U(zeta) is invariant under zeta -> -1/(q zeta)
    q, z = F(-2, 5), F(3, 7)
    U = lambda x: (q * x ** 2 + 1 / (q * x ** 2)) / (q + 1 / q)
    assert U(z) == U(-1 / (q * z))
