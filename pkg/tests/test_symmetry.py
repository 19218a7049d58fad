from fractions import Fraction

import numpy as np
import pytest

from nsorbit import spectral as sp
from nsorbit import symmetry as sy
from nsorbit.errors import NonFiniteClosure, UncataloguedMode

from conftest import box_layout, random_field

BOX = sp.SupportBox(2, 2, 2, 2)


def test_group_orders(tg_group):
    assert len(tg_group) == 16
    assert len(sy.close_group([])) == 1
    g1 = sy.taylor_green_generators()[0]
    assert len(sy.close_group([g1])) == 2


def test_closure_cap():
    shift = sy.PhysicalSymmetry((1, 0, 0, 0, 1, 0, 0, 0, 1), (Fraction(1, 7), 0, 0), 0)
    with pytest.raises(NonFiniteClosure):
        sy.close_group([shift], cap=5)
    assert len(sy.close_group([shift])) == 7


def test_invalid_symmetry():
    with pytest.raises(ValueError):
        sy.PhysicalSymmetry((1, 1, 0, 0, 1, 0, 0, 0, 1), (0, 0, 0), 0)


def test_generator_actions(tg_group):
    g1, _, g3 = sy.taylor_green_generators()
    beta, alpha = tg_group.mode_action(g1, (1, 1, 0, 0, 3))
    assert beta == (-1, -1, 0, 0, 3) and alpha == 1
    beta, alpha = tg_group.mode_action(g3, (1, 1, 0, 0, 1))
    assert beta == (1, 1, 0, 0, 2) and alpha == 1
    e = sy.PhysicalSymmetry.identity()
    assert tg_group.mode_action(e, (3, -1, 2, 5, 2)) == ((3, -1, 2, 5, 2), 1)


def test_action_laws(tg_group):
    res = sy.check_action_laws(tg_group, sp.SupportBox(2, 2, 1, 2))
    assert res["beta"] == 0 and res["cocycle"] == 0 and res["checks"] > 0


def test_alpha_unit_and_conjugation(tg_group):
    n, m = sy._box_modes(BOX)
    nb, mb, ph = tg_group.action(n, m)
    nb2, mb2, ph2 = tg_group.action(-n, m)
    assert np.array_equal(nb2, -nb) and np.array_equal(mb2, mb)
    assert np.all((ph + ph2) % tg_group.L == 0)


def test_classification(tg_group):
    n, m = sy._box_modes(BOX)
    d = sy.classify(tg_group, n, m)
    G = len(tg_group)
    assert np.all(d["orbit"] * d["stab"] == G)
    assert np.all(G % d["orbit"] == 0)
    # dichotomy: the stabiliser phase sum is 0 or |G_j|, never anything else
    nb, mb, ph = tg_group.action(n, m)
    fixed = (nb == n[None]).all(-1) & (mb == m[None])
    units = np.exp(2j * np.pi * ph / tg_group.L)
    s = (units * fixed).sum(0)
    sym = np.isclose(s, d["stab"])
    triv = np.isclose(s, 0)
    assert np.all(sym | triv)
    assert np.array_equal(sym, d["symmetric"])


def test_orbit_count_consistency(tg_group):
    lay = box_layout(tg_group, BOX)
    assert int(lay.orbit.sum()) == lay.full_count


def test_transport_consistency(tg_group):
    n, m = sy._box_modes(sp.SupportBox(2, 2, 1, 1))
    d = sy.classify(tg_group, n, m)
    nb, mb, ph = tg_group.action(n, m)
    img = sy.encode(nb, mb)
    for k in np.nonzero(d["symmetric"])[0][:400]:
        seen = {}
        for g in range(len(tg_group)):
            key = int(img[g, k])
            if key in seen:
                assert seen[key] == ph[g, k]
            seen[key] = ph[g, k]


def test_lift_project(tg_group, rng):
    lay = box_layout(tg_group, BOX)
    phi = rng.standard_normal(len(lay)) + 1j * rng.standard_normal(len(lay))
    w = sy.lift_Sigma(phi, lay, BOX)
    assert np.allclose(sy.project_Pi(w, lay), phi)
    assert sy.reduced_norm(phi, lay).overlaps(sp.norm(w))
    avg = sy.group_average(random_field(rng, BOX), tg_group)
    assert np.allclose(sy.lift_Sigma(sy.project_Pi(avg, lay), lay, BOX), avg)
    with pytest.raises(UncataloguedMode):
        sy.lift_Sigma(phi[:-1], lay, BOX)


def test_group_average(tg_group, rng):
    w = random_field(rng, BOX)
    a = sy.group_average(w, tg_group)
    assert np.allclose(sy.group_average(a, tg_group), a)
    for gi in range(len(tg_group)):
        assert np.allclose(sy.gamma_apply(tg_group, gi, a), a)
    n, m = sy._box_modes(BOX)
    d = sy.classify(tg_group, n, m)
    k = np.nonzero(~d["symmetric"] & np.any(n != 0, axis=1))[0][0]
    e = np.zeros(3 * int(np.prod(BOX.shape)), dtype=complex)
    e[k] = 1.0
    assert np.allclose(sy.group_average(e.reshape((3,) + BOX.shape), tg_group), 0)
    real = 0.5 * (w + sy.conj_field(w))
    assert np.allclose(sy.conj_field(sy.group_average(real, tg_group)), sy.group_average(sy.conj_field(real), tg_group))


def test_conj_reduced(tg_group, rng):
    lay = box_layout(tg_group, BOX)
    phi = rng.standard_normal(len(lay)) + 1j * rng.standard_normal(len(lay))
    c = sy.conj_reduced(phi, lay)
    assert np.allclose(sy.conj_reduced(c, lay), phi)
    assert sy.reduced_norm(c, lay).overlaps(sy.reduced_norm(phi, lay))
    fixed = 0.5 * (phi + c)
    w = sy.lift_Sigma(fixed, lay, BOX)
    grid = np.fft.ifftn(np.fft.ifftshift(w, axes=(1, 2, 3, 4)), axes=(1, 2, 3, 4))
    assert np.abs(grid.imag).max() < 1e-12 * np.abs(grid).max()


def test_symmetrize_input(tg_group, rng):
    lay = box_layout(tg_group, BOX)
    phi = rng.standard_normal(len(lay)) + 1j * rng.standard_normal(len(lay))
    s = sy.symmetrize_input(phi, lay)
    w = sy.lift_Sigma(s, lay, BOX)
    assert np.abs(sp.divergence(w)).max() < 1e-13
    s2 = sy.symmetrize_input(s, lay)
    assert np.allclose(s2, s, atol=1e-14)
    assert np.allclose(sy.conj_reduced(s, lay), s)


def test_trivial_group_layout_covers_everything(rng):
    G1 = sy.preset_group("trivial")
    box = sp.SupportBox(1, 1, 1, 1)
    lay = box_layout(G1, box)
    assert len(lay) == 3 * (int(np.prod(box.shape)) - 1)
    w = random_field(rng, box)
    w[:, 1, 1, 1, 1] = 0
    assert np.array_equal(sy.lift_Sigma(sy.project_Pi(w, lay), lay, box), w)
