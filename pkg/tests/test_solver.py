import numpy as np
import pytest

from nsorbit import spectral as sp
from nsorbit import symmetry as sy
from nsorbit import solver as so
from nsorbit import validator as va
from nsorbit import vorticity as vo
from nsorbit.errors import NoConvergence, SingularFiniteBlock

F = vo.taylor_green_forcing()


@pytest.fixture(scope="module")
def G():
    return sy.preset_group("taylor-green-16")


@pytest.fixture(scope="module")
def refined(G):
    d = so.load_sample()
    orb = va.ReducedOrbit.from_field(d["Omega"], d["omega"], G, d["box"], essentially2D=True)
    return so.newton(orb.Omega, orb.phi, orb.layout, F, "0.286")


def test_numerical_inverse():
    assert np.array_equal(so.numerical_inverse(np.eye(4)), np.eye(4))
    rng = np.random.default_rng(1)
    M = rng.standard_normal((30, 30)) + 1j * rng.standard_normal((30, 30))
    X = so.numerical_inverse(M)
    assert np.abs(M @ X - np.eye(30)).sum(0).max() < 1e-10
    with pytest.raises(SingularFiniteBlock):
        so.numerical_inverse(np.ones((3, 3)))
    with pytest.raises(SingularFiniteBlock):
        so.numerical_inverse(np.diag([1.0, np.nan]))


def test_equilibrium_is_fixed_point(G):
    box = sp.SupportBox(1, 1, 0, 1)
    w = sp.embed(vo.viscous_equilibrium(0.5).omega, box)
    orb = va.ReducedOrbit.from_field(1.0, w, G, box, essentially2D=True)
    r = so.newton(1.0, orb.phi, orb.layout, F, "0.5", phase_mode="pinned", Omega_pin=1.0)
    assert r.converged and r.iterations <= 1
    assert np.allclose(r.phi, orb.phi, atol=1e-14)


def test_refine_sample(refined):
    assert refined.converged
    assert refined.history[-1] < 1e-12
    assert refined.iterations <= 3
    assert 1.6 < refined.Omega < 1.7


def test_quadratic_convergence(refined):
    rng = np.random.default_rng(4)
    p = refined.phi + 1e-6 * rng.standard_normal(len(refined.phi))
    r = so.newton(refined.Omega + 1e-6, p, refined.layout, F, "0.286")
    h = r.history
    assert r.iterations <= 3 and h[-1] < 1e-12 * max(1.0, np.sum(refined.layout.xi * np.abs(refined.phi)))
    for a, b in zip(h[:-2], h[1:-1]):
        assert b / a**2 < 1e3


def test_symmetrize_changes_little(refined):
    s = sy.symmetrize_input(refined.phi, refined.layout)
    d = float(np.sum(refined.layout.xi * np.abs(s - refined.phi)))
    assert d < 10 * refined.history[-1] + 1e-14


def test_continuation(refined):
    same = so.continuation_step(refined, F, "0.286")
    assert abs(same.Omega - refined.Omega) < 1e-10
    # the predictor is the previous orbit, so the first residual is about dnu ||n~^2 omega||
    small = so.continuation_step(refined, F, "0.28601")
    assert small.converged and small.history[0] < 1e-3
    step = so.continuation_step(refined, F, "0.287")
    assert step.converged and step.Omega != refined.Omega
    assert step.history[0] / small.history[0] == pytest.approx(100, rel=0.05)
    with pytest.raises(NoConvergence):
        so.continuation_step(refined, F, "0.6")


def test_reduced_jacobian_matches_Ahat(G):
    d = so.load_sample("tg_orbit_nu0.286_tiny.json")
    orb = va.ReducedOrbit.from_field(d["Omega"], d["omega"], G, d["box"], essentially2D=True).symmetrized()
    sch = va.TruncationScheme(d["box"], 3.5, 10, "0.286", essentially2D=True)
    P = va.Problem(orb, sch, G, F)
    H = va.assemble_block(P, rigorous=True)
    J = so.reduced_jacobian(orb.Omega, orb.phi, orb.layout, "0.286")
    pos_H = H.layout.index_of(orb.layout.keys)
    common = np.nonzero(pos_H >= 0)[0]
    assert len(common) > 10
    iH = np.concatenate([[0], pos_H[common] + 1])
    iJ = np.concatenate([[0], common + 1])
    Hs = H.matrix[np.ix_(iH, iH)]
    Js = J[np.ix_(iJ, iJ)]
    scale = np.abs(Js).max()
    assert np.abs(Hs.mid - Js).max() <= 1e-13 * scale
