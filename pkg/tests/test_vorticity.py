import numpy as np
import pytest

from nsorbit import spectral as sp
from nsorbit import symmetry as sy
from nsorbit import vorticity as vo
from nsorbit.errors import ForcingInvalid
from nsorbit.rigor import CIArray

from conftest import random_field

BOX = sp.SupportBox(2, 2, 0, 1)


def coeff(a, n):
    c = sp.box_of(a).as_tuple()
    return a[(Ellipsis,) + tuple(n[i] + c[i] for i in range(4))]


def test_taylor_green_forcing():
    f = vo.taylor_green_forcing().fomega
    assert coeff(f, (1, 1, 0, 0))[2] == -1
    assert coeff(f, (-1, -1, 0, 0))[2] == -1
    assert coeff(f, (1, -1, 0, 0))[2] == 1
    assert coeff(f, (-1, 1, 0, 0))[2] == 1
    assert np.count_nonzero(f) == 4 and not np.any(f[:2])
    vo.validate_forcing(f)


def test_forcing_invariants_enforced():
    f = sp.zeros(sp.SupportBox(1, 0, 0, 1))
    f[2, 2, 0, 0, 2] = 1.0
    with pytest.raises(ForcingInvalid):
        vo.Forcing(f)
    g = sp.zeros(sp.SupportBox(1, 0, 0, 0))
    g[0, 1, 0, 0, 0] = 1.0
    with pytest.raises(ForcingInvalid):
        vo.Forcing(g)


def test_viscous_equilibrium():
    W = vo.viscous_equilibrium(0.5)
    assert coeff(W.omega, (1, 1, 0, 0))[2] == -1
    assert not np.any(sp.divergence(W.omega))
    assert sp.norm(W.omega).contains(4 / (2 * 0.5))


def test_equilibrium_residual_encloses_zero():
    W = vo.viscous_equilibrium("0.286", rigorous=True)
    f = vo.taylor_green_forcing()
    Fph, Fn = vo.residual_F(W, f, "0.286")
    assert np.all(Fn.contains_zero())
    assert np.all(vo.nonlinearity_Psi(W.omega).contains_zero())
    assert Fph.contains(0)


def test_psi_zero_and_support(rng):
    z = np.zeros((3,) + BOX.shape, dtype=complex)
    assert not np.any(vo.nonlinearity_Psi(z))
    w = random_field(rng, BOX)
    assert sp.box_of(vo.nonlinearity_Psi(w)) == BOX + BOX


def test_psi_equivariance(rng, tg_group):
    w = random_field(rng, sp.SupportBox(2, 2, 2, 2), dyadic_bits=3)
    Pw = vo.nonlinearity_Psi(w)
    for gi in range(len(tg_group)):
        lhs = vo.nonlinearity_Psi(sy.gamma_apply(tg_group, gi, w))
        rhs = sy.gamma_apply(tg_group, gi, Pw)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_phase_row_vanishes_for_steady_fields(rng):
    w = random_field(rng, sp.SupportBox(1, 1, 1, 0))
    Fph, _ = vo.residual_F(vo.State(1.0, w), vo.taylor_green_forcing(), 0.3)
    assert Fph == 0


def test_residual_support(rng):
    w = random_field(rng, BOX)
    _, Fn = vo.residual_F(vo.State(1.3, w), vo.taylor_green_forcing(), 0.3)
    assert sp.box_of(Fn) == BOX + BOX


def test_residual_conjugation_equivariance(rng):
    w = random_field(rng, BOX)
    w = 0.5 * (w + sy.conj_field(w))
    W = vo.State(1.1, w)
    Wc = vo.State(1.1, sy.conj_field(w))
    _, F = vo.residual_F(W, vo.taylor_green_forcing(), 0.3)
    _, Fc = vo.residual_F(Wc, vo.taylor_green_forcing(), 0.3)
    assert np.allclose(Fc, sy.conj_field(F), atol=1e-12)


def test_jacobian_finite_difference(rng):
    Wb = vo.State(1.2, random_field(rng, BOX))
    V = vo.State(0.7, random_field(rng, BOX))
    f = vo.taylor_green_forcing()
    h = 1e-4
    _, Fp = vo.residual_F(vo.State(Wb.Omega + h * V.Omega, Wb.omega + h * V.omega), f, 0.3, omega_hat=Wb.omega)
    _, Fm = vo.residual_F(vo.State(Wb.Omega - h * V.Omega, Wb.omega - h * V.omega), f, 0.3, omega_hat=Wb.omega)
    _, J = vo.jacobian_action(Wb, V, 0.3)
    fd = (Fp - Fm) / (2 * h)
    assert np.abs(fd - J).max() <= 1e-6 * np.abs(J).max()


def test_jacobian_at_zero_is_heat_operator(rng):
    V = vo.State(0.4, random_field(rng, BOX))
    _, J = vo.jacobian_action(vo.State(1.5, np.zeros_like(V.omega)), V, 0.3)
    lin = vo.linear_part(V.omega, 1.5, 0.3)
    lin[(Ellipsis,) + BOX.as_tuple()] = 0
    assert np.allclose(sp.truncate(J, BOX), lin)


def test_jacobian_equivariance(rng, tg_group):
    box = sp.SupportBox(2, 2, 0, 2)
    Wb = sy.group_average(random_field(rng, box), tg_group)
    V = random_field(rng, box)
    for gi in (1, 5, 11):
        _, a = vo.jacobian_action(vo.State(1.0, Wb), vo.State(0.0, sy.gamma_apply(tg_group, gi, V)), 0.3, omega_hat=Wb)
        _, b = vo.jacobian_action(vo.State(1.0, Wb), vo.State(0.0, V), 0.3, omega_hat=Wb)
        assert np.allclose(a, sy.gamma_apply(tg_group, gi, b), atol=1e-12)


def test_second_derivative(rng):
    V1 = vo.State(0.3, random_field(rng, BOX))
    V2 = vo.State(-0.8, random_field(rng, BOX))
    W1 = vo.State(1.0, random_field(rng, BOX))
    W2 = vo.State(2.0, random_field(rng, BOX))
    z0, a = vo.second_derivative_action(W1, V1, V2)
    _, b = vo.second_derivative_action(W1, V2, V1)
    _, c = vo.second_derivative_action(W2, V1, V2)
    assert z0 == 0
    assert np.allclose(a, b) and np.array_equal(a, c)
    # second difference of F along V1, V2
    f, h = vo.taylor_green_forcing(), 1e-3
    Fs = {}
    for s in (-1, 1):
        for t in (-1, 1):
            W = vo.State(W1.Omega + s * h * V1.Omega + t * h * V2.Omega, W1.omega + s * h * V1.omega + t * h * V2.omega)
            Fs[s, t] = vo.residual_F(W, f, 0.3)[1]
    sd = (Fs[1, 1] - Fs[1, -1] - Fs[-1, 1] + Fs[-1, -1]) / (4 * h * h)
    assert np.abs(sd - a).max() <= 1e-6 * np.abs(a).max()


def test_quadratic_identity(rng):
    Wb = vo.State(1.0, random_field(rng, BOX))
    V = vo.State(0.25, random_field(rng, BOX))
    f = vo.taylor_green_forcing()
    _, F1 = vo.residual_F(vo.State(Wb.Omega + V.Omega, Wb.omega + V.omega), f, 0.3)
    _, F0 = vo.residual_F(Wb, f, 0.3)
    _, J = vo.jacobian_action(Wb, V, 0.3)
    _, H = vo.second_derivative_action(Wb, V, V)
    assert np.abs(F1 - F0 - J - 0.5 * H).max() < 1e-11 * np.abs(F1).max()


def test_divergence_preservation(rng):
    w = sp.curl(random_field(rng, BOX))
    assert vo.check_divergence_preservation(w)
    assert vo.check_divergence_preservation(vo.viscous_equilibrium(0.5, rigorous=True).omega)
    assert vo.check_divergence_preservation(np.zeros((3,) + BOX.shape, dtype=complex))


def test_jacobian_column_matches_action(rng):
    Wb = vo.State(1.0, random_field(rng, sp.SupportBox(1, 1, 0, 1)))
    nu = 0.3
    for j in [(1, 0, 0, 1, 1), (2, -1, 0, 0, 3), (0, 1, 0, -2, 2)]:
        col = vo.jacobian_column(Wb, j, nu)
        box = sp.SupportBox(*(abs(v) for v in j[:4])).union(Wb.box)
        e = sp.zeros(box)
        c = box.as_tuple()
        e[(j[4] - 1,) + tuple(j[i] + c[i] for i in range(4))] = 1.0
        _, ref = vo.jacobian_action(Wb, vo.State(0.0, e), nu)
        rc = sp.box_of(ref).as_tuple()
        for key, val in col.items():
            if key == "phase":
                continue
            k, l = key[:4], key[4]
            assert val == pytest.approx(ref[(l - 1,) + tuple(k[i] + rc[i] for i in range(4))], abs=1e-12)
        for idx in zip(*np.nonzero(np.abs(ref) > 1e-14)):
            key = tuple(int(idx[i + 1]) - rc[i] for i in range(4)) + (int(idx[0]) + 1,)
            assert key in col


def test_jacobian_column_vanishing_outside():
    """Columns with C-part far from the finite set have no rows inside it."""
    W = vo.viscous_equilibrium(0.5)
    E = {(a, b, 0, 0) for a in range(-1, 2) for b in range(-1, 2)} - {(0, 0, 0, 0)}
    col = vo.jacobian_column(W, (5, 5, 0, 0, 3), 0.5, Edagger=E)
    assert all(k == "phase" or tuple(k[:4]) not in E for k in col)
