import csv
import json
from importlib import resources

import numpy as np
import pytest

from nsorbit import postprocess as pp
from nsorbit import spectral as sp
from nsorbit import symmetry as sy
from nsorbit import solver as so
from nsorbit import validator as va
from nsorbit import vorticity as vo
from nsorbit.errors import NotCurlFree, NotValidated
from nsorbit.rigor import RigorousReal

BOX = sp.SupportBox(1, 1, 0, 1)
NU = "2"


def coeff(a, n):
    c = sp.box_of(a).as_tuple()
    return a[(Ellipsis,) + tuple(n[i] + c[i] for i in range(4))]


@pytest.fixture(scope="module")
def G():
    return sy.preset_group("taylor-green-16")


@pytest.fixture(scope="module")
def validated(G):
    w = sp.embed(vo.viscous_equilibrium(NU).omega, BOX)
    orb = va.ReducedOrbit.from_field(1.0, w, G, BOX, essentially2D=True).symmetrized()
    sch = va.TruncationScheme(BOX, 6, 12, NU, essentially2D=True, phase_mode="pinned", Omega_pin=1.0)
    rep = va.validate(orb, sch, G, vo.taylor_green_forcing())
    return pp.ValidatedOrbit(orb, rep, G, sch)


def test_not_validated(validated):
    bad = va.BoundsReport(*(RigorousReal.point(1.0),) * 5, success=False)
    with pytest.raises(NotValidated):
        pp.ValidatedOrbit(validated.orbit, bad)
    with pytest.raises(NotValidated):
        pp.velocity_with_error("not an orbit")


def test_velocity(validated):
    u, err = pp.velocity_with_error(validated)
    assert err.hi == validated.report.rmin.hi
    assert np.abs(sp.divergence(u)).max() < 1e-15
    f = vo.taylor_green_velocity_forcing()
    assert np.allclose(sp.truncate(u, sp.box_of(f)), f / (2 * float(NU)), atol=1e-15)


def test_pressure_error_formula():
    e = pp.pressure_error(RigorousReal.point(2), RigorousReal.point(0.01))
    assert e.contains(0.0401)
    assert pp.pressure_error(3.0, 0.0).hi == 0
    assert pp.pressure_error(2.0, 0.02).hi > e.hi


def test_equilibrium_pressure(validated):
    p, err = pp.pressure_with_error(validated, vo.taylor_green_velocity_forcing())
    c = 1 / (8 * float(NU) ** 2)
    for n in ((2, 0, 0, 0), (-2, 0, 0, 0), (0, 2, 0, 0), (0, -2, 0, 0)):
        assert coeff(p, n) == pytest.approx(c, abs=1e-15)
    p2 = p.copy()
    for n in ((2, 0, 0, 0), (-2, 0, 0, 0), (0, 2, 0, 0), (0, -2, 0, 0)):
        p2[tuple(n[i] + sp.box_of(p).as_tuple()[i] for i in range(4))] = 0
    assert np.abs(p2).max() < 1e-15
    assert err.hi < 1e-12 and err.lo >= 0


def test_poisson_relation(rng):
    w = rng.standard_normal((3,) + BOX.shape) + 1j * rng.standard_normal((3,) + BOX.shape)
    u = sp.biot_savart(w)
    f = vo.taylor_green_velocity_forcing()
    p = pp.pressure_from_velocity(u, f)
    # -Lap p = div((u.grad)u) - div f with (u.grad)u = i (u . D~) u
    adv = 1j * sp.advect(u, u, method="fft")
    box = sp.box_of(p)
    rhs = sp.divergence(sp.embed(adv, box)) - sp.divergence(sp.embed(f, box))
    n1, n2, n3, _ = sp.wavenumbers(box)
    lhs = (n1**2 + n2**2 + n3**2) * p
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_gradient_recover(rng):
    box = sp.SupportBox(2, 2, 1, 1)
    p = rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape)
    p[sp.box_of(p).as_tuple()[:3] + (slice(None),)] = 0
    n1, n2, n3, _ = sp.wavenumbers(box)
    Phi = -np.stack([1j * n1 * p, 1j * n2 * p, 1j * n3 * p])
    assert np.allclose(pp.gradient_recover(Phi), p)
    single = np.zeros(box.shape, dtype=complex)
    single[3, 4, 1, 1] = 1.0  # mode (1, 2, 0, 0)
    Phi1 = -np.stack([1j * n1 * single, 1j * n2 * single, 1j * n3 * single])
    g = pp.gradient_recover(Phi1)
    assert np.allclose(g, single)
    assert -1j * Phi1[0][3, 4, 1, 1] / 1 == pytest.approx(-1j * Phi1[1][3, 4, 1, 1] / 2)
    bad = Phi.copy()
    bad[0, 2, 2, 1, 0] = 1.0
    with pytest.raises(NotCurlFree):
        pp.gradient_recover(bad)
    twisted = Phi.copy()
    twisted[0] = twisted[0] + 1e-3 * (n2 != 0)
    with pytest.raises(NotCurlFree):
        pp.gradient_recover(twisted)


def test_c0_statement(validated):
    rec = pp.c0_error_statement(validated, vo.taylor_green_velocity_forcing())
    r = validated.report.rmin.hi
    for k in ("vorticity_c0", "velocity_c0", "frequency_err"):
        iv = RigorousReal.from_json(rec[k])
        assert 0 <= iv.lo and iv.hi <= r
    _, perr = pp.pressure_with_error(validated, vo.taylor_green_velocity_forcing())
    assert RigorousReal.from_json(rec["pressure_c0"]).hi <= perr.hi
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads((resources.files("nsorbit") / "data" / "c0_error.schema.json").read_text())
    jsonschema.validate(json.loads(json.dumps(rec)), schema)


def test_grid_snapshot_single_mode(tmp_path):
    box = sp.SupportBox(1, 1, 0, 0)
    w = sp.zeros(box)
    w[2, 2, 2, 0, 0] = 1.0
    w[2, 0, 0, 0, 0] = 1.0
    x1, x2, v = pp.grid_snapshot(w, 1.0, [0.0], 8)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    assert np.allclose(v[0], 2 * np.cos(X1 + X2))
    _, _, v2 = pp.grid_snapshot(w, 1.0, [0.0], 16)
    assert np.array_equal(v2[0, ::2, ::2], v[0])
    path = tmp_path / "s.csv"
    pp.write_snapshot_csv(path, x1, x2, v[0])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x1", "x2", "value"] and len(rows) == 65


def test_grid_symmetry_relabeling(G):
    d = so.load_sample("tg_orbit_nu0.286_tiny.json")
    orb = va.ReducedOrbit.from_field(d["Omega"], d["omega"], G, d["box"], essentially2D=True).symmetrized()
    w = orb.lift()
    Om = orb.Omega
    T = 2 * np.pi / Om
    R = 16
    # g3: C swaps x1 and x2 (det -1), shift pi in x1, quarter period in time
    _, _, v = pp.grid_snapshot(w, Om, [0.3, 0.3 + T / 4], R)
    i = np.arange(R)
    I, J = np.meshgrid(i, i, indexing="ij")
    assert np.allclose(v[0], -v[1][(J + R // 2) % R, I], atol=1e-12)
    # g1: rotation by pi, no time shift
    _, _, v1 = pp.grid_snapshot(w, Om, [0.7], R)
    assert np.allclose(v1[0], v1[0][(-I) % R, (-J) % R], atol=1e-12)


def test_symmetry_deviation():
    box = sp.SupportBox(1, 1, 0, 0)
    sym = sp.zeros(box)
    sym[0, 1, 2, 0, 0] = 1.0
    sym[0, 1, 0, 0, 0] = 1.0
    assert pp.symmetry_deviation(sym) == pytest.approx(0, abs=1e-15)
    anti = sp.zeros(box)
    anti[1, 2, 1, 0, 0] = 1.0
    anti[1, 0, 1, 0, 0] = 1.0
    assert pp.symmetry_deviation(anti) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal((3,) + box.shape)
        assert 0 <= pp.symmetry_deviation(u) <= 1
