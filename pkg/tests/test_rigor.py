import math
from fractions import Fraction

import numpy as np
import pytest

from nsorbit import rigor, spectral as sp, vorticity as vo
from nsorbit.errors import DivisionByZeroInterval, DomainError, Overflow
from nsorbit.rigor import CIArray, IArray, PointMatrix, RigorousComplex, RigorousReal


def _contains(iv, q: Fraction):
    return Fraction(iv.lo) <= q <= Fraction(iv.hi)


def test_add_exact():
    s = RigorousReal.point(1) + RigorousReal.point(1)
    assert s.contains(2.0)
    assert s.lo == s.hi == 2.0


def test_one_third():
    q = RigorousReal.point(1) / RigorousReal.point(3)
    assert _contains(q, Fraction(1, 3))
    assert q.hi - q.lo <= 2 * math.ulp(1 / 3)


def test_complex_zero_absorbs():
    z = RigorousComplex(RigorousReal(-2.5, 3.0), RigorousReal(1.0, 7.0))
    p = RigorousComplex.point(0) * z
    assert p.contains(0)


def test_sqrt_abs_max():
    assert RigorousReal.point(4).sqrt().contains(2.0)
    a = abs(RigorousComplex.point(3 + 4j))
    assert a.contains(5.0)
    m = RigorousReal(1, 2).max(RigorousReal(0, 3))
    assert (m.lo, m.hi) == (1.0, 3.0)


def test_exact_results_stay_points():
    assert (RigorousReal.point(1) / RigorousReal.point(64)).is_point()
    assert RigorousReal.point(2.25).sqrt().is_point()
    assert (RigorousReal.point(0.5) * RigorousReal.point(-3)).is_point()
    x = RigorousReal.point(0.1) + RigorousReal.point(0.2)
    assert not x.is_point() and x.hi - x.lo == math.ulp(0.3)


def test_errors():
    with pytest.raises(DivisionByZeroInterval):
        RigorousReal.point(1) / RigorousReal(-1, 1)
    with pytest.raises(DivisionByZeroInterval):
        RigorousComplex.point(1) / RigorousComplex(RigorousReal(-1, 1), RigorousReal(0, 0))
    with pytest.raises(DomainError):
        RigorousReal(-1e-300, 1).sqrt()
    with pytest.raises(Overflow):
        RigorousReal.point(1e308) * RigorousReal.point(10)
    with pytest.raises(ValueError):
        RigorousReal(2, 1)


def test_containment_fuzz():
    rng = np.random.default_rng(7)
    K = 25_000
    a = rng.standard_normal((K, 2)) * 10.0 ** rng.integers(-8, 8, (K, 2))
    b = rng.standard_normal((K, 2)) * 10.0 ** rng.integers(-8, 8, (K, 2))
    bad = 0
    for (a0, a1), (b0, b1) in zip(a, b):
        x = RigorousReal(min(a0, a1), max(a0, a1))
        y = RigorousReal(min(b0, b1), max(b0, b1))
        xm, ym = Fraction(x.lo) / 2 + Fraction(x.hi) / 2, Fraction(y.lo) / 2 + Fraction(y.hi) / 2
        bad += not _contains(x + y, xm + ym)
        bad += not _contains(x - y, xm - ym)
        bad += not _contains(x * y, xm * ym)
        if not (y.lo <= 0 <= y.hi):
            bad += not _contains(x / y, xm / ym)
    assert bad == 0


def test_monotone_and_associative():
    rng = np.random.default_rng(3)
    for _ in range(500):
        v = rng.standard_normal(3)
        a, b, c = (RigorousReal.point(float(t)) for t in v)
        exact = sum(Fraction(float(t)) for t in v)
        assert _contains((a + b) + c, exact) and _contains(a + (b + c), exact)
        wide = RigorousReal(a.lo - 1, a.hi + 1)
        for op in (lambda p, q: p + q, lambda p, q: p * q):
            r, rw = op(a, b), op(wide, b)
            assert rw.lo <= r.lo and r.hi <= rw.hi


def test_hex_roundtrip():
    for x in (0.5, -0.1, 1e-310, 2.0**-1074, 1.7976931348623157e308, 0.0):
        assert rigor.from_hex(rigor.to_hex(x)) == x
    assert rigor.to_hex(0.5) == "0x3fe0000000000000"
    iv = RigorousReal(0.1, 0.3)
    assert RigorousReal.from_json(iv.to_json()) == iv


def test_array_containment_against_fractions():
    rng = np.random.default_rng(11)
    K = 2000
    x = IArray(rng.standard_normal(K))
    y = IArray(rng.standard_normal(K))
    for z, f in ((x * y, lambda p, q: p * q), (x + y, lambda p, q: p + q), (x / y, lambda p, q: p / q)):
        for i in range(0, K, 37):
            q = f(Fraction(float(x.lo[i])), Fraction(float(y.lo[i])))
            assert Fraction(float(z.lo[i])) <= q <= Fraction(float(z.hi[i]))


def test_complex_array_mul_contains_exact():
    rng = np.random.default_rng(5)
    a = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    b = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    p = CIArray.point(a) * CIArray.point(b)
    for i in range(200):
        ar, ai, br, bi = (Fraction(float(t)) for t in (a[i].real, a[i].imag, b[i].real, b[i].imag))
        re, im = ar * br - ai * bi, ar * bi + ai * br
        assert Fraction(float(p.real.lo[i])) <= re <= Fraction(float(p.real.hi[i]))
        assert Fraction(float(p.imag.lo[i])) <= im <= Fraction(float(p.imag.hi[i]))


def test_point_matrix_enclosure():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
    B = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
    E = PointMatrix(A).enclose(CIArray.point(B))
    Fa = [[(Fraction(z.real), Fraction(z.imag)) for z in row] for row in A]
    Fb = [[(Fraction(z.real), Fraction(z.imag)) for z in row] for row in B]
    for i in range(6):
        for j in range(4):
            re = sum(Fa[i][k][0] * Fb[k][j][0] - Fa[i][k][1] * Fb[k][j][1] for k in range(5))
            im = sum(Fa[i][k][0] * Fb[k][j][1] + Fa[i][k][1] * Fb[k][j][0] for k in range(5))
            assert Fraction(float(E.real.lo[i, j])) <= re <= Fraction(float(E.real.hi[i, j]))
            assert Fraction(float(E.imag.lo[i, j])) <= im <= Fraction(float(E.imag.hi[i, j]))


def test_dpsi_columns_enclose_float_columns():
    rng = np.random.default_rng(2)
    box = sp.SupportBox(2, 2, 0, 1)
    w = rng.standard_normal((3,) + box.shape) + 1j * rng.standard_normal((3,) + box.shape)
    w[:, 2, 2, 0, 1] = 0
    cols = vo.DPsiColumns(CIArray.point(w))
    ns = np.array([[1, 0, 0, 1], [3, -1, 0, 0], [0, 2, 0, -2]])
    ms = np.array([0, 2, 1])
    vals, rows = cols(ns, ms)
    mid, _ = vo.DPsiColumns(w)(ns, ms)
    assert np.all(vals.contains(mid))
    # reference: the Jacobian of Psi applied to a unit vector, evaluated densely
    for b in range(len(ns)):
        big = sp.SupportBox(*(int(v) for v in np.abs(ns[b]))).union(box)
        e = sp.zeros(big)
        c = big.as_tuple()
        e[(ms[b],) + tuple(int(ns[b][i]) + c[i] for i in range(4))] = 1.0
        ref = vo._dpsi(*vo._common(w, e))
        rbox = sp.box_of(ref)
        rc = rbox.as_tuple()
        for d in range(rows.shape[1]):
            k = rows[b, d]
            if not rbox.contains(k):
                continue
            for l in range(3):
                r = ref[(l,) + tuple(int(k[i]) + rc[i] for i in range(4))]
                assert vals[b, l, d].contains(r) or abs(vals[b, l, d].mid - r) < 1e-12 * (1 + abs(r))
