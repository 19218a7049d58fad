"""
Outward-rounded interval arithmetic over IEEE-754 binary64.

Every operation is evaluated in round-to-nearest and the endpoints are then
pushed one ulp outward with ``nextafter``.  For a single rounded operation the
exact result lies within half an ulp of the computed value, so one ulp of
slack is always enough.  The global rounding mode is never touched.

Two flavours are provided:

* :class:`RigorousReal` / :class:`RigorousComplex` -- immutable scalars.
* :class:`IArray` / :class:`CIArray` -- the same arithmetic vectorized over
  numpy arrays, used by the bound assembly.

Complex enclosures are rectangles ``re + i im``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np

from .errors import DivisionByZeroInterval, DomainError, Overflow

__all__ = [
    "RigorousReal",
    "RigorousComplex",
    "IArray",
    "CIArray",
    "to_hex",
    "from_hex",
    "rsum_upper",
    "rsum_lower",
    "matmul_enclose",
    "gamma_up",
    "PointMatrix",
]

_U = 2.0**-53
_ETA = 2.0**-1074
_TINY = 2.0**-1022


# ---------------------------------------------------------------- hex codec
def to_hex(x: float) -> str:
    """Return the IEEE-754 bit pattern of ``x`` as ``0x`` + 16 hex digits."""
    return "0x%016x" % struct.unpack(">Q", struct.pack(">d", float(x)))[0]


def from_hex(s: str) -> float:
    """Inverse of :func:`to_hex`.  Raises ``ValueError`` on malformed input."""
    if not isinstance(s, str) or not s.startswith("0x") or len(s) != 18:
        raise ValueError(f"malformed hex float {s!r}")
    bits = int(s[2:], 16)
    return struct.unpack(">d", struct.pack(">Q", bits))[0]


# ---------------------------------------------------------------- scalar helpers
def _dn(x):
    return math.nextafter(x, -math.inf)


def _up(x):
    return math.nextafter(x, math.inf)


# Error-free transforms: a result that is already exact is not widened, and
# an inexact one is nudged only on the side where the true value lies.
_SPLIT = 134217729.0  # 2**27 + 1
_SAFE_LO, _SAFE_HI = 2.0**-900, 2.0**900


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    p = a * b
    t = _SPLIT * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLIT * b
    bh = t - (t - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _safe(*xs):
    return all(x == 0.0 or _SAFE_LO < abs(x) < _SAFE_HI for x in xs)


def _bracket(x, err):
    """Enclosure of ``x + err`` where only the sign of ``err`` is trusted."""
    if err > 0:
        return x, _up(x)
    if err < 0:
        return _dn(x), x
    return x, x


def _add_iv(a, b):
    s, e = _two_sum(a, b)
    if not math.isfinite(s):
        return _dn(s), _up(s)
    return _bracket(s, e)


def _mul_iv(a, b):
    if a == 0.0 or b == 0.0:
        return 0.0, 0.0
    p = a * b
    if not (_safe(a, b, p) and abs(a) < 2.0**996 and abs(b) < 2.0**996):
        return _dn(p), _up(p)
    _, e = _two_prod(a, b)
    return _bracket(p, e)


def _div_iv(a, b):
    q = a / b
    if a == 0.0:
        return 0.0, 0.0
    if not (_safe(a, b, q) and q != 0.0):
        return _dn(q), _up(q)
    # sign of q - a/b equals sign((q b - a) / b); q b - a = (p - a) + e exactly
    p, e = _two_prod(q, b)
    r = (p - a) + e
    if r == 0.0:
        return q, q
    return (_dn(q), q) if (r > 0) == (b > 0) else (q, _up(q))


def _sqrt_iv(x):
    s = math.sqrt(x)
    if x == 0.0:
        return 0.0, 0.0
    if not _safe(x, s):
        return max(_dn(s), 0.0), _up(s)
    p, e = _two_prod(s, s)
    r = (p - x) + e
    if r == 0.0:
        return s, s
    return (max(_dn(s), 0.0), s) if r > 0 else (s, _up(s))


def _finite(*xs):
    for x in xs:
        if not math.isfinite(x):
            raise Overflow("interval endpoint left the binary64 range")


def gamma_up(n: int) -> float:
    """Upper bound of ``n u / (1 - n u)`` with unit roundoff ``u = 2**-53``."""
    g = n * _U
    if g >= 0.5:
        raise Overflow("accumulation too long for the gamma bound")
    return _up(_up(g / _dn(1.0 - g)) * (1.0 + 1e-9))


def _enclose_fraction(q: Fraction) -> tuple[float, float]:
    x = float(q)
    if Fraction(x) == q:
        return x, x
    return (_dn(x), x) if Fraction(x) > q else (x, _up(x))


# ---------------------------------------------------------------- scalars
@dataclass(frozen=True)
class RigorousReal:
    """Closed interval ``[lo, hi]`` of binary64 numbers."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("NaN endpoint")
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        _finite(lo, hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    # constructors
    @classmethod
    def point(cls, x) -> "RigorousReal":
        """Enclosure of a number.  Floats and ints are exact, Fractions and
        decimal strings are enclosed tightly."""
        if isinstance(x, RigorousReal):
            return x
        if isinstance(x, str):
            x = Fraction(x)
        if isinstance(x, Fraction):
            return cls(*_enclose_fraction(x))
        if isinstance(x, int) and not float(x) == x:
            return cls(*_enclose_fraction(Fraction(x)))
        x = float(x)
        return cls(x, x)

    @classmethod
    def hull(cls, *xs) -> "RigorousReal":
        xs = [cls.point(x) for x in xs]
        return cls(min(x.lo for x in xs), max(x.hi for x in xs))

    # queries
    @property
    def mid(self) -> float:
        return 0.5 * self.lo + 0.5 * self.hi

    @property
    def rad(self) -> float:
        m = self.mid
        return _up(max(self.hi - m, m - self.lo))

    @property
    def width(self) -> float:
        return _up(self.hi - self.lo)

    def contains(self, x) -> bool:
        if isinstance(x, RigorousReal):
            return self.lo <= x.lo and x.hi <= self.hi
        q = Fraction(x) if not isinstance(x, Fraction) else x
        return Fraction(self.lo) <= q <= Fraction(self.hi)

    def overlaps(self, other) -> bool:
        other = RigorousReal.point(other)
        return self.lo <= other.hi and other.lo <= self.hi

    def is_point(self) -> bool:
        return self.lo == self.hi

    # arithmetic
    def __neg__(self):
        return RigorousReal(-self.hi, -self.lo)

    def __add__(self, other):
        other = _as_real(other)
        if other is NotImplemented:
            return other
        lo, hi = _add_iv(self.lo, other.lo)[0], _add_iv(self.hi, other.hi)[1]
        _finite(lo, hi)
        return RigorousReal(lo, hi)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_real(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return _as_real(other) - self

    def __mul__(self, other):
        other = _as_real(other)
        if other is NotImplemented:
            return other
        p = [_mul_iv(x, y) for x in (self.lo, self.hi) for y in (other.lo, other.hi)]
        if any(math.isnan(v) for q in p for v in q):
            raise Overflow("undefined product")
        lo, hi = min(q[0] for q in p), max(q[1] for q in p)
        _finite(lo, hi)
        return RigorousReal(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_real(other)
        if other is NotImplemented:
            return other
        if other.lo <= 0.0 <= other.hi:
            raise DivisionByZeroInterval("divisor interval contains 0")
        q = [_div_iv(x, y) for x in (self.lo, self.hi) for y in (other.lo, other.hi)]
        lo, hi = min(v[0] for v in q), max(v[1] for v in q)
        _finite(lo, hi)
        return RigorousReal(lo, hi)

    def __rtruediv__(self, other):
        return _as_real(other) / self

    def sqrt(self) -> "RigorousReal":
        if self.lo < 0.0:
            raise DomainError("sqrt of an interval with negative lower endpoint")
        return RigorousReal(_sqrt_iv(self.lo)[0], _sqrt_iv(self.hi)[1])

    def sqr(self) -> "RigorousReal":
        a, b = abs(self.lo), abs(self.hi)
        lo = 0.0 if self.lo <= 0.0 <= self.hi else _mul_iv(min(a, b), min(a, b))[0]
        hi = _mul_iv(max(a, b), max(a, b))[1]
        _finite(hi)
        return RigorousReal(max(lo, 0.0), hi)

    def __abs__(self):
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return RigorousReal(0.0, max(-self.lo, self.hi))

    def max(self, other) -> "RigorousReal":
        other = _as_real(other)
        return RigorousReal(max(self.lo, other.lo), max(self.hi, other.hi))

    def min(self, other) -> "RigorousReal":
        other = _as_real(other)
        return RigorousReal(min(self.lo, other.lo), min(self.hi, other.hi))

    # comparisons are certain-or-false
    def __lt__(self, other):
        return self.hi < _as_real(other).lo

    def __gt__(self, other):
        return self.lo > _as_real(other).hi

    def __le__(self, other):
        return self.hi <= _as_real(other).lo

    def __ge__(self, other):
        return self.lo >= _as_real(other).hi

    def to_json(self) -> list:
        return [to_hex(self.lo), to_hex(self.hi)]

    @classmethod
    def from_json(cls, pair) -> "RigorousReal":
        return cls(from_hex(pair[0]), from_hex(pair[1]))

    def __repr__(self):
        return f"RigorousReal([{self.lo!r}, {self.hi!r}])"


def _as_real(x):
    if isinstance(x, RigorousReal):
        return x
    if isinstance(x, (Real, Fraction, np.floating, np.integer)):
        return RigorousReal.point(x)
    return NotImplemented


def sqrt(a: RigorousReal) -> RigorousReal:
    """Square root enclosure; raises :class:`DomainError` if ``a.lo < 0``."""
    return RigorousReal.point(a).sqrt()


def rmax(a, b) -> RigorousReal:
    """Endpoint-wise maximum of two intervals."""
    return RigorousReal.point(a).max(b)


@dataclass(frozen=True)
class RigorousComplex:
    """Rectangular enclosure ``re + i im``."""

    re: RigorousReal
    im: RigorousReal

    @classmethod
    def point(cls, z) -> "RigorousComplex":
        if isinstance(z, RigorousComplex):
            return z
        if isinstance(z, RigorousReal):
            return cls(z, RigorousReal(0.0, 0.0))
        if isinstance(z, tuple):
            return cls(RigorousReal.point(z[0]), RigorousReal.point(z[1]))
        z = complex(z)
        return cls(RigorousReal.point(z.real), RigorousReal.point(z.imag))

    @property
    def mid(self) -> complex:
        return complex(self.re.mid, self.im.mid)

    def contains(self, z) -> bool:
        if isinstance(z, RigorousComplex):
            return self.re.contains(z.re) and self.im.contains(z.im)
        if isinstance(z, tuple):
            return self.re.contains(z[0]) and self.im.contains(z[1])
        z = complex(z)
        return self.re.contains(z.real) and self.im.contains(z.imag)

    def overlaps(self, other) -> bool:
        other = RigorousComplex.point(other)
        return self.re.overlaps(other.re) and self.im.overlaps(other.im)

    def conj(self) -> "RigorousComplex":
        return RigorousComplex(self.re, -self.im)

    def __neg__(self):
        return RigorousComplex(-self.re, -self.im)

    def __add__(self, other):
        other = _as_complex(other)
        if other is NotImplemented:
            return other
        return RigorousComplex(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_complex(other)
        if other is NotImplemented:
            return other
        return RigorousComplex(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return _as_complex(other) - self

    def __mul__(self, other):
        other = _as_complex(other)
        if other is NotImplemented:
            return other
        a, b, c, d = self.re, self.im, other.re, other.im
        return RigorousComplex(a * c - b * d, a * d + b * c)

    __rmul__ = __mul__

    def abs2(self) -> RigorousReal:
        s = self.re.sqr() + self.im.sqr()
        return RigorousReal(max(s.lo, 0.0), s.hi)

    def __truediv__(self, other):
        other = _as_complex(other)
        if other is NotImplemented:
            return other
        den = other.abs2()
        if den.lo <= 0.0:
            raise DivisionByZeroInterval("complex divisor interval contains 0")
        num = self * other.conj()
        return RigorousComplex(num.re / den, num.im / den)

    def __rtruediv__(self, other):
        return _as_complex(other) / self

    def __abs__(self) -> RigorousReal:
        return self.abs2().sqrt()

    def to_json(self) -> list:
        return [self.re.to_json(), self.im.to_json()]

    def __repr__(self):
        return f"RigorousComplex({self.re!r}, {self.im!r})"


def _as_complex(x):
    if isinstance(x, RigorousComplex):
        return x
    if isinstance(x, RigorousReal):
        return RigorousComplex.point(x)
    if isinstance(x, (Real, complex, Fraction, np.number)):
        return RigorousComplex.point(x)
    return NotImplemented


# ---------------------------------------------------------------- arrays
def _adn(x):
    return np.nextafter(x, -np.inf)


def _aup(x):
    return np.nextafter(x, np.inf)


def _asum_dn(a, b):
    """Lower bound of ``a + b``: the rounded sum, nudged only if inexact."""
    with np.errstate(invalid="ignore", over="ignore"):
        s = a + b
        bb = s - a
        e = (a - (s - bb)) + (b - bb)
    return np.where((e < 0) | ~np.isfinite(s), _adn(s), s)


def _asum_up(a, b):
    with np.errstate(invalid="ignore", over="ignore"):
        s = a + b
        bb = s - a
        e = (a - (s - bb)) + (b - bb)
    return np.where((e > 0) | ~np.isfinite(s), _aup(s), s)


def _imul(alo, ahi, blo, bhi):
    """Unrounded min/max of the four endpoint products."""
    p1 = alo * blo
    p2 = alo * bhi
    p3 = ahi * blo
    p4 = ahi * bhi
    return np.minimum(np.minimum(p1, p2), np.minimum(p3, p4)), np.maximum(
        np.maximum(p1, p2), np.maximum(p3, p4)
    )


def _pmul(alo, ahi, c):
    """Interval times point array ``c`` (unrounded)."""
    p1 = alo * c
    p2 = ahi * c
    return np.minimum(p1, p2), np.maximum(p1, p2)


def _is_pow2_scalar(c) -> bool:
    if not isinstance(c, (int, float, np.integer, np.floating)) or c == 0:
        return False
    m, _ = math.frexp(abs(float(c)))
    return m == 0.5


class IArray:
    """Array of real intervals stored as two float64 arrays."""

    __slots__ = ("lo", "hi")
    __array_priority__ = 1000

    def __init__(self, lo, hi=None):
        lo = np.asarray(lo, dtype=float)
        hi = lo if hi is None else np.asarray(hi, dtype=float)
        self.lo, self.hi = np.broadcast_arrays(lo, hi)
        if self.lo.base is not None or self.hi.base is not None:
            self.lo, self.hi = self.lo.copy(), self.hi.copy()

    @classmethod
    def zeros(cls, shape) -> "IArray":
        return cls(np.zeros(shape), np.zeros(shape))

    @property
    def shape(self):
        return self.lo.shape

    def __len__(self):
        return len(self.lo)

    def __getitem__(self, idx) -> "IArray":
        return IArray(self.lo[idx], self.hi[idx])

    def __setitem__(self, idx, val):
        val = _as_iarray(val)
        self.lo[idx] = val.lo
        self.hi[idx] = val.hi

    def copy(self):
        return IArray(self.lo.copy(), self.hi.copy())

    def scalar(self, idx=()) -> RigorousReal:
        return RigorousReal(float(self.lo[idx]), float(self.hi[idx]))

    @property
    def mid(self):
        return 0.5 * self.lo + 0.5 * self.hi

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (self.lo <= x) & (x <= self.hi)

    def check_finite(self):
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise Overflow("interval endpoint left the binary64 range")
        return self

    def __neg__(self):
        return IArray(-self.hi, -self.lo)

    def __add__(self, other):
        o = _as_iarray(other)
        return IArray(_asum_dn(self.lo, o.lo), _asum_up(self.hi, o.hi))

    __radd__ = __add__

    def __sub__(self, other):
        o = _as_iarray(other)
        return IArray(_asum_dn(self.lo, -o.hi), _asum_up(self.hi, -o.lo))

    def __rsub__(self, other):
        return _as_iarray(other) - self

    def __mul__(self, other):
        if _is_pow2_scalar(other):
            c = float(other)
            return IArray(self.lo * c, self.hi * c) if c > 0 else IArray(self.hi * c, self.lo * c)
        if isinstance(other, IArray):
            lo, hi = _imul(self.lo, self.hi, other.lo, other.hi)
            zero = ((self.lo == 0) & (self.hi == 0)) | ((other.lo == 0) & (other.hi == 0))
        else:
            c = np.asarray(other, dtype=float)
            lo, hi = _pmul(self.lo, self.hi, c)
            zero = (c == 0) | ((self.lo == 0) & (self.hi == 0))
        lo, hi = _adn(lo), _aup(hi)
        if np.any(zero):
            lo, hi = np.where(zero, 0.0, lo), np.where(zero, 0.0, hi)
        return IArray(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _as_iarray(other)
        if np.any((o.lo <= 0) & (o.hi >= 0)):
            raise DivisionByZeroInterval("divisor interval contains 0")
        q = (self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi)
        lo = np.minimum(np.minimum(q[0], q[1]), np.minimum(q[2], q[3]))
        hi = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
        return IArray(_adn(lo), _aup(hi))

    def __rtruediv__(self, other):
        return _as_iarray(other) / self

    def sqrt(self):
        if np.any(self.lo < 0):
            raise DomainError("sqrt of an interval with negative lower endpoint")
        hi = np.sqrt(self.hi)
        return IArray(np.maximum(_adn(np.sqrt(self.lo)), 0.0), np.where(hi == 0, 0.0, _aup(hi)))

    def sqr(self):
        a, b = np.abs(self.lo), np.abs(self.hi)
        straddle = (self.lo <= 0) & (self.hi >= 0)
        lo = np.where(straddle, 0.0, np.maximum(_adn(np.minimum(a, b) ** 2), 0.0))
        m = np.maximum(a, b)
        return IArray(lo, np.where(m == 0, 0.0, _aup(m**2)))

    def __abs__(self):
        straddle = (self.lo <= 0) & (self.hi >= 0)
        a, b = np.abs(self.lo), np.abs(self.hi)
        return IArray(np.where(straddle, 0.0, np.minimum(a, b)), np.maximum(a, b))

    def maximum(self, other):
        o = _as_iarray(other)
        return IArray(np.maximum(self.lo, o.lo), np.maximum(self.hi, o.hi))

    def max(self, axis=None) -> "IArray":
        return IArray(np.max(self.lo, axis=axis), np.max(self.hi, axis=axis))

    def sum(self, axis=None) -> "IArray":
        return IArray(rsum_lower(self.lo, axis), rsum_upper(self.hi, axis))

    def __repr__(self):
        return f"IArray(shape={self.shape})"


def _as_iarray(x) -> IArray:
    if isinstance(x, IArray):
        return x
    if isinstance(x, RigorousReal):
        return IArray(x.lo, x.hi)
    return IArray(np.asarray(x, dtype=float))


def rsum_upper(x, axis=None):
    """Upper bound of the exact sum of the float array ``x`` along ``axis``."""
    x = np.asarray(x, dtype=float)
    n = x.size if axis is None else x.shape[axis]
    if n == 0:
        return np.zeros(()) if axis is None else np.zeros(np.delete(x.shape, axis))
    s = np.sum(x, axis=axis)
    if n == 1:
        return s
    a = np.sum(np.abs(x), axis=axis)
    e = _aup(a * gamma_up(n + 1)) + n * _ETA
    return _aup(_aup(s + e))


def rsum_lower(x, axis=None):
    """Lower bound of the exact sum of the float array ``x`` along ``axis``."""
    return -rsum_upper(-np.asarray(x, dtype=float), axis)


class CIArray:
    """Array of rectangular complex intervals.

    Stored as four float64 arrays ``rlo, rhi, ilo, ihi``.  Arithmetic with
    plain numbers or numpy arrays treats them as exact points.
    """

    __slots__ = ("rlo", "rhi", "ilo", "ihi")
    __array_priority__ = 1000

    def __init__(self, rlo, rhi, ilo, ihi):
        self.rlo = np.asarray(rlo, dtype=float)
        self.rhi = np.asarray(rhi, dtype=float)
        self.ilo = np.asarray(ilo, dtype=float)
        self.ihi = np.asarray(ihi, dtype=float)

    # construction
    @classmethod
    def point(cls, z) -> "CIArray":
        z = np.asarray(z)
        re = np.array(z.real, dtype=float)
        im = np.array(z.imag, dtype=float) if np.iscomplexobj(z) else np.zeros(z.shape)
        return cls(re, re.copy(), im, im.copy())

    @classmethod
    def zeros(cls, shape) -> "CIArray":
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_parts(cls, re: IArray, im: IArray) -> "CIArray":
        return cls(re.lo, re.hi, im.lo, im.hi)

    @classmethod
    def stack(cls, items, axis=0) -> "CIArray":
        items = [as_ciarray(x) for x in items]
        return cls(*(np.stack([getattr(x, f) for x in items], axis=axis) for f in cls.__slots__))

    # array protocol
    @property
    def shape(self):
        return self.rlo.shape

    @property
    def ndim(self):
        return self.rlo.ndim

    @property
    def size(self):
        return self.rlo.size

    def __len__(self):
        return len(self.rlo)

    def __getitem__(self, idx) -> "CIArray":
        return CIArray(self.rlo[idx], self.rhi[idx], self.ilo[idx], self.ihi[idx])

    def __setitem__(self, idx, val):
        val = as_ciarray(val)
        self.rlo[idx] = val.rlo
        self.rhi[idx] = val.rhi
        self.ilo[idx] = val.ilo
        self.ihi[idx] = val.ihi

    def reshape(self, *shape) -> "CIArray":
        return CIArray(*(getattr(self, f).reshape(*shape) for f in self.__slots__))

    def transpose(self, *axes) -> "CIArray":
        return CIArray(*(getattr(self, f).transpose(*axes) for f in self.__slots__))

    def copy(self) -> "CIArray":
        return CIArray(*(getattr(self, f).copy() for f in self.__slots__))

    def flip(self, axis=None) -> "CIArray":
        return CIArray(*(np.flip(getattr(self, f), axis) for f in self.__slots__))

    @property
    def real(self) -> IArray:
        return IArray(self.rlo, self.rhi)

    @property
    def imag(self) -> IArray:
        return IArray(self.ilo, self.ihi)

    @property
    def mid(self) -> np.ndarray:
        return (0.5 * self.rlo + 0.5 * self.rhi) + 1j * (0.5 * self.ilo + 0.5 * self.ihi)

    def rad(self):
        """``(mid, rad_re, rad_im)``: midpoints and componentwise radii bounding the distance to them."""
        m = self.mid
        rr = _aup(np.maximum(self.rhi - m.real, m.real - self.rlo))
        ri = _aup(np.maximum(self.ihi - m.imag, m.imag - self.ilo))
        return m, rr, ri

    def width(self):
        return np.maximum(_aup(self.rhi - self.rlo), _aup(self.ihi - self.ilo))

    def scalar(self, idx=()) -> RigorousComplex:
        return RigorousComplex(
            RigorousReal(float(self.rlo[idx]), float(self.rhi[idx])),
            RigorousReal(float(self.ilo[idx]), float(self.ihi[idx])),
        )

    def contains(self, z):
        z = np.asarray(z)
        return (self.rlo <= z.real) & (z.real <= self.rhi) & (self.ilo <= z.imag) & (z.imag <= self.ihi)

    def contains_zero(self):
        return (self.rlo <= 0) & (self.rhi >= 0) & (self.ilo <= 0) & (self.ihi >= 0)

    def overlaps(self, other):
        o = as_ciarray(other)
        return (self.rlo <= o.rhi) & (o.rlo <= self.rhi) & (self.ilo <= o.ihi) & (o.ilo <= self.ihi)

    def is_zero(self):
        return (self.rlo == 0) & (self.rhi == 0) & (self.ilo == 0) & (self.ihi == 0)

    def any_nonzero(self) -> bool:
        return bool(np.any(self.rlo) or np.any(self.rhi) or np.any(self.ilo) or np.any(self.ihi))

    def check_finite(self):
        for f in self.__slots__:
            if not np.all(np.isfinite(getattr(self, f))):
                raise Overflow("interval endpoint left the binary64 range")
        return self

    # exact operations
    def __neg__(self):
        return CIArray(-self.rhi, -self.rlo, -self.ihi, -self.ilo)

    def conj(self) -> "CIArray":
        return CIArray(self.rlo, self.rhi, -self.ihi, -self.ilo)

    def mul_i(self) -> "CIArray":
        """Multiply by the imaginary unit (exact)."""
        return CIArray(-self.ihi, -self.ilo, self.rlo, self.rhi)

    def mul_unit(self, k) -> "CIArray":
        """Multiply by ``i**k`` elementwise (exact); ``k`` may be an int array."""
        k = np.mod(np.asarray(k), 4)
        if k.ndim == 0:
            out = self
            for _ in range(int(k)):
                out = out.mul_i()
            return out
        r0 = self
        r1 = r0.mul_i()
        r2 = -r0
        r3 = -r1
        out = r0.copy()
        for kk, r in ((1, r1), (2, r2), (3, r3)):
            sel = np.broadcast_to(k == kk, self.shape)
            for f in self.__slots__:
                getattr(out, f)[sel] = getattr(r, f)[sel]
        return out

    def scale2(self, c: float) -> "CIArray":
        """Multiply by a power of two (exact barring under/overflow)."""
        if c > 0:
            return CIArray(self.rlo * c, self.rhi * c, self.ilo * c, self.ihi * c)
        return CIArray(self.rhi * c, self.rlo * c, self.ihi * c, self.ilo * c)

    # rounded operations
    def __add__(self, other):
        o = as_ciarray(other)
        return CIArray(
            _adn(self.rlo + o.rlo), _aup(self.rhi + o.rhi), _adn(self.ilo + o.ilo), _aup(self.ihi + o.ihi)
        )

    __radd__ = __add__

    def __sub__(self, other):
        o = as_ciarray(other)
        return CIArray(
            _adn(self.rlo - o.rhi), _aup(self.rhi - o.rlo), _adn(self.ilo - o.ihi), _aup(self.ihi - o.ilo)
        )

    def __rsub__(self, other):
        return as_ciarray(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)) and not isinstance(other, bool):
            z = complex(other)
            if z.imag == 0 and _is_pow2_scalar(z.real):
                return self.scale2(z.real)
            if z.real == 0 and _is_pow2_scalar(z.imag):
                return self.mul_i().scale2(z.imag)
        if isinstance(other, IArray):
            rl, rh = _imul(self.rlo, self.rhi, other.lo, other.hi)
            il, ih = _imul(self.ilo, self.ihi, other.lo, other.hi)
            return CIArray(_adn(rl), _aup(rh), _adn(il), _aup(ih))
        if isinstance(other, (RigorousReal,)):
            return self * IArray(other.lo, other.hi)
        if isinstance(other, RigorousComplex):
            other = CIArray(other.re.lo, other.re.hi, other.im.lo, other.im.hi)
        if isinstance(other, CIArray):
            return _cmul(self, other)
        z = np.asarray(other)
        if not np.iscomplexobj(z):
            z = z.astype(float)
            rl, rh = _pmul(self.rlo, self.rhi, z)
            il, ih = _pmul(self.ilo, self.ihi, z)
            return CIArray(_adn(rl), _aup(rh), _adn(il), _aup(ih))
        c, d = z.real, z.imag
        acl, ach = _pmul(self.rlo, self.rhi, c)
        bdl, bdh = _pmul(self.ilo, self.ihi, d)
        adl, adh = _pmul(self.rlo, self.rhi, d)
        bcl, bch = _pmul(self.ilo, self.ihi, c)
        acl, ach, bdl, bdh = _adn(acl), _aup(ach), _adn(bdl), _aup(bdh)
        adl, adh, bcl, bch = _adn(adl), _aup(adh), _adn(bcl), _aup(bch)
        return CIArray(_adn(acl - bdh), _aup(ach - bdl), _adn(adl + bcl), _aup(adh + bch))

    __rmul__ = __mul__

    def abs2(self) -> IArray:
        s = self.real.sqr() + self.imag.sqr()
        return IArray(np.maximum(s.lo, 0.0), s.hi)

    def __abs__(self) -> IArray:
        return self.abs2().sqrt()

    def abs_upper(self) -> np.ndarray:
        """Elementwise upper bound of the modulus (cheaper than ``abs``)."""
        mr = np.maximum(np.abs(self.rlo), np.abs(self.rhi))
        mi = np.maximum(np.abs(self.ilo), np.abs(self.ihi))
        both = (mr != 0) & (mi != 0)
        return np.where(both, _aup(np.sqrt(_aup(_aup(mr * mr) + _aup(mi * mi)))), np.maximum(mr, mi))

    def abs_lower(self) -> np.ndarray:
        """Elementwise lower bound of the modulus."""
        return abs(self).lo

    def sum(self, axis=None) -> "CIArray":
        return CIArray(
            rsum_lower(self.rlo, axis), rsum_upper(self.rhi, axis), rsum_lower(self.ilo, axis), rsum_upper(self.ihi, axis)
        )

    def __repr__(self):
        return f"CIArray(shape={self.shape})"


def _cmul(a: CIArray, b: CIArray) -> CIArray:
    acl, ach = _imul(a.rlo, a.rhi, b.rlo, b.rhi)
    bdl, bdh = _imul(a.ilo, a.ihi, b.ilo, b.ihi)
    adl, adh = _imul(a.rlo, a.rhi, b.ilo, b.ihi)
    bcl, bch = _imul(a.ilo, a.ihi, b.rlo, b.rhi)
    acl, ach, bdl, bdh = _adn(acl), _aup(ach), _adn(bdl), _aup(bdh)
    adl, adh, bcl, bch = _adn(adl), _aup(adh), _adn(bcl), _aup(bch)
    return CIArray(_adn(acl - bdh), _aup(ach - bdl), _adn(adl + bcl), _aup(adh + bch))


def as_ciarray(x) -> CIArray:
    """Coerce numbers, numpy arrays and scalar enclosures to :class:`CIArray`."""
    if isinstance(x, CIArray):
        return x
    if isinstance(x, RigorousComplex):
        return CIArray(x.re.lo, x.re.hi, x.im.lo, x.im.hi)
    if isinstance(x, RigorousReal):
        return CIArray(x.lo, x.hi, 0.0, 0.0)
    if isinstance(x, IArray):
        return CIArray(x.lo, x.hi, np.zeros(x.shape), np.zeros(x.shape))
    return CIArray.point(x)


# ---------------------------------------------------------------- matrix products
_FLOOR = 2.0**-900


class PointMatrix:
    """A complex point matrix prepared for repeated rigorous products.

    The realified form ``[[Ar, -Ai], [Ai, Ar]]`` and its absolute value are
    built once.
    """

    def __init__(self, A):
        A = np.asarray(A, dtype=complex)
        # entries below the floor are dropped from the product and bounded
        # by a rank-one term instead (subnormal operands make BLAS crawl)
        small = (A != 0) & (np.abs(A) < _FLOOR)
        self.has_small = bool(np.any(small))
        if self.has_small:
            A = np.where(small, 0.0, A)
        self.A = A
        self.m, self.k = A.shape
        Ar, Ai = A.real, A.imag
        self.big = np.block([[Ar, -Ai], [Ai, Ar]])
        self.absbig = np.abs(self.big)

    def enclose(self, B) -> CIArray:
        """Rigorous enclosure of ``A @ B`` for a CIArray or complex ``B``."""
        vec = False
        if isinstance(B, CIArray):
            if B.ndim == 1:
                B = B.reshape(-1, 1)
                vec = True
            mB, rr, ri = B.rad()
            Brad = np.vstack([rr, ri]) if (np.any(rr) or np.any(ri)) else None
        else:
            mB = np.asarray(B, dtype=complex)
            if mB.ndim == 1:
                mB = mB.reshape(-1, 1)
                vec = True
            Brad = None
        Bm = np.vstack([mB.real, mB.imag])
        k = self.big.shape[1]
        # subnormal operands make BLAS crawl: tiny midpoints move into the radius
        tiny = np.abs(Bm) < _FLOOR
        if np.any(tiny):
            extra = np.where(tiny, np.abs(Bm), 0.0)
            Bm = np.where(tiny, 0.0, Bm)
            Brad = extra if Brad is None else _aup(Brad + extra)
        C = self.big @ Bm
        g = gamma_up(k + 2)
        S = _aup(np.abs(Bm) * g)
        if Brad is not None:
            S = _aup(S + Brad)
        S = np.where((S > 0) & (S < _FLOOR), _FLOOR, S)
        T = self.absbig @ S
        rad = _aup(_aup(T * _up(1.0 + 2.0 * g)) + (k + 2) * _TINY)
        if self.has_small:
            mag = np.abs(Bm) if Brad is None else _aup(np.abs(Bm) + Brad)
            col = _aup(_aup(mag.sum(axis=0)) * _up(1.0 + 2.0 * g))
            rad = _aup(rad + _aup(2.0 * _FLOOR * col)[None, :])
        lo, hi = _adn(C - rad), _aup(C + rad)
        m = self.m
        out = CIArray(lo[:m], hi[:m], lo[m:], hi[m:])
        if vec:
            out = out.reshape(-1)
        return out.check_finite()


def matmul_enclose(A, B) -> CIArray:
    """Rigorous enclosure of ``A @ B``.

    Parameters
    ----------
    A : complex ndarray, shape (m, k)
        Exact (point) matrix, typically a numerical inverse.
    B : CIArray or complex ndarray, shape (k,) or (k, n)
        Interval or point right factor.

    Returns
    -------
    CIArray
        Rectangular enclosure of every product entry.

    Notes
    -----
    Uses the a-priori bound ``|fl(A Bm) - A Bm| <= gamma_k |A| |Bm|``, valid
    for any summation order, plus ``|A| rad(B)`` for the interval radius.
    """
    return PointMatrix(A).enclose(B)
