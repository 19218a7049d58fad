"""
Space-time Fourier sequences over Z^4.

A scalar sequence is a dense array whose last four axes run over the
centred box ``|n1| <= Nx1, ..., |n4| <= Nt``; a vector field (SpectralField)
carries an extra leading axis of length 3.  The box is always inferred from
the array shape, so convolution outputs simply grow.

Coefficients are either plain complex numbers (solver profile) or
:class:`~nsorbit.rigor.CIArray` enclosures (rigorous profile).  Every
operation here accepts both.

Conventions
-----------
* ``omega(x, t) = sum_n omega_n exp(i(n~ . x + n4 Omega t))``
* ``(D_l a)_n = n_l a_n`` (no factor ``i``)
* ``(a * b)_n = sum_k a_k b_{n-k}``
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

from . import rigor
from .errors import Overflow
from .rigor import CIArray, IArray, RigorousReal, from_hex, to_hex

__all__ = [
    "SupportBox",
    "box_of",
    "wavenumbers",
    "zeros",
    "embed",
    "truncate",
    "partial",
    "convolve",
    "advect",
    "biot_savart",
    "curl",
    "divergence",
    "weights",
    "norm",
    "save_field",
    "load_field",
    "field_from_modes",
    "field_to_modes",
]


# ---------------------------------------------------------------- boxes
@dataclass(frozen=True)
class SupportBox:
    """Rectangular index set ``|n1|<=Nx1, |n2|<=Nx2, |n3|<=Nx3, |n4|<=Nt``."""

    Nx1: int
    Nx2: int
    Nx3: int
    Nt: int

    def __post_init__(self):
        for v in self.as_tuple():
            if int(v) != v or v < 0:
                raise ValueError(f"box extents must be non-negative integers, got {self}")

    def as_tuple(self):
        return (self.Nx1, self.Nx2, self.Nx3, self.Nt)

    @property
    def shape(self):
        return tuple(2 * int(v) + 1 for v in self.as_tuple())

    @classmethod
    def from_shape(cls, shape) -> "SupportBox":
        shape = tuple(shape)[-4:]
        if any(s % 2 == 0 for s in shape):
            raise ValueError(f"mode axes must have odd length, got {shape}")
        return cls(*((s - 1) // 2 for s in shape))

    def __add__(self, other: "SupportBox") -> "SupportBox":
        return SupportBox(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def union(self, other: "SupportBox") -> "SupportBox":
        return SupportBox(*(max(a, b) for a, b in zip(self.as_tuple(), other.as_tuple())))

    def contains(self, n) -> bool:
        return all(abs(int(a)) <= b for a, b in zip(n, self.as_tuple()))

    def center(self):
        return self.as_tuple()

    def to_json(self):
        return dict(Nx1=self.Nx1, Nx2=self.Nx2, Nx3=self.Nx3, Nt=self.Nt)


def box_of(a) -> SupportBox:
    """Box spanned by the last four axes of ``a``."""
    return SupportBox.from_shape(a.shape)


def wavenumbers(box: SupportBox, sparse=True):
    """Integer grids ``(n1, n2, n3, n4)`` over ``box``, broadcastable."""
    axes = [np.arange(-b, b + 1) for b in box.as_tuple()]
    return np.meshgrid(*axes, indexing="ij", sparse=sparse)


def _kind_zeros(a, shape):
    if isinstance(a, CIArray):
        return CIArray.zeros(shape)
    return np.zeros(shape, dtype=complex)


def zeros(box: SupportBox, ncomp=3, rigorous=False):
    shape = ((ncomp,) if ncomp else ()) + box.shape
    return CIArray.zeros(shape) if rigorous else np.zeros(shape, dtype=complex)


def _centre_slices(inner: SupportBox, outer: SupportBox):
    return tuple(slice(o - i, o + i + 1) for i, o in zip(inner.as_tuple(), outer.as_tuple()))


def embed(a, box: SupportBox):
    """Zero-pad ``a`` to the (larger or equal) ``box``."""
    inner = box_of(a)
    if inner == box:
        return a
    if any(i > o for i, o in zip(inner.as_tuple(), box.as_tuple())):
        raise ValueError(f"cannot embed {inner} into {box}")
    out = _kind_zeros(a, a.shape[:-4] + box.shape)
    out[(Ellipsis,) + _centre_slices(inner, box)] = a
    return out


def truncate(a, box: SupportBox):
    """Restrict ``a`` to the (smaller or equal) ``box``; outside modes are dropped."""
    outer = box_of(a)
    if outer == box:
        return a
    return a[(Ellipsis,) + _centre_slices(box, outer)]


def resize(a, box: SupportBox):
    """Embed or truncate axis by axis."""
    cur = box_of(a)
    common = SupportBox(*(min(x, y) for x, y in zip(cur.as_tuple(), box.as_tuple())))
    return embed(truncate(a, common), box)


# ---------------------------------------------------------------- operators
def partial(l: int, a):
    """``D_l``: multiply each coefficient by ``n_l`` (``l`` in 1..4)."""
    if l not in (1, 2, 3, 4):
        raise ValueError("l must be one of 1, 2, 3, 4")
    box = box_of(a)
    if box.as_tuple()[l - 1] == 0:
        return _kind_zeros(a, a.shape)
    nl = wavenumbers(box)[l - 1]
    if isinstance(a, CIArray):
        return a * nl.astype(float)
    return a * nl


def _is_zero(a) -> bool:
    if isinstance(a, CIArray):
        return not a.any_nonzero()
    return not np.any(a)


def _conv_float(a, b, method):
    if method == "fft":
        return signal.fftconvolve(a, b)
    return _direct_conv(a, b)


def _direct_conv(x, y):
    """Full N-d convolution by shift-and-add over the nonzeros of the sparser operand.

    Every output entry is a plain sum of products, so the usual dot-product
    error bound applies whatever the loop order.
    """
    if np.count_nonzero(x) > np.count_nonzero(y):
        x, y = y, x
    shape = tuple(a + b - 1 for a, b in zip(x.shape, y.shape))
    out = np.zeros(shape, dtype=np.result_type(x, y))
    for idx in zip(*np.nonzero(x)):
        sl = tuple(slice(i, i + n) for i, n in zip(idx, y.shape))
        out[sl] += x[idx] * y
    return out


def _l1(z):
    """Upper bound of ``|Re z| + |Im z|`` elementwise."""
    return np.nextafter(np.abs(z.real) + np.abs(z.imag), np.inf)


def _conv_nonneg_upper(x, y):
    """Upper bound of the exact convolution of two non-negative arrays."""
    c = _direct_conv(x, y)
    k = min(np.count_nonzero(x), np.count_nonzero(y))
    g = rigor.gamma_up(k + 1)
    return np.nextafter(c * (1.0 + 2.0 * g) + (k + 2) * 2.0**-1022, np.inf)


def _conv_rigorous(a, b):
    if not isinstance(a, CIArray):
        a = CIArray.point(a)
    if not isinstance(b, CIArray):
        b = CIArray.point(b)
    am, arr, ari = a.rad()
    bm, brr, bri = b.rad()
    mid = _direct_conv(am, bm)
    la, lb = _l1(am), _l1(bm)
    ra = np.nextafter(arr + ari, np.inf)
    rb = np.nextafter(brr + bri, np.inf)
    # exactly-zero terms add no rounding; realified products double the length
    k = min(np.count_nonzero(la + ra), np.count_nonzero(lb + rb))
    g = rigor.gamma_up(2 * k + 2)
    rad = _aup(_conv_nonneg_upper(la, lb) * g)
    if np.any(ra) or np.any(rb):
        rad = _aup(rad + _conv_nonneg_upper(ra, _aup(lb + rb)))
        rad = _aup(rad + _conv_nonneg_upper(la, rb))
    rad = _aup(rad * (1.0 + 4 * 2.0**-52))
    out = CIArray(
        np.nextafter(mid.real - rad, -np.inf),
        np.nextafter(mid.real + rad, np.inf),
        np.nextafter(mid.imag - rad, -np.inf),
        np.nextafter(mid.imag + rad, np.inf),
    )
    return out.check_finite()


def _aup(x):
    return np.nextafter(x, np.inf)


def convolve(a, b, method="direct"):
    """Discrete convolution of two scalar sequences.

    The result lives on the box ``box(a) + box(b)``.  For interval inputs
    the midpoint convolution is evaluated directly and enclosed with the
    a-priori dot-product error bound ``gamma_k |a| * |b|`` plus the
    propagated radii, so the cost is a handful of real direct convolutions.

    Parameters
    ----------
    a, b : complex ndarray or CIArray
        Sequences indexed by the last four axes.
    method : {"direct", "fft"}
        Float profile only; ``"fft"`` is faster but not rigorous.
    """
    box = box_of(a) + box_of(b)
    rig = isinstance(a, CIArray) or isinstance(b, CIArray)
    if _is_zero(a) or _is_zero(b):
        return zeros(box, ncomp=0, rigorous=rig)
    if rig:
        return _conv_rigorous(a, b)
    return _conv_float(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex), method)


def _add(x, y):
    if x is None:
        return y
    return x + y


def advect(a, b, method="direct"):
    """``[(a . D~) b]^(l) = sum_m a^(m) * D_m b^(l)`` for 3-component fields."""
    box = box_of(a) + box_of(b)
    rig = isinstance(a, CIArray) or isinstance(b, CIArray)
    comps = []
    for l in range(3):
        acc = None
        for m in range(3):
            if _is_zero(a[m]):
                continue
            db = partial(m + 1, b[l])
            if _is_zero(db):
                continue
            acc = _add(acc, convolve(a[m], db, method))
        comps.append(zeros(box, 0, rig) if acc is None else acc)
    if rig:
        return CIArray.stack(comps)
    return np.stack(comps)


def cross_matrix(n1, n2, n3):
    """Integer matrix ``S`` with ``S w = n~ x w``; broadcasts over arrays.

    The operator ``M_n`` equals ``(i / |n~|^2) S``.
    """
    n1, n2, n3 = np.broadcast_arrays(np.asarray(n1), np.asarray(n2), np.asarray(n3))
    S = np.zeros((3, 3) + n1.shape, dtype=np.int64)
    S[0, 1], S[0, 2] = -n3, n2
    S[1, 0], S[1, 2] = n3, -n1
    S[2, 0], S[2, 1] = -n2, n1
    return S


def inv_nsq(box: SupportBox, rigorous=False):
    """``1/|n~|^2`` over ``box`` with zero at ``n~ = 0``."""
    n1, n2, n3, _ = wavenumbers(box)
    nsq = (n1**2 + n2**2 + n3**2).astype(float)
    nsq = np.broadcast_to(nsq, box.shape).copy()
    zero = nsq == 0
    nsq[zero] = 1.0
    if rigorous:
        inv = 1.0 / IArray(nsq)
        inv.lo[zero] = 0.0
        inv.hi[zero] = 0.0
        return inv
    inv = 1.0 / nsq
    inv[zero] = 0.0
    return inv


def biot_savart(w):
    """Apply ``M_n = (i/|n~|^2) [n~]_x`` modewise; zero on all ``n~ = 0`` modes."""
    box = box_of(w)
    n1, n2, n3, _ = wavenumbers(box)
    cr = _cross(w, n1, n2, n3)
    if isinstance(w, CIArray):
        inv = inv_nsq(box, rigorous=True)
        return CIArray.stack([(c * inv).mul_i() for c in cr])
    inv = inv_nsq(box)
    return 1j * inv * np.stack(cr)


def _cross(w, n1, n2, n3):
    """Components of ``n~ x w`` (no factor ``i``)."""
    f = (lambda n: n.astype(float)) if isinstance(w, CIArray) else (lambda n: n)
    n1, n2, n3 = f(n1), f(n2), f(n3)
    return [w[2] * n2 - w[1] * n3, w[0] * n3 - w[2] * n1, w[1] * n1 - w[0] * n2]


def curl(a):
    """Fourier curl ``(curl a)_n = i n~ x a_n``."""
    box = box_of(a)
    n1, n2, n3, _ = wavenumbers(box)
    cr = _cross(a, n1, n2, n3)
    if isinstance(a, CIArray):
        return CIArray.stack([c.mul_i() for c in cr])
    return 1j * np.stack(cr)


def divergence(a):
    """Fourier divergence ``(div a)_n = i n~ . a_n``."""
    d = None
    for l in range(3):
        t = partial(l + 1, a[l])
        d = _add(d, t)
    if isinstance(a, CIArray):
        return d.mul_i()
    return 1j * d


# ---------------------------------------------------------------- norms
NORM_KINDS = ("plain", "minus21", "minus11", "minus10")


def weights(box: SupportBox, kind="plain", eta=1.0):
    """Upper bounds of the norm weights over ``box``.

    ``plain`` is ``eta^|n|_1``; the other kinds divide by
    ``max(|n~|_inf^2, |n4|)``, ``|n|_inf`` or ``|n~|_inf``.  Modes where the
    divisor vanishes get weight ``inf`` (such coefficients must be zero).
    """
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}")
    n1, n2, n3, n4 = wavenumbers(box, sparse=False)
    l1 = np.abs(n1) + np.abs(n2) + np.abs(n3) + np.abs(n4)
    if eta == 1.0:
        w = np.ones(box.shape)
    else:
        w = _aup(_aup(float(eta) ** l1.astype(float)) * (1 + 2.0**-50))
    if kind == "plain":
        return w
    sinf = np.maximum(np.maximum(np.abs(n1), np.abs(n2)), np.abs(n3))
    if kind == "minus21":
        div = np.maximum(sinf**2, np.abs(n4))
    elif kind == "minus11":
        div = np.maximum(sinf, np.abs(n4))
    else:
        div = sinf
    with np.errstate(divide="ignore"):
        out = np.where(div > 0, _aup(w / np.maximum(div, 1)), np.inf)
    return out


def norm(a, kind="plain", eta=1.0) -> RigorousReal:
    """Weighted l1 norm ``sum_n |a_n| w_n`` (summed over components too).

    Returns an enclosure whose upper endpoint is a rigorous upper bound.
    """
    box = box_of(a)
    w = weights(box, kind, eta)
    if isinstance(a, CIArray):
        mag_hi = a.abs_upper()
        mag_lo = a.abs_lower()
    else:
        z = np.asarray(a)
        m = np.abs(z)
        mag_hi = _aup(_aup(m) * (1 + 2.0**-51))
        mag_lo = np.maximum(np.nextafter(m * (1 - 2.0**-51), -np.inf), 0.0)
    if not np.any(mag_hi):
        return RigorousReal(0.0, 0.0)
    w = np.broadcast_to(w, mag_hi.shape)
    infw = np.isinf(w)
    if np.any(infw & (mag_hi > 0)):
        raise Overflow("field has support where the norm weight is infinite")
    wf = np.where(infw, 0.0, w)
    hi = rigor.rsum_upper(_aup(mag_hi * wf))
    lo = rigor.rsum_lower(np.maximum(np.nextafter(mag_lo * wf, -np.inf), 0.0))
    return RigorousReal(max(float(lo), 0.0), float(hi))


# ---------------------------------------------------------------- VFLD-1 files
VFLD_VERSION = "VFLD-1"


def field_to_modes(a, tol=0.0):
    """List of ``(n1, n2, n3, n4, m, value)`` for nonzero coefficients; ``m`` is 1-based."""
    box = box_of(a)
    c = box.as_tuple()
    if isinstance(a, CIArray):
        nz = ~a.is_zero()
    else:
        nz = np.abs(np.asarray(a)) > tol
    out = []
    for idx in zip(*np.nonzero(nz)):
        m = int(idx[0]) + 1
        n = tuple(int(i - o) for i, o in zip(idx[1:], c))
        val = a.scalar(idx) if isinstance(a, CIArray) else complex(a[idx])
        out.append(n + (m, val))
    return out


def field_from_modes(modes, box: SupportBox, rigorous=False):
    """Inverse of :func:`field_to_modes`; raises ``ValueError`` on out-of-box modes."""
    out = zeros(box, 3, rigorous)
    c = box.as_tuple()
    for n1, n2, n3, n4, m, val in modes:
        if not box.contains((n1, n2, n3, n4)) or m not in (1, 2, 3):
            raise ValueError(f"mode {(n1, n2, n3, n4, m)} outside box {box}")
        idx = (m - 1, n1 + c[0], n2 + c[1], n3 + c[2], n4 + c[3])
        out[idx] = val
    return out


def save_field(path, omega, Omega, nu, eta=1.0, box=None):
    """Write a VFLD-1 document.  Interval fields are stored as hex pairs."""
    box = box or box_of(omega)
    modes = []
    for n1, n2, n3, n4, m, val in field_to_modes(omega):
        if isinstance(val, rigor.RigorousComplex):
            modes.append([n1, n2, n3, n4, m, val.re.to_json(), val.im.to_json()])
        else:
            modes.append([n1, n2, n3, n4, m, to_hex(val.real), to_hex(val.imag)])
    doc = dict(
        version=VFLD_VERSION,
        eta=float(eta),
        nu=_nu_json(nu),
        omega_hex=to_hex(float(Omega)),
        box=box.to_json(),
        modes=modes,
    )
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def _nu_json(nu):
    if isinstance(nu, (str, Fraction)):
        return str(nu)
    return float(nu)


def load_field(path):
    """Read a VFLD-1 document.

    Returns
    -------
    dict
        keys ``omega`` (complex ndarray or CIArray), ``Omega`` (float),
        ``nu``, ``eta``, ``box``.

    Raises
    ------
    ValueError
        On a wrong version tag or a malformed entry; the message carries the
        offending mode position.
    """
    with open(path) as fh:
        doc = json.load(fh)
    return parse_field(doc)


def parse_field(doc):
    if doc.get("version") != VFLD_VERSION:
        raise ValueError(f"unsupported field version {doc.get('version')!r}")
    try:
        box = SupportBox(**{k: int(doc["box"][k]) for k in ("Nx1", "Nx2", "Nx3", "Nt")})
        Omega = from_hex(doc["omega_hex"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed field header: {exc}") from None
    modes = doc.get("modes", [])
    rigorous = bool(modes) and isinstance(modes[0][5], list)
    parsed = []
    for i, row in enumerate(modes):
        try:
            n1, n2, n3, n4, m = (int(v) for v in row[:5])
            if rigorous:
                re = RigorousReal.from_json(row[5])
                im = RigorousReal.from_json(row[6])
                val = rigor.RigorousComplex(re, im)
            else:
                val = complex(from_hex(row[5]), from_hex(row[6]))
        except (TypeError, ValueError, IndexError) as exc:
            raise ValueError(f"malformed mode entry #{i} {row!r}: {exc}") from None
        parsed.append((n1, n2, n3, n4, m, val))
    omega = field_from_modes(parsed, box, rigorous)
    return dict(omega=omega, Omega=Omega, nu=doc.get("nu"), eta=doc.get("eta", 1.0), box=box)
