"""
The zero-finding map for time-periodic vorticity.

Unknowns are ``W = (Omega, omega)`` with ``omega`` a 3-component field
without the ``n = 0`` mode.  The map is

    F_n = i Omega n4 omega_n + Psi_n(omega) + nu |n~|^2 omega_n - f_n
    Psi = i[(M omega . D~) omega] - i[(omega . D~) M omega]

closed by a scalar phase row.  Two phase rows are supported:

``"orbit"``
    ``F_phase = i sum omega_n n4 conj(omega_hat_n)``, the standard
    condition for a periodic orbit.
``"pinned"``
    ``F_phase = Omega - Omega_pin``.  This fixes the frequency and makes the
    map regular at equilibria, where the orbit row degenerates.

Everything accepts float data (complex ndarrays) or interval data
(:class:`~nsorbit.rigor.CIArray`).  A separate exact path evaluates ``F`` on
sparse Gaussian-rational data with integer arithmetic only.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm

import numpy as np

from . import rigor
from . import spectral as sp
from .errors import ForcingInvalid
from .rigor import CIArray, IArray, RigorousComplex, RigorousReal

__all__ = [
    "Forcing",
    "State",
    "nu_enclosure",
    "taylor_green_forcing",
    "taylor_green_velocity_forcing",
    "viscous_equilibrium",
    "nonlinearity_Psi",
    "phase_condition",
    "residual_F",
    "jacobian_action",
    "second_derivative_action",
    "jacobian_column",
    "DPsiColumns",
    "check_divergence_preservation",
    "exact_residual",
]


# ---------------------------------------------------------------- data
@dataclass
class Forcing:
    """Curl of the body force, ``f^omega``, as a 3-component field."""

    fomega: np.ndarray
    label: str = "explicit"

    def __post_init__(self):
        validate_forcing(self.fomega)

    @property
    def box(self):
        return sp.box_of(self.fomega)


def validate_forcing(f):
    """Raise :class:`ForcingInvalid` unless ``f`` is time independent and mean free."""
    box = sp.box_of(f)
    n1, n2, n3, n4 = sp.wavenumbers(box, sparse=False)
    if isinstance(f, CIArray):
        nz = ~f.is_zero()
    else:
        nz = np.asarray(f) != 0
    nz = nz.any(axis=0)
    if np.any(nz & (n4 != 0)):
        raise ForcingInvalid("forcing has time-dependent modes (n4 != 0)")
    if np.any(nz & (n1 == 0) & (n2 == 0) & (n3 == 0)):
        raise ForcingInvalid("forcing has spatial-mean modes (n~ = 0)")


@dataclass
class State:
    """``W = (Omega, omega)``.  ``omega[:, n=0]`` is ignored and kept at zero."""

    Omega: object
    omega: object

    @property
    def box(self):
        return sp.box_of(self.omega)

    def copy(self):
        return State(self.Omega, self.omega.copy())


def nu_enclosure(nu) -> RigorousReal:
    """Tight enclosure of the viscosity.

    Floats are read through their shortest decimal repr, so ``0.286`` encloses
    the decimal 0.286 rather than the nearest binary64.
    """
    if isinstance(nu, RigorousReal):
        return nu
    if isinstance(nu, float):
        nu = repr(nu)
    return RigorousReal.point(Fraction(nu) if isinstance(nu, str) else nu)


def taylor_green_forcing(nu=None) -> Forcing:
    """``f^omega = (0, 0, 4 sin x1 sin x2)``: four modes in component 3.

    ``nu`` is accepted for interface symmetry and is not used.
    """
    f = sp.zeros(sp.SupportBox(1, 1, 0, 0), 3)
    f[2, 2, 2, 0, 0] = -1.0
    f[2, 0, 0, 0, 0] = -1.0
    f[2, 2, 0, 0, 0] = 1.0
    f[2, 0, 2, 0, 0] = 1.0
    return Forcing(f, "taylor-green")


def taylor_green_velocity_forcing():
    """Velocity forcing ``f = (2 sin x1 cos x2, -2 cos x1 sin x2, 0)``."""
    f = sp.zeros(sp.SupportBox(1, 1, 0, 0), 3)
    h = 0.5j
    # indices (n1+1, n2+1, 0, 0)
    f[0, 2, 2, 0, 0], f[0, 0, 0, 0, 0], f[0, 2, 0, 0, 0], f[0, 0, 2, 0, 0] = -h, h, -h, h
    f[1, 2, 2, 0, 0], f[1, 0, 0, 0, 0], f[1, 2, 0, 0, 0], f[1, 0, 2, 0, 0] = h, -h, -h, h
    return f


def viscous_equilibrium(nu, rigorous=False) -> State:
    """``omega* = f^omega / (2 nu)`` with placeholder ``Omega = 1``."""
    f = taylor_green_forcing().fomega
    if rigorous:
        c = 1.0 / (nu_enclosure(nu) * 2.0)
        return State(1.0, CIArray.point(f) * c)
    return State(1.0, f / (2.0 * float(nu)))


# ---------------------------------------------------------------- helpers
def _rig(*xs):
    return any(isinstance(x, (CIArray, IArray, RigorousReal)) for x in xs)


def _mul_i(x):
    return x.mul_i() if isinstance(x, CIArray) else 1j * x


def _as_rig(x):
    return x if isinstance(x, CIArray) else CIArray.point(x)


def _real_scalar_mul(a, c):
    """``a`` (field) times real scalar ``c`` (float, Fraction or RigorousReal)."""
    if isinstance(a, CIArray):
        if isinstance(c, Fraction):
            c = RigorousReal.point(c)
        return a * c
    return a * float(c.mid if isinstance(c, RigorousReal) else c)


def _zero_mean(a):
    c = sp.box_of(a).as_tuple()
    a[(Ellipsis,) + c] = 0.0
    return a


def _common(a, b):
    box = sp.box_of(a).union(sp.box_of(b))
    return sp.embed(a, box), sp.embed(b, box)


def nonlinearity_Psi(omega, method="direct"):
    """``i[(M omega . D~) omega] - i[(omega . D~) M omega]`` on the box ``2 S``."""
    u = sp.biot_savart(omega)
    a = sp.advect(u, omega, method)
    b = sp.advect(omega, u, method)
    return _mul_i(a - b)


def linear_part(omega, Omega, nu):
    """``(i Omega n4 + nu |n~|^2) omega``."""
    box = sp.box_of(omega)
    n1, n2, n3, n4 = sp.wavenumbers(box)
    nsq = (n1**2 + n2**2 + n3**2).astype(float)
    if isinstance(omega, CIArray) or _rig(Omega, nu):
        w = _as_rig(omega)
        t1 = _mul_i(_real_scalar_mul(w * n4.astype(float), RigorousReal.point(Omega)))
        t2 = _real_scalar_mul(w * nsq, nu_enclosure(nu))
        return t1 + t2
    return (1j * float(Omega) * n4 + float(nu) * nsq) * omega


def phase_condition(omega, omega_hat):
    """``i sum_{l,n} omega_n^(l) n4 conj(omega_hat_n^(l))``."""
    a, b = _common(omega, omega_hat)
    n4 = sp.wavenumbers(sp.box_of(a))[3]
    if isinstance(a, CIArray) or isinstance(b, CIArray):
        a, b = _as_rig(a), _as_rig(b)
        return _mul_i((a * b.conj()) * n4.astype(float)).sum()
    return 1j * np.sum(a * np.conj(b) * n4)


def residual_F(W: State, forcing, nu, omega_hat=None, phase_mode="orbit", Omega_pin=None, method="direct"):
    """Evaluate ``F(W) = (F_phase, (F_n))``.

    Parameters
    ----------
    W : State
    forcing : Forcing or ndarray
        ``f^omega``; must be time independent and mean free.
    nu : float, str, Fraction or RigorousReal
    omega_hat : field, optional
        Phase reference (orbit mode); defaults to ``W.omega``.
    phase_mode : {"orbit", "pinned"}
    Omega_pin : float
        Target frequency for the pinned mode.

    Returns
    -------
    (scalar, field)
        The field lives on ``2 box(omega)`` joined with the forcing box.
    """
    f = forcing.fomega if isinstance(forcing, Forcing) else forcing
    validate_forcing(f)
    omega = _zero_mean(W.omega.copy())
    rig = isinstance(omega, CIArray) or _rig(W.Omega, nu)
    if rig:
        omega = _as_rig(omega)
    box = sp.box_of(omega)
    out_box = (box + box).union(sp.box_of(f))
    Psi = sp.embed(nonlinearity_Psi(omega, method), out_box)
    lin = sp.embed(linear_part(omega, W.Omega, nu), out_box)
    fe = sp.embed(_as_rig(f) if rig else f, out_box)
    Fn = _zero_mean(Psi + lin - fe)
    Fphase = _phase_value(W, omega_hat, phase_mode, Omega_pin)
    return Fphase, Fn


def _phase_value(W, omega_hat, phase_mode, Omega_pin):
    if phase_mode == "pinned":
        if Omega_pin is None:
            raise ValueError("pinned phase mode needs Omega_pin")
        if _rig(W.Omega, Omega_pin):
            return RigorousReal.point(W.Omega) - RigorousReal.point(Omega_pin)
        return complex(float(W.Omega) - float(Omega_pin))
    if phase_mode != "orbit":
        raise ValueError(f"unknown phase mode {phase_mode!r}")
    ref = W.omega if omega_hat is None else omega_hat
    return phase_condition(W.omega, ref)


def _dpsi(wbar, v, method="direct"):
    """``D Psi(wbar) v``."""
    ub, uv = sp.biot_savart(wbar), sp.biot_savart(v)
    t = sp.advect(ub, v, method) - sp.advect(v, ub, method)
    t = t + sp.advect(uv, wbar, method) - sp.advect(wbar, uv, method)
    return _mul_i(t)


def jacobian_action(Wbar: State, V: State, nu, omega_hat=None, phase_mode="orbit", method="direct"):
    """``DF(Wbar) V`` including the frequency column and the phase row."""
    wb = _zero_mean(Wbar.omega.copy())
    v = _zero_mean(V.omega.copy())
    if isinstance(wb, CIArray) or isinstance(v, CIArray):
        wb, v = _as_rig(wb), _as_rig(v)
    wb, v = _common(wb, v)
    box = sp.box_of(wb)
    out_box = box + box
    n4 = sp.wavenumbers(box)[3]
    dPsi = sp.embed(_dpsi(wb, v, method), out_box)
    lin = sp.embed(linear_part(v, Wbar.Omega, nu), out_box)
    if isinstance(wb, CIArray):
        om_col = _mul_i(_real_scalar_mul(wb * n4.astype(float), RigorousReal.point(V.Omega)))
    else:
        om_col = 1j * float(V.Omega) * n4 * wb
    Fn = _zero_mean(dPsi + lin + sp.embed(om_col, out_box))
    if phase_mode == "pinned":
        Fphase = V.Omega
    else:
        Fphase = phase_condition(v, Wbar.omega if omega_hat is None else omega_hat)
    return Fphase, Fn


def second_derivative_action(Wbar, V1: State, V2: State, method="direct"):
    """``D^2 F(Wbar)(V1, V2)``; the map is quadratic so ``Wbar`` is not used.

    ``i[Om2 D4 w1 + Om1 D4 w2 + (M w2 . D~) w1 + (M w1 . D~) w2
    - (w2 . D~) M w1 - (w1 . D~) M w2]``, with a vanishing phase component.
    """
    w1 = _zero_mean(V1.omega.copy())
    w2 = _zero_mean(V2.omega.copy())
    if isinstance(w1, CIArray) or isinstance(w2, CIArray):
        w1, w2 = _as_rig(w1), _as_rig(w2)
    w1, w2 = _common(w1, w2)
    box = sp.box_of(w1)
    out_box = box + box
    u1, u2 = sp.biot_savart(w1), sp.biot_savart(w2)
    t = sp.advect(u2, w1, method) + sp.advect(u1, w2, method)
    t = t - sp.advect(w2, u1, method) - sp.advect(w1, u2, method)
    d1, d2 = sp.partial(4, w1), sp.partial(4, w2)
    if isinstance(w1, CIArray):
        lin = _real_scalar_mul(d1, RigorousReal.point(V2.Omega)) + _real_scalar_mul(d2, RigorousReal.point(V1.Omega))
    else:
        lin = float(V2.Omega) * d1 + float(V1.Omega) * d2
    z = _mul_i(sp.embed(t, out_box) + sp.embed(lin, out_box))
    return 0.0, _zero_mean(z)


def check_divergence_preservation(omega, tol=0.0) -> bool:
    """True iff the divergence of ``Psi(omega)`` vanishes (encloses 0) coefficientwise."""
    d = sp.divergence(nonlinearity_Psi(omega))
    if isinstance(d, CIArray):
        return bool(np.all(d.contains_zero()))
    scale = max(1.0, float(np.abs(omega).sum()) ** 2)
    return bool(np.all(np.abs(d) <= tol * scale + 1e-13 * scale))


# ---------------------------------------------------------------- columns
class DPsiColumns:
    """Columns ``v = D Psi(wbar) e_(n,m)`` for batches of unit vectors.

    For a column ``(n, m)`` the entry at row ``(k, l)`` with ``d = k - n``
    in the support of ``wbar`` is

        i[ delta_lm sum_p k_p U^p_d - d_m U^l_d ]
          - (1/|n~|^2)[ sum_p S^(p,m) d_p w^l_d - S^(l,m) sum_p n_p w^p_d ]

    with ``U = M wbar`` and ``S`` the integer cross-product matrix of ``n~``
    (``M_n = (i/|n~|^2) S``).  The first bracket uses ``k_p`` as written; it
    equals the ``n_p`` form because ``U`` is divergence free.

    Interval input is handled mid-rad: the formula is evaluated in floating
    point on midpoints and every entry is widened by the a-priori bound
    ``gamma_K`` times the same formula on absolute values, plus the
    propagated radius of ``U``.  Each entry passes through at most ``K = 12``
    roundings (the rounded ``1/|n~|^2`` counted as one).

    Parameters
    ----------
    wbar : complex ndarray or CIArray
        ``omega_bar`` on its support box.
    """

    K_ROUND = 12

    def __init__(self, wbar):
        self.rigorous = isinstance(wbar, CIArray)
        self.box = sp.box_of(wbar)
        w = _zero_mean(wbar.copy())
        U = sp.biot_savart(w)
        D = int(np.prod(self.box.shape))
        self.offsets = np.stack([g.ravel() for g in sp.wavenumbers(self.box, sparse=False)], axis=1)
        d = self.offsets.astype(float)
        self.d = d
        if self.rigorous:
            wm, wr, wi = w.rad()
            Um, ur, ui = U.rad()
            self.rw = _up((wr + wi).reshape(3, D))
            self.rU = _up((ur + ui).reshape(3, D))
            self.w, self.U = wm.reshape(3, D), Um.reshape(3, D)
            self.aw = _up(np.abs(self.w.real) + np.abs(self.w.imag))
            self.aU = _up(np.abs(self.U.real) + np.abs(self.U.imag))
        else:
            self.w, self.U = w.reshape(3, D), U.reshape(3, D)
        self.DU = [self.U * d[:, m] for m in range(3)]  # DU[m][l] = d_m U^l
        self.Dw = [self.w * d[:, p] for p in range(3)]  # Dw[p][l] = d_p w^l
        self.divU = self.U[0] * d[:, 0] + self.U[1] * d[:, 1] + self.U[2] * d[:, 2]
        self.support = np.any(self.w != 0, axis=0) | np.any(self.U != 0, axis=0)
        if self.rigorous:
            self.support |= np.any(self.rw > 0, axis=0) | np.any(self.rU > 0, axis=0)

    def __call__(self, ns, ms):
        """Column values for ``ns`` (B, 4) and 0-based components ``ms`` (B,).

        Returns
        -------
        vals : (B, 3, D) array (complex or CIArray)
            Row component ``l`` on axis 1, offset ``d`` on axis 2.
        rows : (B, D, 4) int array
            Row wave numbers ``k = n + d``.
        """
        ns = np.asarray(ns, dtype=np.int64).reshape(-1, 4)
        ms = np.asarray(ms, dtype=np.int64).reshape(-1)
        B = len(ns)
        nf = ns.astype(float)
        S = sp.cross_matrix(ns[:, 0], ns[:, 1], ns[:, 2])  # (3, 3, B)
        nsq = (ns[:, :3] ** 2).sum(1)
        inv = np.where(nsq == 0, 0.0, 1.0 / np.where(nsq == 0, 1, nsq))[:, None]
        col = np.arange(B)
        # k_p form of the first term: sum_p n_p U^p + sum_p d_p U^p
        nU = sum(self.U[p][None, :] * nf[:, p : p + 1] for p in range(3)) + self.divU[None, :]
        nw = sum(self.w[p][None, :] * nf[:, p : p + 1] for p in range(3))
        DUsel = np.stack([np.stack(self.DU[m]) for m in range(3)])[ms]  # (B, 3, D)
        out = np.empty((B, 3, len(self.offsets)), dtype=complex)
        for l in range(3):
            t12 = nU * (ms == l)[:, None] - DUsel[:, l]
            Sl = S[l, ms, col].astype(float)[:, None]
            t3 = sum(self.Dw[p][l][None, :] * S[p, ms, col].astype(float)[:, None] for p in range(3))
            out[:, l] = 1j * t12 - (t3 - nw * Sl) * inv
        rows = ns[:, None, :] + self.offsets[None, :, :]
        if not self.rigorous:
            return out, rows
        return self._enclose(out, ns, ms, S, inv, nf), rows

    def _enclose(self, mid, ns, ms, S, inv, nf):
        """Mid-rad enclosure of the float evaluation ``mid``."""
        B = len(ns)
        col = np.arange(B)
        ad = np.abs(self.d)
        an = np.abs(nf)
        g = rigor.gamma_up(self.K_ROUND)
        # |.|-evaluations: magnitude of every summand, and radius of U / w propagated linearly
        kU = sum((an[:, p : p + 1] + ad[None, :, p]) * self.aU[p][None, :] for p in range(3))
        kR = sum((an[:, p : p + 1] + ad[None, :, p]) * self.rU[p][None, :] for p in range(3))
        nwA = sum(self.aw[p][None, :] * an[:, p : p + 1] for p in range(3))
        nwR = sum(self.rw[p][None, :] * an[:, p : p + 1] for p in range(3))
        invu = _up(inv * (1 + 2.0**-52))
        rad = np.empty(mid.shape)
        dm = ad[:, ms].T  # (B, D): |d_m|
        for l in range(3):
            delta = (ms == l)[:, None]
            A12 = dm * self.aU[l][None, :] + np.where(delta, kU, 0.0)
            R12 = dm * self.rU[l][None, :] + np.where(delta, kR, 0.0)
            aS = [np.abs(S[p, ms, col]).astype(float)[:, None] for p in range(3)]
            aSl = np.abs(S[l, ms, col]).astype(float)[:, None]
            A34 = (sum(aS[p] * ad[None, :, p] for p in range(3)) * self.aw[l][None, :] + aSl * nwA) * invu
            R34 = (sum(aS[p] * ad[None, :, p] for p in range(3)) * self.rw[l][None, :] + aSl * nwR) * invu
            r = (A12 + A34) * g + (R12 + R34)
            rad[:, l] = r
        # the radius evaluation itself is a short sum of non-negative products
        exact_zero = rad == 0  # every summand vanishes
        rad = _up(rad * (1 + 2 * rigor.gamma_up(16)) + 2.0**-1000)
        rad[exact_zero] = 0.0
        return CIArray(
            np.nextafter(mid.real - rad, -np.inf),
            np.nextafter(mid.real + rad, np.inf),
            np.nextafter(mid.imag - rad, -np.inf),
            np.nextafter(mid.imag + rad, np.inf),
        )


def _up(x):
    return np.nextafter(x, np.inf)


def jacobian_column(Wbar: State, j, nu, omega_hat=None, Edagger=None, phase_mode="orbit"):
    """One column of ``DF(Wbar)`` or, when ``Edagger`` is given, of ``C = DF - A_hat``.

    Parameters
    ----------
    j : tuple ``(n1, n2, n3, n4, m)`` with 1-based ``m``, or the string ``"phase"``
        for the frequency column.
    Edagger : set of 4-tuples, optional
        Finite index set ``E^dagger``.  Entries with both row and column
        wave numbers in it are dropped (they belong to ``A_hat``), and so is
        the linear diagonal part (``A_hat`` carries it on the tail).

    Returns
    -------
    dict
        ``{(k1, k2, k3, k4, l): value, "phase": value}`` of nonzero entries.
    """
    wb = Wbar.omega
    rig = isinstance(wb, CIArray)
    ref = wb if omega_hat is None else omega_hat
    box = sp.box_of(wb)
    c = box.as_tuple()
    out = {}
    E = Edagger

    def inE(n):
        return E is not None and tuple(n) in E

    if j == "phase":
        if phase_mode == "pinned":
            if E is None:
                out["phase"] = 1.0
            return out
        for idx in zip(*np.nonzero(~wb.is_zero() if rig else wb != 0)):
            n = tuple(int(i - o) for i, o in zip(idx[1:], c))
            if n[3] == 0 or inE(n):
                continue
            if rig:
                out[n + (idx[0] + 1,)] = _scalar_i(wb.scalar(idx) * float(n[3]))
            else:
                out[n + (idx[0] + 1,)] = 1j * n[3] * complex(wb[idx])
        return out
    n, m = tuple(int(x) for x in j[:4]), int(j[4])
    cols = DPsiColumns(wb)
    vals, rows = cols(np.array([n]), np.array([m - 1]))
    col_in_E = inE(n)
    for l in range(3):
        for d in np.nonzero(cols.support)[0]:
            k = tuple(int(x) for x in rows[0, d])
            if not any(k) or col_in_E and inE(k):
                continue
            v = vals[0, l, d]
            v = v.scalar() if rig else complex(v)
            key = k + (l + 1,)
            out[key] = out.get(key, 0) + v
    if E is None:
        nsq = n[0] ** 2 + n[1] ** 2 + n[2] ** 2
        key = n + (m,)
        if rig:
            diag = _scalar_i(RigorousReal.point(Wbar.Omega) * float(n[3]))
            diag = diag + nu_enclosure(nu) * float(nsq)
        else:
            diag = 1j * float(Wbar.Omega) * n[3] + float(nu) * nsq
        out[key] = out.get(key, 0) + diag
    # phase row
    if phase_mode == "orbit" and box.contains(n) and not (col_in_E):
        idx = (m - 1,) + tuple(a + b for a, b in zip(n, c))
        r = ref[idx]
        r = r.scalar() if isinstance(ref, CIArray) else complex(r)
        if rig or isinstance(ref, CIArray):
            r = RigorousComplex.point(r).conj()
            val = _scalar_i(r * float(n[3]))
        else:
            val = 1j * n[3] * np.conj(r)
        out["phase"] = val
    return out


def _scalar_i(z):
    z = RigorousComplex.point(z)
    return RigorousComplex(-z.im, z.re)


# ---------------------------------------------------------------- exact path
def _q_int(x, den):
    q = Fraction(x) * den
    if q.denominator != 1:
        raise ValueError("denominator mismatch in exact evaluation")
    return q.numerator


def exact_residual(Omega, omega, nu, fomega, omega_hat=None, phase_mode="orbit", Omega_pin=None):
    """Exact ``F`` on sparse data with Gaussian-rational coefficients.

    Parameters
    ----------
    Omega, nu : Fraction-compatible
    omega, fomega, omega_hat : dict
        ``{(n1, n2, n3, n4, m): (re, im)}`` with Fraction-compatible parts and
        1-based ``m``.

    Returns
    -------
    (phase, dict)
        Values are ``(Fraction, Fraction)`` pairs; zero entries are dropped.

    Notes
    -----
    All quantities are brought to one common denominator, so the evaluation
    uses Python integers only.  The only non-dyadic factors are the
    ``1/|n~|^2`` of the operator ``M``.
    """
    omega = {k: v for k, v in omega.items() if k[:4] != (0, 0, 0, 0) and (v[0] or v[1])}
    Omega, nu = Fraction(Omega), Fraction(nu)
    dens = [Omega.denominator, nu.denominator]
    for d in (omega, fomega, omega_hat or {}):
        for re, im in d.values():
            dens += [Fraction(re).denominator, Fraction(im).denominator]
    s = lcm(*dens) if dens else 1
    L = lcm(*[k[0] ** 2 + k[1] ** 2 + k[2] ** 2 for k in omega if k[:3] != (0, 0, 0)] or [1])
    # omega = A / s,  M omega = iB / (L s)
    A = {}
    for k, (re, im) in omega.items():
        A[k] = (_q_int(re, s), _q_int(im, s))
    modes = {}
    for (n1, n2, n3, n4, m), v in A.items():
        modes.setdefault((n1, n2, n3, n4), [(0, 0)] * 3)
        modes[(n1, n2, n3, n4)][m - 1] = v
    Bm = {}
    for n, w in modes.items():
        nsq = n[0] ** 2 + n[1] ** 2 + n[2] ** 2
        if nsq == 0:
            continue
        c = L // nsq
        S = sp.cross_matrix(*n[:3])
        # (M w)_l = (i / nsq) sum_m S[l, m] w_m
        u = []
        for l in range(3):
            re = sum(int(S[l, mm]) * w[mm][0] for mm in range(3)) * c
            im = sum(int(S[l, mm]) * w[mm][1] for mm in range(3)) * c
            u.append((-im, re))  # multiply by i
        Bm[n] = u
    # Psi = i[(u . D) w] - i[(w . D) u]   over denominator L s^2
    acc = {}

    def add(key, re, im):
        a = acc.get(key)
        acc[key] = (re, im) if a is None else (a[0] + re, a[1] + im)

    for p, up in Bm.items():
        for q, wq in modes.items():
            k = tuple(a + b for a, b in zip(p, q))
            for l in range(3):
                tr = ti = 0
                for m in range(3):
                    # u^m_p q_m w^l_q
                    if q[m]:
                        ar, ai = up[m]
                        br, bi = wq[l]
                        tr += q[m] * (ar * br - ai * bi)
                        ti += q[m] * (ar * bi + ai * br)
                if tr or ti:
                    add(k + (l + 1,), -ti, tr)  # times i
    for p, wp in modes.items():
        for q, uq in Bm.items():
            k = tuple(a + b for a, b in zip(p, q))
            for l in range(3):
                tr = ti = 0
                for m in range(3):
                    if q[m]:
                        ar, ai = wp[m]
                        br, bi = uq[l]
                        tr += q[m] * (ar * br - ai * bi)
                        ti += q[m] * (ar * bi + ai * br)
                if tr or ti:
                    add(k + (l + 1,), ti, -tr)  # times -i
    den = L * s * s
    out = {}
    for key, (re, im) in acc.items():
        if key[:4] == (0, 0, 0, 0):
            continue
        out[key] = (Fraction(re, den), Fraction(im, den))
    # linear part and forcing
    for key, (re, im) in omega.items():
        n = key[:4]
        nsq = n[0] ** 2 + n[1] ** 2 + n[2] ** 2
        re, im = Fraction(re), Fraction(im)
        lr = nu * nsq * re - Omega * n[3] * im
        li = nu * nsq * im + Omega * n[3] * re
        a = out.get(key, (Fraction(0), Fraction(0)))
        out[key] = (a[0] + lr, a[1] + li)
    for key, (re, im) in fomega.items():
        a = out.get(key, (Fraction(0), Fraction(0)))
        out[key] = (a[0] - Fraction(re), a[1] - Fraction(im))
    out = {k: v for k, v in out.items() if v[0] or v[1]}
    if phase_mode == "pinned":
        phase = (Omega - Fraction(Omega_pin), Fraction(0))
    else:
        ref = omega if omega_hat is None else omega_hat
        pr = pi = Fraction(0)
        for key, (re, im) in omega.items():
            if key in ref and key[3]:
                hr, hi = Fraction(ref[key][0]), Fraction(ref[key][1])
                re, im = Fraction(re), Fraction(im)
                # i * n4 * (re + i im)(hr - i hi)
                xr = re * hr + im * hi
                xi = im * hr - re * hi
                pr += -key[3] * xi
                pi += key[3] * xr
        phase = (pr, pi)
    return phase, out
