"""
A-posteriori validation of an approximate periodic orbit.

Given ``W_bar = (Omega_bar, omega_bar)`` in symmetry-reduced variables this
module assembles rigorous upper bounds

    Y0 >= ||A F(W_bar)||
    Z0 >= ||I - A A_hat||
    Z1 >= ||A (DF(W_bar) - A_hat)||
    Z2 >= ||A D^2F||

and checks the radii polynomial inequalities

    Z0 + Z1 < 1,     2 Y0 Z2 < (1 - Z0 - Z1)^2.

``A_hat`` equals ``DF(W_bar)`` on the finite block ``E^dagger`` and the
diagonal ``nu |n~|^2 + i Omega_bar n4`` on the tail; ``A`` is a floating
point inverse of the finite block and ``lambda_n`` on the tail.  All norms
are weighted l1 norms whose operator norms are weighted column suprema.

The group enters only through the reduced layout.  Running the same
pipeline with the trivial group gives the unreduced (full-space) bounds.
"""
from __future__ import annotations

import json
import math
import resource
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

from . import rigor
from . import spectral as sp
from . import symmetry as sy
from . import vorticity as vo
from .errors import ForcingSupport, NotActually2D, SchemeInvalid, SingularFiniteBlock
from .rigor import CIArray, IArray, PointMatrix, RigorousReal

__all__ = [
    "TruncationScheme",
    "mu",
    "mu_array",
    "enumerate_E",
    "tail_sup_bounds",
    "ReducedOrbit",
    "FiniteBlock",
    "BoundsReport",
    "build_Ahat",
    "build_A",
    "bound_Y0",
    "bound_Z0",
    "bound_Z1",
    "bound_Z2",
    "z1_tail_formula",
    "z1_column_norms",
    "z1_columns",
    "Problem",
    "in_E",
    "radii_polynomial",
    "validate",
]

SQRT2 = RigorousReal.point(2).sqrt()
SQRT3 = RigorousReal.point(3).sqrt()


# ---------------------------------------------------------------- scheme
@dataclass
class TruncationScheme:
    """Truncation parameters.

    Attributes
    ----------
    box : SupportBox
        Support ``S^sol`` of the approximate solution.
    Ndagger, Ntilde : float
        Finite block ``E(N^dagger)`` and the column range ``E(N~) + S^sol``
        of the explicit Z1 columns; ``N~ >= N^dagger``.
    nu : float or str
        Viscosity (strings are read as exact decimals).
    eta : float
        Norm weight base, ``>= 1``.
    essentially2D : bool
        Restrict every index set to ``n3 = 0`` and use the sharper
        ``sqrt 2`` tail constant.
    phase_mode : {"orbit", "pinned"}
    Omega_pin : float, optional
        Frequency for the pinned phase row.
    """

    box: sp.SupportBox
    Ndagger: float
    Ntilde: float
    nu: object
    eta: float = 1.0
    essentially2D: bool = False
    phase_mode: str = "orbit"
    Omega_pin: float = None

    def check(self):
        if not self.Ndagger >= 1:
            raise SchemeInvalid("N^dagger must be at least 1")
        if self.Ntilde < self.Ndagger:
            raise SchemeInvalid(f"N~ = {self.Ntilde} < N^dagger = {self.Ndagger}")
        if not self.eta >= 1:
            raise SchemeInvalid("eta must be >= 1")
        if not vo.nu_enclosure(self.nu).lo > 0:
            raise SchemeInvalid("nu must be positive")
        if self.phase_mode not in ("orbit", "pinned"):
            raise SchemeInvalid(f"unknown phase mode {self.phase_mode!r}")
        if self.phase_mode == "pinned" and self.Omega_pin is None:
            raise SchemeInvalid("pinned phase mode needs Omega_pin")
        if self.essentially2D and self.box.Nx3 != 0:
            raise NotActually2D("essentially-2D scheme with Nx3 > 0")
        return self

    @property
    def nu_iv(self) -> RigorousReal:
        return vo.nu_enclosure(self.nu)

    def to_json(self):
        d = dict(
            box=self.box.to_json(),
            Ndagger=self.Ndagger,
            Ntilde=self.Ntilde,
            nu=str(self.nu),
            eta=self.eta,
            essentially2D=self.essentially2D,
            phase_mode=self.phase_mode,
        )
        if self.Omega_pin is not None:
            d["Omega_pin"] = self.Omega_pin
        return d


# ---------------------------------------------------------------- mu, E(N), tails
def mu_array(n, nu, Omega) -> IArray:
    """Enclosures of ``|nu |n~|^2 + i Omega n4|`` for rows of ``n`` (K, 4)."""
    n = np.asarray(n, dtype=np.int64).reshape(-1, 4)
    nu = vo.nu_enclosure(nu)
    nsq = (n[:, :3] ** 2).sum(1).astype(float)
    a = IArray(nu.lo, nu.hi) * nsq
    Om = RigorousReal.point(Omega)
    b = IArray(Om.lo, Om.hi) * n[:, 3].astype(float)
    return (a.sqr() + b.sqr()).sqrt()


def mu(n, nu, Omega) -> RigorousReal:
    """``mu(n) = |nu |n~|^2 + i Omega n4|``."""
    return mu_array(np.array([n]), nu, Omega).scalar(0)


def _mu_sq_lower(n, nu, Omega):
    n = np.asarray(n, dtype=np.int64).reshape(-1, 4)
    nu = vo.nu_enclosure(nu)
    nsq = (n[:, :3] ** 2).sum(1).astype(float)
    a = np.nextafter(nu.lo * nsq, -np.inf)
    Om = abs(float(Omega))
    b = np.nextafter(Om * np.abs(n[:, 3]).astype(float), -np.inf)
    return np.nextafter(np.nextafter(a * a, -np.inf) + np.nextafter(b * b, -np.inf), -np.inf)


def in_E(n, N, nu, Omega):
    """Membership in ``E(N)``; a mode whose ``mu`` may be ``<= N`` is included."""
    n = np.asarray(n, dtype=np.int64).reshape(-1, 4)
    N2 = np.nextafter(float(N) * float(N), np.inf)
    nz = np.any(n != 0, axis=1)
    return nz & (_mu_sq_lower(n, nu, Omega) <= N2)


def enumerate_E(N, nu, Omega, essentially2D=False):
    """The finite set ``E(N) = {n != 0 : mu(n) <= N}`` as a sorted (K, 4) array.

    Ties are resolved toward inclusion, so every excluded mode certainly has
    ``mu(n) > N``.
    """
    if float(Omega) == 0:
        raise SchemeInvalid("E(N) is infinite for Omega = 0")
    nu_lo = vo.nu_enclosure(nu).lo
    r = int(math.isqrt(int(N / nu_lo) + 1)) + 1
    T = int(N / abs(float(Omega))) + 1
    axes = [np.arange(-r, r + 1)] * 2 + [np.array([0]) if essentially2D else np.arange(-r, r + 1)]
    axes.append(np.arange(-T, T + 1))
    grids = np.meshgrid(*axes, indexing="ij")
    n = np.stack([g.ravel() for g in grids], axis=1)
    return n[in_E(n, N, nu, Omega)]


def tail_sup_bounds(N, nu, Omega):
    """Upper bounds of the tail suprema over ``n`` outside ``E(N)``.

    Returns
    -------
    dict of RigorousReal
        ``lam``      : sup |lambda_n|                   <= 1/N
        ``lam_k``    : sup |lambda_n| |n_m|              <= 1/sqrt(nu N)
        ``lam_sum3`` : sup |lambda_n| sum_p |n_p|        <= sqrt 3 / sqrt(nu N)
        ``lam_sum2`` : same with two spatial components  <= sqrt 2 / sqrt(nu N)
        ``lam_inf``  : sup |lambda_n| |n|_inf            <= max(1/sqrt(nu N), 1/Omega)
    """
    N = RigorousReal.point(N)
    nu = vo.nu_enclosure(nu)
    lam = 1 / N
    lam_k = 1 / (nu * N).sqrt()
    return dict(
        lam=lam,
        lam_k=lam_k,
        lam_sum3=SQRT3 * lam_k,
        lam_sum2=SQRT2 * lam_k,
        lam_inf=lam_k.max(1 / abs(RigorousReal.point(Omega))),
    )


# ---------------------------------------------------------------- reduced orbit
def _g_invariant_box(group, box):
    lim = np.array(box.as_tuple())
    while True:
        new = lim.copy()
        for C in group.Cs:
            new[:3] = np.maximum(new[:3], np.abs(C) @ lim[:3])
        if np.array_equal(new, lim):
            return sp.SupportBox(*(int(v) for v in lim))
        lim = new


def _box_n(box, essentially2D=False):
    grids = sp.wavenumbers(box, sparse=False)
    n = np.stack([g.ravel() for g in grids], axis=1)
    if essentially2D:
        n = n[n[:, 2] == 0]
    return n


@dataclass
class ReducedOrbit:
    """``phi_bar = (Omega_bar, phi)`` on the reduced layout of ``S^sol``."""

    Omega: float
    phi: np.ndarray
    layout: sy.ReducedLayout
    box: sp.SupportBox

    @classmethod
    def from_field(cls, Omega, omega, group, box=None, essentially2D=False, eta=1.0):
        box = box or sp.box_of(omega)
        layout = sy.ReducedLayout(group, _box_n(box, essentially2D), eta)
        phi = sy.project_Pi(sp.resize(np.asarray(omega, dtype=complex), box), layout)
        return cls(float(Omega), phi, layout, box)

    def lift(self, box=None):
        return sy.lift_Sigma(self.phi, self.layout, box or self.box)

    def symmetrized(self):
        return ReducedOrbit(self.Omega, sy.symmetrize_input(self.phi, self.layout), self.layout, self.box)


class RowSpace:
    """Dense lookup tables over a ``G``-invariant box of row modes."""

    def __init__(self, group, box, fin_layout, scheme=None, Omega=None, Emask_fn=None):
        self.group = group
        self.box = box
        self.cat = sy._catalog(group, box)
        cat = self.cat
        self.center = np.array(box.as_tuple())
        self.nbox = int(np.prod(box.shape))
        idx = fin_layout.index_of(cat.rep)
        idx[~(cat.symmetric & cat.nonzero)] = -1
        self.fin_index = idx
        if scheme is None:
            return
        nn = cat.n[: self.nbox]
        self.inE = Emask_fn(nn)
        mu_lo = np.sqrt(np.maximum(_mu_sq_lower(nn, scheme.nu_iv, Omega), 0.0))
        mu_lo = np.nextafter(mu_lo * (1 - 2.0**-50), -np.inf)
        with np.errstate(divide="ignore", over="ignore"):
            lam = np.where(mu_lo > 0, np.nextafter(1.0 / mu_lo, np.inf), np.inf)
        lam[~np.any(nn != 0, axis=1)] = 0.0
        self.lam_up = lam
        l1 = np.abs(nn).sum(1).astype(float)
        eta = float(scheme.eta)
        self.xi = np.ones(self.nbox) if eta == 1.0 else np.nextafter(eta**l1 * (1 + 2.0**-50), np.inf)

    def flat(self, k):
        """Flat mode position for wave numbers ``k`` (..., 4)."""
        k = np.asarray(k)
        if np.any(np.abs(k) > self.center):
            raise ValueError("row outside the catalogued box")
        return np.ravel_multi_index(tuple((k[..., i] + self.center[i]) for i in range(4)), self.box.shape)


def _reduce_scatter(vals, rows, col_orbit, space: RowSpace, R, support):
    """Reduced finite rows of ``D F Sigma e_j`` from full columns ``v``.

    ``(D F Sigma e_j)_r = (|G.j| / |G.r|) sum_{q in G.r} conj(alpha~(r, q)) v_q``.
    """
    rig = isinstance(vals, CIArray)
    B = vals.shape[0]
    v = vals[:, :, support]
    posn = space.flat(rows[:, support])  # (B, Ds)
    Ds = posn.shape[1]
    pos = posn[:, None, :] + space.nbox * np.arange(3)[None, :, None]  # (B, 3, Ds)
    fi = space.fin_index[pos]
    sel = fi >= 0
    out = CIArray.zeros((B, R)) if rig else np.zeros((B, R), dtype=complex)
    if not np.any(sel):
        return out
    cat = space.cat
    L = space.group.L
    for s in range(len(space.group)):
        m = sel & (cat.slot[pos] == s)
        if not np.any(m):
            continue
        bi, li, di = np.nonzero(m)
        p = pos[bi, li, di]
        x = sy.apply_phase(v[bi, li, di], (-cat.phase[p]) % L, L)
        num, den = col_orbit[bi], cat.orbit[p]
        ratio = num / den
        if not rig or np.all(np.frexp(ratio)[0] == 0.5):
            x = x * ratio  # orbit ratios of 2-groups are powers of two
        else:
            x = x * IArray(np.nextafter(ratio, -np.inf), np.nextafter(ratio, np.inf))
        r = fi[bi, li, di]
        out[(bi, r)] = out[(bi, r)] + x
    return out


def _tail_rows_bound(vals, rows, col_xi, space: RowSpace, support):
    """``(1/xi_j) sum_{q not in E^dagger} |lambda_q| xi_q |v_q|`` per column (upper bounds)."""
    v = vals[:, :, support]
    posn = space.flat(rows[:, support])
    tail = ~space.inE[posn]  # (B, Ds)
    w = np.where(tail, np.nextafter(space.lam_up[posn] * space.xi[posn], np.inf), 0.0)
    mag = v.abs_upper() if isinstance(v, CIArray) else np.abs(v) * (1 + 2.0**-50)
    t = np.nextafter(mag * w[:, None, :], np.inf).reshape(len(w), -1)
    s = rigor.rsum_upper(t, axis=1)
    return np.nextafter(s / col_xi * (1 + 2.0**-50), np.inf)


# ---------------------------------------------------------------- finite blocks
@dataclass
class FiniteBlock:
    """Dense matrix over ``{phase} + E^dagger_red``; row/column 0 is the phase index."""

    matrix: object
    layout: sy.ReducedLayout
    role: str

    @property
    def xi(self):
        return np.concatenate([[1.0], self.layout.xi])

    @property
    def size(self):
        return len(self.layout) + 1


class Problem:
    """Everything needed to assemble the bounds for one validation run."""

    def __init__(self, orbit: ReducedOrbit, scheme: TruncationScheme, group, forcing, phase_ref=None):
        scheme.check()
        self.scheme, self.group = scheme, group
        self.forcing = forcing if isinstance(forcing, vo.Forcing) else vo.Forcing(forcing)
        self.orbit = orbit
        self.Omega = float(orbit.Omega)
        S = orbit.box
        self.S = S
        fb = sp.box_of(self.forcing.fomega).as_tuple()
        if any(a > b for a, b in zip(fb, (S + S).as_tuple())):
            raise ForcingSupport("forcing is not supported inside S + S")
        self.wbar = orbit.lift(S)
        if scheme.essentially2D:
            self._check_2d()
        self.phat = orbit.phi if phase_ref is None else np.asarray(phase_ref, dtype=complex)
        nu = scheme.nu_iv
        self.nu = nu
        E = enumerate_E(scheme.Ndagger, nu, self.Omega, scheme.essentially2D)
        self.E = E
        self.fin = sy.ReducedLayout(group, E, scheme.eta)
        self.sol_in_E = in_E(orbit.layout.n, scheme.Ndagger, nu, self.Omega)
        self.Emask_fn = lambda n: in_E(n, scheme.Ndagger, nu, self.Omega)

    def _check_2d(self):
        w = self.wbar
        n3 = sp.wavenumbers(self.S)[2]
        if np.any((w != 0) & (n3 != 0)):
            raise NotActually2D("omega_bar has modes with n3 != 0")
        U = sp.biot_savart(w)
        if not any(not np.any(U[p]) for p in range(3)):
            raise NotActually2D("no component of M omega_bar vanishes identically")

    def row_space(self, col_n):
        """Row catalogue covering ``col_n + S``."""
        ext = np.abs(np.asarray(col_n)).max(0) if len(col_n) else np.zeros(4, int)
        box = sp.SupportBox(*(int(v) for v in ext)) + self.S
        box = _g_invariant_box(self.group, box)
        return RowSpace(self.group, box, self.fin, self.scheme, self.Omega, self.Emask_fn)


def _diag(layout, nu, Omega, rigorous=True):
    """``nu |n~|^2 + i Omega n4`` over a layout."""
    nsq = (layout.n[:, :3] ** 2).sum(1).astype(float)
    n4 = layout.n[:, 3].astype(float)
    if rigorous:
        re = IArray(nu.lo, nu.hi) * nsq
        Om = RigorousReal.point(Omega)
        im = IArray(Om.lo, Om.hi) * n4
        return CIArray.from_parts(re, im)
    return float(nu.mid if isinstance(nu, RigorousReal) else nu) * nsq + 1j * float(Omega) * n4


def _on_layout(values, src: sy.ReducedLayout, layout: sy.ReducedLayout):
    """Reduced data on ``src`` re-indexed to ``layout`` (zero where absent)."""
    idx = src.index_of(layout.keys)
    ok = idx >= 0
    out = np.zeros(len(layout), dtype=complex)
    out[ok] = np.asarray(values)[idx[ok]]
    return out


def _phase_row_entries(P: Problem, layout, rigorous=True):
    """``i |G.j| n4 conj(phat_j)`` for the modes of ``layout`` (zero off ``S^sol``)."""
    vals = np.conj(_on_layout(P.phat, P.orbit.layout, layout)) * layout.orbit * layout.n[:, 3]
    return CIArray.point(vals).mul_i() if rigorous else 1j * vals


def _omega_column(P: Problem, layout, rigorous=True):
    """``i n4 phi_bar_j`` over a layout (zero off ``S^sol``)."""
    vals = _on_layout(P.orbit.phi, P.orbit.layout, layout) * layout.n[:, 3]
    return CIArray.point(vals).mul_i() if rigorous else 1j * vals


def reduced_block(wbar, group, layout, nu, Omega, phase_row, omega_col, pinned=False, rigorous=True, batch=64):
    """Dense ``DF^red`` over ``{phase} + layout``.

    Parameters
    ----------
    wbar : complex ndarray
        Lifted ``Sigma phi_bar`` on its support box.
    phase_row, omega_col : array over ``layout``
        Phase-row entries and the ``Omega`` derivative ``i n4 phi_bar``.
    pinned : bool
        Replace the phase row by ``(1, 0, ..., 0)``.
    """
    R = len(layout) + 1
    w = CIArray.point(wbar) if rigorous else np.asarray(wbar, dtype=complex)
    cols = vo.DPsiColumns(w)
    ext = np.abs(layout.n).max(0) if len(layout) else np.zeros(4, int)
    box = _g_invariant_box(group, sp.SupportBox(*(int(v) for v in ext)) + sp.box_of(wbar))
    space = RowSpace(group, box, layout)
    M = CIArray.zeros((R, R)) if rigorous else np.zeros((R, R), dtype=complex)
    for start in range(0, len(layout), batch):
        sl = slice(start, min(start + batch, len(layout)))
        vals, rows = cols(layout.n[sl], layout.m[sl] - 1)
        red = _reduce_scatter(vals, rows, layout.orbit[sl], space, len(layout), cols.support)
        M[1:, 1 + sl.start : 1 + sl.stop] = red.transpose(1, 0) if rigorous else red.T
    d = _diag(layout, nu, Omega, rigorous)
    ii = np.arange(1, R)
    M[(ii, ii)] = M[(ii, ii)] + d
    if pinned:
        M[0, 0] = CIArray.point(np.array(1.0)) if rigorous else 1.0
    else:
        M[0, 1:] = phase_row
    M[1:, 0] = omega_col
    return M


def assemble_block(P: Problem, rigorous=True, batch=64):
    """Finite block of ``DF`` in reduced variables (``A_hat`` restricted to ``E^dagger``)."""
    fin = P.fin
    M = reduced_block(
        P.wbar,
        P.group,
        fin,
        P.nu if rigorous else float(P.nu.mid),
        P.Omega,
        _phase_row_entries(P, fin, rigorous),
        _omega_column(P, fin, rigorous),
        pinned=P.scheme.phase_mode == "pinned",
        rigorous=rigorous,
        batch=batch,
    )
    return FiniteBlock(M, fin, "Ahat_finite")


def build_Ahat(orbit: ReducedOrbit, scheme: TruncationScheme, group, forcing, phase_ref=None) -> FiniteBlock:
    """Rigorous finite block of ``A_hat_red``."""
    return assemble_block(Problem(orbit, scheme, group, forcing, phase_ref), rigorous=True)


def build_A(Ahat: FiniteBlock) -> FiniteBlock:
    """Floating-point inverse of the midpoint of ``A_hat`` (a point matrix)."""
    from .solver import numerical_inverse

    M = Ahat.matrix.mid if isinstance(Ahat.matrix, CIArray) else np.asarray(Ahat.matrix)
    return FiniteBlock(numerical_inverse(M), Ahat.layout, "A_finite")


# ---------------------------------------------------------------- bounds
def _weighted_col_norms(B, xi_rows, xi_cols):
    """Upper bounds of ``(1/xi_j) sum_i xi_i |B_ij|`` for each column."""
    if isinstance(B, CIArray):
        mag = B.abs_upper()
    else:
        mag = np.nextafter(np.abs(B) * (1 + 2.0**-50), np.inf)
    t = np.nextafter(mag * xi_rows[:, None], np.inf)
    s = rigor.rsum_upper(t, axis=0)
    return np.nextafter(s / xi_cols * (1 + 2.0**-50), np.inf)


def _weighted_norm(x, xi):
    mag = x.abs_upper() if isinstance(x, CIArray) else np.nextafter(np.abs(x) * (1 + 2.0**-50), np.inf)
    return float(rigor.rsum_upper(np.nextafter(mag * xi, np.inf)))


def _weighted_norm_lower(x, xi):
    mag = x.abs_lower() if isinstance(x, CIArray) else np.abs(x) * (1 - 2.0**-50)
    return float(rigor.rsum_lower(np.nextafter(mag * xi, -np.inf)))


def reduced_residual(P: Problem, rigorous=True):
    """``F^red(phi_bar)`` on the reduced layout of ``2 S``, plus the phase entry."""
    S2 = P.S + P.S
    w = CIArray.point(P.wbar) if rigorous else P.wbar
    W = vo.State(P.Omega, w)
    nu = P.nu if rigorous else P.nu.mid
    _, F = vo.residual_F(W, P.forcing, nu, phase_mode="orbit", method="direct" if rigorous else "fft")
    F = sp.resize(F, S2)
    lay = sy.ReducedLayout(P.group, _box_n(S2, P.scheme.essentially2D), P.scheme.eta)
    Fr = sy.project_Pi(F, lay)
    if P.scheme.phase_mode == "pinned":
        val = RigorousReal.point(P.Omega) - RigorousReal.point(P.scheme.Omega_pin)
        Fph = CIArray(val.lo, val.hi, 0.0, 0.0) if rigorous else complex(P.Omega - P.scheme.Omega_pin)
    else:
        orb = P.orbit.layout.orbit * P.orbit.layout.n[:, 3]
        x = P.orbit.phi * np.conj(P.phat)
        if rigorous:
            Fph = (CIArray.point(x) * orb.astype(float)).sum().mul_i()
        else:
            Fph = 1j * np.sum(x * orb)
    return Fph, Fr, lay


def bound_Y0(P: Problem, A: FiniteBlock, Amat: PointMatrix = None):
    """``|[A F]_phase| + sum_j xi^s_j |[A F]_j|`` with the tail through ``lambda``.

    Returns ``(Y0, details)``.
    """
    Fph, Fr, lay = reduced_residual(P, rigorous=True)
    fi = P.fin.index_of(lay.keys)
    inE = fi >= 0
    x = CIArray.zeros(len(P.fin) + 1)
    x[0] = Fph
    x[1 + fi[inE]] = Fr[np.nonzero(inE)[0]]
    Amat = Amat or PointMatrix(A.matrix)
    y = Amat.enclose(x)
    xi_fin = A.xi
    fin_hi = _weighted_norm(y, xi_fin)
    fin_lo = _weighted_norm_lower(y, xi_fin)
    # tail rows: reps outside E^dagger (mode-wise membership)
    tail = ~P.Emask_fn(lay.n)
    tn = lay.n[tail]
    ft = Fr[np.nonzero(tail)[0]]
    mu_iv = mu_array(tn, P.nu, P.Omega)
    if len(tn):
        if np.any(mu_iv.lo <= 0):
            raise SchemeInvalid("tail mode with vanishing mu")
        lam_hi = np.nextafter(1.0 / mu_iv.lo, np.inf)
        lam_lo = np.nextafter(1.0 / mu_iv.hi, -np.inf)
        xi_t = lay.xi[tail]
        tail_hi = float(rigor.rsum_upper(np.nextafter(ft.abs_upper() * lam_hi * xi_t * (1 + 2.0**-50), np.inf)))
        tail_lo = float(rigor.rsum_lower(np.nextafter(ft.abs_lower() * lam_lo * xi_t * (1 - 2.0**-50), -np.inf)))
    else:
        tail_hi = tail_lo = 0.0
    Y0 = RigorousReal(max(0.0, np.nextafter(fin_lo + tail_lo, -np.inf)), np.nextafter(fin_hi + tail_hi, np.inf))
    return Y0, dict(Y0_finite=RigorousReal(max(fin_lo, 0.0), fin_hi), Y0_tail=RigorousReal(max(tail_lo, 0.0), tail_hi))


def bound_Z0(A: FiniteBlock, Ahat: FiniteBlock, Amat: PointMatrix = None, batch=512) -> RigorousReal:
    """Weighted column-sup norm of ``I - A A_hat`` on the finite block."""
    Amat = Amat or PointMatrix(A.matrix)
    R = A.size
    xi = A.xi
    best = 0.0
    H = Ahat.matrix if isinstance(Ahat.matrix, CIArray) else CIArray.point(Ahat.matrix)
    for s in range(0, R, batch):
        sl = slice(s, min(s + batch, R))
        P = Amat.enclose(H[:, sl])
        Bm = -P
        j = np.arange(sl.start, sl.stop)
        one = CIArray.point(np.ones(len(j)))
        Bm[(j, np.arange(len(j)))] = Bm[(j, np.arange(len(j)))] + one
        norms = _weighted_col_norms(Bm, xi, xi[sl])
        best = max(best, float(norms.max()))
    return RigorousReal(0.0, best)


def bound_Z2(A: FiniteBlock, scheme: TruncationScheme, Omega) -> RigorousReal:
    """``(4 + sqrt 2) max(max_j (|n_j|_inf / xi^s_j) ||A e_j||, 1/Omega, 1/sqrt(nu N^dagger))``.

    The phase column of ``A`` is excluded because ``D^2F`` has no phase component.
    """
    M = np.asarray(A.matrix)
    xi = A.xi
    ninf = np.abs(A.layout.n).max(1).astype(float)
    cols = _weighted_col_norms(M[:, 1:], xi, xi[1:])
    normA = float(np.nextafter(cols * ninf * (1 + 2.0**-50), np.inf).max()) if len(cols) else 0.0
    t = tail_sup_bounds(scheme.Ndagger, scheme.nu_iv, Omega)
    tail = (1 / abs(RigorousReal.point(Omega))).max(t["lam_k"])
    K = RigorousReal(0.0, normA).max(tail)
    return (RigorousReal.point(4) + SQRT2) * K


def z1_tail_formula(wbar, scheme: TruncationScheme, essentially2D=None) -> RigorousReal:
    """Z1 bound for columns outside ``E(N~) + S^sol``.

        max_m [ c/sqrt(nu N~) ||max_p |(M w)^p| ||
                + (1/N~)(3/2 sum_p ||w^p|| - 1/2 ||w^m||)
                + (1/N~) sum_l (||D_m (M w)^l|| + sum_p ||D_p w^l|| - ||D_m w^l||) ]

    with ``c = sqrt 2`` for essentially 2D data and ``sqrt 3`` otherwise.
    """
    e2 = scheme.essentially2D if essentially2D is None else essentially2D
    eta = scheme.eta
    w = wbar if isinstance(wbar, CIArray) else CIArray.point(np.asarray(wbar))
    if not w.any_nonzero():
        return RigorousReal(0.0, 0.0)
    U = sp.biot_savart(w)
    box = sp.box_of(w)
    wts = sp.weights(box, "plain", eta)
    mx = np.max(np.stack([U[p].abs_upper() for p in range(3)]), axis=0)
    nmax = RigorousReal(0.0, float(rigor.rsum_upper(np.nextafter(mx * wts, np.inf))))
    nw = [sp.norm(w[p], "plain", eta) for p in range(3)]
    nDU = [[sp.norm(sp.partial(m + 1, U[l]), "plain", eta) for l in range(3)] for m in range(3)]
    nDw = [[sp.norm(sp.partial(p + 1, w[l]), "plain", eta) for l in range(3)] for p in range(3)]
    t = tail_sup_bounds(scheme.Ntilde, scheme.nu_iv, 1.0)
    c = t["lam_sum2"] if e2 else t["lam_sum3"]
    invN = t["lam"]
    sw = nw[0] + nw[1] + nw[2]
    best = RigorousReal(0.0, 0.0)
    half = RigorousReal.point(Fraction(1, 2))
    for m in range(3):
        # subtracted norms enter through their lower bounds
        term2 = RigorousReal.point(Fraction(3, 2)) * sw - half * RigorousReal(nw[m].lo, nw[m].lo)
        s3 = RigorousReal(0.0, 0.0)
        for l in range(3):
            s3 = s3 + nDU[m][l] + nDw[0][l] + nDw[1][l] + nDw[2][l] - RigorousReal(nDw[m][l].lo, nDw[m][l].lo)
        val = c * nmax + invN * (term2 + s3)
        best = best.max(val)
    return RigorousReal(0.0, best.hi)


def z1_columns(P: Problem):
    """Reduced layout of the explicit Z1 columns ``E(N~) + S^sol``."""
    s = P.scheme
    EN = enumerate_E(s.Ntilde, P.nu, P.Omega, s.essentially2D)
    ext = np.abs(EN).max(0) + np.array(P.S.as_tuple())
    shape = tuple(2 * ext + 1)
    grid = np.zeros(shape, dtype=bool)
    grid[tuple((EN[:, i] + ext[i]) for i in range(4))] = True
    size = tuple(2 * v + 1 for v in P.S.as_tuple())
    grid = ndimage.maximum_filter(grid.view(np.uint8), size=size, mode="constant").astype(bool)
    n = np.stack(np.nonzero(grid), axis=1) - ext
    n = np.concatenate([n, P.orbit.layout.n])
    if s.essentially2D:
        n = n[n[:, 2] == 0]
    return sy.ReducedLayout(P.group, n, s.eta), EN


class _ColumnNorms:
    """Upper bounds of ``(1/xi_j) ||A C e_j||`` for the columns of a reduced layout."""

    def __init__(self, P: Problem, A: FiniteBlock, Amat: PointMatrix, cols_layout):
        self.P, self.A, self.Amat, self.lay = P, A, Amat, cols_layout
        self.cols = vo.DPsiColumns(CIArray.point(P.wbar))
        self.space = P.row_space(cols_layout.n)
        self.colE = P.Emask_fn(cols_layout.n)
        # phase-row entries of C for columns outside E^dagger
        self.ph = _phase_row_entries(P, cols_layout, True) if P.scheme.phase_mode == "orbit" else None
        self.xi = cols_layout.xi

    def __call__(self, sl: slice):
        lay, cols, space = self.lay, self.cols, self.space
        nfin = len(self.P.fin)
        vals, rows = cols(lay.n[sl], lay.m[sl] - 1)
        xi_n = self.xi[sl] / lay.orbit[sl]
        total = _tail_rows_bound(vals, rows, xi_n, space, cols.support)
        outside = ~self.colE[sl]
        if np.any(outside):
            red = _reduce_scatter(vals[outside], rows[outside], lay.orbit[sl][outside], space, nfin, cols.support)
            X = CIArray.zeros((nfin + 1, int(outside.sum())))
            X[1:, :] = red.transpose(1, 0)
            if self.ph is not None:
                X[0, :] = self.ph[np.arange(sl.start, sl.stop)[outside]]
            Y = self.Amat.enclose(X)
            fn = _weighted_col_norms(Y, self.A.xi, self.xi[sl][outside])
            total[outside] = np.nextafter(total[outside] + fn, np.inf)
        return total


def z1_column_norms(P: Problem, A: FiniteBlock, cols_layout, Amat: PointMatrix = None):
    """Per-column upper bounds of ``(1/xi^s_j) ||A C^red e_j||`` for arbitrary reduced columns.

    Useful to probe columns outside ``E(N~) + S^sol`` against the tail formula.
    """
    f = _ColumnNorms(P, A, Amat or PointMatrix(A.matrix), cols_layout)
    return f(slice(0, len(cols_layout)))


def _serial_map(f, xs):
    return [f(x) for x in xs]


def bound_Z1(P: Problem, A: FiniteBlock, Amat: PointMatrix = None, batch=64, log=None, pmap=None):
    """``(Z1_finite, Z1_tail, details)``.

    The finite part runs over the phase column and every reduced column
    ``j`` in ``E(N~) + S^sol``.  Rows in ``E^dagger`` go through the finite
    block of ``A``; tail rows are bounded by the full-space column sum
    ``(1/xi_j) sum_q |lambda_q| xi_q |v_q|`` which dominates the reduced one.
    ``pmap(f, iterable)`` may be an ordered parallel map over column batches.
    """
    Amat = Amat or PointMatrix(A.matrix)
    cols_layout, EN = z1_columns(P)
    norms = _ColumnNorms(P, A, Amat, cols_layout)
    t0 = time.time()
    ncol = len(cols_layout)

    def one(start):
        sl = slice(start, min(start + batch, ncol))
        total = norms(sl)
        if log and (start // batch) % 20 == 0:
            log(dict(stage="Z1", done=sl.stop, of=ncol, elapsed=round(time.time() - t0, 2)))
        k = int(np.argmax(total))
        return float(total[k]), int(sl.start + k)

    # reduction in batch order, so the result does not depend on pmap
    best, best_j = 0.0, None
    for val, j in (pmap or _serial_map)(one, range(0, ncol, batch)):
        if val > best:
            best, best_j = val, j
    # phase column: Omega-derivative entries outside E^dagger
    lay = P.orbit.layout
    out = ~P.sol_in_E
    if np.any(out):
        v = CIArray.point(1j * lay.n[out, 3] * P.orbit.phi[out])
        mu_iv = mu_array(lay.n[out], P.nu, P.Omega)
        lam_hi = np.nextafter(1.0 / mu_iv.lo, np.inf)
        s = float(rigor.rsum_upper(np.nextafter(v.abs_upper() * lam_hi * lay.xi[out] * (1 + 2.0**-50), np.inf)))
        if s > best:
            best, best_j = s, -1
    tail = z1_tail_formula(P.wbar, P.scheme)
    arg = "phase" if best_j == -1 else (None if best_j is None else _key_tuple(cols_layout, best_j))
    return RigorousReal(0.0, best), tail, dict(columns=ncol, argmax=arg, E_tilde=len(EN))


def _key_tuple(layout, j):
    return tuple(int(x) for x in layout.n[j]) + (int(layout.m[j]),)


def radii_polynomial(Y0, Z0, Z1, Z2):
    """Verdict of the radii polynomial ``Z2 r^2/2 - (1 - Z) r + Y0`` with ``Z = Z0 + Z1``.

    Every input is used through its upper endpoint; ``Z`` is the exact sum
    of the two upper endpoints, kept as an interval.  On success ``rmin`` and
    ``rmax`` enclose

        rmin = (1 - Z - sqrt((1 - Z)^2 - 2 Y0 Z2)) / Z2
        rmax = (1 - Z) / Z2,

    the smaller root and the uniqueness radius; ``rmin.hi`` is the certified
    radius.

    Returns
    -------
    dict
        ``success``, ``rmin``, ``rmax`` (RigorousReal or None) and the two
        margins ``margin_Z = 1 - Z`` and ``margin_disc = (1 - Z)^2 - 2 Y0 Z2``.
    """
    up = lambda x: RigorousReal.point(x.hi if isinstance(x, RigorousReal) else x)
    Y0, Z0, Z1, Z2 = up(Y0), up(Z0), up(Z1), up(Z2)
    Z = RigorousReal.point(Z0.hi) + RigorousReal.point(Z1.hi)
    one = RigorousReal.point(1)
    a = one - Z
    disc = a.sqr() - RigorousReal.point(2) * Y0 * Z2
    out = dict(success=False, rmin=None, rmax=None, margin_Z=a, margin_disc=disc)
    if not (a.lo > 0 and disc.lo > 0):
        return out
    sq = disc.sqrt()
    rmin = (RigorousReal.point(2) * Y0) / (a + sq)  # stable form of (a - sqrt(disc))/Z2
    if Z2.hi == 0:
        rmax = None
    else:
        rmax = a / Z2
    out.update(success=True, rmin=rmin, rmax=rmax)
    if rmax is not None and not rmin.hi <= rmax.lo:
        out["success"] = False
    return out


# ---------------------------------------------------------------- report
def _iv_json(x):
    return None if x is None else x.to_json()


def _iv_from(x):
    return None if x is None else RigorousReal.from_json(x)


@dataclass
class BoundsReport:
    """Outcome of one validation run."""

    Y0: RigorousReal
    Z0: RigorousReal
    Z1_finite: RigorousReal
    Z1_tail: RigorousReal
    Z2: RigorousReal
    rmin: RigorousReal = None
    rmax: RigorousReal = None
    success: bool = False
    failure: list = field(default_factory=list)
    margins: dict = field(default_factory=dict)
    scheme: dict = field(default_factory=dict)
    telemetry: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def Z1(self) -> RigorousReal:
        return self.Z1_finite.max(self.Z1_tail)

    def to_json(self):
        d = dict(
            version="BOUNDS-1",
            Y0=_iv_json(self.Y0),
            Z0=_iv_json(self.Z0),
            Z1_finite=_iv_json(self.Z1_finite),
            Z1_tail=_iv_json(self.Z1_tail),
            Z1=_iv_json(self.Z1),
            Z2=_iv_json(self.Z2),
            rmin=_iv_json(self.rmin),
            rmax=_iv_json(self.rmax),
            success=bool(self.success),
            failure=list(self.failure),
            margins={k: _iv_json(v) for k, v in self.margins.items()},
            scheme=self.scheme,
            telemetry=self.telemetry,
            extras=self.extras,
        )
        return d

    @classmethod
    def from_json(cls, d):
        if d.get("version") != "BOUNDS-1":
            raise ValueError(f"unsupported report version {d.get('version')!r}")
        return cls(
            Y0=_iv_from(d["Y0"]),
            Z0=_iv_from(d["Z0"]),
            Z1_finite=_iv_from(d["Z1_finite"]),
            Z1_tail=_iv_from(d["Z1_tail"]),
            Z2=_iv_from(d["Z2"]),
            rmin=_iv_from(d.get("rmin")),
            rmax=_iv_from(d.get("rmax")),
            success=bool(d["success"]),
            failure=list(d.get("failure", [])),
            margins={k: _iv_from(v) for k, v in d.get("margins", {}).items()},
            scheme=d.get("scheme", {}),
            telemetry=d.get("telemetry", {}),
            extras=d.get("extras", {}),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def summary(self):
        f = lambda x: "-" if x is None else f"{x.hi:.6e}"
        return (
            f"Y0={f(self.Y0)} Z0={f(self.Z0)} Z1={f(self.Z1)} (finite {f(self.Z1_finite)}, tail {f(self.Z1_tail)}) "
            f"Z2={f(self.Z2)} success={self.success} rmin={f(self.rmin)}"
        )


def _maxrss_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def validate(orbit: ReducedOrbit, scheme: TruncationScheme, group, forcing, phase_ref=None, symmetrize=True, log=None, batch=64, pmap=None):
    """Full pipeline: symmetrize, ``A_hat``, ``A``, the four bounds, verdict.

    Parameters
    ----------
    orbit : ReducedOrbit
        Candidate ``phi_bar``; symmetrized first unless ``symmetrize=False``.
    phase_ref : array, optional
        Reduced phase reference; defaults to the symmetrized ``phi_bar``.
    log : callable, optional
        Receives dict records (stage timings).
    pmap : callable, optional
        Ordered map used for the Z1 column batches (e.g. a thread pool).

    Returns
    -------
    BoundsReport
    """
    tm = {}
    t0 = time.time()
    if symmetrize:
        orbit = orbit.symmetrized()
    P = Problem(orbit, scheme, group, forcing, phase_ref)
    tm["setup_s"] = time.time() - t0

    def stage(name, fn):
        t = time.time()
        r = fn()
        tm[name + "_s"] = round(time.time() - t, 3)
        if log:
            log(dict(stage=name, seconds=tm[name + "_s"], maxrss_mb=round(_maxrss_mb(), 1)))
        return r

    Ahat = stage("Ahat", lambda: assemble_block(P, rigorous=True))
    try:
        A = stage("A", lambda: build_A(Ahat))
    except SingularFiniteBlock:
        raise
    Amat = PointMatrix(A.matrix)
    Y0, ydet = stage("Y0", lambda: bound_Y0(P, A, Amat))
    Z0 = stage("Z0", lambda: bound_Z0(A, Ahat, Amat))
    Z1f, Z1t, zdet = stage("Z1", lambda: bound_Z1(P, A, Amat, batch=batch, log=log, pmap=pmap))
    Z2 = stage("Z2", lambda: bound_Z2(A, scheme, P.Omega))
    Z1 = Z1f.max(Z1t)
    verdict = radii_polynomial(Y0, Z0, Z1, Z2)
    failure = []
    Zsum = Z0.hi + Z1.hi
    if not verdict["margin_Z"].lo > 0:
        failure.append(
            dict(
                condition="Z0+Z1<1",
                value=Zsum,
                excess=Zsum - 1.0,
                dominant="Z1_tail" if Z1t.hi >= Z1f.hi else "Z1_finite",
            )
        )
    elif not verdict["margin_disc"].lo > 0:
        lhs = 2 * Y0.hi * Z2.hi
        rhs = (1 - Zsum) ** 2
        failure.append(dict(condition="2*Y0*Z2<(1-Z0-Z1)^2", lhs=lhs, rhs=rhs, ratio=lhs / rhs if rhs > 0 else math.inf))
    elif not verdict["success"]:
        failure.append(dict(condition="rmin<=rmax"))
    tm["total_s"] = round(time.time() - t0, 3)
    tm["maxrss_mb"] = round(_maxrss_mb(), 1)
    return BoundsReport(
        Y0=Y0,
        Z0=Z0,
        Z1_finite=Z1f,
        Z1_tail=Z1t,
        Z2=Z2,
        rmin=verdict["rmin"],
        rmax=verdict["rmax"],
        success=bool(verdict["success"]),
        failure=failure,
        margins=dict(one_minus_Z=verdict["margin_Z"], discriminant=verdict["margin_disc"]),
        scheme=dict(scheme.to_json(), group_order=len(group), Omega_hex=rigor.to_hex(P.Omega)),
        telemetry=dict(tm, E_dagger_modes=len(P.E), E_dagger_red=len(P.fin), **{k: v for k, v in zdet.items() if k != "argmax"}),
        extras=dict(Y0_finite=_iv_json(ydet["Y0_finite"]), Y0_tail=_iv_json(ydet["Y0_tail"]), Z1_argmax=zdet["argmax"]),
    )
