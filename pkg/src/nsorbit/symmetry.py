"""
Finite symmetry groups acting on Fourier modes and the reduced variables.

A physical symmetry ``g = (C, C~, D)`` acts on velocity fields by

    [a_g u](x, t) = C^T u(C x + 2 pi C~, t + 2 pi D / Omega)

with ``C`` a signed permutation matrix and rational shifts.  On vorticity
coefficients it induces ``(gamma_g omega)_j = alpha_g(j) omega_{beta_g(j)}``
with

    beta_g((n~, n4), m)  = (C n~, n4, tau(m))
    alpha_g((n~, n4), m) = det(C) rho(m) exp(2 pi i (n~ . C^T C~ + n4 D))

where column ``m`` of ``C`` holds ``rho(m)`` in row ``tau(m)``.  The group
product is ``(C1, C~1, D1)(C2, C~2, D2) = (C1 C2, C~1 + C1 C~2, D1 + D2)``
(shifts mod 1), which makes ``beta`` a left action and ``alpha`` a cocycle.

Mode keys ``j = (n, m)`` are packed into int64 in lexicographic order so that
"smallest key in the orbit" is a plain ``min``.  Phases are integers in units
of ``1/L`` of a turn.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

import numpy as np

from . import rigor
from . import spectral as sp
from .errors import NonFiniteClosure, UncataloguedMode
from .rigor import CIArray, IArray, RigorousReal

__all__ = [
    "PhysicalSymmetry",
    "Group",
    "close_group",
    "taylor_green_generators",
    "preset_group",
    "encode",
    "decode",
    "OrbitCatalog",
    "ReducedLayout",
    "classify",
    "lift_Sigma",
    "project_Pi",
    "group_average",
    "gamma_apply",
    "conj_field",
    "conj_reduced",
    "project_div",
    "symmetrize_input",
    "reduced_norm",
    "check_action_laws",
]

KEY_BOUND = 512
_W = 2 * KEY_BOUND + 1


def encode(n, m):
    """Pack wave numbers ``n`` (..., 4) and 1-based components ``m`` into int64 keys."""
    n = np.asarray(n, dtype=np.int64)
    m = np.asarray(m, dtype=np.int64)
    if np.any(np.abs(n) > KEY_BOUND):
        raise ValueError("wave number outside the key range")
    k = n[..., 0] + KEY_BOUND
    for i in (1, 2, 3):
        k = k * _W + (n[..., i] + KEY_BOUND)
    return k * 4 + m


def decode(key):
    """Inverse of :func:`encode`: returns ``(n (..., 4), m)``."""
    key = np.asarray(key, dtype=np.int64)
    m = key % 4
    k = key // 4
    n = np.empty(key.shape + (4,), dtype=np.int64)
    for i in (3, 2, 1, 0):
        n[..., i] = k % _W - KEY_BOUND
        k = k // _W
    return n, m


# ---------------------------------------------------------------- physical symmetries
def _frac1(x) -> Fraction:
    return Fraction(x) % 1


@dataclass(frozen=True)
class PhysicalSymmetry:
    """``(C, C~, D)`` with ``C`` a signed permutation, shifts mod 1."""

    C: tuple
    Ctilde: tuple
    D: Fraction

    def __post_init__(self):
        C = np.array(self.C, dtype=np.int64).reshape(3, 3)
        if not (np.all(np.isin(C, (-1, 0, 1))) and np.all(np.abs(C).sum(0) == 1) and np.all(np.abs(C).sum(1) == 1)):
            raise ValueError(f"C must be a 3x3 signed permutation matrix, got {C.tolist()}")
        object.__setattr__(self, "C", tuple(int(v) for v in C.ravel()))
        object.__setattr__(self, "Ctilde", tuple(_frac1(v) for v in self.Ctilde))
        object.__setattr__(self, "D", _frac1(self.D))
        if len(self.Ctilde) != 3:
            raise ValueError("Ctilde must have three entries")

    @property
    def Cmat(self):
        return np.array(self.C, dtype=np.int64).reshape(3, 3)

    @classmethod
    def identity(cls):
        return cls((1, 0, 0, 0, 1, 0, 0, 0, 1), (0, 0, 0), 0)

    def __matmul__(self, other: "PhysicalSymmetry") -> "PhysicalSymmetry":
        C1, C2 = self.Cmat, other.Cmat
        sh = [self.Ctilde[i] + sum(int(C1[i, k]) * other.Ctilde[k] for k in range(3)) for i in range(3)]
        return PhysicalSymmetry(tuple((C1 @ C2).ravel()), tuple(sh), self.D + other.D)

    def inverse(self) -> "PhysicalSymmetry":
        Ct = self.Cmat.T
        sh = [-sum(int(Ct[i, k]) * self.Ctilde[k] for k in range(3)) for i in range(3)]
        return PhysicalSymmetry(tuple(Ct.ravel()), tuple(sh), -self.D)

    @property
    def det(self) -> int:
        return int(round(np.linalg.det(self.Cmat)))

    def to_json(self):
        return dict(C=list(self.C), Ctilde=[str(v) for v in self.Ctilde], D=str(self.D))

    @classmethod
    def from_json(cls, d):
        try:
            return cls(tuple(int(v) for v in d["C"]), tuple(Fraction(v) for v in d["Ctilde"]), Fraction(d["D"]))
        except (KeyError, TypeError, ZeroDivisionError) as exc:
            raise ValueError(f"malformed generator {d!r}: {exc}") from None


def taylor_green_generators():
    """``g1 = S_x1 S_x2``, ``g2 = D S_x1`` and ``g3 = P_4 S_x1 R``."""
    h, q = Fraction(1, 2), Fraction(1, 4)
    g1 = PhysicalSymmetry((-1, 0, 0, 0, -1, 0, 0, 0, 1), (0, 0, 0), 0)
    g2 = PhysicalSymmetry((-1, 0, 0, 0, 1, 0, 0, 0, 1), (h, h, 0), 0)
    g3 = PhysicalSymmetry((0, 1, 0, 1, 0, 0, 0, 0, 1), (h, 0, 0), q)
    return [g1, g2, g3]


class Group:
    """A finite group of physical symmetries (identity first)."""

    def __init__(self, elements, generators=()):
        self.elements = list(elements)
        self.generators = list(generators)
        self.index = {g: i for i, g in enumerate(self.elements)}
        dens = [4]
        for g in self.elements:
            dens += [v.denominator for v in g.Ctilde] + [g.D.denominator]
        self.L = lcm(*dens)
        self._tables()

    def __len__(self):
        return len(self.elements)

    def _tables(self):
        G = len(self.elements)
        self.Cs = np.stack([g.Cmat for g in self.elements])  # (G, 3, 3)
        self.tau = np.zeros((G, 4), dtype=np.int64)
        self.rho = np.zeros((G, 4), dtype=np.int64)
        for gi, g in enumerate(self.elements):
            C = g.Cmat
            for m in range(3):
                r = int(np.nonzero(C[:, m])[0][0])
                self.tau[gi, m + 1] = r + 1
                self.rho[gi, m + 1] = C[r, m]
        L = self.L
        # n~ . C^T C~ = (C^T C~) . n~ ; store the rational vector times L as ints
        self.shiftL = np.zeros((G, 3), dtype=np.int64)
        self.DL = np.zeros(G, dtype=np.int64)
        self.detL = np.zeros(G, dtype=np.int64)
        for gi, g in enumerate(self.elements):
            v = [sum(int(g.Cmat[k, i]) * g.Ctilde[k] for k in range(3)) for i in range(3)]
            self.shiftL[gi] = [int(x * L) for x in v]
            self.DL[gi] = int(g.D * L)
            self.detL[gi] = 0 if g.det == 1 else L // 2

    def action(self, n, m):
        """``beta`` and ``alpha`` for every element at once.

        Parameters
        ----------
        n : (K, 4) int array
        m : (K,) int array, 1-based

        Returns
        -------
        nb : (G, K, 4), mb : (G, K), phase : (G, K)
            ``alpha = exp(2 pi i phase / L)``.
        """
        n = np.asarray(n, dtype=np.int64).reshape(-1, 4)
        m = np.asarray(m, dtype=np.int64).reshape(-1)
        L = self.L
        nb = np.empty((len(self),) + n.shape, dtype=np.int64)
        nb[..., :3] = np.einsum("gij,kj->gki", self.Cs, n[:, :3])
        nb[..., 3] = n[None, :, 3]
        mb = self.tau[:, m]
        ph = self.detL[:, None] + np.where(self.rho[:, m] < 0, L // 2, 0)
        ph = ph + self.shiftL @ n[:, :3].T
        ph = ph + self.DL[:, None] * n[None, :, 3]
        return nb, mb, np.mod(ph, L)

    def mode_action(self, g, key):
        """``(beta_g(j), alpha_g(j))`` for a single ``g`` and mode ``j = (n1, n2, n3, n4, m)``."""
        gi = self.index[g] if isinstance(g, PhysicalSymmetry) else int(g)
        nb, mb, ph = self.action(np.array([key[:4]]), np.array([key[4]]))
        beta = tuple(int(x) for x in nb[gi, 0]) + (int(mb[gi, 0]),)
        return beta, phase_to_complex(int(ph[gi, 0]), self.L)

    def product_index(self, a: int, b: int) -> int:
        return self.index[self.elements[a] @ self.elements[b]]


def phase_to_complex(ph, L):
    """Exact complex unit for quarter turns, float value otherwise."""
    q, r = divmod(4 * int(ph), L)
    if r == 0:
        return (1, 1j, -1, -1j)[q % 4]
    return complex(math.cos(2 * math.pi * ph / L), math.sin(2 * math.pi * ph / L))


def close_group(generators, cap=1024) -> Group:
    """Closure of ``generators`` under composition."""
    gens = list(generators)
    e = PhysicalSymmetry.identity()
    elems = [e]
    seen = {e}
    frontier = [e]
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                c = g @ a
                if c not in seen:
                    seen.add(c)
                    elems.append(c)
                    nxt.append(c)
                    if len(elems) > cap:
                        raise NonFiniteClosure(f"group closure exceeded {cap} elements")
        frontier = nxt
    return Group(elems, gens)


def preset_group(name="taylor-green-16") -> Group:
    if name == "taylor-green-16":
        return close_group(taylor_green_generators())
    if name in ("trivial", "identity"):
        return close_group([])
    raise ValueError(f"unknown group preset {name!r}")


def check_action_laws(group: Group, box: sp.SupportBox):
    """Count violations of ``beta_gh = beta_g o beta_h`` and of the cocycle
    ``alpha_gh(q) = alpha_g(beta_h(q)) alpha_h(q)`` over every mode of ``box``.

    Returns
    -------
    dict
        ``beta`` and ``cocycle`` violation counts and the number of checks.
    """
    n, m = _box_modes(box)
    nb, mb, ph = group.action(n, m)
    L = group.L
    bad_beta = bad_alpha = 0
    for b in range(len(group)):
        n2, m2, p2 = group.action(nb[b], mb[b])
        for a in range(len(group)):
            c = group.product_index(a, b)
            bad_beta += int(np.sum(np.any(n2[a] != nb[c], axis=1) | (m2[a] != mb[c])))
            bad_alpha += int(np.sum((p2[a] + ph[b]) % L != ph[c]))
    return dict(beta=bad_beta, cocycle=bad_alpha, checks=len(group) ** 2 * len(m))


# ---------------------------------------------------------------- orbit catalogue
def classify(group: Group, n, m, chunk=100_000):
    """Orbit data for arbitrary modes.

    Returns a dict of arrays over the input modes: ``key``, ``rep`` (key of
    the lexicographically smallest orbit element), ``phase``
    (``alpha~(rep, q)`` in units of ``1/L``), ``slot`` (smallest group index
    mapping ``q`` to ``rep``), ``orbit`` (orbit size), ``stab`` (stabiliser
    size) and ``symmetric`` (stabiliser phases all trivial).
    """
    n = np.asarray(n, dtype=np.int64).reshape(-1, 4)
    m = np.asarray(m, dtype=np.int64).reshape(-1)
    parts = [_classify(group, n[i : i + chunk], m[i : i + chunk]) for i in range(0, max(len(m), 1), chunk)]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _classify(group, n, m):
    keys = encode(n, m)
    nb, mb, ph = group.action(n, m)
    img = encode(nb, mb)  # (G, K)
    rep = img.min(axis=0)
    hit = img == rep[None, :]
    slot = np.argmax(hit, axis=0)
    cols = np.arange(len(keys))
    phase = ph[slot, cols]
    fixed = img == keys[None, :]
    stab = fixed.sum(axis=0)
    symmetric = ~np.any(fixed & (ph != 0), axis=0)
    orbit = len(group) // stab
    return dict(key=keys, rep=rep, phase=phase, slot=slot, orbit=orbit, stab=stab, symmetric=symmetric)


def _box_modes(box: sp.SupportBox):
    grids = sp.wavenumbers(box, sparse=False)
    n = np.stack([g.ravel() for g in grids], axis=1)
    K = len(n)
    n3 = np.repeat(n[None], 3, axis=0).reshape(-1, 4)
    m3 = np.repeat(np.arange(1, 4), K)
    return n3, m3


class OrbitCatalog:
    """Orbit data for every mode of a box, in the field's flat layout.

    Flat position ``i`` corresponds to ``field.reshape(-1)[i]`` of a
    ``(3,) + box.shape`` array.
    """

    def __init__(self, group: Group, box: sp.SupportBox):
        self.group = group
        self.box = box
        self.n, self.m = _box_modes(box)
        d = classify(group, self.n, self.m)
        self.__dict__.update(d)
        # a box not closed under the action would give orbits leaving it
        lim = np.array(box.as_tuple())
        for C in group.Cs:
            if np.any(np.abs(C) @ lim[:3] != lim[:3]):
                raise ValueError(f"box {box} is not invariant under the group")
        self.nonzero = np.any(self.n != 0, axis=1)

    def histogram(self):
        """``{orbit size: count of orbits}`` over nonzero wave numbers."""
        reps = self.nonzero & (self.key == self.rep)
        vals, counts = np.unique(self.orbit[reps], return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def trivial_fraction(self):
        sel = self.nonzero
        return float(np.mean(~self.symmetric[sel])) if np.any(sel) else 0.0


class ReducedLayout:
    """Index set ``J^red`` (sorted keys) with orbit weights.

    Parameters
    ----------
    group : Group
    n : (K, 4) int array
        Wave numbers of a ``G``-invariant set (``n = 0`` is skipped).  All three
        components of each are considered.
    eta : float
        Norm weight base; ``xi^s_j = eta^{|n|_1} |G.j|``.
    """

    def __init__(self, group: Group, n, eta=1.0):
        n = np.unique(np.asarray(n, dtype=np.int64).reshape(-1, 4), axis=0)
        n = n[np.any(n != 0, axis=1)]
        K = len(n)
        n3 = np.repeat(n[None], 3, axis=0).reshape(-1, 4)
        m3 = np.repeat(np.arange(1, 4), K)
        d = classify(group, n3, m3)
        sel = (d["key"] == d["rep"]) & d["symmetric"]
        order = np.argsort(d["key"][sel])
        self.group = group
        self.keys = d["key"][sel][order]
        self.n = n3[sel][order]
        self.m = m3[sel][order]
        self.orbit = d["orbit"][sel][order]
        self.eta = float(eta)
        self.full_count = int(np.sum(d["symmetric"]))

    def __len__(self):
        return len(self.keys)

    @property
    def xi(self):
        """Reduced weights ``eta^{|n|_1} |G.j|`` (upper bounds)."""
        l1 = np.abs(self.n).sum(1)
        w = np.ones(len(self)) if self.eta == 1.0 else np.nextafter(self.eta ** l1.astype(float) * (1 + 2.0**-50), np.inf)
        return w * self.orbit

    def index_of(self, keys):
        """Position of each key in the layout, ``-1`` where absent."""
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, max(len(self.keys) - 1, 0))
        if len(self.keys) == 0:
            return np.full(keys.shape, -1)
        return np.where(self.keys[pos] == keys, pos, -1)

    def restrict(self, mask):
        out = object.__new__(ReducedLayout)
        out.group, out.eta, out.full_count = self.group, self.eta, self.full_count
        out.keys, out.n, out.m, out.orbit = self.keys[mask], self.n[mask], self.m[mask], self.orbit[mask]
        return out

    def bounding_box(self) -> sp.SupportBox:
        if len(self) == 0:
            return sp.SupportBox(0, 0, 0, 0)
        return sp.SupportBox(*(int(v) for v in np.abs(self.n).max(0)))


def reduced_norm(phi, layout: ReducedLayout) -> RigorousReal:
    """``||phi||_red = sum_j xi^s_j |phi_j|``, equal to ``||Sigma phi||`` for symmetric data."""
    if isinstance(phi, CIArray):
        hi, lo = phi.abs_upper(), phi.abs_lower()
    else:
        m = np.abs(np.asarray(phi))
        hi = np.nextafter(m * (1 + 2.0**-51), np.inf)
        lo = np.maximum(np.nextafter(m * (1 - 2.0**-51), -np.inf), 0.0)
    xi = layout.xi
    up = rigor.rsum_upper(np.nextafter(hi * xi, np.inf))
    dn = rigor.rsum_lower(np.maximum(np.nextafter(lo * xi, -np.inf), 0.0))
    return RigorousReal(max(float(dn), 0.0), float(up))


# ---------------------------------------------------------------- phases on data
def apply_phase(x, ph, L):
    """Multiply ``x`` by ``exp(2 pi i ph / L)`` (arrays broadcast)."""
    ph = np.asarray(ph, dtype=np.int64)
    q, r = np.divmod(4 * ph, L)
    if np.all(r == 0):
        if isinstance(x, CIArray):
            return x.mul_unit(q)
        return x * np.array([1, 1j, -1, -1j])[q % 4]
    ang = 2 * np.pi * ph / L
    if isinstance(x, CIArray):
        # libm cos/sin are faithful; four ulps of slack cover them
        c, s = np.cos(ang), np.sin(ang)
        slack = 4 * np.spacing(1.0)
        cr = IArray(c - slack, c + slack)
        sr = IArray(s - slack, s + slack)
        re, im = x.real, x.imag
        return CIArray.from_parts(re * cr - im * sr, re * sr + im * cr)
    return x * np.exp(1j * ang)


def _conj(x):
    return x.conj() if isinstance(x, CIArray) else np.conj(x)


def _zeros_like(x, shape):
    return CIArray.zeros(shape) if isinstance(x, CIArray) else np.zeros(shape, dtype=complex)


def _flat(x):
    return x.reshape(-1)


class _Plan:
    """Cached gather plan for lifting reduced data onto a box."""

    def __init__(self, layout: ReducedLayout, box: sp.SupportBox):
        cat = _catalog(layout.group, box)
        idx = layout.index_of(cat.rep)
        ok = (idx >= 0) & cat.symmetric & cat.nonzero
        self.target = np.nonzero(ok)[0]
        self.source = idx[ok]
        self.phase = cat.phase[ok]
        self.box = box
        self.cat = cat


_CACHE = {}


def _catalog(group, box):
    key = ("cat", id(group), box)
    if key not in _CACHE:
        _CACHE[key] = OrbitCatalog(group, box)
    return _CACHE[key]


def _plan(layout, box):
    key = ("plan", id(layout), box)
    if key not in _CACHE:
        _CACHE[key] = _Plan(layout, box)
    return _CACHE[key]


def lift_Sigma(phi, layout: ReducedLayout, box: sp.SupportBox = None):
    """``Sigma phi``: spread reduced coefficients over their orbits.

    ``(Sigma phi)_q = alpha~(rep(q), q) phi_rep(q)``; modes whose
    representative is not in the layout stay zero.
    """
    box = box or layout.bounding_box()
    if len(phi) != len(layout):
        raise UncataloguedMode(f"reduced vector has {len(phi)} entries, layout {len(layout)}")
    p = _plan(layout, box)
    out = _zeros_like(phi, (3,) + box.shape)
    flat = _flat(out)
    flat[p.target] = apply_phase(phi[p.source], p.phase, layout.group.L)
    return flat.reshape((3,) + box.shape)


def project_Pi(field, layout: ReducedLayout):
    """``Pi``: restriction of a field to the representatives in ``layout``."""
    box = sp.box_of(field)
    lim = np.array(box.as_tuple())
    if np.any(np.abs(layout.n) > lim):
        raise UncataloguedMode("layout modes outside the field box")
    c = lim
    idx = (layout.m - 1,) + tuple(layout.n[:, i] + c[i] for i in range(4))
    if isinstance(field, CIArray):
        return field[idx]
    return np.asarray(field)[idx]


def gamma_apply(group: Group, g, field):
    """``(gamma_g omega)_j = alpha_g(j) omega_{beta_g(j)}`` on a dense field."""
    gi = group.index[g] if isinstance(g, PhysicalSymmetry) else int(g)
    box = sp.box_of(field)
    cat = _catalog(group, box)
    nb, mb, ph = group.action(cat.n, cat.m)
    c = np.array(box.as_tuple())
    src = np.ravel_multi_index((mb[gi] - 1,) + tuple(nb[gi, :, i] + c[i] for i in range(4)), (3,) + box.shape)
    flat = _flat(field)
    out = apply_phase(flat[src], ph[gi], group.L)
    return out.reshape((3,) + box.shape)


def group_average(field, group: Group):
    """``(1/|G|) sum_g gamma_g omega``."""
    acc = None
    for gi in range(len(group)):
        t = gamma_apply(group, gi, field)
        acc = t if acc is None else acc + t
    if isinstance(acc, CIArray):
        return acc * (IArray(1.0) / float(len(group)))
    return acc / len(group)


def conj_field(field):
    """``(gamma^* omega)_n = conj(omega_{-n})``."""
    f = field.flip(axis=(1, 2, 3, 4)) if isinstance(field, CIArray) else np.flip(field, axis=(1, 2, 3, 4))
    return _conj(f)


def conj_reduced(phi, layout: ReducedLayout):
    """``gamma~^* phi = Pi gamma^* Sigma phi``."""
    box = layout.bounding_box()
    return project_Pi(conj_field(lift_Sigma(phi, layout, box)), layout)


def project_div(field):
    """Modewise projection ``w - n~ (n~ . w) / |n~|^2`` (identity at ``n~ = 0``)."""
    box = sp.box_of(field)
    n1, n2, n3, _ = sp.wavenumbers(box)
    ns = [n1, n2, n3]
    inv = sp.inv_nsq(box)
    dot = sum(field[l] * ns[l] for l in range(3)) * inv
    return np.stack([field[l] - ns[l] * dot for l in range(3)])


def symmetrize_input(phi, layout: ReducedLayout):
    """``phi -> Pi A Pi_div Sigma phi`` followed by ``(phi + gamma~^* phi) / 2``."""
    box = layout.bounding_box()
    w = lift_Sigma(np.asarray(phi, dtype=complex), layout, box)
    w = group_average(project_div(w), layout.group)
    p = project_Pi(w, layout)
    return 0.5 * (p + conj_reduced(p, layout))
