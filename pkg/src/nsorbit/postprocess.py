"""
Physical quantities from a validated vorticity orbit.

Velocity and pressure come with rigorous weighted l1 error bounds, which
also bound the C0 error of the represented functions.  Snapshots and the
symmetry-breaking diagnostic are plain floating-point evaluations.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import rigor
from . import spectral as sp
from . import symmetry as sy
from .errors import NotCurlFree, NotValidated
from .rigor import CIArray, RigorousReal
from .validator import BoundsReport, ReducedOrbit, TruncationScheme

C0ERR_VERSION = "C0ERR-1"

__all__ = [
    "ValidatedOrbit",
    "velocity_with_error",
    "pressure_with_error",
    "pressure_error",
    "gradient_recover",
    "c0_error_statement",
    "grid_snapshot",
    "quarter_period_snapshots",
    "write_snapshot_csv",
    "symmetry_deviation",
]


@dataclass
class ValidatedOrbit:
    """A reduced orbit together with the report that validated it."""

    orbit: ReducedOrbit
    report: BoundsReport
    group: sy.Group = None
    scheme: TruncationScheme = None

    def __post_init__(self):
        if not self.report.success or self.report.rmin is None:
            raise NotValidated("the bounds report does not certify this orbit")

    @property
    def r(self) -> RigorousReal:
        """Certified radius (upper endpoint of ``rmin``)."""
        return RigorousReal.point(self.report.rmin.hi)

    def omega(self):
        return self.orbit.lift()


def _require(orbit):
    if not isinstance(orbit, ValidatedOrbit):
        raise NotValidated("expected a ValidatedOrbit")
    return orbit


def velocity_with_error(orbit: ValidatedOrbit):
    """``ubar = M Sigma phi_bar`` and ``||u - ubar|| <= r``.

    Returns
    -------
    ubar : complex ndarray
    err : RigorousReal
    """
    orbit = _require(orbit)
    return sp.biot_savart(orbit.omega()), orbit.r


def pressure_error(unorm, r) -> RigorousReal:
    """``(2 ||ubar|| + r) r`` with outward rounding."""
    unorm = RigorousReal.point(unorm.hi if isinstance(unorm, RigorousReal) else unorm)
    r = RigorousReal.point(r.hi if isinstance(r, RigorousReal) else r)
    return (RigorousReal.point(2) * unorm + r) * r


def pressure_from_velocity(ubar, f):
    """``p_n = -(1/|n~|^2) sum_l n_l ([(u * D~) u]^(l)_n + i f^(l)_n)``, zero at ``n~ = 0``.

    ``f`` is the forcing of the velocity equation.
    """
    adv = sp.advect(ubar, ubar, method="direct")
    box = sp.box_of(adv).union(sp.box_of(f))
    adv = sp.embed(adv, box)
    fe = sp.embed(np.asarray(f, dtype=complex), box)
    n = sp.wavenumbers(box)
    s = sum(n[l] * (adv[l] + 1j * fe[l]) for l in range(3))
    return -sp.inv_nsq(box) * s


def pressure_with_error(orbit: ValidatedOrbit, forcing_f):
    """Pressure ``pbar`` from the Poisson relation and ``||p - pbar|| <= (2||ubar|| + r) r``."""
    ubar, r = velocity_with_error(orbit)
    pbar = pressure_from_velocity(ubar, forcing_f)
    unorm = sum((sp.norm(ubar[l], "plain", orbit.orbit.layout.eta) for l in range(3)), RigorousReal.point(0))
    return pbar, pressure_error(unorm, r)


def gradient_recover(Phi, check=True):
    """Scalar ``p`` with ``Phi = -grad p`` for a curl-free field.

    With ``(grad p)_n = i n~ p_n`` this is ``(Gamma Phi)_n = i Phi^(k)_n / n_k``
    for any ``k`` with ``n_k != 0``; zero at ``n~ = 0``.

    Raises
    ------
    NotCurlFree
        If ``n_l Phi^(m) != n_m Phi^(l)`` somewhere, or if ``Phi`` has content
        at ``n~ = 0``.
    """
    Phi = np.asarray(Phi, dtype=complex)
    box = sp.box_of(Phi)
    n = [np.broadcast_to(v, box.shape) for v in sp.wavenumbers(box)[:3]]
    zero = (n[0] == 0) & (n[1] == 0) & (n[2] == 0)
    scale = max(float(np.abs(Phi).max()), 1e-300)
    if np.any(np.abs(Phi[:, zero]) > 0):
        raise NotCurlFree("Phi has content on spatial-mean modes")
    if check:
        for l in range(3):
            for m in range(l + 1, 3):
                d = n[l] * Phi[m] - n[m] * Phi[l]
                if np.any(np.abs(d) > 1e-12 * scale * (1 + np.abs(n[l]) + np.abs(n[m]))):
                    raise NotCurlFree(f"n_{l + 1} Phi^({m + 1}) != n_{m + 1} Phi^({l + 1})")
    p = np.zeros(box.shape, dtype=complex)
    done = zero.copy()
    for k in range(3):
        sel = (n[k] != 0) & ~done
        p[sel] = 1j * Phi[k][sel] / n[k][sel]
        done |= sel
    return p


def c0_error_statement(orbit: ValidatedOrbit, forcing_f=None):
    """C0 error bounds implied by the weighted l1 bounds.

    The comparison is against the time-dilated approximation
    ``ubar(x, theta t)`` with ``theta = Omega_tilde / Omega_bar``; the
    frequency itself is known to within ``r``.
    """
    orbit = _require(orbit)
    r = orbit.r
    rec = dict(
        version=C0ERR_VERSION,
        vorticity_c0=r.to_json(),
        velocity_c0=r.to_json(),
        frequency_err=r.to_json(),
        Omega_bar=rigor.to_hex(float(orbit.orbit.Omega)),
        dilation_note=(
            "bounds compare the true orbit with the approximation evaluated at dilated time "
            "theta*t, theta = Omega_true/Omega_bar; |Omega_true - Omega_bar| <= r"
        ),
        derivative_bounds=None,
    )
    if forcing_f is not None:
        _, perr = pressure_with_error(orbit, forcing_f)
        rec["pressure_c0"] = perr.to_json()
    return rec


# ---------------------------------------------------------------- grid evaluation
def grid_snapshot(field, Omega, times, resolution, component=3, x3=0.0, normalize=None):
    """Evaluate one component on an ``resolution x resolution`` grid in ``(x1, x2)``.

    Direct trigonometric summation over the nonzero modes (no FFT), so grid
    points shared between resolutions get identical values.

    Returns
    -------
    x1, x2 : (R,) arrays
    values : (len(times), R, R) real array
    """
    field = np.asarray(field)
    box = sp.box_of(field)
    a = field[component - 1]
    idx = np.nonzero(a)
    c = box.as_tuple()
    n = [idx[i] - c[i] for i in range(4)]
    coef = a[idx]
    x = 2 * np.pi * np.arange(resolution) / resolution
    E1 = np.exp(1j * np.outer(n[0], x))  # (K, R)
    E2 = np.exp(1j * np.outer(n[1], x))
    out = np.empty((len(times), resolution, resolution))
    for i, t in enumerate(times):
        ph = coef * np.exp(1j * (n[2] * x3 + n[3] * Omega * t))
        out[i] = np.einsum("k,ka,kb->ab", ph, E1, E2).real
    if normalize:
        out /= normalize
    return x, x, out


def quarter_period_snapshots(field, Omega, resolution=64, component=3, normalize=None):
    """Four snapshots a quarter of the period apart."""
    T = 2 * np.pi / Omega
    times = [k * T / 4 for k in range(4)]
    return times, grid_snapshot(field, Omega, times, resolution, component, normalize=normalize)


def write_snapshot_csv(path, x1, x2, values):
    """One CSV with columns ``x1, x2, value`` for a single time slice."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "value"])
        for i, a in enumerate(x1):
            for j, b in enumerate(x2):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(values[i, j]))])


def symmetry_deviation(u_field, Omega=1.0, times=None, shifts=64):
    """``max_t max_s E(u(t) - S_s u(t)) / 4E(u(t))`` for translations ``S_s`` in ``x1``.

    ``E`` is the kinetic energy; the value lies in ``[0, 1]``.
    """
    u = np.asarray(u_field)
    box = sp.box_of(u)
    c = box.as_tuple()
    if times is None:
        times = np.linspace(0, 2 * np.pi / Omega, 16, endpoint=False)
    n4 = np.arange(-c[3], c[3] + 1)
    n1 = np.arange(-c[0], c[0] + 1)
    s = 2 * np.pi * np.arange(shifts) / shifts
    fac = np.abs(1 - np.exp(1j * np.outer(s, n1))) ** 2  # (S, n1)
    best = 0.0
    for t in times:
        ut = np.tensordot(u, np.exp(1j * n4 * Omega * t), axes=([4], [0]))  # (3, n1, n2, n3)
        e = (np.abs(ut) ** 2).sum(axis=(0, 2, 3))  # energy per n1
        E = e.sum()
        if E == 0:
            continue
        best = max(best, float((fac @ e).max() / (4 * E)))
    return min(best, 1.0)
