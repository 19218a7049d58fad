"""
Floating-point side: Newton refinement in reduced variables, numerical
inverses, natural-parameter continuation and a small 2D pseudo-spectral
integrator used to produce initial guesses.

Nothing here is rigorous; the validator re-checks everything it is given.
"""
from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import spectral as sp
from . import symmetry as sy
from . import vorticity as vo
from .errors import NoConvergence, SingularFiniteBlock, SingularJacobian

__all__ = [
    "numerical_inverse",
    "reduced_residual",
    "reduced_jacobian",
    "NewtonResult",
    "newton",
    "continuation_step",
    "integrate_2d",
    "find_period",
    "extract_orbit",
    "bootstrap_orbit",
    "load_sample",
    "JsonLog",
]


class JsonLog:
    """Line-delimited JSON records to a stream (``None`` discards them)."""

    def __init__(self, stream=None):
        self.stream = stream

    def __call__(self, rec):
        if self.stream is not None:
            self.stream.write(json.dumps(rec, default=float) + "\n")
            self.stream.flush()


def numerical_inverse(M, refine=True, cond_max=1e14):
    """Floating-point inverse with one step of iterative refinement.

    Raises
    ------
    SingularFiniteBlock
        If the matrix is singular to working precision or its 1-norm
        condition estimate exceeds ``cond_max``.
    """
    M = np.asarray(M)
    if not np.all(np.isfinite(M)):
        raise SingularFiniteBlock("matrix has non-finite entries")
    try:
        X = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise SingularFiniteBlock(str(exc)) from None
    if refine:
        R = -(M @ X)
        R[np.diag_indices_from(R)] += 1.0
        X = X + X @ R
    # entries this small carry no information and slow down later products
    X[np.abs(X) < 2.0**-900] = 0.0
    cond = np.linalg.norm(M, 1) * np.linalg.norm(X, 1)
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularFiniteBlock(f"condition estimate {cond:.3e} exceeds {cond_max:.1e}")
    return X


# ---------------------------------------------------------------- reduced map
def reduced_residual(Omega, phi, layout, forcing, nu, phat=None, phase_mode="orbit", Omega_pin=None, out_layout=None):
    """``(F_phase, Pi F(Sigma phi))`` in floating point.

    ``out_layout`` selects the reduced rows (default: ``layout``, the
    Galerkin projection).
    """
    box = layout.bounding_box()
    w = sy.lift_Sigma(np.asarray(phi, dtype=complex), layout, box)
    _, F = vo.residual_F(vo.State(float(Omega), w), forcing, float(vo.nu_enclosure(nu).mid), phase_mode="orbit", method="fft")
    out_layout = out_layout or layout
    Fr = sy.project_Pi(sp.resize(F, _cover(sp.box_of(F), out_layout.bounding_box())), out_layout)
    if phase_mode == "pinned":
        Fph = complex(float(Omega) - float(Omega_pin))
    else:
        ref = phi if phat is None else phat
        Fph = 1j * np.sum(phi * np.conj(ref) * layout.orbit * layout.n[:, 3])
    return Fph, Fr


def _cover(a, b):
    return sp.SupportBox(*(max(x, y) for x, y in zip(a.as_tuple(), b.as_tuple())))


def reduced_jacobian(Omega, phi, layout, nu, phat=None, phase_mode="orbit"):
    """Dense ``DF^red`` over ``{phase} + layout`` (floating point)."""
    from .validator import reduced_block

    ref = phi if phat is None else phat
    w = sy.lift_Sigma(np.asarray(phi, dtype=complex), layout, layout.bounding_box())
    return reduced_block(
        w,
        layout.group,
        layout,
        float(vo.nu_enclosure(nu).mid),
        float(Omega),
        1j * np.conj(ref) * layout.orbit * layout.n[:, 3],
        1j * phi * layout.n[:, 3],
        pinned=phase_mode == "pinned",
        rigorous=False,
    )


def _rnorm(Fph, Fr, layout):
    return float(abs(Fph) + np.sum(layout.xi * np.abs(Fr)))


@dataclass
class NewtonResult:
    Omega: float
    phi: np.ndarray
    layout: sy.ReducedLayout
    converged: bool
    iterations: int
    history: list = field(default_factory=list)

    def field(self, box=None):
        return sy.lift_Sigma(self.phi, self.layout, box or self.layout.bounding_box())


def newton(Omega, phi, layout, forcing, nu, phase_mode="orbit", Omega_pin=None, phat=None, tol=1e-12, maxit=50, log=None, raise_on_failure=True):
    """Newton iteration for the Galerkin projection of ``F^red``.

    The iterate is re-symmetrized (divergence, reality, group average)
    after every step and ``Omega`` is kept real.

    Parameters
    ----------
    tol : float
        Stop when the weighted l1 norm of the Galerkin residual drops below
        ``tol`` times the norm of ``phi``.
    log : callable, optional
        Receives one dict per iteration.
    """
    log = log or JsonLog()
    phi = sy.symmetrize_input(np.asarray(phi, dtype=complex), layout)
    phat = phi.copy() if phat is None else np.asarray(phat, dtype=complex)
    Omega = float(Omega)
    hist = []
    scale = max(float(np.sum(layout.xi * np.abs(phi))), 1e-300)
    for it in range(maxit + 1):
        Fph, Fr = reduced_residual(Omega, phi, layout, forcing, nu, phat, phase_mode, Omega_pin)
        r = _rnorm(Fph, Fr, layout)
        hist.append(r)
        log(dict(stage="newton", iteration=it, residual=r, Omega=Omega))
        if not np.isfinite(r):
            break
        if r <= tol * scale:
            if phase_mode == "orbit" and not np.any(np.abs(phi[layout.n[:, 3] != 0]) > 1e-10 * np.abs(phi).max()):
                raise NoConvergence("Newton collapsed onto a time-independent state")
            return NewtonResult(Omega, phi, layout, True, it, hist)
        if it == maxit:
            break
        J = reduced_jacobian(Omega, phi, layout, nu, phat, phase_mode)
        rhs = -np.concatenate([[Fph], Fr])
        try:
            dx = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"Newton step {it}: {exc}") from None
        if not np.all(np.isfinite(dx)):
            raise SingularJacobian(f"Newton step {it}: non-finite update")
        Omega = Omega + float(dx[0].real)
        phi = sy.symmetrize_input(phi + dx[1:], layout)
        if len(hist) > 4 and r > 1e3 * hist[0]:
            break
    res = NewtonResult(Omega, phi, layout, False, len(hist) - 1, hist)
    if raise_on_failure:
        raise NoConvergence(f"Newton did not reach {tol:g} (last residual {hist[-1]:.3e})")
    return res


def continuation_step(result: NewtonResult, forcing, nu_to, phase_mode="orbit", **kw):
    """Natural-parameter continuation: re-solve at ``nu_to`` from ``result``."""
    return newton(result.Omega, result.phi, result.layout, forcing, nu_to, phase_mode=phase_mode, **kw)


# ---------------------------------------------------------------- 2D integrator
class _Grid2D:
    def __init__(self, Ng, nu, fgrid):
        k = np.fft.fftfreq(Ng, 1.0 / Ng)
        self.K1, self.K2 = np.meshgrid(k, k, indexing="ij")
        ksq = self.K1**2 + self.K2**2
        self.Kinv = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1), 0.0)
        self.visc = nu * ksq
        self.F = np.fft.fft2(fgrid)
        self.dealias = (np.abs(self.K1) < Ng / 3) & (np.abs(self.K2) < Ng / 3)

    def rhs(self, w):
        ifft = np.fft.ifft2
        u1 = ifft(1j * self.K2 * self.Kinv * w).real
        u2 = ifft(-1j * self.K1 * self.Kinv * w).real
        wx = ifft(1j * self.K1 * w).real
        wy = ifft(1j * self.K2 * w).real
        return -np.fft.fft2(u1 * wx + u2 * wy) * self.dealias - self.visc * w + self.F


def integrate_2d(w0, nu, dt, steps, fgrid=None, save_every=1):
    """RK4 for the scalar vorticity of 2D forced Navier-Stokes on a square grid.

    Parameters
    ----------
    w0 : (Ng, Ng) array
        Initial vorticity in grid space.
    fgrid : (Ng, Ng) array, optional
        Vorticity forcing; defaults to ``4 sin x1 sin x2``.

    Returns
    -------
    (S, Ng, Ng) array of fft2 coefficients, one every ``save_every`` steps
    (the initial state included).
    """
    Ng = w0.shape[0]
    if fgrid is None:
        x = np.arange(Ng) * 2 * np.pi / Ng
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        fgrid = 4 * np.sin(X1) * np.sin(X2)
    g = _Grid2D(Ng, float(nu), fgrid)
    w = np.fft.fft2(w0)
    out = [w.copy()]
    for it in range(1, steps + 1):
        k1 = g.rhs(w)
        k2 = g.rhs(w + 0.5 * dt * k1)
        k3 = g.rhs(w + 0.5 * dt * k2)
        k4 = g.rhs(w + dt * k3)
        w = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(w)):
            raise NoConvergence(f"time integration blew up at step {it}")
        if it % save_every == 0:
            out.append(w.copy())
    return np.array(out)


def find_period(traj, dt, t_min):
    """Approximate return time: the first deep minimum of ``||w(t) - w(0)||`` after ``t_min``."""
    d = np.linalg.norm((traj - traj[0]).reshape(len(traj), -1), axis=1) / np.linalg.norm(traj[0])
    i0 = int(np.ceil(t_min / dt))
    if i0 >= len(d) - 1:
        raise NoConvergence("trajectory shorter than t_min")
    i = i0 + int(np.argmin(d[i0:]))
    if 0 < i < len(d) - 1:
        # parabolic refinement of the minimum of d^2
        y0, y1, y2 = d[i - 1] ** 2, d[i] ** 2, d[i + 1] ** 2
        den = y0 - 2 * y1 + y2
        s = 0.5 * (y0 - y2) / den if den > 0 else 0.0
    else:
        s = 0.0
    return (i + s) * dt, float(d[i])


def extract_orbit(traj, dt, period, box: sp.SupportBox):
    """Space-time Fourier coefficients ``omega_n`` of one period of a 2D trajectory.

    Uses ``omega_n = (1/T) int_0^T w_(n~)(t) exp(-i n4 Omega t) dt`` by the
    trapezoidal rule on the saved frames, truncated to ``box`` and placed in
    component 3.
    """
    Ng = traj.shape[1]
    Omega = 2 * np.pi / period
    nsteps = int(round(period / dt))
    frames = traj[: nsteps + 1] / Ng**2
    t = np.arange(nsteps + 1) * dt
    wts = np.full(nsteps + 1, dt)
    wts[0] = wts[-1] = 0.5 * dt
    out = sp.zeros(box, 3)
    for n4 in range(-box.Nt, box.Nt + 1):
        c = np.tensordot(wts * np.exp(-1j * n4 * Omega * t), frames, axes=(0, 0)) / (nsteps * dt)
        for n1 in range(-box.Nx1, box.Nx1 + 1):
            for n2 in range(-box.Nx2, box.Nx2 + 1):
                out[2, n1 + box.Nx1, n2 + box.Nx2, box.Nx3, n4 + box.Nt] = c[n1 % Ng, n2 % Ng]
    return Omega, out


def bootstrap_orbit(nu, box: sp.SupportBox, Ng=32, dt=0.002, transient=400.0, window=8.0, t_min=1.0, seed=1, log=None):
    """Initial guess by long-time integration from a perturbed equilibrium.

    Returns ``(Omega, omega)`` with ``omega`` on ``box``.  The transient must
    be long enough for the flow to settle on the attracting orbit.
    """
    log = log or JsonLog()
    x = np.arange(Ng) * 2 * np.pi / Ng
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    rng = np.random.default_rng(seed)
    w0 = 4 * np.sin(X1) * np.sin(X2) / (2 * nu) + 0.05 * rng.standard_normal((Ng, Ng))
    t0 = time.time()
    coarse = 0.01
    traj = integrate_2d(w0, nu, coarse, int(transient / coarse), save_every=int(transient / coarse))
    log(dict(stage="transient", seconds=round(time.time() - t0, 2)))
    w1 = np.real(np.fft.ifft2(traj[-1]))
    traj = integrate_2d(w1, nu, dt, int(window / dt))
    T, d = find_period(traj, dt, t_min)
    log(dict(stage="period", period=T, mismatch=d))
    return extract_orbit(traj, dt, T, box)


# ---------------------------------------------------------------- shipped data
def load_sample(name="tg_orbit_nu0.286.json"):
    """Shipped VFLD-1 approximate orbit as returned by :func:`spectral.parse_field`."""
    ref = resources.files("nsorbit") / "data" / name
    with ref.open("r") as fh:
        return sp.parse_field(json.load(fh))
