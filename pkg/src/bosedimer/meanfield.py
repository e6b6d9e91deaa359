"""Classical mean-field limit of the dimer on the Bloch sphere.

The spin vector S = (Sx, Sy, Sz) lives on the shell |S| = 1/2; the flow
conserves S^2 exactly, so shell drift measures integrator error. The
polar form (theta, phi) is used for reporting and equilibrium analysis;
integration happens in Cartesian components, which have no pole
singularity. Site-1 occupation is n = (1 + cos theta) N / 2.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import PoleError, StepSizeError
from .model import DimerParams, drive

__all__ = [
    "spin_rhs",
    "bloch_rhs",
    "to_bloch",
    "to_cartesian",
    "particle_number",
    "MeanfieldTrajectory",
    "integrate_meanfield",
    "Equilibrium",
    "find_equilibria",
    "stroboscopic_samples",
]

DEFAULT_B0 = (np.pi / 2 + 0.1, 0.1)   # generic off-symmetry start


def spin_rhs(s, t, params: DimerParams, tunneling_sign: int = 1):
    """Time derivative of the Cartesian spin; s has shape (3,) or (3, m).

    tunneling_sign=+1 is the corrected form whose flow conserves S^2;
    tunneling_sign=-1 reproduces the uncorrected dSz/dt = -2J*Sy variant
    for side-by-side inspection (it leaks off the shell).
    """
    s = np.asarray(s, dtype=float)
    sx, sy, sz = s[0], s[1], s[2]
    eps = drive(params, t)
    U, J, g = params.U, params.J, params.gamma
    out = np.empty_like(s)
    out[0] = 2.0 * eps * sy - 8.0 * U * sz * sy + 8.0 * g * (sy * sy + sz * sz)
    out[1] = -2.0 * eps * sx + 8.0 * U * sx * sz - 2.0 * J * sz - 8.0 * g * sx * sy
    out[2] = tunneling_sign * 2.0 * J * sy - 8.0 * g * sx * sz
    return out


def bloch_rhs(b, t, params: DimerParams):
    """(dtheta/dt, dphi/dt) on the Bloch sphere; b has shape (2,) or (2, m).

    Raises PoleError within sin(theta) <= 1e-10 of a pole, where the
    phi equation is singular; integrate in Cartesian form there.
    """
    b = np.asarray(b, dtype=float)
    th, ph = b[0], b[1]
    st = np.sin(th)
    if np.any(np.abs(st) <= 1e-10):
        raise PoleError("state within 1e-10 of a coordinate pole")
    ct, sp, cp = np.cos(th), np.sin(ph), np.cos(ph)
    eps = drive(params, t)
    U, J, g = params.U, params.J, params.gamma
    out = np.empty_like(b)
    out[0] = -2.0 * J * sp + 4.0 * g * cp * ct
    out[1] = -2.0 * J * (ct / st) * cp - 2.0 * eps + 4.0 * U * ct - 4.0 * g * sp / st
    return out


def to_bloch(s):
    """Cartesian spin(s) -> (theta, phi); accepts shape (3,) or (..., 3)."""
    s = np.asarray(s, dtype=float)
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    theta = np.arccos(np.clip(z / r, -1.0, 1.0))
    phi = np.arctan2(y, x)
    return theta, phi


def to_cartesian(theta, phi):
    """(theta, phi) -> spin on the |S| = 1/2 shell, shape (..., 3)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return 0.5 * np.stack([np.cos(phi) * st, np.sin(phi) * st,
                           np.cos(theta)], axis=-1)


def particle_number(theta, N: int):
    """Site-1 occupation n = (1 + cos theta) N / 2, in [0, N]."""
    return (1.0 + np.cos(theta)) * N / 2.0


@njit(cache=True, inline="always")
def _rhs(sx, sy, sz, eps, u, J, g, sign):
    fx = 2.0 * eps * sy - 8.0 * u * sz * sy + 8.0 * g * (sy * sy + sz * sz)
    fy = -2.0 * eps * sx + 8.0 * u * sx * sz - 2.0 * J * sz - 8.0 * g * sx * sy
    fz = sign * 2.0 * J * sy - 8.0 * g * sx * sz
    return fx, fy, fz


@njit(cache=True)
def _rk4_steps(y, u, J, g, eps, h, nsteps, sign, s2ref):
    """Advance the (3, m) batch nsteps of size h; returns max |S^2 - s2ref|."""
    m = y.shape[1]
    drift = 0.0
    for _ in range(nsteps):
        for c in range(m):
            sx, sy, sz = y[0, c], y[1, c], y[2, c]
            uu = u[c]
            ax, ay, az = _rhs(sx, sy, sz, eps, uu, J, g, sign)
            bx, by, bz = _rhs(sx + 0.5 * h * ax, sy + 0.5 * h * ay,
                              sz + 0.5 * h * az, eps, uu, J, g, sign)
            cx, cy, cz = _rhs(sx + 0.5 * h * bx, sy + 0.5 * h * by,
                              sz + 0.5 * h * bz, eps, uu, J, g, sign)
            dx, dy, dz = _rhs(sx + h * cx, sy + h * cy, sz + h * cz,
                              eps, uu, J, g, sign)
            sx += (h / 6.0) * (ax + 2.0 * bx + 2.0 * cx + dx)
            sy += (h / 6.0) * (ay + 2.0 * by + 2.0 * cy + dy)
            sz += (h / 6.0) * (az + 2.0 * bz + 2.0 * cz + dz)
            y[0, c], y[1, c], y[2, c] = sx, sy, sz
            e = abs(sx * sx + sy * sy + sz * sz - s2ref[c])
            if e > drift:
                drift = e
    return drift


@njit(cache=True)
def _strobe_kernel(y, u, J, g, E, A, h1, n1, h2, n2,
                   n_transient, n_record, sign, s2ref, out):
    """Drive whole periods (eps=E+A for the first half, eps=E for the
    second) and record cos(theta) at period boundaries after the
    transient. Returns max shell drift."""
    drift = 0.0
    total = n_transient + n_record
    for p in range(total):
        e1 = _rk4_steps(y, u, J, g, E + A, h1, n1, sign, s2ref)
        e2 = _rk4_steps(y, u, J, g, E, h2, n2, sign, s2ref)
        if e1 > drift:
            drift = e1
        if e2 > drift:
            drift = e2
        if p >= n_transient:
            for c in range(y.shape[1]):
                sx, sy, sz = y[0, c], y[1, c], y[2, c]
                out[p - n_transient, c] = sz / np.sqrt(sx * sx + sy * sy + sz * sz) * 1.0
    return drift


@dataclass(frozen=True)
class MeanfieldTrajectory:
    """Sampled mean-field evolution in Cartesian spin components."""

    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)    # (n_samples, 3)
    shell_drift: float                        # max |S^2(t) - S^2(0)|


def _as_cartesian_state(b0):
    b0 = np.asarray(b0, dtype=float)
    if b0.shape == (2,):
        return to_cartesian(b0[0], b0[1])
    if b0.shape == (3,):
        return b0.copy()
    raise ValueError(f"initial state must have shape (2,) or (3,), got {b0.shape}")


def integrate_meanfield(b0, params: DimerParams, t_end: float,
                        dt: float | None = None,
                        t_samples: np.ndarray | None = None,
                        tunneling_sign: int = 1,
                        shell_tol: float = 1e-6) -> MeanfieldTrajectory:
    """Fixed-step Cartesian RK4 of the mean-field flow from t = 0.

    b0 is (theta, phi) or (Sx, Sy, Sz). Steps are cut at drive switches
    and at every requested sample time, so samples are exact and no step
    straddles a discontinuity; within each piece the step is uniform and
    <= dt (default T/2000 under drive, min(t_end/2000, 0.01) otherwise,
    the cap keeping long relaxation runs on the shell). Shell drift
    beyond shell_tol raises StepSizeError (not monitored for the
    uncorrected tunneling_sign=-1 variant, which genuinely drifts).
    """
    if t_end <= 0:
        raise ValueError(f"t_end must be > 0, got {t_end}")
    if dt is None:
        dt = params.T / 2000.0 if params.A != 0 else min(t_end / 2000.0, 0.01)
    if t_samples is None:
        t_samples = np.linspace(0.0, t_end, min(2001, max(2, int(t_end / dt) + 1)))
    t_samples = np.asarray(t_samples, dtype=float)
    if t_samples.size and (t_samples.min() < 0 or t_samples.max() > t_end + 1e-12):
        raise ValueError("sample times must lie in [0, t_end]")

    if params.A != 0:
        half = 0.5 * params.T
        k1 = int(np.ceil(t_end / half))
        switches = half * np.arange(1, k1)
        switches = switches[switches < t_end - 1e-12 * params.T]
    else:
        switches = np.empty(0)
    cuts = np.unique(np.concatenate([[0.0, t_end], switches, t_samples]))
    sample_set = {round(t, 12) for t in t_samples}

    y = np.ascontiguousarray(_as_cartesian_state(b0).reshape(3, 1))
    s2ref = np.array([float(y[0, 0] ** 2 + y[1, 0] ** 2 + y[2, 0] ** 2)])
    u = np.array([params.U], dtype=float)
    sign = float(tunneling_sign)

    out_t, out_s = [], []
    drift = 0.0
    if 0.0 in sample_set:
        out_t.append(0.0)
        out_s.append(y[:, 0].copy())
    for ta, tb in zip(cuts[:-1], cuts[1:]):
        eps = float(drive(params, ta))
        n = max(1, int(np.ceil((tb - ta) / dt - 1e-9)))
        h = (tb - ta) / n
        d = _rk4_steps(y, u, params.J, params.gamma, eps, h, n, sign, s2ref)
        drift = max(drift, d)
        if tunneling_sign == 1 and not drift <= shell_tol:
            raise StepSizeError(
                f"shell drift {drift:.3e} exceeds {shell_tol:.1e}; reduce dt")
        if round(tb, 12) in sample_set:
            out_t.append(tb)
            out_s.append(y[:, 0].copy())
    return MeanfieldTrajectory(times=np.array(out_t), states=np.array(out_s),
                               shell_drift=drift)


@dataclass(frozen=True)
class Equilibrium:
    """Fixed point of the autonomous (A = 0) mean-field flow."""

    theta: float
    phi: float
    n: float                                  # particle_number(theta, N)
    stability: str                            # stable | unstable | marginal
    eigenvalues: tuple                        # 2x2 Jacobian eigenvalues
    residual: float


def _bloch_f(th, ph, U, J, g, E):
    # bloch_rhs without pole checks, vectorized over arrays
    st = np.sin(th)
    st = np.where(np.abs(st) < 1e-300, 1e-300, st)
    ct, sp, cp = np.cos(th), np.sin(ph), np.cos(ph)
    f1 = -2.0 * J * sp + 4.0 * g * cp * ct
    f2 = -2.0 * J * (ct / st) * cp - 2.0 * E + 4.0 * U * ct - 4.0 * g * sp / st
    return f1, f2


def _newton_roots(params, n_grid):
    U, J, g, E = params.U, params.J, params.gamma, params.E
    margin = 5e-3
    th = np.linspace(margin, np.pi - margin, n_grid)
    ph = np.linspace(-np.pi, np.pi, n_grid, endpoint=False)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    th, ph = TH.ravel().copy(), PH.ravel().copy()
    h = 1e-6
    for _ in range(80):
        f1, f2 = _bloch_f(th, ph, U, J, g, E)
        a11 = (_bloch_f(th + h, ph, U, J, g, E)[0]
               - _bloch_f(th - h, ph, U, J, g, E)[0]) / (2 * h)
        a12 = (_bloch_f(th, ph + h, U, J, g, E)[0]
               - _bloch_f(th, ph - h, U, J, g, E)[0]) / (2 * h)
        a21 = (_bloch_f(th + h, ph, U, J, g, E)[1]
               - _bloch_f(th - h, ph, U, J, g, E)[1]) / (2 * h)
        a22 = (_bloch_f(th, ph + h, U, J, g, E)[1]
               - _bloch_f(th, ph - h, U, J, g, E)[1]) / (2 * h)
        det = a11 * a22 - a12 * a21
        with np.errstate(divide="ignore", invalid="ignore"):
            dth = (a22 * f1 - a12 * f2) / det
            dph = (a11 * f2 - a21 * f1) / det
        dth = np.nan_to_num(dth, nan=0.0, posinf=0.0, neginf=0.0)
        dph = np.nan_to_num(dph, nan=0.0, posinf=0.0, neginf=0.0)
        # damp long steps to keep Newton from catapulting across the sphere
        norm = np.hypot(dth, dph)
        scale = np.where(norm > 0.3, 0.3 / np.maximum(norm, 1e-300), 1.0)
        th = th - dth * scale
        ph = ph - dph * scale
        # fold back onto the sphere chart
        th = np.mod(th, 2.0 * np.pi)
        flip = th > np.pi
        th = np.where(flip, 2.0 * np.pi - th, th)
        ph = np.where(flip, ph + np.pi, ph)
        ph = np.mod(ph + np.pi, 2.0 * np.pi) - np.pi

    f1, f2 = _bloch_f(th, ph, U, J, g, E)
    res = np.hypot(f1, f2)
    ok = (res < 1e-11) & (th > 1e-4) & (th < np.pi - 1e-4)
    return th[ok], ph[ok], res[ok]


def _dedupe_on_sphere(th, ph, res, tol=1e-6):
    pts, out = [], []
    order = np.lexsort((ph, th))
    for i in order:
        v = to_cartesian(th[i], ph[i]) * 2.0      # unit vector
        if any(np.linalg.norm(v - w) < tol for w in pts):
            continue
        pts.append(v)
        out.append((th[i], ph[i], res[i]))
    return out


def find_equilibria(params: DimerParams, grid: int = 64) -> list:
    """All fixed points of the autonomous flow, classified by stability.

    Newton from a grid x grid (theta, phi) seed lattice, deduplicated
    within 1e-6 on-sphere distance. Root counts from grid/2 and grid
    seeds must agree, otherwise the search escalates to 2*grid. Each
    root is classified by the eigenvalues of the 2x2 finite-difference
    Jacobian (central, step 1e-6): stable if max Re < -1e-8, unstable
    if > 1e-8, marginal otherwise.
    """
    if params.A != 0:
        raise ValueError("find_equilibria requires the autonomous system (A = 0)")

    def roots_at(n):
        th, ph, res = _newton_roots(params, n)
        return _dedupe_on_sphere(th, ph, res)

    coarse = roots_at(grid // 2)
    fine = roots_at(grid)
    chosen = fine
    if len(coarse) != len(fine):
        chosen = roots_at(2 * grid)

    U, J, g, E = params.U, params.J, params.gamma, params.E
    h = 1e-6
    out = []
    for th, ph, res in chosen:
        f_pp = _bloch_f(th + h, ph, U, J, g, E)
        f_mm = _bloch_f(th - h, ph, U, J, g, E)
        g_pp = _bloch_f(th, ph + h, U, J, g, E)
        g_mm = _bloch_f(th, ph - h, U, J, g, E)
        Jm = np.array([[(f_pp[0] - f_mm[0]) / (2 * h), (g_pp[0] - g_mm[0]) / (2 * h)],
                       [(f_pp[1] - f_mm[1]) / (2 * h), (g_pp[1] - g_mm[1]) / (2 * h)]])
        ev = np.linalg.eigvals(Jm)
        top = ev.real.max()
        if top < -1e-8:
            label = "stable"
        elif top > 1e-8:
            label = "unstable"
        else:
            label = "marginal"
        out.append(Equilibrium(theta=float(th), phi=float(ph),
                               n=float(particle_number(th, params.N)),
                               stability=label,
                               eigenvalues=(complex(ev[0]), complex(ev[1])),
                               residual=float(res)))
    out.sort(key=lambda e: (round(e.n, 9), round(e.phi, 9)))
    return out


def stroboscopic_samples(params: DimerParams, b0=DEFAULT_B0,
                         n_transient: int = 2000, n_record: int = 2000,
                         dt: float | None = None,
                         shell_tol: float = 1e-6) -> np.ndarray:
    """Site-1 occupation at the last n_record drive-period boundaries.

    With A = 0 the flow is autonomous and the samples simply report the
    relaxed state at t = m*T (constant once an attractor is reached).
    """
    samples = _strobe_batch(params, np.array([params.U]), b0, n_transient,
                            n_record, dt, shell_tol)
    return samples[:, 0]


def _strobe_batch(params: DimerParams, u_values, b0, n_transient, n_record,
                  dt, shell_tol) -> np.ndarray:
    """Stroboscopic records for a batch of U values sharing all other
    parameters; returns (n_record, len(u_values)) occupations."""
    if not params.T > 0:
        raise ValueError("stroboscopic sampling requires T > 0")
    if n_transient < 0 or n_record < 1:
        raise ValueError("need n_transient >= 0 and n_record >= 1")
    if dt is None:
        dt = params.T / 2000.0
    half = 0.5 * params.T
    n1 = max(1, int(np.ceil(half / dt - 1e-9)))
    h1 = half / n1

    u = np.asarray(u_values, dtype=float)
    m = u.size
    y0 = _as_cartesian_state(b0)
    y = np.ascontiguousarray(np.repeat(y0.reshape(3, 1), m, axis=1))
    s2ref = np.full(m, float(y0 @ y0))
    out = np.empty((n_record, m))
    drift = _strobe_kernel(y, u, params.J, params.gamma, params.E, params.A,
                           h1, n1, h1, n1, n_transient, n_record, 1.0,
                           s2ref, out)
    if not drift <= shell_tol:
        raise StepSizeError(
            f"shell drift {drift:.3e} exceeds {shell_tol:.1e}; reduce dt")
    return (1.0 + out) * params.N / 2.0
