"""Monte Carlo wave-function unraveling of the driven master equation.

A pure state evolves under the non-Hermitian effective Hamiltonian
H_eff = H(t) - (i/2)(gamma/N) V^dag V, so its squared norm decays
monotonically between jumps. When the norm crosses a drawn threshold
r in (0, 1) the jump psi <- V psi / |V psi| is applied and a fresh
threshold is drawn. Since H(t) is piecewise constant (square drive),
propagation over a step is a fixed matrix exponential; jumps inside a
step are located by dyadic bisection with precomputed fractional
propagators exp(-i H_eff h / 2^k), giving 1e-10 relative resolution of
the jump time at a few matrix-vector products per jump.

Observables are recorded as <n1> = <psi|n1|psi> / <psi|psi>; the
unnormalized vector is kept between jumps.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import expm

from .errors import IntegrityError, SolverError
from .model import (DimerParams, DimerOperators, build_operators, drive,
                    hamiltonian, symmetric_state)

__all__ = [
    "effective_hamiltonian",
    "effective_propagate",
    "StroboscopicSeries",
    "run_trajectory",
    "run_realizations",
    "EnsembleSeries",
    "ensemble_expectation",
    "Histogram",
    "build_histogram",
    "calibrate_dt",
]

_DYADIC_LEVELS = 34          # 2^-34 < 1e-10: relative jump-time resolution
_MAX_JUMP_CASCADE = 200


def effective_hamiltonian(params: DimerParams, epsilon: float | None = None,
                          ops: DimerOperators | None = None) -> np.ndarray:
    """H(epsilon) - (i/2)(gamma/N) V^dag V as a dense complex matrix."""
    if ops is None:
        ops = build_operators(params.N)
    h = hamiltonian(params, params.E if epsilon is None else epsilon, ops)
    return h.astype(complex) - 0.5j * (params.gamma / params.N) * ops.VdV


def _bands_of(mat: np.ndarray, width: int):
    """Diagonals -width..+width of mat as contiguous length-d arrays.

    Entry b[w][i] is mat[i, i + w - width] (zero where that falls off
    the matrix), so each band is indexed by row. Raises if anything
    lives outside the band.
    """
    mat = np.asarray(mat, dtype=complex)
    d = mat.shape[0]
    idx = np.arange(d)
    bands = []
    for off in range(-width, width + 1):
        b = np.zeros(d, dtype=complex)
        if off <= 0:
            b[-off:] = mat[idx[-off:], idx[-off:] + off]
        else:
            b[:d - off] = mat[idx[:d - off], idx[:d - off] + off]
        bands.append(b)
    if d > 2 * width + 1:
        spill = np.abs(np.triu(mat, width + 1)).max() + \
            np.abs(np.tril(mat, -(width + 1))).max()
        if spill != 0.0:
            raise ValueError(f"matrix has weight outside bandwidth {width}")
    return tuple(bands)


class _StepPropagator:
    """Dyadic fractions exp(M / 2^k) of one step map, M = -i h H_eff.

    H_eff is pentadiagonal (hopping couples neighbours, V^dag V next
    neighbours), so small fractions are applied by a truncated series
    in the banded generator; only the few coarse levels where
    |M| / 2^k exceeds 1/2 get precomputed dense exponentials. P0 is
    the full-step dense matrix used for the batched product.
    """

    def __init__(self, heff: np.ndarray, h: float):
        m = -1j * h * np.asarray(heff, dtype=complex)
        self.bands = _bands_of(m, 2)
        norm_m = float(np.abs(m).sum(axis=1).max())
        k_star = 0 if norm_m <= 0.5 else int(np.ceil(np.log2(norm_m / 0.5)))
        self.k_dense = min(_DYADIC_LEVELS + 1, max(1, k_star))
        d = m.shape[0]
        self.Pdense = np.empty((self.k_dense, d, d), dtype=complex)
        for k in range(self.k_dense):
            self.Pdense[k] = expm(m / (1 << k))
        self.P0 = self.Pdense[0]


def _draw_threshold(rng) -> float:
    r = rng.random()
    while r == 0.0:
        r = rng.random()
    return r


@njit(cache=True, inline="always")
def _band_mv(b2m, b1m, b0d, b1p, b2p, x, out):
    d = x.shape[0]
    for i in range(d):
        acc = b0d[i] * x[i]
        if i >= 1:
            acc += b1m[i] * x[i - 1]
        if i >= 2:
            acc += b2m[i] * x[i - 2]
        if i + 1 < d:
            acc += b1p[i] * x[i + 1]
        if i + 2 < d:
            acc += b2p[i] * x[i + 2]
        out[i] = acc


@njit(cache=True)
def _chunk_apply(Pdense, b2m, b1m, b0d, b1p, b2p, k, k_dense, x, out,
                 term, tmp):
    """out = exp(M / 2^k) x: dense product or banded series."""
    d = x.shape[0]
    if k < k_dense:
        out[:] = np.dot(Pdense[k], x)
        return
    s = 1.0 / (1 << k)
    for i in range(d):
        out[i] = x[i]
        term[i] = x[i]
    for n in range(1, 60):
        _band_mv(b2m, b1m, b0d, b1p, b2p, term, tmp)
        c = s / n
        t_big = 0.0
        y_big = 0.0
        for i in range(d):
            term[i] = tmp[i] * c
            out[i] += term[i]
            at = abs(term[i].real) + abs(term[i].imag)
            ay = abs(out[i].real) + abs(out[i].imag)
            if at > t_big:
                t_big = at
            if ay > y_big:
                y_big = ay
        if t_big <= 1e-16 * y_big:
            break


@njit(cache=True, inline="always")
def _norm2_vec(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i].real * x[i].real + x[i].imag * x[i].imag
    return s


@njit(cache=True)
def _resolve_crossing(Pdense, b2m, b1m, b0d, b1p, b2p, v1m, v0d, v1p,
                      x, r, uniforms, levels, k_dense, max_jumps, info):
    """Carry one state across a full step, resolving every jump in it.

    Entered only when the step-end norm fell below the threshold r.
    The squared norm is monotone between jumps, so each crossing is
    bracketed by splitting the offending chunk in two; a worklist of
    chunk levels stands in for recursion, the floor chunk has width
    h / 2^levels. After a jump the renormalized state resumes at the
    same spot with a fresh threshold taken from uniforms.

    info[0] returns the jump count, or -1 (dark-state jump), -2 (jump
    cap hit), -3 (uniforms exhausted); info[1] the active threshold.
    """
    d = x.shape[0]
    cur = x.copy()
    y = np.empty(d, np.complex128)
    term = np.empty(d, np.complex128)
    tmp = np.empty(d, np.complex128)
    w = np.empty(d, np.complex128)
    stack = np.empty(2 * levels + 64, np.int64)
    stack[0] = 0
    top = 1
    iu = 0
    jumps = 0
    while top > 0:
        top -= 1
        k = stack[top]
        _chunk_apply(Pdense, b2m, b1m, b0d, b1p, b2p, k, k_dense,
                     cur, y, term, tmp)
        if _norm2_vec(y) > r:
            cur[:] = y
            continue
        if k >= levels:
            # crossing pinned to the floor chunk: jump at its left edge
            for i in range(d):
                acc = v0d[i] * cur[i]
                if i >= 1:
                    acc += v1m[i] * cur[i - 1]
                if i + 1 < d:
                    acc += v1p[i] * cur[i + 1]
                w[i] = acc
            nw2 = _norm2_vec(w)
            if nw2 == 0.0:
                info[0] = -1.0
                return cur
            inv = 1.0 / np.sqrt(nw2)
            for i in range(d):
                cur[i] = w[i] * inv
            jumps += 1
            if jumps > max_jumps:
                info[0] = -2.0
                return cur
            r = -1.0
            while iu < uniforms.shape[0]:
                u = uniforms[iu]
                iu += 1
                if u > 0.0:
                    r = u
                    break
            if r < 0.0:
                info[0] = -3.0
                return cur
            stack[top] = levels     # floor chunk still to traverse
            top += 1
            continue
        stack[top] = k + 1          # right half, walked second
        stack[top + 1] = k + 1      # left half, walked first
        top += 2
    info[0] = float(jumps)
    info[1] = r
    return cur


def _resolve_column(prop, vbands, x, r, rng):
    """Python shim around the compiled resolver for one batch column."""
    uniforms = rng.random(_MAX_JUMP_CASCADE + 56)
    info = np.zeros(2)
    b2m, b1m, b0d, b1p, b2p = prop.bands
    v1m, v0d, v1p = vbands
    out = _resolve_crossing(prop.Pdense, b2m, b1m, b0d, b1p, b2p,
                            v1m, v0d, v1p, x, r, uniforms,
                            _DYADIC_LEVELS, prop.k_dense,
                            _MAX_JUMP_CASCADE, info)
    if info[0] == -1.0:
        raise IntegrityError("jump from a dark state: |V psi| = 0")
    if info[0] < 0:
        raise IntegrityError("jump cascade did not terminate")
    return out, float(info[1])


def _norms2(psi):
    return np.einsum("ic,ic->c", psi.conj(), psi).real


def _occupations(psi, n1diag):
    num = np.einsum("ic,i,ic->c", psi.conj(), n1diag, psi).real
    return num / _norms2(psi)


def _step_batch(prop, vbands, psi, r, rngs):
    """One fixed step of the whole (d, m) batch; returns the new batch."""
    prev = psi
    prev_n2 = _norms2(prev)
    psi = prop.P0 @ psi
    n2 = _norms2(psi)
    crossed = n2 < r
    for c in np.nonzero(crossed)[0]:
        psi[:, c], r[c] = _resolve_column(prop, vbands, prev[:, c].copy(),
                                          r[c], rngs[c])
    ok = ~crossed
    if np.any(n2[ok] > prev_n2[ok] * (1.0 + 1e-10)):
        raise SolverError("squared norm increased along a trajectory step")
    return psi


def effective_propagate(psi, t0: float, t1: float, params: DimerParams,
                        ops: DimerOperators | None = None) -> np.ndarray:
    """Propagate psi (unnormalized) from t0 to t1 under H_eff.

    The drive must be constant on [t0, t1]: the interval may not
    contain a switching point of the square wave in its interior.
    Propagation is the exact matrix exponential for the constant
    effective Hamiltonian, so the squared norm is non-increasing up to
    rounding; an increase beyond 1e-10 relative raises SolverError.
    """
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    if params.A != 0:
        half = 0.5 * params.T
        k0 = int(np.floor(t0 / half + 1e-12))
        k1 = int(np.ceil(t1 / half - 1e-12))
        if k1 - k0 > 1:
            raise ValueError(
                "[t0, t1] crosses a drive switching point; split the call")
    psi = np.asarray(psi, dtype=complex)
    heff = effective_hamiltonian(params, float(drive(params, t0)), ops)
    out = expm(-1j * (t1 - t0) * heff) @ psi
    n0 = np.vdot(psi, psi).real
    n1 = np.vdot(out, out).real
    if n1 > n0 * (1.0 + 1e-10):
        raise SolverError(
            f"squared norm increased from {n0:.3e} to {n1:.3e}")
    return out


@dataclass(frozen=True)
class StroboscopicSeries:
    """Site-1 occupations at drive-period boundaries for one trajectory."""

    values: np.ndarray = field(repr=False)    # length n_record, in [0, N]
    seed: int
    realization: int = 0


def _strobe_engine(params: DimerParams, psi0, rngs, n_transient: int,
                   n_record: int, dt: float | None,
                   ops: DimerOperators | None = None) -> np.ndarray:
    """(n_record, m) occupations at period boundaries, one column per rng."""
    if not params.T > 0:
        raise ValueError("stroboscopic sampling requires T > 0")
    if n_transient < 0 or n_record < 1:
        raise ValueError("need n_transient >= 0 and n_record >= 1")
    if ops is None:
        ops = build_operators(params.N)
    if dt is None:
        dt = params.T / 200.0
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi0.shape != (params.dim,):
        raise ValueError(f"psi0 must have length {params.dim}")
    if abs(np.vdot(psi0, psi0).real - 1.0) > 1e-8:
        raise ValueError("psi0 must be normalized")

    half = 0.5 * params.T
    n_sub = max(1, int(np.ceil(half / dt - 1e-9)))
    h = half / n_sub
    prop_hi = _StepPropagator(
        effective_hamiltonian(params, params.E + params.A, ops), h)
    prop_lo = prop_hi if params.A == 0 else _StepPropagator(
        effective_hamiltonian(params, params.E, ops), h)

    m = len(rngs)
    psi = np.repeat(psi0[:, None], m, axis=1)
    r = np.array([_draw_threshold(g) for g in rngs])
    n1diag = np.arange(params.dim, dtype=float)
    vbands = _bands_of(ops.V, 1)
    out = np.empty((n_record, m))
    for p in range(n_transient + n_record):
        for prop in (prop_hi, prop_lo):
            for _ in range(n_sub):
                psi = _step_batch(prop, vbands, psi, r, rngs)
        if p >= n_transient:
            out[p - n_transient] = _occupations(psi, n1diag)
    return out


def run_trajectory(psi0, params: DimerParams, n_transient: int,
                   n_record: int, seed: int,
                   dt: float | None = None) -> StroboscopicSeries:
    """One unraveled trajectory, fully determined by (psi0, params, seed).

    psi0=None starts from the symmetric condensate amplitudes. Records
    <n1> at each period boundary after the transient.
    """
    if psi0 is None:
        psi0 = symmetric_state(params.N)
    rng = np.random.default_rng(seed)
    vals = _strobe_engine(params, psi0, [rng], n_transient, n_record, dt)
    return StroboscopicSeries(values=vals[:, 0], seed=int(seed))


def run_realizations(params: DimerParams, n_realizations: int,
                     n_transient: int, n_record: int, base_seed: int,
                     psi0=None, dt: float | None = None) -> list:
    """Independent realizations differing only by RNG stream.

    Seeds are spawned deterministically from base_seed; the whole set
    propagates as one batched matrix product, which is what makes the
    larger-N histogram runs affordable.
    """
    if n_realizations < 1:
        raise ValueError("need n_realizations >= 1")
    if psi0 is None:
        psi0 = symmetric_state(params.N)
    seqs = np.random.SeedSequence(base_seed).spawn(n_realizations)
    rngs = [np.random.default_rng(s) for s in seqs]
    vals = _strobe_engine(params, psi0, rngs, n_transient, n_record, dt)
    return [StroboscopicSeries(values=vals[:, k], seed=int(base_seed),
                               realization=k)
            for k in range(n_realizations)]


@dataclass(frozen=True)
class EnsembleSeries:
    """Trajectory-ensemble average of <n1>(t) with standard errors."""

    times: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    n_trajectories: int
    base_seed: int


def ensemble_expectation(params: DimerParams, psi0, n_trajectories: int,
                         t_grid, base_seed: int,
                         dt: float | None = None) -> EnsembleSeries:
    """Mean and standard error of <n1>(t) over seeded trajectories.

    Sample times are arbitrary; stepping is cut at drive switches and
    at every requested time, with the exact constant-H propagator
    rebuilt per distinct piece length. Intended for the small-N
    validation runs that check the unraveling against direct master
    integration.
    """
    if n_trajectories < 2:
        raise ValueError("need n_trajectories >= 2")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a nonempty 1-d array")
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing and >= 0")
    if psi0 is None:
        psi0 = symmetric_state(params.N)
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if abs(np.vdot(psi0, psi0).real - 1.0) > 1e-8:
        raise ValueError("psi0 must be normalized")
    ops = build_operators(params.N)
    if dt is None:
        dt = params.T / 200.0 if params.A != 0 else float(t_grid[-1]) / 2000.0

    t_end = float(t_grid[-1])
    if params.A != 0 and t_end > 0:
        half = 0.5 * params.T
        switches = half * np.arange(1, int(np.ceil(t_end / half)))
        switches = switches[switches < t_end - 1e-12 * params.T]
    else:
        switches = np.empty(0)
    cuts = np.unique(np.concatenate([[0.0, t_end], switches, t_grid]))
    sample_set = {round(t, 12) for t in t_grid}

    seqs = np.random.SeedSequence(base_seed).spawn(n_trajectories)
    rngs = [np.random.default_rng(s) for s in seqs]
    psi = np.repeat(psi0[:, None], n_trajectories, axis=1)
    r = np.array([_draw_threshold(g) for g in rngs])
    n1diag = np.arange(params.dim, dtype=float)
    vbands = _bands_of(ops.V, 1)

    prop_cache: dict = {}
    records = []
    if 0.0 in sample_set:
        records.append(_occupations(psi, n1diag))
    for ta, tb in zip(cuts[:-1], cuts[1:]):
        eps = float(drive(params, ta))
        n = max(1, int(np.ceil((tb - ta) / dt - 1e-9)))
        h = (tb - ta) / n
        key = (eps, round(h, 15))
        if key not in prop_cache:
            prop_cache[key] = _StepPropagator(
                effective_hamiltonian(params, eps, ops), h)
        prop = prop_cache[key]
        for _ in range(n):
            psi = _step_batch(prop, vbands, psi, r, rngs)
        if round(tb, 12) in sample_set:
            records.append(_occupations(psi, n1diag))

    occ = np.array(records)                    # (len(t_grid), m)
    mean = occ.mean(axis=1)
    stderr = occ.std(axis=1, ddof=1) / np.sqrt(n_trajectories)
    return EnsembleSeries(times=t_grid.copy(), mean=mean, stderr=stderr,
                          n_trajectories=n_trajectories,
                          base_seed=int(base_seed))


@dataclass(frozen=True)
class Histogram:
    """Pooled stroboscopic histogram, maximum weight normalized to one."""

    edges: np.ndarray = field(repr=False)      # n_bins + 1 edges over [0, N]
    weights: np.ndarray = field(repr=False)    # n_bins, max = 1


def build_histogram(series_list, N: int, n_bins: int = 200) -> Histogram:
    """Pool recorded values across realizations and bin them over [0, N]."""
    if not series_list:
        raise ValueError("no series to pool")
    pool = np.concatenate([np.asarray(s.values, dtype=float)
                           for s in series_list])
    if pool.size == 0:
        raise ValueError("pooled series are empty")
    counts, edges = np.histogram(pool, bins=n_bins, range=(0.0, float(N)))
    top = counts.max()
    if top == 0:
        raise ValueError("all samples fell outside [0, N]")
    return Histogram(edges=edges, weights=counts / top)


def calibrate_dt(params: DimerParams, psi0=None, n_periods: int = 10,
                 dt0: float | None = None, tol: float = 1e-6,
                 max_halvings: int = 12) -> float:
    """Largest step whose halving changes strobe observables by < tol.

    Runs the deterministic no-jump evolution (threshold pinned below
    zero, so the decaying norm never crosses it) for n_periods and
    compares <n1> at the period boundaries between dt and dt/2.
    Because each step applies the exact constant-H propagator, the
    first candidate normally passes; the loop guards the step-grid
    alignment of switches.
    """

    class _NoJump:
        @staticmethod
        def random():
            return -1.0

    def strobe(dt):
        vals = _strobe_engine(params, psi0 if psi0 is not None
                              else symmetric_state(params.N),
                              [_NoJump()], 0, n_periods, dt)
        return vals[:, 0]

    if dt0 is None:
        dt0 = params.T / 200.0
    dt = dt0
    prev = strobe(dt)
    for _ in range(max_halvings):
        nxt = strobe(dt / 2)
        if np.max(np.abs(nxt - prev)) < tol:
            return dt
        dt /= 2
        prev = nxt
    return dt
