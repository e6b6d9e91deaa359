"""Bifurcation diagrams of the open dimer, quantum and classical.

The quantum diagrams read structure out of the stationary density
matrix: local maxima of the diagonal play the role the stable
equilibria play in the mean-field picture. This module counts those
maxima, sweeps one and two parameters while collecting the matching
classical equilibrium census, refines count changes by bisection, and
assembles stroboscopic histogram diagrams for the driven (chaotic)
regime from the mean-field flow and from trajectory unraveling.
"""

import concurrent.futures as cf
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoseDimerError, BracketError, IntegrityError
from .liouvillian import (build_supermatrix, leading_spectrum, purity,
                          stationary_state)
from .meanfield import DEFAULT_B0, _strobe_batch, find_equilibria
from .model import DimerParams
from .trajectories import Histogram, build_histogram, run_realizations

__all__ = [
    "diagonal_maxima",
    "DiagramColumn",
    "sweep_stationary",
    "BifurcationPoint",
    "locate_bifurcation",
    "TwoParameterDiagram",
    "two_parameter_diagram",
    "cluster_centers",
    "ChaosColumn",
    "chaos_diagram_classical",
    "chaos_diagram_quantum",
]

_AXES = ("U", "E", "J")

DESK_SCALE_N = 100       # largest N the quantum chaos sweep runs unflagged


def _with_axis(params: DimerParams, axis: str, value: float) -> DimerParams:
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {_AXES}, got {axis!r}")
    return replace(params, **{axis: float(value)})


def diagonal_maxima(diag, floor: float = 1e-6, plateau_tol: float = 1e-12):
    """Local maxima of a probability vector, as (count, index tuple).

    Runs of entries whose consecutive differences stay within
    plateau_tol act as a single entry represented by the middle index.
    A run counts as a maximum when every existing neighbor is smaller,
    so endpoints qualify on their single neighbor alone, and only when
    its value exceeds floor. A vector that is one long run has no
    distinguishable maximum and yields a zero count.
    """
    v = np.asarray(diag, dtype=float)
    if v.ndim != 1 or v.size < 3:
        raise ValueError("need a 1-d vector with at least 3 entries")
    if not np.all(np.isfinite(v)):
        raise ValueError("diagonal contains non-finite entries")
    if v.max() <= floor:
        raise ValueError(
            f"all entries lie at or below the floor {floor:g}; "
            "the diagonal is degenerate at this resolution")
    n = v.size
    indices = []
    a = 0
    while a < n:
        b = a
        while b + 1 < n and abs(v[b + 1] - v[b]) <= plateau_tol:
            b += 1
        whole = a == 0 and b == n - 1
        left_smaller = a == 0 or v[a - 1] < v[a]
        right_smaller = b == n - 1 or v[b + 1] < v[b]
        if not whole and left_smaller and right_smaller \
                and v[a:b + 1].max() > floor:
            indices.append((a + b) // 2)
        a = b + 1
    return len(indices), tuple(indices)


@dataclass(frozen=True)
class DiagramColumn:
    """One parameter point of a stationary bifurcation diagram."""

    axis: str
    value: float
    diagonal: np.ndarray | None = field(repr=False, default=None)
    maxima_count: int | None = None
    maxima_indices: tuple = ()
    purity: float | None = None
    re_lambda1: float | None = None
    re_lambda2: float | None = None
    re_lambda3: float | None = None
    classical: tuple = ()        # ((n, "stable"|"unstable"|"marginal"), ...)
    error: str | None = None


def _stationary_column(params, axis, value, floor):
    p = _with_axis(params, axis, value)
    sm = build_supermatrix(p)
    rho = stationary_state(sm)
    diag = np.diag(rho).real.copy()
    if diag.min() < -1e-12 or abs(diag.sum() - 1.0) > 1e-9:
        raise IntegrityError(
            f"stationary diagonal invalid: min {diag.min():.3e}, "
            f"sum deviation {diag.sum() - 1.0:.3e}")
    count, idx = diagonal_maxima(diag, floor=floor)
    lam = leading_spectrum(sm, k=3)
    classical = tuple((float(e.n), e.stability) for e in find_equilibria(p))
    return DiagramColumn(axis=axis, value=float(value), diagonal=diag,
                         maxima_count=count, maxima_indices=idx,
                         purity=purity(rho),
                         re_lambda1=float(lam[0].real),
                         re_lambda2=float(lam[1].real),
                         re_lambda3=float(lam[2].real),
                         classical=classical)


def sweep_stationary(params: DimerParams, axis: str, lo: float, hi: float,
                     steps: int, floor: float = 1e-6,
                     workers: int = 1) -> list:
    """Stationary diagram columns on a uniform grid of one parameter.

    Each point gets the stationary diagonal with its maxima, purity,
    the two slowest nonzero relaxation rates, and the classical
    equilibrium census. Solver failures annotate the column's error
    field instead of aborting the sweep. Points are independent, so
    workers > 1 evaluates them in a thread pool (the linear-algebra
    kernels drop the GIL); the output order is the grid order either
    way.
    """
    if params.A != 0:
        raise ValueError("stationary sweeps require the undriven system "
                         "(A = 0)")
    if steps < 2:
        raise ValueError("need at least 2 sweep steps")
    values = np.linspace(lo, hi, steps)

    def one(v):
        try:
            return _stationary_column(params, axis, v, floor)
        except BoseDimerError as exc:
            return DiagramColumn(axis=axis, value=float(v), error=str(exc))

    if workers > 1:
        with cf.ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, values))
    return [one(v) for v in values]


@dataclass(frozen=True)
class BifurcationPoint:
    """A refined parameter value where a structure count changes."""

    axis: str
    value: float
    before: int                  # count on the low side of the point
    after: int                   # count on the high side
    tolerance: float             # final bracket width
    kind: str = "quantum"


def _count_fn(params, axis, kind, floor):
    if kind == "quantum":
        def count(v):
            p = _with_axis(params, axis, v)
            rho = stationary_state(build_supermatrix(p))
            return diagonal_maxima(np.diag(rho).real, floor=floor)[0]
    elif kind == "classical":
        def count(v):
            eq = find_equilibria(_with_axis(params, axis, v))
            return sum(e.stability == "stable" for e in eq)
    else:
        raise ValueError(f"kind must be 'quantum' or 'classical', got {kind!r}")
    return count


def locate_bifurcation(params: DimerParams, axis: str, lo: float, hi: float,
                       tol: float = 1e-3, kind: str = "quantum",
                       floor: float = 1e-6) -> BifurcationPoint:
    """Bisect a count change (maxima or stable equilibria) to tol.

    The bracket ends must disagree in count; each step keeps the half
    whose ends still disagree, so the returned midpoint lies inside
    every bracket visited. before/after report the counts adjacent to
    the final bracket.
    """
    if not hi > lo:
        raise ValueError("need hi > lo")
    if params.A != 0:
        raise ValueError("bifurcation location requires A = 0")
    count = _count_fn(params, axis, kind, floor)
    c_lo, c_hi = count(lo), count(hi)
    if c_lo == c_hi:
        raise BracketError(
            f"count is {c_lo} at both bracket ends {lo:g} and {hi:g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count(mid) == c_lo:
            lo = mid
        else:
            hi = mid
            c_hi = count(mid)
    return BifurcationPoint(axis=axis, value=0.5 * (lo + hi), before=c_lo,
                            after=c_hi, tolerance=hi - lo, kind=kind)


@dataclass(frozen=True)
class TwoParameterDiagram:
    """Count fields and refined boundary points on a parameter plane."""

    axis1: str
    axis2: str
    values1: np.ndarray = field(repr=False)
    values2: np.ndarray = field(repr=False)
    quantum_counts: np.ndarray = field(repr=False)      # (len2, len1)
    classical_stable: np.ndarray = field(repr=False)
    classical_unstable: np.ndarray = field(repr=False)
    region_labels: np.ndarray = field(repr=False)       # "S{q},U{p}" per cell
    quantum_boundary: tuple = ()                        # ((v1, v2), ...)
    classical_boundary: tuple = ()
    errors: tuple = ()                                  # ((i1, i2, msg), ...)


def two_parameter_diagram(params: DimerParams, axis1: str, axis2: str,
                          lo1: float, hi1: float, steps1: int,
                          lo2: float, hi2: float, steps2: int,
                          floor: float = 1e-6, tol: float = 1e-3,
                          workers: int = 1) -> TwoParameterDiagram:
    """Quantum maxima and classical equilibrium counts on a grid.

    Boundary points are emitted wherever the count changes between
    neighbors along axis1 (at fixed axis2) and refined by bisection to
    tol. Cells whose solves fail carry count -1 and an entry in
    errors; boundaries are not refined across failed cells.
    """
    if params.A != 0:
        raise ValueError("two-parameter diagrams require A = 0")
    if axis1 == axis2:
        raise ValueError("axis1 and axis2 must differ")
    if steps1 < 2 or steps2 < 2:
        raise ValueError("need at least 2 steps on each axis")
    values1 = np.linspace(lo1, hi1, steps1)
    values2 = np.linspace(lo2, hi2, steps2)

    def cell(ij):
        i1, i2 = ij
        p = _with_axis(params, axis2, values2[i2])
        try:
            p = _with_axis(p, axis1, values1[i1])
            rho = stationary_state(build_supermatrix(p))
            q = diagonal_maxima(np.diag(rho).real, floor=floor)[0]
            eq = find_equilibria(p)
            s = sum(e.stability == "stable" for e in eq)
            u = sum(e.stability == "unstable" for e in eq)
            return i1, i2, q, s, u, None
        except BoseDimerError as exc:
            return i1, i2, -1, -1, -1, str(exc)

    pairs = [(i1, i2) for i2 in range(steps2) for i1 in range(steps1)]
    if workers > 1:
        with cf.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(cell, pairs))
    else:
        results = [cell(ij) for ij in pairs]

    q_counts = np.full((steps2, steps1), -1, dtype=int)
    s_counts = np.full((steps2, steps1), -1, dtype=int)
    u_counts = np.full((steps2, steps1), -1, dtype=int)
    labels = np.full((steps2, steps1), "", dtype=object)
    errors = []
    for i1, i2, q, s, u, msg in results:
        q_counts[i2, i1], s_counts[i2, i1], u_counts[i2, i1] = q, s, u
        if msg is None:
            labels[i2, i1] = f"S{s},U{u}"
        else:
            errors.append((i1, i2, msg))

    def refine(counts, kind):
        points = []
        for i2 in range(steps2):
            p_row = _with_axis(params, axis2, values2[i2])
            for i1 in range(steps1 - 1):
                a, b = counts[i2, i1], counts[i2, i1 + 1]
                if a < 0 or b < 0 or a == b:
                    continue
                try:
                    bp = locate_bifurcation(p_row, axis1, values1[i1],
                                            values1[i1 + 1], tol=tol,
                                            kind=kind, floor=floor)
                    points.append((bp.value, float(values2[i2])))
                except BoseDimerError as exc:
                    errors.append((i1, i2, f"refinement failed: {exc}"))
        return tuple(points)

    return TwoParameterDiagram(
        axis1=axis1, axis2=axis2, values1=values1, values2=values2,
        quantum_counts=q_counts, classical_stable=s_counts,
        classical_unstable=u_counts, region_labels=labels,
        quantum_boundary=refine(q_counts, "quantum"),
        classical_boundary=refine(s_counts, "classical"),
        errors=tuple(errors))


def cluster_centers(values, gap: float) -> tuple:
    """Centers of sorted-sample clusters split at jumps larger than gap.

    A stroboscopic record on a period-p orbit forms p tight clusters;
    broadband (chaotic) records merge into few wide ones, so the
    useful signal for attractor periodicity is the count at a gap far
    below the attractor scale.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("no samples to cluster")
    if gap <= 0:
        raise ValueError("gap must be positive")
    splits = np.nonzero(np.diff(v) > gap)[0]
    centers = []
    start = 0
    for stop in [*splits, v.size - 1]:
        centers.append(float(v[start:stop + 1].mean()))
        start = stop + 1
    return tuple(centers)


@dataclass(frozen=True)
class ChaosColumn:
    """One drive-interaction value of a stroboscopic chaos diagram."""

    value: float
    histogram: Histogram
    occupied_bins: int
    cluster_count: int
    cluster_centers: tuple = field(repr=False)


def _chaos_column(value, samples, N, n_bins, gap):
    counts, edges = np.histogram(samples, bins=n_bins, range=(0.0, float(N)))
    hist = Histogram(edges=edges, weights=counts / counts.max())
    centers = cluster_centers(samples, gap)
    return ChaosColumn(value=float(value), histogram=hist,
                       occupied_bins=int(np.count_nonzero(counts)),
                       cluster_count=len(centers), cluster_centers=centers)


def chaos_diagram_classical(params: DimerParams, lo: float, hi: float,
                            steps: int, n_transient: int = 2000,
                            n_record: int = 2000, n_bins: int = 200,
                            b0=DEFAULT_B0, dt: float | None = None,
                            cluster_gap: float | None = None) -> list:
    """Mean-field stroboscopic histograms over a U grid (driven flow).

    All grid points integrate as one batch. Per column the recorded
    occupations are histogrammed over [0, N] (max-normalized) and
    clustered with the default gap 1e-6 N, tight enough to resolve
    period-doubled orbits and far below any attractor separation.
    """
    if params.A == 0:
        raise ValueError("chaos diagrams need a running drive (A != 0)")
    if steps < 1:
        raise ValueError("need at least 1 sweep step")
    u_values = np.linspace(lo, hi, steps)
    gap = 1e-6 * params.N if cluster_gap is None else cluster_gap
    samples = _strobe_batch(params, u_values, b0, n_transient, n_record,
                            dt, 1e-6)
    return [_chaos_column(u, samples[:, i], params.N, n_bins, gap)
            for i, u in enumerate(u_values)]


def chaos_diagram_quantum(params: DimerParams, lo: float, hi: float,
                          steps: int, n_realizations: int = 8,
                          n_transient: int = 2000, n_record: int = 2000,
                          n_bins: int = 200, base_seed: int = 0,
                          dt: float | None = None,
                          cluster_gap: float | None = None,
                          allow_large_n: bool = False) -> list:
    """Trajectory-unraveled stroboscopic histograms over a U grid.

    Column i pools n_realizations trajectories seeded from
    base_seed + i. Sizes beyond N = 100 cost hours, so they require
    allow_large_n=True; the physics itself has no such cutoff.
    """
    if params.A == 0:
        raise ValueError("chaos diagrams need a running drive (A != 0)")
    if params.gamma <= 0:
        raise ValueError("the unraveling needs gamma > 0")
    if steps < 1:
        raise ValueError("need at least 1 sweep step")
    if params.N > DESK_SCALE_N and not allow_large_n:
        raise ValueError(
            f"N = {params.N} exceeds the desk-scale cap {DESK_SCALE_N}; "
            "pass allow_large_n=True to run it anyway")
    u_values = np.linspace(lo, hi, steps)
    gap = 1e-6 * params.N if cluster_gap is None else cluster_gap
    columns = []
    for i, u in enumerate(u_values):
        p = replace(params, U=float(u))
        series = run_realizations(p, n_realizations, n_transient, n_record,
                                  base_seed + i, dt=dt)
        pooled = np.concatenate([s.values for s in series])
        hist = build_histogram(series, p.N, n_bins=n_bins)
        centers = cluster_centers(pooled, gap)
        columns.append(ChaosColumn(
            value=float(u), histogram=hist,
            occupied_bins=int(np.count_nonzero(hist.weights)),
            cluster_count=len(centers), cluster_centers=centers))
    return columns
