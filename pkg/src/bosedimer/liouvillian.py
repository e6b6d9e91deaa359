"""Lindblad generator of the dissipative dimer and its stationary state.

Vectorization is row-major throughout: vec(rho)[i*d + j] = rho[i, j],
which is exactly numpy's C-order reshape, and under which
vec(A rho B) = (A kron B^T) vec(rho).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eig as dense_eig

from .errors import IntegrityError, SolverError, StepSizeError
from .model import DimerOperators, DimerParams, build_operators, drive, hamiltonian

__all__ = [
    "vectorize",
    "unvectorize",
    "lindblad_rhs",
    "SuperMatrix",
    "build_supermatrix",
    "stationary_state",
    "leading_spectrum",
    "purity",
    "number_expectation",
    "validate_density_matrix",
    "MasterResult",
    "integrate_master",
]

# Start vector for every ARPACK call; fixed so repeated runs are identical,
# random so it is generic w.r.t. the swap-parity sectors at E = 0.
_ARPACK_SEED = 8353


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Flatten a (d, d) matrix to length d^2, row-major."""
    return np.asarray(rho).reshape(-1)


def unvectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of vectorize; length must be a perfect square."""
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValueError(f"length {v.size} is not a perfect square")
    return v.reshape(d, d)


def lindblad_rhs(rho: np.ndarray, t: float, params: DimerParams,
                 ops: DimerOperators | None = None) -> np.ndarray:
    """d(rho)/dt = -i[H(t), rho] + (gamma/N) (V rho V^+ - {V^+V, rho}/2)."""
    if ops is None:
        ops = build_operators(params.N)
    H = hamiltonian(params, drive(params, t), ops)
    V, VdV = ops.V, ops.VdV
    comm = H @ rho - rho @ H
    diss = V @ rho @ V.conj().T - 0.5 * (VdV @ rho + rho @ VdV)
    return -1j * comm + (params.gamma / params.N) * diss


@dataclass(frozen=True)
class SuperMatrix:
    """Sparse Liouvillian acting on row-major-vectorized density matrices."""

    matrix: sp.csr_matrix = field(repr=False)
    dim: int                      # sector dimension d; matrix is (d^2, d^2)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvectorize(self.matrix @ vectorize(rho))

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def build_supermatrix(params: DimerParams, epsilon: float | None = None,
                      ops: DimerOperators | None = None) -> SuperMatrix:
    """Assemble the (d^2, d^2) generator at a fixed drive value.

    epsilon defaults to the static offset E (the undriven generator).
    """
    if ops is None:
        ops = build_operators(params.N)
    if epsilon is None:
        epsilon = params.E
    d = params.N + 1
    H = sp.csr_matrix(hamiltonian(params, epsilon, ops))
    V = sp.csr_matrix(ops.V)
    VdV = sp.csr_matrix(ops.VdV)
    I = sp.identity(d, format="csr")
    g = params.gamma / params.N
    M = (-1j * (sp.kron(H, I) - sp.kron(I, H.T))
         + g * (sp.kron(V, V.conj())
                - 0.5 * (sp.kron(VdV, I) + sp.kron(I, VdV.T))))
    return SuperMatrix(matrix=M.tocsr(), dim=d)


def _arpack_v0(n: int) -> np.ndarray:
    rng = np.random.default_rng(_ARPACK_SEED)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def stationary_state(sm: SuperMatrix, residual_tol: float = 1e-10,
                     psd_tol: float = 1e-8) -> np.ndarray:
    """Solve Pi vec(rho) = 0, tr rho = 1 for the stationary density matrix.

    The trace left-null vector vec(I)^T makes the rows spanning the diagonal
    slots linearly dependent, so replacing the row of slot (0, 0) with the
    trace constraint gives a square system with the stationary state as its
    unique solution. Falls back to a shift-inverted null-space eigensolve if
    the direct solve misses the residual target.
    """
    d = sm.dim
    d2 = d * d
    P = sm.matrix.tocoo()
    keep = P.row != 0
    rows = np.concatenate([P.row[keep], np.zeros(d, dtype=P.row.dtype)])
    cols = np.concatenate([P.col[keep],
                           (np.arange(d) * (d + 1)).astype(P.col.dtype)])
    vals = np.concatenate([P.data[keep], np.ones(d, dtype=P.data.dtype)])
    A = sp.csc_matrix((vals, (rows, cols)), shape=(d2, d2))
    b = np.zeros(d2, dtype=complex)
    b[0] = 1.0

    x = spla.spsolve(A, b)
    rho, res = _finish_stationary(sm, x)
    if res > residual_tol:
        rho2, res2 = _null_vector_fallback(sm)
        if res2 < res:
            rho, res = rho2, res2
        if res > residual_tol:
            raise SolverError("stationary solve did not converge",
                              residual=res, tol=residual_tol)

    w = np.linalg.eigvalsh(rho)
    if w.min() < -psd_tol:
        raise IntegrityError(
            f"stationary state has negative eigenvalue {w.min():.3e}")
    return rho


def _finish_stationary(sm, x):
    rho = unvectorize(x)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-14:
        return rho, np.inf
    rho = rho / tr
    v = vectorize(rho)
    res = np.linalg.norm(sm.matrix @ v) / np.linalg.norm(v)
    return rho, res


def _null_vector_fallback(sm):
    d2 = sm.dim * sm.dim
    k = min(4, d2 - 2)
    if k < 1:
        return None, np.inf
    vals, vecs = spla.eigs(sm.matrix, k=k, sigma=1e-3, which="LM",
                           v0=_arpack_v0(d2), maxiter=10000)
    x = vecs[:, np.argmin(np.abs(vals))]
    return _finish_stationary(sm, x)


def leading_spectrum(sm: SuperMatrix, k: int = 3, dense_cutoff: int = 400,
                     residual_tol: float = 1e-9) -> np.ndarray:
    """k eigenvalues of the generator with the largest real parts.

    Sorted by descending real part (descending imaginary part breaks ties,
    so conjugate pairs always appear +Im first). Small problems take the
    dense route; larger ones use shift-inverted ARPACK around sigma = 1e-3,
    which is closer to the slow eigenvalues than to any other (all real
    parts are <= 0) and never coincides with one. Each Ritz pair must pass
    ||Pi v - lam v|| <= residual_tol * max(1, |lam|).

    The sparse route targets the low-|lambda| sector, so a high-frequency
    coherence (|Im| of order the Hamiltonian bandwidth) whose real part
    sneaks above the k-th slow mode would be missed; for this generator
    such modes stay below rank 3 at the system sizes checked against the
    dense route, so keep k small or raise dense_cutoff when in doubt.
    """
    d2 = sm.dim * sm.dim
    if not 1 <= k <= d2:
        raise ValueError(f"k must be in [1, {d2}], got {k}")
    k_req = max(2 * k, k + 9)
    if d2 <= dense_cutoff or k_req > d2 - 2:
        vals = dense_eig(sm.to_dense(), right=False)
    else:
        vals, vecs = spla.eigs(sm.matrix, k=k_req, sigma=1e-3, which="LM",
                               v0=_arpack_v0(d2),
                               ncv=min(d2, max(2 * k_req + 1, 40)),
                               maxiter=10000)
        resid = np.linalg.norm(sm.matrix @ vecs - vecs * vals, axis=0)
        bad = resid > residual_tol * np.maximum(1.0, np.abs(vals))
        if bad.any():
            raise SolverError("eigenpair residual check failed",
                              residual=float(resid[bad].max()),
                              tol=residual_tol)
    order = np.lexsort((-vals.imag, -vals.real))
    return vals[order][:k]


def purity(rho: np.ndarray) -> float:
    """tr(rho^2), real part; 1/d <= value <= 1 for a valid state."""
    return float(np.einsum("ij,ji->", rho, rho).real)


def number_expectation(rho: np.ndarray) -> float:
    """<n_1> = sum_i i rho_ii for a sector density matrix."""
    return float(np.sum(np.arange(rho.shape[0]) * np.diag(rho).real))


def validate_density_matrix(rho: np.ndarray, herm_tol: float = 1e-10,
                            trace_tol: float = 1e-10,
                            psd_floor: float = -1e-8) -> None:
    """Raise IntegrityError if rho is not a density matrix within tolerance."""
    problems = []
    herm = np.abs(rho - rho.conj().T).max()
    if herm > herm_tol:
        problems.append(f"hermiticity defect {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        problems.append(f"trace defect {abs(tr - 1.0):.3e}")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < psd_floor:
        problems.append(f"negative eigenvalue {w.min():.3e}")
    if problems:
        raise IntegrityError("; ".join(problems))


@dataclass(frozen=True)
class MasterResult:
    """Sampled master-equation evolution."""

    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)   # (n_samples, d, d)
    trace_drift: float                       # max |tr rho - 1| seen


def _drive_boundaries(params: DimerParams, t0: float, t1: float) -> np.ndarray:
    """Times in (t0, t1) where the square drive switches value."""
    if params.A == 0:
        return np.empty(0)
    half = 0.5 * params.T
    k0 = int(np.floor(t0 / half)) + 1
    k1 = int(np.ceil(t1 / half))
    pts = half * np.arange(k0, k1)
    return pts[(pts > t0 + 1e-12 * params.T) & (pts < t1 - 1e-12 * params.T)]


def integrate_master(rho0: np.ndarray, params: DimerParams, t_end: float,
                     dt: float | None = None,
                     t_samples: np.ndarray | None = None,
                     ops: DimerOperators | None = None,
                     trace_tol: float = 1e-8) -> MasterResult:
    """Fixed-step RK4 propagation of the master equation from t = 0.

    Steps never straddle a drive switch: the run is cut at every switch
    time and every requested sample time, and each piece is integrated
    with a uniform step <= dt. Default dt is T/200 under drive, t_end/2000
    otherwise. Samples (t_samples, plus t_end if absent) are returned in
    order; trace drift beyond trace_tol raises StepSizeError.
    """
    if ops is None:
        ops = build_operators(params.N)
    if t_end <= 0:
        raise ValueError(f"t_end must be > 0, got {t_end}")
    if dt is None:
        dt = params.T / 200.0 if params.A != 0 else t_end / 2000.0
    if t_samples is None:
        t_samples = np.array([t_end])
    t_samples = np.asarray(t_samples, dtype=float)
    if t_samples.size and (t_samples.min() < 0 or t_samples.max() > t_end + 1e-12):
        raise ValueError("sample times must lie in [0, t_end]")

    cuts = np.unique(np.concatenate([
        [0.0, t_end], _drive_boundaries(params, 0.0, t_end), t_samples]))
    sample_set = {round(t, 12) for t in t_samples}

    g = params.gamma / params.N
    V, VdV = ops.V, ops.VdV

    rho = np.array(rho0, dtype=complex)
    out_t, out_s = [], []
    drift = abs(np.trace(rho).real - 1.0)
    if 0.0 in sample_set:
        out_t.append(0.0)
        out_s.append(rho.copy())

    for ta, tb in zip(cuts[:-1], cuts[1:]):
        H = hamiltonian(params, drive(params, ta), ops)

        def rhs(r):
            comm = H @ r - r @ H
            diss = V @ r @ V.T - 0.5 * (VdV @ r + r @ VdV)
            return -1j * comm + g * diss

        n = max(1, int(np.ceil((tb - ta) / dt - 1e-9)))
        h = (tb - ta) / n
        for _ in range(n):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * h * k1)
            k3 = rhs(rho + 0.5 * h * k2)
            k4 = rhs(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tr_err = abs(np.trace(rho).real - 1.0)
        drift = tr_err if np.isnan(tr_err) else max(drift, tr_err)
        if not drift <= trace_tol:
            raise StepSizeError(
                f"trace drift {drift:.3e} exceeds {trace_tol:.1e}; reduce dt")
        if round(tb, 12) in sample_set:
            out_t.append(tb)
            out_s.append(rho.copy())

    return MasterResult(times=np.array(out_t), states=np.array(out_s),
                        trace_drift=drift)
