"""Two-site boson dimer restricted to the fixed-total-number sector.

With N particles shared between sites 1 and 2, the sector basis is
|i> = |i particles on site 1, N-i on site 2| for i = 0..N, so every
operator is an (N+1) x (N+1) matrix indexed by the site-1 count.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import PoleError  # noqa: F401  (re-exported for convenience)

__all__ = [
    "DimerParams",
    "DimerOperators",
    "build_operators",
    "drive",
    "hamiltonian",
    "symmetric_state",
]


@dataclass(frozen=True)
class DimerParams:
    """Physical parameters of the driven, dissipative dimer.

    J      hopping amplitude between the sites
    U      on-site interaction (enters as 2U/N per site)
    E      static half of the energy offset between the sites
    A      square-drive amplitude added to E during the first half period
    T      drive period (must be positive whenever A != 0)
    gamma  dissipation rate of the single collective jump channel
    N      total particle number (fixed; sector dimension is N+1)
    """

    J: float = 1.0
    U: float = 0.2
    E: float = 0.0
    A: float = 0.0
    T: float = 1.0
    gamma: float = 0.1
    N: int = 50

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.A != 0 and not self.T > 0:
            raise ValueError(f"T must be > 0 when A != 0, got T={self.T}")
        for name in ("J", "U", "E", "A", "T", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")

    @property
    def dim(self) -> int:
        return self.N + 1


@dataclass(frozen=True)
class DimerOperators:
    """Dense sector operators for a given N (all real in this basis)."""

    N: int
    hop: np.ndarray = field(repr=False)      # b1^dag b2 + b2^dag b1
    n1: np.ndarray = field(repr=False)       # diag(0..N)
    n2: np.ndarray = field(repr=False)       # diag(N..0)
    V: np.ndarray = field(repr=False)        # (b1^dag + b2^dag)(b1 - b2)
    VdV: np.ndarray = field(repr=False)      # V^dag V


def build_operators(N: int) -> DimerOperators:
    """Build hop, n1, n2, V and V^dag V in the fixed-number sector.

    Matrix elements come from the ladder rules
        b1|i> = sqrt(i) |i-1>,   b1^dag|i> = sqrt(i+1) |i+1>   (site 1)
        b2|i> = sqrt(N-i)|i+1>,  b2^dag|i> = sqrt(N-i+1)|i-1>  (site 2)
    so the products under the square roots are exact integers.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    d = N + 1
    i = np.arange(d, dtype=np.int64)

    n1 = np.diag(i.astype(float))
    n2 = np.diag((N - i).astype(float))

    # <i+1| b1^dag b2 |i> = sqrt((i+1)(N-i)); hop is its symmetrization.
    up = np.sqrt(((i[:-1] + 1) * (N - i[:-1])).astype(float))
    hop = np.zeros((d, d))
    hop[i[1:], i[:-1]] = up          # raises the site-1 count
    hop[i[:-1], i[1:]] = up          # lowers it

    # V = (b1^dag + b2^dag)(b1 - b2)
    #   = n1 - n2 + b2^dag b1 - b1^dag b2  within the sector.
    V = np.diag((i - (N - i)).astype(float))
    V[i[:-1], i[1:]] += np.sqrt(((i[:-1] + 1) * (N - i[:-1])).astype(float))
    V[i[1:], i[:-1]] -= np.sqrt(((i[1:]) * (N - i[1:] + 1)).astype(float))

    VdV = V.T @ V
    return DimerOperators(N=N, hop=hop, n1=n1, n2=n2, V=V, VdV=VdV)


def drive(params: DimerParams, t) -> np.ndarray | float:
    """Square-wave site offset: E+A for (t mod T) in [0, T/2), else E.

    Accepts scalar or array t. With A == 0 the drive is the constant E.
    """
    if params.A == 0:
        if np.ndim(t) == 0:
            return params.E
        return np.full(np.shape(t), params.E, dtype=float)
    phase = np.mod(t, params.T)
    return np.where(phase < 0.5 * params.T, params.E + params.A, params.E)


def hamiltonian(params: DimerParams, epsilon: float,
                ops: DimerOperators | None = None) -> np.ndarray:
    """Sector Hamiltonian J*hop + (2U/N)*(n1(n1-1) + n2(n2-1)) + eps*(n2-n1)."""
    if ops is None:
        ops = build_operators(params.N)
    i = np.arange(params.N + 1, dtype=float)
    j = params.N - i
    inter = (2.0 * params.U / params.N) * (i * (i - 1.0) + j * (j - 1.0))
    offset = epsilon * (j - i)
    return params.J * ops.hop + np.diag(inter + offset)


def symmetric_state(N: int) -> np.ndarray:
    """Normalized symmetric condensate ((b1^dag+b2^dag)/sqrt(2))^N |vac>.

    Site-1 amplitudes are sqrt(binom(N, i)/2^N); computed in log space so
    large N stays finite, then renormalized.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    i = np.arange(N + 1, dtype=float)
    logamp = 0.5 * (gammaln(N + 1) - gammaln(i + 1) - gammaln(N - i + 1)
                    - N * np.log(2.0))
    amp = np.exp(logamp - logamp.max())
    return amp / np.linalg.norm(amp)
