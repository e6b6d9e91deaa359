import numpy as np
import pytest

from bosedimer import DimerParams
from bosedimer.liouvillian import (
    build_supermatrix,
    integrate_master,
    number_expectation,
    stationary_state,
)
from bosedimer.model import build_operators, hamiltonian, symmetric_state
from bosedimer.trajectories import (
    EnsembleSeries,
    StroboscopicSeries,
    build_histogram,
    calibrate_dt,
    effective_hamiltonian,
    effective_propagate,
    ensemble_expectation,
    run_realizations,
    run_trajectory,
)

# Decoded drive parameters of the chaotic sweep: the modulation switches
# after one time unit and repeats after two, i.e. full period T = 2.
CHAOS = dict(J=-1.0, E=1.0, A=1.5, T=2.0, gamma=0.1)


def random_state(rng, d):
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    return psi / np.linalg.norm(psi)


# ---------------------------------------------------- effective_hamiltonian

def test_effective_hamiltonian_split():
    p = DimerParams(J=0.8, U=0.45, E=0.2, A=0.0, gamma=0.3, N=7)
    ops = build_operators(p.N)
    heff = effective_hamiltonian(p, ops=ops)
    herm = 0.5 * (heff + heff.conj().T)
    anti = heff - herm
    assert np.allclose(herm, hamiltonian(p, p.E, ops), atol=1e-14)
    assert np.allclose(anti, -0.5j * (p.gamma / p.N) * ops.VdV, atol=1e-14)


def test_effective_hamiltonian_uses_requested_epsilon():
    p = DimerParams(J=1.0, U=0.1, E=0.0, A=2.0, T=1.0, gamma=0.1, N=5)
    ops = build_operators(p.N)
    hi = effective_hamiltonian(p, epsilon=p.E + p.A, ops=ops)
    lo = effective_hamiltonian(p, epsilon=p.E, ops=ops)
    diff = hi - lo                       # A * (n2 - n1) is diagonal
    assert np.allclose(diff, p.A * (ops.n2 - ops.n1), atol=1e-13)


# ------------------------------------------------------ effective_propagate

def test_propagate_gamma_zero_is_unitary():
    p = DimerParams(J=0.7, U=0.3, E=0.1, A=0.0, gamma=0.0, N=6)
    ops = build_operators(p.N)
    rng = np.random.default_rng(2)
    psi = random_state(rng, p.dim)
    t = 0.37
    out = effective_propagate(psi, 0.0, t, p)
    lam, vec = np.linalg.eigh(hamiltonian(p, p.E, ops))
    oracle = vec @ (np.exp(-1j * lam * t) * (vec.conj().T @ psi))
    assert np.allclose(out, oracle, atol=1e-11)
    assert abs(np.vdot(out, out).real - 1.0) < 1e-12


def test_propagate_dark_state_picks_up_pure_phase():
    # U = E = 0: the symmetric condensate is an eigenstate of the hopping
    # with eigenvalue J*N and is annihilated by V.
    p = DimerParams(J=0.8, U=0.0, E=0.0, A=0.0, gamma=0.25, N=8)
    psi = symmetric_state(p.N)
    t = 1.3
    out = effective_propagate(psi, 0.0, t, p)
    assert np.allclose(out, np.exp(-1j * p.J * p.N * t) * psi, atol=1e-11)


def test_propagate_norm_never_grows():
    p = DimerParams(J=1.0, U=0.6, E=0.3, A=0.0, gamma=0.8, N=9)
    rng = np.random.default_rng(5)
    for _ in range(5):
        psi = random_state(rng, p.dim)
        out = effective_propagate(psi, 0.2, 1.7, p)
        assert np.vdot(out, out).real <= 1.0 + 1e-12


def test_propagate_rejects_interval_straddling_switch():
    p = DimerParams(U=0.5, **CHAOS, N=4)
    psi = symmetric_state(p.N)
    with pytest.raises(ValueError):
        effective_propagate(psi, 0.8, 1.2, p)       # crosses t = 1
    effective_propagate(psi, 1.0, 2.0, p)           # aligned half: fine
    with pytest.raises(ValueError):
        effective_propagate(psi, 0.5, 0.5, p)       # empty interval


def test_propagate_half_period_matches_static_hamiltonian():
    # inside [0, T/2) the drive sits at E+A, so propagation over that
    # half equals evolution under the static effective Hamiltonian
    p = DimerParams(U=0.9, **CHAOS, N=4)
    ops = build_operators(p.N)
    rng = np.random.default_rng(8)
    psi = random_state(rng, p.dim)
    out = effective_propagate(psi, 0.0, 0.5 * p.T, p)
    heff = effective_hamiltonian(p, epsilon=p.E + p.A, ops=ops)
    from scipy.linalg import expm
    oracle = expm(-1j * 0.5 * p.T * heff) @ psi
    assert np.allclose(out, oracle, atol=1e-8)


# ----------------------------------------------------------- run_trajectory

def test_trajectory_is_deterministic_in_seed():
    p = DimerParams(U=0.8, **CHAOS, N=5)
    a = run_trajectory(None, p, 2, 30, seed=11)
    b = run_trajectory(None, p, 2, 30, seed=11)
    c = run_trajectory(None, p, 2, 30, seed=12)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.seed == 11 and a.realization == 0


def test_trajectory_values_in_range():
    p = DimerParams(U=1.2, **CHAOS, N=5)
    s = run_trajectory(None, p, 0, 40, seed=3)
    assert s.values.shape == (40,)
    assert np.all(s.values >= 0.0) and np.all(s.values <= p.N)


def test_trajectory_dark_state_never_jumps():
    # V annihilates the symmetric condensate and U = E = 0 keeps it an
    # eigenstate, so the occupation stays pinned at N/2 forever.
    p = DimerParams(J=1.0, U=0.0, E=0.0, A=0.0, T=1.0, gamma=0.4, N=6)
    s = run_trajectory(None, p, 0, 50, seed=1)
    assert np.max(np.abs(s.values - 0.5 * p.N)) < 1e-10


def test_trajectory_gamma_zero_matches_unitary_strobe():
    p = DimerParams(U=0.8, gamma=0.0, J=-1.0, E=1.0, A=1.5, T=2.0, N=6)
    ops = build_operators(p.N)
    s = run_trajectory(None, p, 0, 10, seed=7)

    def half_u(eps):
        lam, vec = np.linalg.eigh(hamiltonian(p, eps, ops))
        return vec @ (np.exp(-1j * lam * 0.5 * p.T)[:, None] * vec.conj().T)

    step = half_u(p.E) @ half_u(p.E + p.A)    # high half acts first
    psi = symmetric_state(p.N).astype(complex)
    n1 = np.arange(p.dim)
    oracle = []
    for _ in range(10):
        psi = step @ psi
        oracle.append((np.abs(psi) ** 2 @ n1).real)
    assert np.allclose(s.values, oracle, atol=1e-9)


def test_trajectory_input_validation():
    p = DimerParams(U=0.5, **CHAOS, N=4)
    with pytest.raises(ValueError):
        run_trajectory(None, p, -1, 10, seed=0)
    with pytest.raises(ValueError):
        run_trajectory(None, p, 0, 0, seed=0)
    with pytest.raises(ValueError):
        run_trajectory(np.ones(4), p, 0, 5, seed=0)     # wrong length
    bad = np.zeros(5)
    bad[0] = 2.0                                        # not normalized
    with pytest.raises(ValueError):
        run_trajectory(bad, p, 0, 5, seed=0)


# --------------------------------------------------------- run_realizations

def test_realizations_shapes_and_determinism():
    p = DimerParams(U=1.0, **CHAOS, N=5)
    out = run_realizations(p, 3, 1, 20, base_seed=42)
    again = run_realizations(p, 3, 1, 20, base_seed=42)
    assert len(out) == 3
    for k, s in enumerate(out):
        assert isinstance(s, StroboscopicSeries)
        assert s.realization == k and s.seed == 42
        assert s.values.shape == (20,)
        assert np.array_equal(s.values, again[k].values)
    # distinct streams must decorrelate the realizations
    assert not np.array_equal(out[0].values, out[1].values)


def test_realizations_validation():
    p = DimerParams(U=1.0, **CHAOS, N=4)
    with pytest.raises(ValueError):
        run_realizations(p, 0, 1, 5, base_seed=0)


# ----------------------------------------------------- ensemble_expectation

def test_ensemble_matches_master_equation():
    # jump-unraveling oracle: the trajectory mean of <n1> must agree
    # with direct integration of the density matrix
    p = DimerParams(J=-1.0, U=0.8, E=1.0, A=1.5, T=2.0, gamma=0.6, N=2)
    t_grid = np.linspace(0.5, 3.0 * p.T, 8)
    ens = ensemble_expectation(p, None, 400, t_grid, base_seed=5)

    psi0 = symmetric_state(p.N)
    ref = integrate_master(np.outer(psi0, psi0), p, float(t_grid[-1]),
                           t_samples=t_grid)
    target = np.array([number_expectation(rho) for rho in ref.states])
    dev = np.abs(ens.mean - target) / ens.stderr
    assert ens.n_trajectories == 400
    assert np.max(dev) < 3.0


def test_ensemble_stderr_scales_with_trajectories():
    p = DimerParams(J=-1.0, U=0.8, E=1.0, A=1.5, T=2.0, gamma=0.6, N=2)
    t_grid = np.array([1.0, 2.0, 4.0])
    small = ensemble_expectation(p, None, 100, t_grid, base_seed=9)
    large = ensemble_expectation(p, None, 400, t_grid, base_seed=9)
    ratio = np.mean(small.stderr) / np.mean(large.stderr)
    assert 1.5 < ratio < 2.6


def test_ensemble_time_zero_returns_initial_expectation():
    p = DimerParams(U=0.5, **CHAOS, N=4)
    psi0 = np.zeros(p.dim)
    psi0[3] = 1.0
    ens = ensemble_expectation(p, psi0, 5, np.array([0.0, 0.7]), base_seed=2)
    assert ens.mean[0] == pytest.approx(3.0, abs=1e-12)


def test_ensemble_validation():
    p = DimerParams(U=0.5, **CHAOS, N=4)
    with pytest.raises(ValueError):
        ensemble_expectation(p, None, 1, np.array([1.0]), base_seed=0)
    with pytest.raises(ValueError):
        ensemble_expectation(p, None, 5, np.array([2.0, 1.0]), base_seed=0)
    with pytest.raises(ValueError):
        ensemble_expectation(p, None, 5, np.array([-1.0, 1.0]), base_seed=0)
    with pytest.raises(ValueError):
        ensemble_expectation(p, np.ones(5), 5, np.array([1.0]), base_seed=0)


def test_time_average_agrees_with_stationary_state():
    # undriven ergodic check: one long trajectory's time average of <n1>
    # lands on the master-equation stationary value
    p = DimerParams(J=1.0, U=0.3, E=0.0, A=0.0, T=1.0, gamma=0.5, N=6)
    rho_ss = stationary_state(build_supermatrix(p))
    target = number_expectation(rho_ss)
    s = run_trajectory(None, p, 200, 10_000, seed=3, dt=p.T / 20.0)
    assert abs(np.mean(s.values) - target) < 0.05 * target


# --------------------------------------------------------------- histograms

def test_histogram_single_value_occupies_one_bin():
    s = StroboscopicSeries(values=np.full(50, 12.3), seed=0)
    h = build_histogram([s], N=20, n_bins=40)
    assert h.edges.shape == (41,)
    assert h.edges[0] == 0.0 and h.edges[-1] == 20.0
    assert np.count_nonzero(h.weights) == 1
    assert h.weights.max() == 1.0


def test_histogram_pools_realizations_and_normalizes():
    a = StroboscopicSeries(values=np.full(30, 2.5), seed=0, realization=0)
    b = StroboscopicSeries(values=np.full(60, 7.5), seed=0, realization=1)
    h = build_histogram([a, b], N=10, n_bins=10)
    assert h.weights[2] == pytest.approx(0.5)
    assert h.weights[7] == pytest.approx(1.0)
    assert np.count_nonzero(h.weights) == 2


def test_histogram_rejects_empty_input():
    with pytest.raises(ValueError):
        build_histogram([], N=10)
    empty = StroboscopicSeries(values=np.empty(0), seed=0)
    with pytest.raises(ValueError):
        build_histogram([empty], N=10)


# ------------------------------------------------------------- calibrate_dt

def test_calibrate_dt_accepts_default_step():
    # propagation is exact per piece, so the first candidate passes
    p = DimerParams(U=0.7, **CHAOS, N=4)
    assert calibrate_dt(p) == pytest.approx(p.T / 200.0)
    assert calibrate_dt(p, dt0=0.05) == pytest.approx(0.05)
