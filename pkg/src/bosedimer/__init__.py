"""Dissipative N-boson dimer: stationary states, mean-field limit,
quantum trajectories, and bifurcation diagrams."""

__version__ = "0.1.0"

from .errors import (BoseDimerError, BracketError, IntegrityError, PoleError,
                     SolverError, StepSizeError)
from .model import (DimerOperators, DimerParams, build_operators, drive,
                    hamiltonian, symmetric_state)
from .liouvillian import (MasterResult, SuperMatrix, build_supermatrix,
                          integrate_master, leading_spectrum, lindblad_rhs,
                          number_expectation, purity, stationary_state,
                          unvectorize, validate_density_matrix, vectorize)
from .meanfield import (Equilibrium, MeanfieldTrajectory, bloch_rhs,
                        find_equilibria, integrate_meanfield, particle_number,
                        spin_rhs, stroboscopic_samples, to_bloch, to_cartesian)
from .trajectories import (EnsembleSeries, Histogram, StroboscopicSeries,
                           build_histogram, calibrate_dt,
                           effective_hamiltonian, effective_propagate,
                           ensemble_expectation, run_realizations,
                           run_trajectory)
from .bifurcation import (BifurcationPoint, ChaosColumn, DiagramColumn,
                          TwoParameterDiagram, chaos_diagram_classical,
                          chaos_diagram_quantum, cluster_centers,
                          diagonal_maxima, locate_bifurcation,
                          sweep_stationary, two_parameter_diagram)

__all__ = [
    "__version__",
    "BoseDimerError", "BracketError", "IntegrityError", "PoleError",
    "SolverError", "StepSizeError",
    "DimerOperators", "DimerParams", "build_operators", "drive",
    "hamiltonian", "symmetric_state",
    "MasterResult", "SuperMatrix", "build_supermatrix", "integrate_master",
    "leading_spectrum", "lindblad_rhs", "number_expectation", "purity",
    "stationary_state", "unvectorize", "validate_density_matrix", "vectorize",
    "Equilibrium", "MeanfieldTrajectory", "bloch_rhs", "find_equilibria",
    "integrate_meanfield", "particle_number", "spin_rhs",
    "stroboscopic_samples", "to_bloch", "to_cartesian",
    "EnsembleSeries", "Histogram", "StroboscopicSeries", "build_histogram",
    "calibrate_dt", "effective_hamiltonian", "effective_propagate",
    "ensemble_expectation", "run_realizations", "run_trajectory",
    "BifurcationPoint", "ChaosColumn", "DiagramColumn",
    "TwoParameterDiagram", "chaos_diagram_classical",
    "chaos_diagram_quantum", "cluster_centers", "diagonal_maxima",
    "locate_bifurcation", "sweep_stationary", "two_parameter_diagram",
]
