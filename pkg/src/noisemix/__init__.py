"""Exact open-system dynamics under mixed relaxation and dephasing noise.

Simulates two-level and three-level atomic systems coupled to an
Ornstein-Uhlenbeck relaxation channel and a (memoryless or colored)
dephasing channel, including the closed-form fidelities, the exact master
equations, a memory-integral solver for non-exponential kernels, a
stochastic-trajectory Monte Carlo oracle, and the published parameter
sweeps.
"""

from .coeffs import (
    CoefficientSolution,
    TimeGrid,
    solve_riccati_F,
    solve_riccati_Q,
    solve_volterra_F,
)
from .dynamics import (
    DensityMatrix,
    EvolutionResult,
    FidelityTrace,
    PureState,
    average_fidelity_qubit,
    fidelity_lambda,
    fidelity_qubit,
    overlap_fidelity,
    propagate_lambda,
    propagate_qubit,
    remove_free_rotation,
)
from .errors import (
    GridMismatchError,
    NonFiniteError,
    NotPositiveSemidefiniteError,
    ParseError,
    ValidationError,
)
from .experiments import (
    NoiseMixParams,
    RegionDiagram,
    ScenarioTriple,
    build_triple,
    classify_regions,
    detect_crossing,
    reproduce_figure,
)
from .kernels import (
    CompositeKernel,
    KernelSpec,
    MarkovDephasedOU,
    OUKernel,
    OUParams,
    ZeroKernel,
    eval_composite_kernel,
    eval_kernel,
    eval_ou_kernel,
    markov_limit_params,
)
from .trajectories import (
    EnsembleResult,
    EnsembleSpec,
    NoisePath,
    run_qsd_ensemble,
    sample_noise_paths,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientSolution",
    "CompositeKernel",
    "DensityMatrix",
    "EnsembleResult",
    "EnsembleSpec",
    "EvolutionResult",
    "FidelityTrace",
    "GridMismatchError",
    "KernelSpec",
    "MarkovDephasedOU",
    "NoiseMixParams",
    "NoisePath",
    "NonFiniteError",
    "NotPositiveSemidefiniteError",
    "OUKernel",
    "OUParams",
    "ParseError",
    "PureState",
    "RegionDiagram",
    "ScenarioTriple",
    "TimeGrid",
    "ValidationError",
    "ZeroKernel",
    "average_fidelity_qubit",
    "build_triple",
    "classify_regions",
    "detect_crossing",
    "eval_composite_kernel",
    "eval_kernel",
    "eval_ou_kernel",
    "fidelity_lambda",
    "fidelity_qubit",
    "markov_limit_params",
    "overlap_fidelity",
    "propagate_lambda",
    "propagate_qubit",
    "remove_free_rotation",
    "reproduce_figure",
    "run_qsd_ensemble",
    "sample_noise_paths",
    "solve_riccati_F",
    "solve_riccati_Q",
    "solve_volterra_F",
]
