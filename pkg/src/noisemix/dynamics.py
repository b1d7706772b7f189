"""Exact reduced dynamics of the two-level and three-level system.

The two-level master equation is propagated in the interaction frame in
which it is stated, which keeps the bare-frequency commutator term.  The
closed-form fidelities are phrased in the frame co-rotating with the bare
splitting, so overlap fidelities computed from a propagated state remove
the free rotation first (:func:`remove_free_rotation`).  The three-level
master equation is already stated in the co-rotating frame and needs no
transformation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .coeffs import CoefficientSolution, TimeGrid
from .errors import GridMismatchError

__all__ = [
    "PureState",
    "DensityMatrix",
    "FidelityTrace",
    "EvolutionResult",
    "propagate_qubit",
    "propagate_lambda",
    "fidelity_qubit",
    "average_fidelity_qubit",
    "fidelity_lambda",
    "remove_free_rotation",
    "free_rotation_phases",
    "overlap_fidelity",
]

logger = logging.getLogger(__name__)

AverageVariant = Literal["paper_formula", "haar_integral"]

# Basis ordering: two-level [upper, lower]; three-level [upper, lower_b, lower_c].
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
UPPER_PROJECTOR = SIGMA_PLUS @ SIGMA_MINUS

L_LAMBDA = np.zeros((3, 3), dtype=complex)
L_LAMBDA[1, 0] = 1.0
L_LAMBDA[2, 0] = 1.0
L_LAMBDA_DAG = L_LAMBDA.conj().T
L_DAG_L = L_LAMBDA_DAG @ L_LAMBDA  # = 2 |upper><upper|

NORM_TOL = 1e-12
HERMITICITY_TOL = 1e-9
TRACE_TOL = 1e-9
EIGENVALUE_FLOOR = -1e-6


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector of the two- or three-level system."""

    amplitudes: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, PureState):
            return NotImplemented
        return np.array_equal(self.amplitudes, other.amplitudes)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if amps.shape not in ((2,), (3,)):
            raise ValueError(f"expected 2 or 3 amplitudes, got shape {amps.shape}")
        norm_sq = float(np.sum(np.abs(amps) ** 2))
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized: |psi|^2 = {norm_sq!r}")

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def qubit(cls, upper, lower) -> "PureState":
        return cls(np.array([upper, lower], dtype=complex))

    @classmethod
    def from_bloch(cls, theta: float, phi: float) -> "PureState":
        """Qubit state cos(theta/2)|upper> + sin(theta/2) e^{i phi}|lower>."""
        return cls.qubit(np.cos(theta / 2), np.sin(theta / 2) * np.exp(1j * phi))

    @classmethod
    def three_level(cls, a, b, c) -> "PureState":
        return cls(np.array([a, b, c], dtype=complex))

    @classmethod
    def normalized(cls, amplitudes) -> "PureState":
        amps = np.asarray(amplitudes, dtype=complex)
        return cls(amps / np.linalg.norm(amps))

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, (numerically) positive matrix."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 3):
            raise ValueError(f"expected a 2x2 or 3x3 matrix, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise ValueError("matrix is not Hermitian within tolerance")
        if abs(np.trace(m).real - 1.0) > TRACE_TOL or abs(np.trace(m).imag) > TRACE_TOL:
            raise ValueError(f"trace must be 1, got {np.trace(m)!r}")
        if np.linalg.eigvalsh(m).min() < EIGENVALUE_FLOOR:
            raise ValueError("matrix has a significantly negative eigenvalue")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class FidelityTrace:
    """Real fidelity samples on a grid; starts at 1 and stays within [0, 1]."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.count + 1,):
            raise ValueError("values length does not match the grid")
        if abs(vals[0] - 1.0) > NORM_TOL:
            raise ValueError(f"fidelity must start at 1, got {vals[0]!r}")
        if vals.min() < -1e-9 or vals.max() > 1.0 + 1e-9:
            raise ValueError("fidelity left the interval [0, 1]")


@dataclass(frozen=True)
class EvolutionResult:
    """Propagated density matrices rho(t_n) plus the positivity monitor."""

    grid: TimeGrid
    states: np.ndarray  # (count + 1, d, d) complex
    min_eigenvalue: np.ndarray  # (count + 1,) float

    @property
    def dim(self) -> int:
        return self.states.shape[-1]


def _check_coefficient(coeff: CoefficientSolution, kind: str, grid: TimeGrid | None):
    if coeff.kind != kind:
        raise ValueError(f"coefficient kind {coeff.kind!r} does not drive this system")
    if grid is None:
        return coeff.grid
    if abs(grid.step - coeff.grid.step) > 1e-15 or grid.count > coeff.grid.count:
        raise GridMismatchError(
            "requested grid must share the coefficient step and not exceed its horizon"
        )
    return grid


def _rk4_density(rhs, rho0: np.ndarray, coeff_values: np.ndarray, grid: TimeGrid):
    """Fixed-step RK4 over the grid; the driving coefficient is linearly
    interpolated at half steps.  ``rho0`` may carry leading batch axes."""
    dt = grid.step
    n_steps = grid.count
    out = np.empty((n_steps + 1,) + rho0.shape, dtype=complex)
    out[0] = rho0
    rho = rho0.astype(complex)
    for n in range(n_steps):
        f0 = coeff_values[n]
        f1 = coeff_values[n + 1]
        fm = 0.5 * (f0 + f1)
        k1 = rhs(rho, f0)
        k2 = rhs(rho + 0.5 * dt * k1, fm)
        k3 = rhs(rho + 0.5 * dt * k2, fm)
        k4 = rhs(rho + dt * k3, f1)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[n + 1] = rho
    return out


def _finish_evolution(grid: TimeGrid, states: np.ndarray) -> EvolutionResult:
    hermitized = 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))
    min_eig = np.linalg.eigvalsh(hermitized)[..., 0]
    worst = float(min_eig.min())
    if worst < EIGENVALUE_FLOOR:
        logger.warning("propagated state reached minimum eigenvalue %.3e", worst)
    else:
        logger.debug("minimum eigenvalue over the trace: %.3e", worst)
    return EvolutionResult(grid=grid, states=states, min_eigenvalue=min_eig)


def _qubit_rhs(omega: float):
    def rhs(rho, f):
        half = 0.5 * (omega + f.imag)
        ham = half * SIGMA_Z
        damp = f.real * (
            2.0 * (SIGMA_MINUS @ rho @ SIGMA_PLUS)
            - UPPER_PROJECTOR @ rho
            - rho @ UPPER_PROJECTOR
        )
        return -1j * (ham @ rho - rho @ ham) + damp

    return rhs


def propagate_qubit(
    coeff: CoefficientSolution,
    rho0: DensityMatrix,
    omega: float,
    grid: TimeGrid | None = None,
) -> EvolutionResult:
    """Propagate the two-level master equation driven by ``coeff``.

    The equation keeps the bare-frequency commutator; use
    :func:`remove_free_rotation` before comparing overlaps against the
    closed-form fidelities.
    """
    grid = _check_coefficient(coeff, "two_level_F", grid)
    if rho0.dim != 2:
        raise ValueError("rho0 must be 2x2")
    states = _rk4_density(_qubit_rhs(omega), rho0.entries, coeff.values, grid)
    return _finish_evolution(grid, states)


def _lambda_rhs(rho, q):
    sandwich = L_LAMBDA @ rho @ L_LAMBDA_DAG
    return (
        2.0 * q.real * sandwich
        - q * (L_DAG_L @ rho)
        - np.conj(q) * (rho @ L_DAG_L)
    )


def propagate_lambda(
    coeff: CoefficientSolution,
    rho0: DensityMatrix,
    grid: TimeGrid | None = None,
) -> EvolutionResult:
    """Propagate the three-level master equation (co-rotating frame)."""
    grid = _check_coefficient(coeff, "three_level_Q", grid)
    if rho0.dim != 3:
        raise ValueError("rho0 must be 3x3")
    states = _rk4_density(_lambda_rhs, rho0.entries, coeff.values, grid)
    return _finish_evolution(grid, states)


def fidelity_qubit(mu_sq: float, coeff: CoefficientSolution) -> FidelityTrace:
    """Closed-form two-level fidelity for initial upper population mu_sq."""
    if not 0.0 <= mu_sq <= 1.0:
        raise ValueError(f"mu_sq must lie in [0, 1], got {mu_sq}")
    if coeff.kind != "two_level_F":
        raise ValueError("fidelity_qubit needs a two-level coefficient")
    pop = np.exp(-2.0 * coeff.real_integral)
    coh = np.exp(-coeff.integral).real
    vals = (
        1.0
        - mu_sq
        - (mu_sq - 2.0 * mu_sq**2) * pop
        + 2.0 * (mu_sq - mu_sq**2) * coh
    )
    return FidelityTrace(grid=coeff.grid, values=vals)


def average_fidelity_qubit(
    coeff: CoefficientSolution, variant: AverageVariant = "paper_formula"
) -> FidelityTrace:
    """Two-level fidelity averaged over all pure initial states.

    ``paper_formula`` weights the population and coherence factors by 1/4
    each.  ``haar_integral`` is the uniform (Haar) sphere average of the
    pointwise fidelity, which gives weights 1/6 and 1/3.  The two disagree
    for t > 0; both are kept so figure reproduction can report which one a
    given quantitative claim matches.
    """
    if coeff.kind != "two_level_F":
        raise ValueError("average_fidelity_qubit needs a two-level coefficient")
    pop = np.exp(-2.0 * coeff.real_integral)
    coh = np.exp(-coeff.integral).real
    if variant == "paper_formula":
        vals = 0.5 + 0.25 * (pop + coh)
    elif variant == "haar_integral":
        vals = 0.5 + pop / 6.0 + coh / 3.0
    else:
        raise ValueError(f"unknown average variant {variant!r}")
    return FidelityTrace(grid=coeff.grid, values=vals)


def fidelity_lambda(psi0: PureState, coeff: CoefficientSolution) -> FidelityTrace:
    """Closed-form three-level fidelity for initial state (a, b, c)."""
    if psi0.dim != 3:
        raise ValueError("fidelity_lambda needs a three-level state")
    if coeff.kind != "three_level_Q":
        raise ValueError("fidelity_lambda needs a three-level coefficient")
    a, b, c = psi0.amplitudes
    qbar = -2.0 * coeff.integral
    e_coh = np.exp(qbar)
    e_pop = np.exp(qbar + np.conj(qbar))
    a2 = abs(a) ** 2
    vals = (
        0.5 * a2 * (1.0 - e_pop) * abs(b + c) ** 2
        + a2**2 * e_pop
        + (1.0 - a2) ** 2
        + (a2 - a2**2) * (e_coh + np.conj(e_coh))
    )
    residual = float(np.max(np.abs(vals.imag)))
    if residual > 1e-12:
        raise AssertionError(f"fidelity picked up an imaginary part: {residual:.2e}")
    return FidelityTrace(grid=coeff.grid, values=vals.real)


def free_rotation_phases(dim: int, omega: float, times: np.ndarray) -> np.ndarray:
    """Diagonal of the unitary that removes the bare free evolution.

    Shape (len(times), dim).  Applied as U rho U^dagger it maps a state from
    the propagation frame into the co-rotating frame of the closed-form
    fidelities; for state vectors multiply elementwise.
    """
    half = np.exp(0.5j * omega * np.asarray(times, dtype=float))
    if dim == 2:
        return np.stack([half, half.conj()], axis=-1)
    if dim == 3:
        return np.stack([half, half.conj(), half.conj()], axis=-1)
    raise ValueError(f"unsupported dimension {dim}")


def remove_free_rotation(states: np.ndarray, times: np.ndarray, omega: float) -> np.ndarray:
    """Conjugate a (T, d, d) state trace by the free-rotation unitary."""
    phases = free_rotation_phases(states.shape[-1], omega, times)
    return phases[:, :, None] * states * phases.conj()[:, None, :]


def overlap_fidelity(states: np.ndarray, psi0: PureState) -> np.ndarray:
    """<psi0| rho(t) |psi0> for a (T, d, d) or batched state trace."""
    amps = psi0.amplitudes
    return np.einsum("i,...ij,j->...", amps.conj(), states, amps).real
