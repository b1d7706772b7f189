"""Stochastic-trajectory Monte Carlo oracle.

Samples the composite complex Gaussian noise from its correlation kernel
and propagates the linear (non-norm-preserving) stochastic wavefunction
equation per path.  The plain ensemble average of outer products recovers
the reduced density matrix, so no per-path normalization or importance
weighting is involved.  The module exists to cross-check the deterministic
master-equation solvers through an entirely different route.

Reproducibility contract: every path draws from its own counter-based RNG
stream keyed by (master seed, path index), and partial sums are combined in
a fixed chunk order, so results are bit-identical for any thread count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from ._parallel import parallel_map
from .coeffs import CoefficientSolution, TimeGrid
from .dynamics import PureState, free_rotation_phases
from .errors import GridMismatchError, NonFiniteError, NotPositiveSemidefiniteError
from .kernels import KernelSpec, eval_kernel

__all__ = [
    "EnsembleSpec",
    "NoisePath",
    "EnsembleResult",
    "sample_noise_paths",
    "run_qsd_ensemble",
]

MAX_FACTOR_COUNT = 4096  # covariance factorization is O(n^3), done once
COVARIANCE_JITTER = 1e-12
CHUNK = 256  # fixed path-block size; part of the determinism contract


@dataclass(frozen=True)
class EnsembleSpec:
    """Number of trajectories and the 64-bit master seed."""

    count: int
    seed: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class NoisePath:
    """One sampled realization of the driving noise on a grid."""

    grid: TimeGrid
    samples: np.ndarray


@dataclass(frozen=True)
class EnsembleResult:
    """Ensemble-averaged state trace plus fidelity and trace statistics.

    ``states`` is the plain average of outer products in the propagation
    frame, the one that keeps the bare splitting; apply
    :func:`noisemix.dynamics.remove_free_rotation` before comparing against
    the co-rotating three-level master equation.  ``fidelity`` is the
    per-path overlap with the initial state (free rotation removed, matching
    the closed-form fidelity frame) averaged over paths; ``fidelity_se`` is
    its standard error.  ``trace``/``trace_se`` monitor the statistical
    unit-trace consistency of the linear unraveling.
    """

    grid: TimeGrid
    states: np.ndarray
    fidelity: np.ndarray
    fidelity_se: np.ndarray
    trace: np.ndarray
    trace_se: np.ndarray


def _covariance_factor(kernel: KernelSpec, grid: TimeGrid) -> np.ndarray | None:
    """Lower-triangular factor of the node covariance, None for zero noise."""
    g_row = np.asarray(eval_kernel(kernel, grid.times), dtype=float)
    g0 = float(g_row[0])
    if g0 == 0.0:
        return None
    cov = toeplitz(g_row)
    cov[np.diag_indices_from(cov)] += COVARIANCE_JITTER * g0
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveSemidefiniteError(
            "noise covariance is not positive semidefinite even after jitter"
        ) from exc


def _path_key(seed: int, index: int) -> int:
    # 128-bit Philox key: master seed in the high word, path index in the low
    return (int(seed) << 64) | int(index)


def _draw_block(factor, seed: int, start: int, count: int, n_nodes: int) -> np.ndarray:
    """Sample ``count`` noise paths with indices start..start+count-1."""
    white = np.empty((count, n_nodes), dtype=complex)
    for i in range(count):
        rng = np.random.Generator(np.random.Philox(key=_path_key(seed, start + i)))
        xy = rng.standard_normal(2 * n_nodes)
        white[i] = (xy[:n_nodes] + 1j * xy[n_nodes:]) / np.sqrt(2.0)
    if factor is None:
        return np.zeros_like(white)
    return white @ factor.T


def sample_noise_paths(
    kernel: KernelSpec, grid: TimeGrid, ensemble: EnsembleSpec
) -> list[NoisePath]:
    """Sample complex Gaussian paths whose covariance matches the kernel.

    The paths have mean zero, vanishing pseudo-covariance and node
    covariance ``kernel(|t_n - t_m|)``.  Each path depends only on
    (seed, path index), never on evaluation order.
    """
    if grid.count > MAX_FACTOR_COUNT:
        raise ValueError(
            f"grid count {grid.count} exceeds the factorization limit {MAX_FACTOR_COUNT}"
        )
    factor = _covariance_factor(kernel, grid)
    block = _draw_block(factor, ensemble.seed, 0, ensemble.count, grid.count + 1)
    return [NoisePath(grid=grid, samples=block[i]) for i in range(ensemble.count)]


def _coefficient_on(coeff: CoefficientSolution, times: np.ndarray) -> np.ndarray:
    fine = coeff.grid.times
    return np.interp(times, fine, coeff.values.real) + 1j * np.interp(
        times, fine, coeff.values.imag
    )


def _propagate_block(noise, psi0, drift, drift_mid, omega, dt):
    """RK4 for a block of linear stochastic wavefunction paths.

    ``noise`` has shape (paths, nodes); the sampled noise and the drift
    coefficient are linearly interpolated at half steps.  Returns the state
    history with shape (nodes, paths, dim).
    """
    n_paths, n_nodes = noise.shape
    dim = psi0.shape[0]
    psi = np.tile(psi0, (n_paths, 1))
    history = np.empty((n_nodes, n_paths, dim), dtype=complex)
    history[0] = psi
    half_omega = 0.5j * omega

    def rhs(state, z, c):
        out = np.empty_like(state)
        out[:, 0] = (-half_omega - c) * state[:, 0]
        fed = z * state[:, 0]
        for level in range(1, dim):
            out[:, level] = half_omega * state[:, level] + fed
        return out

    for k in range(n_nodes - 1):
        z0 = noise[:, k]
        z1 = noise[:, k + 1]
        zm = 0.5 * (z0 + z1)
        k1 = rhs(psi, z0, drift[k])
        k2 = rhs(psi + 0.5 * dt * k1, zm, drift_mid[k])
        k3 = rhs(psi + 0.5 * dt * k2, zm, drift_mid[k])
        k4 = rhs(psi + dt * k3, z1, drift[k + 1])
        psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        history[k + 1] = psi
    return history


def run_qsd_ensemble(
    kernel: KernelSpec,
    omega: float,
    coeff: CoefficientSolution,
    psi0: PureState,
    grid: TimeGrid,
    ensemble: EnsembleSpec,
    threads: int = 1,
) -> EnsembleResult:
    """Monte Carlo estimate of the reduced dynamics from the linear unraveling.

    ``grid`` must equal the coefficient grid or be a uniform coarsening of
    it; the closure coefficient keeps its fine sampling either way.
    """
    if psi0.dim == 2 and coeff.kind != "two_level_F":
        raise ValueError("two-level ensemble needs a two-level coefficient")
    if psi0.dim == 3 and coeff.kind != "three_level_Q":
        raise ValueError("three-level ensemble needs a three-level coefficient")
    if grid.count > MAX_FACTOR_COUNT:
        raise ValueError(
            f"grid count {grid.count} exceeds the factorization limit {MAX_FACTOR_COUNT}"
        )
    try:
        coeff.grid.coarsening_stride(grid)
    except ValueError as exc:
        raise GridMismatchError(
            "trajectory grid must be the coefficient grid or a uniform coarsening"
        ) from exc

    times = grid.times
    dt = grid.step
    dim = psi0.dim
    # drift term of the closure: the coefficient multiplies L^dag L, which
    # acts as 1 (two-level) or 2 (three-level) on the upper amplitude
    multiplier = 1.0 if dim == 2 else 2.0
    drift = multiplier * _coefficient_on(coeff, times)
    drift_mid = multiplier * _coefficient_on(coeff, times[:-1] + 0.5 * dt)
    factor = _covariance_factor(kernel, grid)
    phases = free_rotation_phases(dim, omega, times)
    ref = psi0.amplitudes.conj()[None, :] * phases  # (nodes, dim)

    n_paths = ensemble.count
    starts = list(range(0, n_paths, CHUNK))

    def chunk_stats(start: int):
        count = min(CHUNK, n_paths - start)
        block = _draw_block(factor, ensemble.seed, start, count, grid.count + 1)
        history = _propagate_block(
            block, psi0.amplitudes, drift, drift_mid, omega, dt
        )
        if not np.all(np.isfinite(history.view(float))):
            raise NonFiniteError("a trajectory overflowed; reduce the step")
        overlap = np.einsum("td,tpd->tp", ref, history)
        fid = np.abs(overlap) ** 2
        norm = np.sum(np.abs(history) ** 2, axis=2)
        rho_sum = np.einsum("tpi,tpj->tij", history, history.conj())
        return (
            fid.sum(axis=1),
            (fid**2).sum(axis=1),
            norm.sum(axis=1),
            (norm**2).sum(axis=1),
            rho_sum,
        )

    partials = parallel_map(chunk_stats, starts, threads=threads)
    fid_sum = sum(p[0] for p in partials)
    fid_sq = sum(p[1] for p in partials)
    norm_sum = sum(p[2] for p in partials)
    norm_sq = sum(p[3] for p in partials)
    rho_sum = sum(p[4] for p in partials)

    fid_mean = fid_sum / n_paths
    norm_mean = norm_sum / n_paths
    if n_paths > 1:
        fid_var = np.maximum(fid_sq - n_paths * fid_mean**2, 0.0) / (n_paths - 1)
        norm_var = np.maximum(norm_sq - n_paths * norm_mean**2, 0.0) / (n_paths - 1)
    else:
        fid_var = np.zeros_like(fid_mean)
        norm_var = np.zeros_like(norm_mean)
    return EnsembleResult(
        grid=grid,
        states=rho_sum / n_paths,
        fidelity=fid_mean,
        fidelity_se=np.sqrt(fid_var / n_paths),
        trace=norm_mean,
        trace_se=np.sqrt(norm_var / n_paths),
    )
