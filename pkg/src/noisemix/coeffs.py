"""Damping-coefficient solvers.

The non-unitary dynamics of both the two-level and the three-level system
is driven by a single complex, time-dependent coefficient.  For kernels of
exponential form the coefficient obeys a scalar complex Riccati equation,
integrated here with fixed-step RK4.  For arbitrary kernels the defining
memory integral is solved directly by second-order product integration
(trapezoid plus one corrector pass).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import NonFiniteError
from .kernels import KernelSpec, ZeroKernel, effective_ou_params, eval_kernel

__all__ = [
    "TimeGrid",
    "CoefficientSolution",
    "solve_riccati_F",
    "solve_riccati_Q",
    "solve_volterra_F",
]

CoefficientKind = Literal["two_level_F", "three_level_Q"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_n = n * step, n = 0..count.

    All downstream quadrature assumes the uniform spacing.
    """

    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")

    @classmethod
    def from_horizon(cls, horizon: float, step: float = 1e-3) -> "TimeGrid":
        """Grid covering [0, horizon] with the given step."""
        count = int(round(horizon / step))
        return cls(step=step, count=max(count, 1))

    @property
    def horizon(self) -> float:
        return self.step * self.count

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.count + 1) * self.step

    def coarsening_stride(self, coarse: "TimeGrid") -> int:
        """Integer stride mapping this grid onto a uniform coarsening of it.

        Raises ValueError when ``coarse`` is not a coarsening with the same
        horizon.
        """
        if coarse.count > self.count or self.count % coarse.count != 0:
            raise ValueError("node counts are not an integer ratio")
        stride = self.count // coarse.count
        if abs(coarse.step - self.step * stride) > 1e-12 * self.step * stride:
            raise ValueError("grids do not share a horizon")
        return stride


@dataclass
class CoefficientSolution:
    """Complex damping coefficient sampled on a grid, with running integrals.

    ``integral`` is the cumulative trapezoidal integral of ``values`` and
    ``real_integral`` that of their real part.  ``kind`` records which master
    equation the coefficient belongs to.
    """

    grid: TimeGrid
    values: np.ndarray
    kind: CoefficientKind
    integral: np.ndarray = field(init=False)
    real_integral: np.ndarray = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.count + 1,):
            raise ValueError("values length does not match the grid")
        if self.values[0] != 0:
            raise ValueError("the coefficient must vanish at t = 0")
        if not np.all(np.isfinite(self.values.view(float))):
            raise NonFiniteError("coefficient overflowed or became non-finite")
        self.integral = cumulative_trapezoid(self.values, dx=self.grid.step, initial=0)
        self.real_integral = cumulative_trapezoid(
            self.values.real, dx=self.grid.step, initial=0
        )


def _solve_riccati(const, linear, quad, grid: TimeGrid) -> np.ndarray:
    """RK4 for y' = const + linear*y + quad*y^2 with y(0) = 0."""
    dt = grid.step
    out = np.zeros(grid.count + 1, dtype=complex)
    y = 0j
    for n in range(grid.count):
        k1 = const + (linear + quad * y) * y
        y2 = y + 0.5 * dt * k1
        k2 = const + (linear + quad * y2) * y2
        y3 = y + 0.5 * dt * k2
        k3 = const + (linear + quad * y3) * y3
        y4 = y + dt * k3
        k4 = const + (linear + quad * y4) * y4
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[n + 1] = y
    if not np.all(np.isfinite(out.view(float))):
        raise NonFiniteError(
            "Riccati solution overflowed; reduce the step or check parameters"
        )
    return out


def solve_riccati_F(kernel: KernelSpec, omega: float, grid: TimeGrid) -> CoefficientSolution:
    """Two-level damping coefficient for an exponential-form kernel.

    Integrates y' = s*g/2 + (-g + i*omega)*y + y^2 from y(0) = 0, where
    (s, g) are the kernel's effective OU strength and memory rate.
    """
    p = effective_ou_params(kernel)
    values = _solve_riccati(
        0.5 * p.strength * p.memory_rate, -p.memory_rate + 1j * omega, 1.0, grid
    )
    return CoefficientSolution(grid=grid, values=values, kind="two_level_F")


def solve_riccati_Q(kernel: KernelSpec, omega: float, grid: TimeGrid) -> CoefficientSolution:
    """Three-level damping coefficient; quadratic term carries a factor 2."""
    p = effective_ou_params(kernel)
    values = _solve_riccati(
        0.5 * p.strength * p.memory_rate, -p.memory_rate + 1j * omega, 2.0, grid
    )
    return CoefficientSolution(grid=grid, values=values, kind="three_level_Q")


def solve_volterra_F(
    kernel: KernelSpec,
    omega: float,
    grid: TimeGrid,
    corrector_passes: int = 1,
) -> CoefficientSolution:
    """Two-level damping coefficient for an arbitrary kernel.

    Solves F(t) = int_0^t G(t - s) f(t, s) ds where the propagator factor
    satisfies d/dt f(t, s) = (i*omega + F(t)) f(t, s), f(s, s) = 1.  Writing
    f(t, s) = E(t)/E(s) with log E(t) = int_0^t (i*omega + F), the whole
    history of f is carried as the vector W_j = E(t_n)/E(s_j), updated by one
    scalar multiplication per step.  The implicit dependence of F(t_{n+1}) on
    itself through log E is closed by a predictor (copy the last value) and
    ``corrector_passes`` fixed-point corrections; with the trapezoidal
    quadrature this yields a second-order scheme.

    Cost is O(count^2) kernel multiplications; log E is never exponentiated
    on its own, only differences enter, which keeps the scheme usable when
    the accumulated damping integral is large.
    """
    dt = grid.step
    n_steps = grid.count
    if isinstance(kernel, ZeroKernel):
        return CoefficientSolution(
            grid=grid, values=np.zeros(n_steps + 1, dtype=complex), kind="two_level_F"
        )
    g_vals = eval_kernel(kernel, grid.times)

    values = np.zeros(n_steps + 1, dtype=complex)
    log_e = 0j
    w = np.ones(1, dtype=complex)  # E(t_n)/E(s_j), j = 0..n
    # trapezoid weights are dt * [1/2, 1, ..., 1, 1/2]; built per step below
    for n in range(n_steps):
        f_prev = values[n]
        f_next = f_prev  # predictor
        for _ in range(corrector_passes + 1):
            log_e_next = log_e + dt * (1j * omega + 0.5 * (f_prev + f_next))
            scale = np.exp(log_e_next - log_e)
            w_next = np.empty(n + 2, dtype=complex)
            np.multiply(w, scale, out=w_next[: n + 1])
            w_next[n + 1] = 1.0
            integrand = g_vals[n + 1 :: -1] * w_next
            acc = integrand.sum() - 0.5 * (integrand[0] + integrand[-1])
            f_next = dt * acc
        if not np.isfinite(f_next.real) or not np.isfinite(f_next.imag):
            raise NonFiniteError(
                "memory-integral solution overflowed; reduce the step"
            )
        values[n + 1] = f_next
        log_e = log_e_next
        w = w_next
    return CoefficientSolution(grid=grid, values=values, kind="two_level_F")
