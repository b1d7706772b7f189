"""Noise correlation kernels.

All rates and times are dimensionless, expressed in units of the system
frequency.  Every kernel is even in the time difference, so the public
functions take tau = |t - s| >= 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "OUParams",
    "OUKernel",
    "CompositeKernel",
    "MarkovDephasedOU",
    "ZeroKernel",
    "KernelSpec",
    "eval_ou_kernel",
    "eval_composite_kernel",
    "eval_kernel",
    "markov_limit_params",
    "ou_dephasing_factor",
    "markov_dephasing_factor",
]


@dataclass(frozen=True)
class OUParams:
    """Strength/memory pair of one Ornstein-Uhlenbeck noise channel.

    ``strength`` is the decoherence rate, ``memory_rate`` the inverse memory
    time.  The delta-correlated (memoryless) limit is represented by the
    :class:`MarkovDephasedOU` kernel variant, never by an infinite
    ``memory_rate``.
    """

    strength: float
    memory_rate: float

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError(f"strength must be >= 0, got {self.strength}")
        if not self.memory_rate > 0 or not np.isfinite(self.memory_rate):
            raise ValueError(
                f"memory_rate must be positive and finite, got {self.memory_rate}"
            )


@dataclass(frozen=True)
class OUKernel:
    """Single OU channel: (strength * memory_rate / 2) * exp(-memory_rate * tau)."""

    params: OUParams


@dataclass(frozen=True)
class CompositeKernel:
    """Relaxation OU channel filtered by a second, dephasing OU channel."""

    beta: OUParams
    alpha: OUParams


@dataclass(frozen=True)
class MarkovDephasedOU:
    """Relaxation OU channel filtered by delta-correlated dephasing.

    Exactly an OU kernel with rescaled parameters, see
    :func:`markov_limit_params`.
    """

    beta: OUParams
    dephasing_strength: float

    def __post_init__(self):
        if self.dephasing_strength < 0:
            raise ValueError(
                f"dephasing_strength must be >= 0, got {self.dephasing_strength}"
            )


@dataclass(frozen=True)
class ZeroKernel:
    """Identically vanishing correlation (no environment coupling)."""


KernelSpec = Union[OUKernel, CompositeKernel, MarkovDephasedOU, ZeroKernel]


def eval_ou_kernel(p: OUParams, tau):
    """Evaluate the OU correlation at lag tau >= 0 (scalar or array)."""
    tau = np.asarray(tau, dtype=float)
    return 0.5 * p.strength * p.memory_rate * np.exp(-p.memory_rate * tau)


def _dephasing_exponent(alpha: OUParams, tau):
    """Doubly integrated dephasing correlation, (G/2)*(tau + (e^{-g tau}-1)/g).

    The (e^{-g tau}-1)/g factor is evaluated by its series for g*tau < 1e-6
    to avoid catastrophic cancellation in the long-memory limit.
    """
    tau = np.asarray(tau, dtype=float)
    g = alpha.memory_rate
    x = g * tau
    small = x < 1e-6
    with np.errstate(over="ignore"):
        decayed = np.where(small, 1.0, np.exp(-np.where(small, 0.0, x)))
    bracket = np.where(small, -tau + 0.5 * g * tau * tau, (decayed - 1.0) / g)
    return 0.5 * alpha.strength * (tau + bracket)


def eval_composite_kernel(beta: OUParams, alpha: OUParams, tau):
    """Evaluate the composite relaxation-dephasing correlation at tau >= 0."""
    return eval_ou_kernel(beta, tau) * np.exp(-_dephasing_exponent(alpha, tau))


def markov_limit_params(beta: OUParams, dephasing_strength: float):
    """Rescaled OU parameters under delta-correlated dephasing.

    Returns ``(tilded, r)`` where ``tilded.memory_rate = memory_rate +
    dephasing_strength / 2``, ``r`` is the ratio of old to new memory rate
    and ``tilded.strength = r * strength``.  The product strength *
    memory_rate, i.e. the tau = 0 kernel value, is left unchanged.
    """
    if dephasing_strength < 0:
        raise ValueError("dephasing_strength must be >= 0")
    gamma_t = beta.memory_rate + 0.5 * dephasing_strength
    r = beta.memory_rate / gamma_t
    return OUParams(strength=r * beta.strength, memory_rate=gamma_t), r


def effective_ou_params(spec: KernelSpec) -> OUParams:
    """OU parameters of an exponential-form kernel.

    Raises ValueError for kernel variants that are not a pure exponential.
    """
    if isinstance(spec, OUKernel):
        return spec.params
    if isinstance(spec, MarkovDephasedOU):
        tilded, _ = markov_limit_params(spec.beta, spec.dephasing_strength)
        return tilded
    raise ValueError(f"kernel {type(spec).__name__} is not of exponential form")


def eval_kernel(spec: KernelSpec, tau):
    """Evaluate any kernel variant at lag tau >= 0 (scalar or array)."""
    if isinstance(spec, OUKernel):
        return eval_ou_kernel(spec.params, tau)
    if isinstance(spec, CompositeKernel):
        return eval_composite_kernel(spec.beta, spec.alpha, tau)
    if isinstance(spec, MarkovDephasedOU):
        return eval_ou_kernel(effective_ou_params(spec), tau)
    if isinstance(spec, ZeroKernel):
        return np.zeros_like(np.asarray(tau, dtype=float))
    raise TypeError(f"not a kernel spec: {spec!r}")


def ou_dephasing_factor(alpha: OUParams, t):
    """Coherence damping factor of a pure OU dephasing channel at time t."""
    return np.exp(-_dephasing_exponent(alpha, t))


def markov_dephasing_factor(strength: float, t):
    """Coherence damping factor of delta-correlated dephasing at time t."""
    if strength < 0:
        raise ValueError("strength must be >= 0")
    return np.exp(-0.5 * strength * np.asarray(t, dtype=float))
