import numpy as np
import pytest

from noisemix.kernels import (
    CompositeKernel,
    MarkovDephasedOU,
    OUKernel,
    OUParams,
    ZeroKernel,
    eval_composite_kernel,
    eval_kernel,
    eval_ou_kernel,
    markov_dephasing_factor,
    markov_limit_params,
    ou_dephasing_factor,
)

# direct substitution of (strength=1, memory=0.1, deph strength=2, deph
# memory=0.1) at tau=1, evaluated with 40-digit arithmetic
COMPOSITE_AT_ONE = 0.04310542352623482


def test_ou_kernel_values():
    assert eval_ou_kernel(OUParams(1.0, 0.1), 0.0) == pytest.approx(0.05)
    assert eval_ou_kernel(OUParams(1.0, 0.5), 0.0) == pytest.approx(0.25)
    assert eval_ou_kernel(OUParams(1.0, 2.0), 1.0) == pytest.approx(np.exp(-2.0))


def test_ou_params_validation():
    with pytest.raises(ValueError):
        OUParams(-1.0, 0.1)
    with pytest.raises(ValueError):
        OUParams(1.0, 0.0)
    with pytest.raises(ValueError):
        OUParams(1.0, np.inf)


def test_composite_at_zero_equals_relaxation_peak():
    beta = OUParams(1.3, 0.7)
    for alpha in (OUParams(2.0, 0.1), OUParams(0.3, 5.0)):
        assert eval_composite_kernel(beta, alpha, 0.0) == pytest.approx(
            eval_ou_kernel(beta, 0.0), abs=0.0
        )


def test_composite_without_dephasing_reduces_to_ou():
    beta = OUParams(1.0, 0.4)
    alpha = OUParams(0.0, 0.7)
    taus = np.linspace(0, 6, 61)
    np.testing.assert_allclose(
        eval_composite_kernel(beta, alpha, taus), eval_ou_kernel(beta, taus), rtol=0, atol=0
    )


def test_composite_frozen_value():
    got = eval_composite_kernel(OUParams(1.0, 0.1), OUParams(2.0, 0.1), 1.0)
    assert got == pytest.approx(COMPOSITE_AT_ONE, rel=1e-12)


def test_small_memory_series_branch_is_continuous():
    beta = OUParams(1.0, 0.5)
    alpha = OUParams(2.0, 1.0)
    # straddle the series switchover at memory_rate * tau = 1e-6
    below = eval_composite_kernel(beta, alpha, 0.999999e-6)
    above = eval_composite_kernel(beta, alpha, 1.000001e-6)
    assert below == pytest.approx(above, rel=1e-9)


def test_markov_limit_params_examples():
    tilded, r = markov_limit_params(OUParams(1.0, 0.1), 4.0)
    assert tilded.memory_rate == pytest.approx(2.1)
    assert tilded.strength == pytest.approx(0.1 / 2.1)
    assert r == pytest.approx(0.1 / 2.1)

    tilded, r = markov_limit_params(OUParams(1.0, 2.0), 4.0)
    assert (tilded.strength, tilded.memory_rate, r) == (0.5, 4.0, 0.5)

    same, r = markov_limit_params(OUParams(1.0, 0.1), 0.0)
    assert same == OUParams(1.0, 0.1)
    assert r == 1.0


def test_markov_limit_shrinks_strength_and_stretches_rate():
    rng = np.random.default_rng(3)
    for _ in range(20):
        beta = OUParams(rng.uniform(0.1, 3), rng.uniform(0.05, 3))
        deph = rng.uniform(0.01, 6)
        tilded, r = markov_limit_params(beta, deph)
        assert tilded.memory_rate > beta.memory_rate
        assert tilded.strength < beta.strength
        assert 0 < r < 1
        # the tau = 0 value is preserved
        assert tilded.strength * tilded.memory_rate == pytest.approx(
            beta.strength * beta.memory_rate
        )


def test_eval_kernel_dispatch():
    taus = np.linspace(0, 4, 9)
    beta = OUParams(1.0, 0.1)
    assert np.all(eval_kernel(ZeroKernel(), taus) == 0)
    np.testing.assert_allclose(
        eval_kernel(OUKernel(beta), taus), eval_ou_kernel(beta, taus)
    )
    assert eval_kernel(MarkovDephasedOU(beta, 4.0), 0.0) == pytest.approx(0.05)


def test_memoryless_limit_of_composite():
    # short-memory dephasing converges to the rescaled-OU form
    beta = OUParams(1.0, 0.1)
    deph_strength = 4.0
    taus = np.linspace(0.0, 5.0, 501)
    markov = eval_kernel(MarkovDephasedOU(beta, deph_strength), taus)
    for memory, rtol in ((1e3 * max(1.0, deph_strength), 1e-2), (1e4, 1e-3)):
        composite = eval_kernel(
            CompositeKernel(beta, OUParams(deph_strength, memory)), taus
        )
        sel = taus >= 10.0 / memory
        rel = np.abs(composite[sel] - markov[sel]) / markov[sel]
        assert rel.max() < rtol


@pytest.mark.parametrize(
    "spec",
    [
        OUKernel(OUParams(0.7, 0.3)),
        CompositeKernel(OUParams(1.0, 0.1), OUParams(2.0, 0.5)),
        MarkovDephasedOU(OUParams(1.0, 0.1), 4.0),
    ],
)
def test_kernels_are_nonnegative_bounded_and_monotone(spec):
    taus = np.linspace(0, 10, 2001)
    vals = eval_kernel(spec, taus)
    assert np.all(vals >= 0)
    assert np.all(vals <= vals[0] + 1e-15)
    assert np.all(np.diff(vals) <= 1e-15)


def test_dephasing_factors():
    ts = np.linspace(0, 6, 7)
    np.testing.assert_allclose(
        markov_dephasing_factor(4.0, ts), np.exp(-2.0 * ts)
    )
    # long-memory OU factor starts quadratically: slope vanishes at t = 0
    alpha = OUParams(2.0, 0.1)
    f = ou_dephasing_factor(alpha, np.array([0.0, 1e-4]))
    assert f[0] == 1.0
    assert abs(f[1] - 1.0) < 1e-7


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        MarkovDephasedOU(OUParams(1.0, 0.1), -0.5)
