import numpy as np
import pytest

from noisemix.coeffs import (
    CoefficientSolution,
    TimeGrid,
    solve_riccati_F,
    solve_riccati_Q,
    solve_volterra_F,
)
from noisemix.errors import NonFiniteError
from noisemix.kernels import (
    CompositeKernel,
    MarkovDephasedOU,
    OUKernel,
    OUParams,
    ZeroKernel,
    eval_kernel,
)

OMEGA = 1.0


def reference_volterra(kernel, omega, grid, corrector_passes=1):
    """Stored-triangle reference solver, viable only at coarse grids.

    Keeps every propagator sample f(t_n, s_j) explicitly instead of the
    running-ratio factorization, advancing each column with the same
    trapezoidal exponent update.  Cross-validates the factorization
    identity used by the production solver.
    """
    n = grid.count
    if n > 500:
        raise ValueError("reference solver is O(n^2) memory; keep n <= 500")
    dt = grid.step
    g_vals = np.asarray(eval_kernel(kernel, grid.times))
    f = np.zeros(n + 1, dtype=complex)
    tri = np.zeros((n + 1, n + 1), dtype=complex)  # tri[row, col] = f(t_row, s_col)
    np.fill_diagonal(tri, 1.0)
    for k in range(n):
        guess = f[k]
        for _ in range(corrector_passes + 1):
            step = np.exp(dt * (1j * omega + 0.5 * (f[k] + guess)))
            tri[k + 1, : k + 1] = tri[k, : k + 1] * step
            integrand = g_vals[k + 1 :: -1] * tri[k + 1, : k + 2]
            guess = dt * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1]))
        f[k + 1] = guess
    return f


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(step=0.0, count=10)
    with pytest.raises(ValueError):
        TimeGrid(step=0.1, count=0)
    grid = TimeGrid.from_horizon(8.0, 1e-3)
    assert grid.count == 8000
    assert grid.times[-1] == pytest.approx(8.0)


def test_coarsening_stride():
    fine = TimeGrid(1e-3, 8000)
    assert fine.coarsening_stride(TimeGrid(4e-3, 2000)) == 4
    with pytest.raises(ValueError):
        fine.coarsening_stride(TimeGrid(1e-3, 3000))


def test_solution_invariants():
    grid = TimeGrid(1e-3, 1000)
    coeff = solve_riccati_F(OUKernel(OUParams(1.0, 0.5)), OMEGA, grid)
    assert coeff.values[0] == 0
    assert coeff.integral[0] == 0
    assert coeff.real_integral[0] == 0
    np.testing.assert_allclose(coeff.integral.real, coeff.real_integral, atol=1e-12)
    with pytest.raises(ValueError):
        CoefficientSolution(grid=grid, values=np.ones(grid.count + 1), kind="two_level_F")


def test_zero_strength_solutions_vanish():
    grid = TimeGrid(1e-3, 500)
    kernel = OUKernel(OUParams(0.0, 0.5))
    for solver in (solve_riccati_F, solve_riccati_Q, solve_volterra_F):
        coeff = solver(kernel, OMEGA, grid)
        assert np.all(coeff.values == 0)
    assert np.all(solve_volterra_F(ZeroKernel(), OMEGA, grid).values == 0)


def test_riccati_converges_to_stable_fixed_point():
    # oracle: the quadratic fixed-point equation 0 = A + B z + z^2, keeping
    # the root where the linearized flow is contracting
    strength, memory = 1.0, 100.0
    a = 0.5 * strength * memory
    b = -memory + 1j * OMEGA
    roots = np.roots([1.0, b, a])
    stable = [z for z in roots if (b + 2 * z).real < 0]
    assert len(stable) == 1
    grid = TimeGrid(1e-4, 10000)
    coeff = solve_riccati_F(OUKernel(OUParams(strength, memory)), OMEGA, grid)
    assert abs(coeff.values[-1] - stable[0]) < 1e-8
    assert stable[0] == pytest.approx(0.5024737839391462 + 0.005075746429688283j)


def test_three_level_coefficient_short_time_behavior():
    grid = TimeGrid(1e-4, 500)  # t <= 0.05 << 1/memory
    kernel = OUKernel(OUParams(1.0, 1.0))
    coeff_q = solve_riccati_Q(kernel, OMEGA, grid)
    coeff_f = solve_riccati_F(kernel, OMEGA, grid)
    assert coeff_q.kind == "three_level_Q"
    rate = 0.5 * 1.0 * 1.0
    ts = grid.times
    assert np.max(np.abs(coeff_q.values - rate * ts)) < 2e-3  # linear to O(t^2)
    assert np.max(np.abs(coeff_q.values - coeff_f.values)) < 1e-4  # quadratic terms differ at O(t^3)


def test_riccati_requires_exponential_form():
    grid = TimeGrid(1e-3, 100)
    composite = CompositeKernel(OUParams(1.0, 0.1), OUParams(2.0, 0.1))
    with pytest.raises(ValueError):
        solve_riccati_F(composite, OMEGA, grid)


def test_riccati_overflow_raises():
    grid = TimeGrid(0.5, 200)  # far outside the RK4 stability region
    with pytest.raises(NonFiniteError):
        solve_riccati_F(OUKernel(OUParams(50.0, 50.0)), OMEGA, grid)


def test_volterra_matches_riccati_on_exponential_kernels():
    grid = TimeGrid(1e-3, 8000)
    for kernel in (
        OUKernel(OUParams(1.0, 0.5)),
        OUKernel(OUParams(1.0, 0.1)),
        MarkovDephasedOU(OUParams(1.0, 0.1), 4.0),
    ):
        riccati = solve_riccati_F(kernel, OMEGA, grid)
        volterra = solve_volterra_F(kernel, OMEGA, grid)
        assert np.max(np.abs(riccati.values - volterra.values)) < 1e-4


def test_short_time_slope_equals_kernel_peak():
    # the coefficient rises from zero with slope G(0)
    kernel = CompositeKernel(OUParams(1.0, 0.4), OUParams(2.0, 0.3))
    g0 = float(eval_kernel(kernel, 0.0))
    for dt in (1e-3, 5e-4):
        grid = TimeGrid(dt, 10)
        coeff = solve_volterra_F(kernel, OMEGA, grid)
        slope = coeff.values[1] / dt
        assert abs(slope - g0) < 2.0 * g0 * dt


def _self_difference(solver, kernel, dt, count):
    coarse = solver(kernel, OMEGA, TimeGrid(dt, count)).values
    fine = solver(kernel, OMEGA, TimeGrid(dt / 2, 2 * count)).values[::2]
    return np.max(np.abs(coarse - fine))


def test_riccati_refinement_is_fourth_order():
    kernel = OUKernel(OUParams(1.0, 2.0))
    d1 = _self_difference(solve_riccati_F, kernel, 2e-2, 400)
    d2 = _self_difference(solve_riccati_F, kernel, 1e-2, 800)
    assert 8 < d1 / d2 < 32  # nominal 16


def test_volterra_refinement_is_at_least_second_order():
    kernel = CompositeKernel(OUParams(1.0, 0.5), OUParams(2.0, 0.5))
    d1 = _self_difference(solve_volterra_F, kernel, 2e-2, 400)
    d2 = _self_difference(solve_volterra_F, kernel, 1e-2, 800)
    assert d1 / d2 > 3.5  # nominal >= 4


def test_volterra_integral_refinement_tracks_value_refinement():
    kernel = CompositeKernel(OUParams(1.0, 0.5), OUParams(2.0, 0.5))
    coarse = solve_volterra_F(kernel, OMEGA, TimeGrid(4e-3, 2000))
    fine = solve_volterra_F(kernel, OMEGA, TimeGrid(2e-3, 4000))
    value_diff = np.max(np.abs(coarse.values - fine.values[::2]))
    int_diff = np.max(np.abs(coarse.integral - fine.integral[::2]))
    real_diff = np.max(np.abs(coarse.real_integral - fine.real_integral[::2]))
    assert int_diff <= 10 * value_diff
    assert real_diff <= 10 * value_diff


def test_volterra_agrees_with_stored_triangle_reference():
    grid = TimeGrid(8e-3, 400)
    kernel = CompositeKernel(OUParams(1.0, 0.1), OUParams(2.0, 0.1))
    fast = solve_volterra_F(kernel, OMEGA, grid)
    ref = reference_volterra(kernel, OMEGA, grid)
    # same quadrature, different propagator bookkeeping
    assert np.max(np.abs(fast.values - ref)) < 1e-12
