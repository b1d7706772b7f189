import numpy as np
import pytest

from noisemix.coeffs import CoefficientSolution, TimeGrid, solve_riccati_F, solve_riccati_Q
from noisemix.dynamics import (
    DensityMatrix,
    PureState,
    average_fidelity_qubit,
    fidelity_lambda,
    fidelity_qubit,
    overlap_fidelity,
    propagate_lambda,
    propagate_qubit,
    remove_free_rotation,
)
from noisemix.errors import GridMismatchError
from noisemix.kernels import MarkovDephasedOU, OUKernel, OUParams

OMEGA = 1.0
GRID = TimeGrid(1e-3, 4000)


@pytest.fixture(scope="module")
def coeff_f():
    return solve_riccati_F(MarkovDephasedOU(OUParams(1.0, 0.1), 4.0), OMEGA, GRID)


@pytest.fixture(scope="module")
def coeff_q():
    return solve_riccati_Q(MarkovDephasedOU(OUParams(1.0, 0.1), 4.0), OMEGA, GRID)


def zero_coeff(kind):
    return CoefficientSolution(
        grid=GRID, values=np.zeros(GRID.count + 1, dtype=complex), kind=kind
    )


def random_states(n, seed=11):
    rng = np.random.default_rng(seed)
    theta = np.arccos(rng.uniform(-1, 1, n))
    phi = rng.uniform(0, 2 * np.pi, n)
    return [PureState.from_bloch(t, p) for t, p in zip(theta, phi)]


def test_pure_state_validation():
    with pytest.raises(ValueError):
        PureState(np.array([1.0, 1.0]))
    state = PureState.normalized([1.0, 1.0])
    assert state.dim == 2
    assert abs(np.sum(np.abs(state.amplitudes) ** 2) - 1) < 1e-12


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[1.0, 0.5], [0.0, 0.0]]))  # not Hermitian
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([0.7, 0.7]).astype(complex))  # trace != 1
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]).astype(complex))  # negative eigenvalue
    DensityMatrix(np.diag([0.5, 0.5]).astype(complex))


def test_ground_state_is_stationary(coeff_f):
    rho0 = PureState.qubit(0.0, 1.0).density_matrix()
    result = propagate_qubit(coeff_f, rho0, OMEGA)
    assert np.max(np.abs(result.states - rho0.entries)) < 1e-9


def test_trace_and_hermiticity_preserved(coeff_f):
    rho0 = PureState.from_bloch(1.1, 0.4).density_matrix()
    result = propagate_qubit(coeff_f, rho0, OMEGA)
    traces = np.trace(result.states, axis1=1, axis2=2)
    assert np.max(np.abs(traces - 1.0)) < 1e-9
    herm = result.states - result.states.conj().transpose(0, 2, 1)
    assert np.max(np.abs(herm)) < 1e-9
    assert result.min_eigenvalue.min() > -1e-6


def test_propagation_matches_closed_form_for_random_states(coeff_f):
    for state in random_states(10):
        result = propagate_qubit(coeff_f, state.density_matrix(), OMEGA)
        rotated = remove_free_rotation(result.states, GRID.times, OMEGA)
        overlap = overlap_fidelity(rotated, state)
        closed = fidelity_qubit(float(abs(state.amplitudes[0]) ** 2), coeff_f).values
        assert np.max(np.abs(overlap - closed)) < 1e-6


def test_fidelity_qubit_endpoints(coeff_f):
    assert fidelity_qubit(0.37, coeff_f).values[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(fidelity_qubit(0.0, coeff_f).values, 1.0)
    excited = fidelity_qubit(1.0, coeff_f).values
    np.testing.assert_allclose(
        excited, np.exp(-2.0 * coeff_f.real_integral), atol=1e-12
    )
    with pytest.raises(ValueError):
        fidelity_qubit(1.5, coeff_f)


def test_zero_coefficient_freezes_everything():
    coeff = zero_coeff("two_level_F")
    state = PureState.from_bloch(0.9, 0.3)
    result = propagate_qubit(coeff, state.density_matrix(), OMEGA)
    rotated = remove_free_rotation(result.states, GRID.times, OMEGA)
    assert np.max(np.abs(rotated - rotated[0])) < 1e-9
    np.testing.assert_allclose(fidelity_qubit(0.4, coeff).values, 1.0)
    for variant in ("paper_formula", "haar_integral"):
        np.testing.assert_allclose(average_fidelity_qubit(coeff, variant).values, 1.0)
    coeff3 = zero_coeff("three_level_Q")
    psi = PureState.normalized([1.0, 1.0, 1.0])
    np.testing.assert_allclose(fidelity_lambda(psi, coeff3).values, 1.0)


def test_average_fidelity_starts_at_one_and_flat(coeff_f):
    for variant in ("paper_formula", "haar_integral"):
        trace = average_fidelity_qubit(coeff_f, variant)
        assert trace.values[0] == 1.0
        # quadratic short-time decay: the first step moves by O(dt^2)
        g0 = 0.05  # kernel value at zero lag for these parameters
        assert abs(trace.values[1] - 1.0) < 5 * g0 * GRID.step**2


def test_haar_average_matches_monte_carlo(coeff_f):
    rng = np.random.default_rng(5)
    n = 100_000
    mu_sq = 0.5 * (1.0 + rng.uniform(-1, 1, n))  # uniform polar-angle cosine
    pick = [0, GRID.count // 3, GRID.count]
    pop = np.exp(-2.0 * coeff_f.real_integral[pick])
    coh = np.exp(-coeff_f.integral[pick]).real
    samples = (
        1.0
        - mu_sq[:, None]
        - (mu_sq - 2 * mu_sq**2)[:, None] * pop[None, :]
        + 2 * (mu_sq - mu_sq**2)[:, None] * coh[None, :]
    )
    mc_mean = samples.mean(axis=0)
    mc_se = samples.std(axis=0, ddof=1) / np.sqrt(n)
    haar = average_fidelity_qubit(coeff_f, "haar_integral").values[pick]
    assert np.all(np.abs(haar - mc_mean) <= 3 * np.maximum(mc_se, 1e-12))


def test_variants_disagree_after_start(coeff_f):
    paper = average_fidelity_qubit(coeff_f, "paper_formula").values
    haar = average_fidelity_qubit(coeff_f, "haar_integral").values
    assert np.max(np.abs(paper - haar)) > 1e-3


def test_lambda_dark_state_is_stationary(coeff_q):
    rho0 = PureState.three_level(0.0, 1.0, 0.0).density_matrix()
    result = propagate_lambda(coeff_q, rho0)
    assert np.max(np.abs(result.states - rho0.entries)) < 1e-9


def test_lambda_population_decay(coeff_q):
    rho0 = PureState.three_level(1.0, 0.0, 0.0).density_matrix()
    result = propagate_lambda(coeff_q, rho0)
    population = result.states[:, 0, 0].real
    predicted = np.exp(-4.0 * coeff_q.real_integral)
    assert np.max(np.abs(population - predicted)) < 1e-6


def test_lambda_closed_form_matches_propagation(coeff_q):
    states = [
        PureState.normalized([1.0, 1.0, 0.0]),
        PureState.normalized([np.sqrt(0.5), np.sqrt(0.3), np.sqrt(0.2) * np.exp(0.7j)]),
        PureState.normalized([0.6, 0.0, 0.8j]),
    ]
    for psi in states:
        result = propagate_lambda(coeff_q, psi.density_matrix())
        overlap = overlap_fidelity(result.states, psi)
        closed = fidelity_lambda(psi, coeff_q).values
        assert np.max(np.abs(overlap - closed)) < 1e-6


def test_lambda_fidelity_trivial_cases(coeff_q):
    psi = PureState.normalized([1.0, 1.0, 1.0])
    assert fidelity_lambda(psi, coeff_q).values[0] == pytest.approx(1.0, abs=1e-12)
    dark = PureState.normalized([0.0, 0.4, 0.6])
    np.testing.assert_allclose(fidelity_lambda(dark, coeff_q).values, 1.0, atol=1e-12)
    # equal upper/lower superposition has a compact closed form
    half = PureState.normalized([1.0, 1.0, 0.0])
    qbar = -2.0 * coeff_q.integral
    expected = 3.0 / 8.0 + np.exp(2 * qbar.real) / 8.0 + 0.5 * np.exp(qbar).real
    np.testing.assert_allclose(fidelity_lambda(half, coeff_q).values, expected, atol=1e-12)


def test_kind_and_grid_guards(coeff_f, coeff_q):
    rho2 = PureState.qubit(1.0, 0.0).density_matrix()
    rho3 = PureState.three_level(1.0, 0.0, 0.0).density_matrix()
    with pytest.raises(ValueError):
        propagate_qubit(coeff_q, rho2, OMEGA)
    with pytest.raises(ValueError):
        propagate_lambda(coeff_f, rho3)
    with pytest.raises(GridMismatchError):
        propagate_qubit(coeff_f, rho2, OMEGA, grid=TimeGrid(2e-3, 100))
    shorter = propagate_qubit(coeff_f, rho2, OMEGA, grid=TimeGrid(1e-3, 100))
    assert shorter.states.shape[0] == 101
