import numpy as np
import pytest
import scipy.linalg

from regsim.controllers import (
    CompensatorState,
    GeneratorState,
    SynthesisError,
    augmented_pair,
    compensator_step,
    control,
    error_output,
    euler_step,
    generator_step,
    maybe_resynthesize,
    regulated_output,
    rk4_step,
    synthesize_gains,
)
from regsim.internal_model import InternalModelEstimate
from regsim.linalg import AgentModel, is_hurwitz, spectral_abscissa, transmission_zeros
from regsim.scenario import section5_scenario

LAM0 = np.array([2j, -2j])


def agent1():
    return section5_scenario().agents[0].nominal


def test_rk4_examples():
    x = rk4_step(lambda t, x: -x, np.array([1.0]), 0.0, 0.1)
    assert x[0] == pytest.approx(0.9048375, abs=1e-7)
    np.testing.assert_array_equal(rk4_step(lambda t, x: 0 * x, np.array([3.0]), 0.0, 0.1), [3.0])
    assert euler_step(lambda t, x: -x, np.array([1.0]), 0.0, 0.1)[0] == pytest.approx(0.9)


def test_rk4_local_error_order():
    errs = [abs(rk4_step(lambda t, x: -x, np.array([1.0]), 0.0, h)[0] - np.exp(-h)) for h in (0.2, 0.1)]
    assert 25 < errs[0] / errs[1] < 40   # O(h^5) local error


def test_rk4_harmonic_oscillator_drift():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    x = np.array([1.0, 0.0])
    for s in range(10_000):
        x = rk4_step(lambda t, y: A @ y, x, s * 1e-3, 1e-3)
    exact = np.array([np.cos(10.0), -np.sin(10.0)])
    assert np.linalg.norm(x - exact) < 1e-6
    assert abs(x @ x - 1.0) < 1e-6


def test_generator_without_neighbors_is_local_flow():
    S = np.array([[0.0, 2.0], [-2.0, 0.0]])
    st = GeneratorState(np.array([1.0, 0.0]), S)
    out = generator_step(st, [], [], 0.01)
    np.testing.assert_allclose(out.w, scipy.linalg.expm(0.01 * S) @ st.w, atol=1e-10)
    np.testing.assert_array_equal(out.S, S)


def test_generator_synchronized_stays_synchronized():
    S = np.array([[0.0, 2.0], [-2.0, 0.0]])
    w = np.array([0.3, -0.4])
    me, leader = GeneratorState(w, S), GeneratorState(w, S)
    out = generator_step(me, [leader], [1.0], 0.01)
    np.testing.assert_allclose(out.S, S)
    # neighbor held over the step: w' = (S - I) w + w_nb, solved exactly
    aug = np.zeros((3, 3))
    aug[:2, :2], aug[:2, 2] = S - np.eye(2), w
    ref = (scipy.linalg.expm(0.01 * aug) @ np.append(w, 1.0))[:2]
    np.testing.assert_allclose(out.w, ref, atol=1e-10)
    # the consensus term vanishes at the start of the step
    np.testing.assert_allclose(out.w, scipy.linalg.expm(0.01 * S) @ w, atol=1e-4)


def test_generator_pulls_toward_neighbor():
    me = GeneratorState(np.zeros(2), np.zeros((2, 2)))
    nb = GeneratorState(np.ones(2), np.eye(2))
    out = generator_step(me, [nb], [1.0], 0.1)
    assert np.all(out.w > 0) and np.all(np.diag(out.S) > 0)


def test_augmented_pair_shape():
    m = agent1()
    G = np.array([[0.0, 1.0], [-4.0, 0.0]])
    H = np.array([[0.0], [1.0]])
    Aa, Ba = augmented_pair(m, G, H)
    assert Aa.shape == (4, 4) and Ba.shape == (4, 1)
    np.testing.assert_array_equal(Aa[2:, :2], H @ m.C)


def test_synthesis_section5_agent1():
    m = agent1()
    g = synthesize_gains(m, LAM0)
    Aa, Ba = augmented_pair(m, g.G, g.H)
    assert is_hurwitz(Aa + Ba @ g.K)
    assert is_hurwitz(m.A - g.L_obs @ m.C)
    assert g.E.shape == (4, 4) and g.F.shape == (4, 1)
    np.testing.assert_array_equal(g.G, [[0, 1], [-4, 0]])


def test_synthesis_zero_root_with_full_observation():
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    m = AgentModel(A, np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((2, 1)))
    g = synthesize_gains(m, np.array([0.0]))
    assert g.G.shape == (2, 2)


def test_synthesis_rejects_transmission_zero():
    # zero at s = 1 (numerator s - 1)
    m = AgentModel([[0, 1], [-4, -4]], [[0], [1]], [[-1, 1]], [[0]], [[0, 0], [0, 0]], [[0, 0]])
    with pytest.raises(SynthesisError):
        synthesize_gains(m, np.array([1.0 + 0j]))
    with pytest.raises(SynthesisError):
        synthesize_gains(m, np.array([-1.0 + 0j]))


def test_outputs_section5():
    m = agent1()
    x, u, w = np.array([0.7, -0.2]), np.array([0.4]), np.array([0.5, 9.0])
    np.testing.assert_allclose(error_output(m, x, u, w), [0.7 - 0.5])
    np.testing.assert_allclose(regulated_output(m, x, u, np.array([0.1, 0.0])), [0.6])
    np.testing.assert_array_equal(error_output(m, np.zeros(2), np.zeros(1), np.zeros(2)), [0.0])


def _state(m, lam=LAM0, xi=None):
    g = synthesize_gains(m, lam)
    est = InternalModelEstimate(2, [lam[0].real], [lam[0].imag])
    return CompensatorState(np.zeros(4) if xi is None else xi, est, g)


def test_compensator_zero_stays_zero():
    st = _state(agent1())
    out = compensator_step(st, np.zeros(1), 0.01)
    np.testing.assert_array_equal(out.xi, 0)
    np.testing.assert_array_equal(control(out), [0.0])


def test_compensator_step_matches_expm():
    st = _state(agent1(), xi=np.array([1.0, -1.0, 0.5, 0.2]))
    e = np.array([0.3])
    E, F = st.gains.E, st.gains.F
    # exact solution of xi' = E xi + F e with e held
    aug = np.zeros((5, 5))
    aug[:4, :4], aug[:4, 4:] = E, F @ e[:, None]
    ref = (scipy.linalg.expm(0.01 * aug) @ np.append(st.xi, 1.0))[:4]
    out = compensator_step(st, e, 0.01)
    np.testing.assert_allclose(out.xi, ref, atol=1e-10)


def test_maybe_resynthesize():
    m = agent1()
    st = _state(m)
    assert maybe_resynthesize(st, m) is st
    moved = CompensatorState(st.xi, InternalModelEstimate(2, [0.0], [1.9]), st.gains)
    out = maybe_resynthesize(moved, m, margin=1e-3)
    assert out is not moved
    np.testing.assert_allclose(out.gains.synth_lambda, [1.9j, -1.9j])
    Aa, Ba = augmented_pair(m, out.gains.G, out.gains.H)
    assert is_hurwitz(Aa + Ba @ out.gains.K)


def test_gain_continuity_in_lambda():
    m = agent1()
    K0 = synthesize_gains(m, LAM0).K
    diffs = [np.linalg.norm(synthesize_gains(m, np.array([2j + 1j * d, -2j - 1j * d])).K - K0)
             for d in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(a > b for a, b in zip(diffs, diffs[1:]))
    assert diffs[-1] < 1e-2


def test_precomputed_zeros_give_identical_gains():
    m = agent1()
    g1 = synthesize_gains(m, LAM0)
    g2 = synthesize_gains(m, LAM0, observer_gain=g1.L_obs, zeros=transmission_zeros(m))
    np.testing.assert_array_equal(g1.K, g2.K)
    np.testing.assert_array_equal(g1.E, g2.E)
    assert spectral_abscissa(g1.E) == spectral_abscissa(g2.E)
