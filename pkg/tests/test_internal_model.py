import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regsim.internal_model import (
    EulerStabilityError,
    InfeasibleInitError,
    InternalModelEstimate,
    assemble_lambda,
    build_one_copy,
    build_q_copy,
    coeffs_from_roots,
    eig_update_step,
    init_beta,
    internal_model_matrices,
    leader_imag_parts,
    pair_coeffs,
    project_alpha,
    project_alphas,
)
from regsim.linalg import minimal_polynomial


def test_coeffs_examples():
    np.testing.assert_allclose(coeffs_from_roots([2j, -2j]), [0, 4], atol=1e-15)
    np.testing.assert_allclose(coeffs_from_roots([0]), [0], atol=1e-15)
    np.testing.assert_allclose(coeffs_from_roots([1 + 1j, 1 - 1j, 0]), [-2, 2, 0], atol=1e-15)
    with pytest.raises(ValueError):
        coeffs_from_roots([1j, 2j])


@given(st.lists(st.tuples(st.floats(0, 2), st.floats(0.1, 3)), min_size=1, max_size=3),
       st.booleans())
@settings(max_examples=100, deadline=None)
def test_pair_coeffs_matches_numpy_poly(pairs, odd):
    alpha = np.array([a for a, _ in pairs])
    beta = np.array([b for _, b in pairs])
    roots = list(alpha + 1j * beta) + list(alpha - 1j * beta) + ([0.0] if odd else [])
    expected = np.real(np.poly(roots))[1:]
    np.testing.assert_allclose(pair_coeffs(alpha, beta, odd), expected, atol=1e-10)
    np.testing.assert_allclose(coeffs_from_roots(roots), expected, atol=1e-10)


def test_pair_coeffs_batched():
    alpha = np.array([[0.0], [0.5]])
    beta = np.array([[2.0], [1.0]])
    c = pair_coeffs(alpha, beta, False)
    np.testing.assert_allclose(c, [[0, 4], [-1, 1.25]])


@given(st.lists(st.floats(0.1, 3.0), min_size=1, max_size=3, unique=True), st.booleans())
@settings(max_examples=60, deadline=None)
def test_minimal_polynomial_round_trip(freqs, odd):
    # the companion matrix of a polynomial has it as minimal polynomial
    freqs = sorted(set(round(f, 2) for f in freqs))
    roots = [1j * f for f in freqs] + [-1j * f for f in freqs] + ([0] if odd else [])
    c = coeffs_from_roots(roots)
    G, _ = build_one_copy(c)
    k, c_back, _ = minimal_polynomial(G)
    assert k == len(roots)
    np.testing.assert_allclose(c_back, c, atol=1e-9 * max(1.0, np.abs(c).max()))


def test_companion_examples():
    G, H = build_one_copy([0, 4])
    np.testing.assert_array_equal(G, [[0, 1], [-4, 0]])
    np.testing.assert_array_equal(H, [[0], [1]])
    G, H = build_one_copy([1])
    np.testing.assert_array_equal(G, [[-1]])
    np.testing.assert_array_equal(H, [[1]])


def test_companion_char_poly():
    c = coeffs_from_roots([1 + 1j, 1 - 1j, 0])
    G, _ = build_one_copy(c)
    np.testing.assert_allclose(np.poly(G)[1:], c, atol=1e-12)


def test_q_copy():
    G1, H1 = build_one_copy([0, 4])
    G, H = build_q_copy([0, 4], 1)
    np.testing.assert_array_equal(G, G1)
    np.testing.assert_array_equal(H, H1)
    G, H = build_q_copy([0, 4], 2)
    assert G.shape == (4, 4) and H.shape == (4, 2)
    np.testing.assert_array_equal(G[2:, 2:], G1)
    np.testing.assert_array_equal(G[:2, 2:], 0)
    np.testing.assert_array_equal(H[2:, 1:], H1)
    mats = internal_model_matrices([0, 4], 3)
    assert mats.G.shape == (6, 6) and mats.H_prime.shape == (2, 1)
    with pytest.raises(ValueError):
        build_q_copy([0, 4], 0)


def test_project_alpha_examples():
    a, g = project_alpha(1.2, [1.0], 0.5)
    assert a == pytest.approx(np.sqrt(0.25 - 0.04), abs=1e-12)
    assert g == 1.0
    assert project_alpha(2.0, [1.0], 0.5) == (0.0, 1.0)
    assert project_alpha(0.3, [], 0.5) == (0.0, None)
    assert project_alpha(0.3, [1.0], 0.0) == (0.0, None)


def test_project_alpha_tie_picks_smaller():
    a, g = project_alpha(0.0, [1.0, -1.0], 2.0)
    assert g == -1.0
    assert a == pytest.approx(np.sqrt(3.0))


@given(st.floats(-3, 3), st.lists(st.floats(-3, 3), min_size=1, max_size=4), st.floats(0.01, 2))
@settings(max_examples=200, deadline=None)
def test_projection_keeps_distance_delta(beta, zeros, delta):
    alpha, gamma = project_alpha(beta, zeros, delta)
    assert alpha >= 0
    lam = alpha + 1j * beta
    zs = np.asarray(zeros)
    assert gamma == zs[np.argmin(np.abs(beta - zs))] or abs(beta - gamma) == np.min(np.abs(beta - zs))
    # the estimate sits on or outside the circle of radius delta around its nearest zero
    assert abs(lam - 1j * gamma) >= delta - 1e-9
    if zs.size == 1 or np.min(np.diff(np.sort(zs))) >= 2 * delta:
        assert np.min(np.abs(lam - 1j * zs)) >= delta - 1e-9
    np.testing.assert_allclose(project_alphas(np.array([beta]), zeros, delta), [alpha], atol=1e-15)


def test_eig_update_examples():
    W = np.zeros((2, 2))
    W[1, 0] = 1.0
    b, a = eig_update_step(np.array([[0.0]]), [2.0], W, 0.1)
    np.testing.assert_allclose(b, [[0.2]])
    np.testing.assert_array_equal(a, [[0.0]])
    b, _ = eig_update_step(np.array([[2.0]]), [2.0], W, 0.1)
    np.testing.assert_array_equal(b, [[2.0]])
    with pytest.raises(EulerStabilityError):
        eig_update_step(np.array([[0.0]]), [2.0], 20 * W, 0.1)


def test_eig_update_with_projection():
    W = np.zeros((2, 2))
    W[1, 0] = 1.0
    b, a = eig_update_step(np.array([[0.9]]), [2.0], W, 0.1, imag_zeros=[[1.0]], deltas=[0.5])
    assert b[0, 0] == pytest.approx(1.01)
    assert a[0, 0] == pytest.approx(np.sqrt(0.25 - 0.01 ** 2))


def test_eig_update_converges_on_switching_pair():
    g1 = np.zeros((5, 5))
    g1[1, 0] = g1[2, 0] = g1[4, 3] = g1[3, 4] = 1.0
    g2 = np.zeros((5, 5))
    g2[3, 1] = g2[4, 2] = g2[1, 4] = 1.0
    beta = np.array([[0.3], [-0.5], [0.9], [0.1]])
    dt, errs, ts = 1e-2, [], []
    for step in range(5000):
        W = g1 if (step * dt) % 2.0 < 1.0 else g2
        beta, _ = eig_update_step(beta, [2.0], W, dt)
        ts.append((step + 1) * dt)
        errs.append(np.max(np.abs(beta - 2.0)))
    assert errs[-1] < 1e-4
    slope = np.polyfit(ts[1000:], np.log(errs[1000:]), 1)[0]
    assert slope < 0


def test_assemble_lambda_examples():
    np.testing.assert_allclose(assemble_lambda(InternalModelEstimate(2, [0], [2])), [2j, -2j])
    np.testing.assert_allclose(assemble_lambda(InternalModelEstimate(3, [1], [1])), [1 + 1j, 1 - 1j, 0])
    est = InternalModelEstimate(3, [1], [1])
    assert est.has_zero_root
    np.testing.assert_allclose(est.c, [-2, 2, 0])
    with pytest.raises(ValueError):
        InternalModelEstimate(4, [0], [1])


def test_leader_imag_parts_descending():
    np.testing.assert_array_equal(leader_imag_parts([1j, -1j, 3j, -3j]), [3, 1])
    np.testing.assert_array_equal(leader_imag_parts([2j, -2j, 0]), [2])


def test_init_beta():
    rng = np.random.default_rng(0)
    b = init_beta([], 0.0, 2, rng)
    assert b.shape == (1,) and -1 <= b[0] <= 1
    rng1, rng2 = np.random.default_rng(5), np.random.default_rng(5)
    assert init_beta([5.0], 1.0, 2, rng1)[0] == rng2.uniform(-1, 1)
    with pytest.raises(InfeasibleInitError):
        init_beta([0.0], 1.0, 2, np.random.default_rng(0), max_tries=50)
    b = init_beta([0.0], 0.5, 4, np.random.default_rng(1))
    assert np.all(np.abs(b) >= 0.5)
