"""Internal-model machinery driven by distributed eigenvalue estimates.

Each agent keeps an estimate of the exosystem's minimal-polynomial roots as
``floor(k/2)`` complex numbers ``alpha + i*beta`` together with their
conjugates (and a root at zero when ``k`` is odd).  The imaginary parts run a
consensus protocol towards the values broadcast by node 0; the real parts are
a projection that keeps the estimate a distance ``delta`` away from any purely
imaginary transmission zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "InternalModelEstimate",
    "InternalModelMatrices",
    "coeffs_from_roots",
    "pair_coeffs",
    "build_one_copy",
    "build_q_copy",
    "internal_model_matrices",
    "leader_imag_parts",
    "project_alpha",
    "project_alphas",
    "eig_update_step",
    "assemble_lambda",
    "init_beta",
    "EulerStabilityError",
    "InfeasibleInitError",
]

IMAG_RESIDUE_TOL = 1e-12


class EulerStabilityError(ValueError):
    pass


class InfeasibleInitError(ValueError):
    pass


@dataclass
class InternalModelEstimate:
    k: int
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        h = self.k // 2
        if self.alpha.size != h or self.beta.size != h:
            raise ValueError(f"alpha and beta must have length {h} for k={self.k}")

    @property
    def has_zero_root(self) -> bool:
        return self.k % 2 == 1

    @property
    def lam(self) -> np.ndarray:
        return assemble_lambda(self)

    @property
    def c(self) -> np.ndarray:
        return pair_coeffs(self.alpha, self.beta, self.has_zero_root)


@dataclass(frozen=True)
class InternalModelMatrices:
    G_prime: np.ndarray
    H_prime: np.ndarray
    G: np.ndarray
    H: np.ndarray


def coeffs_from_roots(lam) -> np.ndarray:
    """Monic coefficients ``[c1, ..., ck]`` of ``prod_l (s - lam_l)``.

    The roots must be closed under conjugation; the imaginary residue of the
    expansion is checked against ``1e-12`` (relative) before it is discarded.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if lam.size == 0:
        return np.empty(0)
    if not _is_conjugate_symmetric(lam):
        raise ValueError("roots are not closed under complex conjugation")
    coeffs = np.array([1.0 + 0j])
    for root in lam:
        coeffs = np.convolve(coeffs, [1.0, -root])
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    if np.max(np.abs(coeffs.imag)) > IMAG_RESIDUE_TOL * scale:
        raise ValueError("polynomial coefficients are not real")
    return coeffs.real[1:].copy()


def _is_conjugate_symmetric(lam, tol=1e-9):
    lam = np.asarray(lam, dtype=complex)
    remaining = list(np.conj(lam))
    for val in lam:
        dists = [abs(val - c) for c in remaining]
        j = int(np.argmin(dists))
        if dists[j] > tol * max(1.0, abs(val)):
            return False
        remaining.pop(j)
    return True


def pair_coeffs(alpha, beta, odd: bool) -> np.ndarray:
    """Coefficients for roots ``alpha_l +/- i beta_l`` (plus ``0`` if ``odd``).

    Works on the trailing axis, so ``alpha`` and ``beta`` may be stacked as
    ``(agents, k // 2)`` to expand every agent in one pass.  Each conjugate
    pair contributes the real quadratic ``s^2 - 2 alpha s + alpha^2 + beta^2``.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    lead = alpha.shape[:-1]
    h = alpha.shape[-1]
    poly = np.ones(lead + (1,))
    for l in range(h):
        a = alpha[..., l:l + 1]
        b = beta[..., l:l + 1]
        lin = -2.0 * a
        const = a * a + b * b
        nxt = np.zeros(lead + (poly.shape[-1] + 2,))
        nxt[..., :-2] += poly
        nxt[..., 1:-1] += poly * lin
        nxt[..., 2:] += poly * const
        poly = nxt
    if odd:
        poly = np.concatenate([poly, np.zeros(lead + (1,))], axis=-1)
    return poly[..., 1:]


def build_one_copy(c):
    """Companion pair ``(G', H')`` with last row ``[-c_k, ..., -c_1]`` and ``H' = e_k``."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    k = c.size
    G = np.zeros((k, k))
    if k > 1:
        G[:-1, 1:] = np.eye(k - 1)
    if k:
        G[-1, :] = -c[::-1]
    H = np.zeros((k, 1))
    if k:
        H[-1, 0] = 1.0
    return G, H


def build_q_copy(c, q: int):
    """Block-diagonal ``q``-copy internal model ``(G, H)``."""
    if q < 1:
        raise ValueError("q must be at least 1")
    Gp, Hp = build_one_copy(c)
    return scipy.linalg.block_diag(*([Gp] * q)), scipy.linalg.block_diag(*([Hp] * q))


def internal_model_matrices(c, q: int) -> InternalModelMatrices:
    Gp, Hp = build_one_copy(c)
    G, H = build_q_copy(c, q)
    return InternalModelMatrices(Gp, Hp, G, H)


def leader_imag_parts(roots) -> np.ndarray:
    """Values node 0 broadcasts: the ``floor(k/2)`` largest imaginary parts, descending."""
    roots = np.atleast_1d(np.asarray(roots, dtype=complex))
    h = roots.size // 2
    return np.sort(roots.imag)[::-1][:h].copy()


def project_alpha(beta_l, imag_zero_imags, delta):
    """Real part for one eigenvalue estimate.

    Returns ``(alpha, gamma)`` where ``gamma`` is the imaginary part of the
    nearest purely imaginary zero (``None`` if there is none).  Ties go to the
    smaller ``gamma``.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    zs = np.sort(np.atleast_1d(np.asarray(imag_zero_imags, dtype=float)))
    if zs.size == 0 or delta == 0:
        return 0.0, None
    gamma = float(zs[np.argmin(np.abs(beta_l - zs))])
    gap = abs(beta_l - gamma)
    if gap >= delta:
        return 0.0, gamma
    return float(np.sqrt(delta * delta - gap * gap)), gamma


def project_alphas(beta, imag_zero_imags, delta) -> np.ndarray:
    """Vectorized :func:`project_alpha` over an array of ``beta`` values."""
    beta = np.asarray(beta, dtype=float)
    zs = np.sort(np.atleast_1d(np.asarray(imag_zero_imags, dtype=float)))
    if zs.size == 0 or delta == 0:
        return np.zeros_like(beta)
    gaps = np.min(np.abs(beta[..., None] - zs), axis=-1)
    return np.where(gaps >= delta, 0.0, np.sqrt(np.clip(delta * delta - gaps * gaps, 0.0, None)))


def eig_update_step(beta, leader_imags, weights, dt, imag_zeros=None, deltas=None):
    """One explicit Euler step of the imaginary-part consensus.

    Parameters
    ----------
    beta : (N, h) array
        Current imaginary parts, agents ``1..N`` (node 0 excluded).
    leader_imags : (h,) array
        Constant values held by node 0.
    weights : (N+1, N+1) array
        Adjacency, ``weights[i, j]`` is the weight on edge ``j -> i``.
    dt : float
    imag_zeros, deltas : per-agent sequences, optional
        Imaginary parts of each agent's purely imaginary zeros and its
        ``delta``; used to recompute the real parts.

    Returns
    -------
    beta_new, alpha_new : (N, h) arrays
    """
    W = np.asarray(weights, dtype=float)
    if dt <= 0:
        raise ValueError("dt must be positive")
    max_deg = float(np.max(W.sum(axis=1))) if W.size else 0.0
    if dt * max_deg > 1.0:
        raise EulerStabilityError(f"dt * max in-degree = {dt * max_deg:.3g} > 1")
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    full = np.vstack([np.asarray(leader_imags, dtype=float)[None, :], beta])
    flow = W @ full - W.sum(axis=1)[:, None] * full
    beta_new = beta + dt * flow[1:]
    N = beta.shape[0]
    if imag_zeros is None:
        imag_zeros = [()] * N
    if deltas is None:
        deltas = [0.0] * N
    alpha_new = np.vstack([project_alphas(beta_new[i], imag_zeros[i], deltas[i]) for i in range(N)])
    return beta_new, alpha_new


def assemble_lambda(est: InternalModelEstimate) -> np.ndarray:
    """``[alpha + i beta, alpha - i beta, (0 if k odd)]``."""
    upper = est.alpha + 1j * est.beta
    parts = [upper, np.conj(upper)]
    if est.k % 2:
        parts.append(np.zeros(1, dtype=complex))
    return np.concatenate(parts)


def init_beta(imag_zero_imags, delta, k, rng, range_=(-1.0, 1.0), max_tries=1000):
    """Sample initial imaginary parts uniformly in ``range_``, rejecting any
    component closer than ``delta`` to a purely imaginary zero."""
    h = k // 2
    zs = np.atleast_1d(np.asarray(imag_zero_imags, dtype=float))
    lo, hi = range_
    out = np.empty(h)
    for l in range(h):
        for _ in range(max_tries):
            b = rng.uniform(lo, hi)
            if zs.size == 0 or delta == 0 or np.min(np.abs(b - zs)) >= delta:
                out[l] = b
                break
        else:
            raise InfeasibleInitError(
                f"no feasible initial beta in [{lo}, {hi}] after {max_tries} draws"
            )
    return out
