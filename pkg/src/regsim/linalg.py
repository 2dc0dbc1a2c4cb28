"""Numerical control kernels.

PBH stabilizability/detectability tests, transmission zeros of the Rosenbrock
pencil, minimal polynomials, Riccati-based stabilizing gains, a Sylvester
solver and a handful of small spectral helpers.  Everything here is a pure
function of dense numpy arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "AgentModel",
    "Exosystem",
    "ZeroStructure",
    "LinalgError",
    "DegeneratePencilError",
    "RiccatiError",
    "SpectraOverlapError",
    "MinimalPolynomialError",
    "numerical_rank",
    "pbh_stabilizable",
    "pbh_detectable",
    "transmission_zeros",
    "compute_delta",
    "set_distance",
    "minimal_polynomial",
    "solve_riccati",
    "stabilizing_state_gain",
    "stabilizing_observer_gain",
    "solve_sylvester",
    "spectral_abscissa",
    "is_hurwitz",
]

DEFAULT_TOL = 1e-8


class LinalgError(ValueError):
    """Base class for numerical failures in this module."""


class DegeneratePencilError(LinalgError):
    """The system pencil is rank deficient for every complex ``s``."""


class RiccatiError(LinalgError):
    pass


class SpectraOverlapError(LinalgError):
    pass


class MinimalPolynomialError(LinalgError):
    pass


def _as2d(a, rows=None, cols=None):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if rows is not None and a.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got shape {a.shape}")
    if cols is not None and a.shape[1] != cols:
        raise ValueError(f"expected {cols} columns, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class AgentModel:
    """Agent data point ``(A, B, C, D, P, Q)``.

    ``x' = A x + B u + P w0`` and ``z = C x + D u + Q w0``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        A = _as2d(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        B = _as2d(self.B, rows=n)
        C = _as2d(self.C, cols=n)
        m, q = B.shape[1], C.shape[0]
        D = _as2d(self.D, rows=q, cols=m)
        P = _as2d(self.P, rows=n)
        Q = _as2d(self.Q, rows=q, cols=P.shape[1])
        for name, val in zip("ABCDPQ", (A, B, C, D, P, Q)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @property
    def r(self) -> int:
        return self.P.shape[1]

    def data_vector(self) -> np.ndarray:
        """Flatten the data point into one real vector (order A, B, C, D, P, Q)."""
        return np.concatenate([getattr(self, k).ravel() for k in "ABCDPQ"])

    def from_data_vector(self, vec) -> "AgentModel":
        """Inverse of :meth:`data_vector`, reusing this model's dimensions."""
        vec = np.asarray(vec, dtype=float)
        parts, pos = {}, 0
        for k in "ABCDPQ":
            shape = getattr(self, k).shape
            size = shape[0] * shape[1]
            parts[k] = vec[pos:pos + size].reshape(shape)
            pos += size
        if pos != vec.size:
            raise ValueError("data vector has the wrong length")
        return AgentModel(**parts)

    def __eq__(self, other):
        if not isinstance(other, AgentModel):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "ABCDPQ")

    __hash__ = None


@dataclass(frozen=True)
class Exosystem:
    S0: np.ndarray
    w0_init: np.ndarray | None = None

    def __post_init__(self):
        S0 = _as2d(self.S0)
        if S0.shape[0] != S0.shape[1]:
            raise ValueError(f"S0 must be square, got shape {S0.shape}")
        S0.setflags(write=False)
        object.__setattr__(self, "S0", S0)
        if self.w0_init is not None:
            w0 = np.asarray(self.w0_init, dtype=float).ravel()
            if w0.size != S0.shape[0]:
                raise ValueError("w0_init length does not match S0")
            object.__setattr__(self, "w0_init", w0)

    @property
    def r(self) -> int:
        return self.S0.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Exosystem):
            return NotImplemented
        if not np.array_equal(self.S0, other.S0):
            return False
        if self.w0_init is None or other.w0_init is None:
            return self.w0_init is None and other.w0_init is None
        return np.array_equal(self.w0_init, other.w0_init)

    __hash__ = None


@dataclass(frozen=True)
class ZeroStructure:
    """Transmission zeros, the purely imaginary subset and the margin ``delta``."""

    zeros: np.ndarray
    imag_zeros: np.ndarray
    delta: float = 0.0
    degenerate: bool = False
    imag_tol: float = field(default=1e-9, repr=False)

    @property
    def other_zeros(self) -> np.ndarray:
        """Zeros that are not purely imaginary."""
        mask = np.abs(self.zeros.real) > self.imag_tol
        return self.zeros[mask]


# --------------------------------------------------------------------------
# rank / PBH


def numerical_rank(M, tol=DEFAULT_TOL) -> int:
    """Rank from the SVD with threshold ``tol * max(dim) * sigma_max``."""
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * max(M.shape) * s[0]))


def pbh_stabilizable(A, B, tol=DEFAULT_TOL) -> bool:
    """PBH test: ``rank [A - lam I, B] = n`` at every eigenvalue with ``Re lam >= -tol``."""
    A = _as2d(A)
    B = _as2d(B, rows=A.shape[0])
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            pencil = np.hstack([A - lam * np.eye(n), B])
            if numerical_rank(pencil, tol) < n:
                return False
    return True


def pbh_detectable(C, A, tol=DEFAULT_TOL) -> bool:
    A = _as2d(A)
    C = _as2d(C, cols=A.shape[0])
    return pbh_stabilizable(A.T, C.T, tol)


# --------------------------------------------------------------------------
# transmission zeros


def _rosenbrock(A, B, C, D, s):
    n = A.shape[0]
    return np.block([[A - s * np.eye(n), B], [C, D]])


def _square_pencil_zeros(A, B, C, D, tol):
    """Finite generalized eigenvalues of a square Rosenbrock pencil.

    Returns ``None`` when the pencil is singular (determinant identically 0).
    """
    n = A.shape[0]
    size = n + C.shape[0]
    a = np.block([[A, B], [C, D]])
    b = np.zeros((size, size))
    b[:n, :n] = np.eye(n)
    # a singular pencil has rank deficiency at every s; probe a few points
    rng = np.random.default_rng(0)
    probes = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    if all(numerical_rank(a - s * b, tol) < size for s in probes):
        return None
    if n == 0:
        return np.empty(0, dtype=complex)
    alpha, beta = scipy.linalg.eig(a, b, right=False, homogeneous_eigvals=True)
    scale = max(1.0, np.linalg.norm(a, 2))
    finite = np.abs(beta) > 1e-10 * np.abs(alpha) / scale
    return alpha[finite] / beta[finite]


def _conjugate_close(z, tol):
    """Snap near-real values to the real axis and enforce conjugate pairing."""
    z = np.asarray(z, dtype=complex)
    out = []
    for val in z:
        if abs(val.imag) <= tol * max(1.0, abs(val)):
            val = complex(val.real, 0.0)
        out.append(val)
    out = np.array(out, dtype=complex)
    # average each value with its nearest conjugate partner
    used = np.zeros(len(out), dtype=bool)
    for i, val in enumerate(out):
        if used[i] or val.imag == 0.0:
            continue
        cand = [j for j in range(len(out)) if not used[j] and j != i and out[j].imag != 0.0]
        if not cand:
            continue
        j = min(cand, key=lambda j: abs(out[j] - np.conj(val)))
        avg = 0.5 * (val + np.conj(out[j]))
        out[i], out[j] = avg, np.conj(avg)
        used[i] = used[j] = True
    order = np.lexsort((-out.imag, out.real))
    return out[order]


def transmission_zeros(model: AgentModel, tol=DEFAULT_TOL, imag_tol=1e-9) -> ZeroStructure:
    """Transmission zeros of ``model``: points where the Rosenbrock pencil
    ``[[A - sI, B], [C, D]]`` has rank below ``n + q``.

    Square systems use the generalized eigenvalue problem directly.  Wide
    systems (``m > q``) harvest candidates from a non-singular square
    sub-pencil and keep those where the full pencil loses rank.  Tall systems
    and identically rank deficient pencils are reported as ``degenerate``.

    ``delta`` is left at zero; see :func:`compute_delta`.
    """
    A, B, C, D = model.A, model.B, model.C, model.D
    n, m, q = model.n, model.m, model.q
    empty = np.empty(0, dtype=complex)
    if q > m:
        return ZeroStructure(empty, empty, degenerate=True, imag_tol=imag_tol)
    if m == q:
        zeros = _square_pencil_zeros(A, B, C, D, tol)
        if zeros is None:
            return ZeroStructure(empty, empty, degenerate=True, imag_tol=imag_tol)
    else:
        zeros = None
        for cols in itertools.combinations(range(m), q):
            cols = list(cols)
            cand = _square_pencil_zeros(A, B[:, cols], C, D[:, cols], tol)
            if cand is not None:
                zeros = np.array(
                    [s for s in cand if numerical_rank(_rosenbrock(A, B, C, D, s), tol) < n + q],
                    dtype=complex,
                )
                break
        if zeros is None:
            return ZeroStructure(empty, empty, degenerate=True, imag_tol=imag_tol)
    zeros = _conjugate_close(zeros, tol=1e-10)
    imag = zeros[np.abs(zeros.real) <= imag_tol]
    return ZeroStructure(zeros, imag, imag_tol=imag_tol)


def set_distance(S1, S2) -> float:
    """``min |s1 - s2|`` over all pairs."""
    S1 = np.atleast_1d(np.asarray(S1, dtype=complex)).ravel()
    S2 = np.atleast_1d(np.asarray(S2, dtype=complex)).ravel()
    if S1.size == 0 or S2.size == 0:
        raise ValueError("set_distance requires two nonempty sets")
    return float(np.min(np.abs(S1[:, None] - S2[None, :])))


def compute_delta(sigma_S0, zs: ZeroStructure) -> float:
    """Projection radius used by the eigenvalue-estimate update.

    Zero if there are no purely imaginary zeros; the distance from the
    exosystem spectrum to them if every zero is purely imaginary; otherwise
    the smaller of that and the distance from the imaginary zeros to the rest.
    """
    sigma_S0 = np.atleast_1d(np.asarray(sigma_S0, dtype=complex))
    if sigma_S0.size == 0:
        raise ValueError("sigma_S0 must be nonempty")
    if zs.imag_zeros.size == 0:
        return 0.0
    d_exo = set_distance(sigma_S0, zs.imag_zeros)
    rest = zs.other_zeros
    if rest.size == 0:
        return d_exo
    return min(d_exo, set_distance(zs.imag_zeros, rest))


# --------------------------------------------------------------------------
# minimal polynomial


def minimal_polynomial(S, tol=1e-9):
    """Minimal polynomial of a square matrix.

    Finds the smallest ``k`` for which ``S^k`` lies in the span of
    ``I, S, ..., S^(k-1)`` and returns ``(k, c, roots)`` with the monic
    polynomial ``s^k + c[0] s^(k-1) + ... + c[k-1]``.

    Raises
    ------
    MinimalPolynomialError
        If the relative least-squares residual at some degree falls in the
        grey zone ``(tol, 1e3 * tol)`` where the dependence test cannot decide.
    """
    S = _as2d(S)
    r = S.shape[0]
    if S.shape != (r, r):
        raise ValueError("S must be square")
    powers = [np.eye(r)]
    for k in range(1, r + 1):
        Sk = powers[-1] @ S
        basis = np.column_stack([p.ravel() for p in powers])
        a, *_ = np.linalg.lstsq(basis, Sk.ravel(), rcond=None)
        resid = np.linalg.norm(basis @ a - Sk.ravel())
        rel = resid / max(np.linalg.norm(Sk), 1.0)
        if rel <= tol:
            # S^k = sum_j a_j S^j  ->  s^k - a_{k-1} s^{k-1} - ... - a_0
            c = -a[::-1]
            roots = np.roots(np.concatenate([[1.0], c])) if k > 0 else np.empty(0)
            roots = _conjugate_close(roots.astype(complex), tol=1e-10)
            return k, c, roots
        if rel < 1e3 * tol:
            raise MinimalPolynomialError(
                f"dependence test inconclusive at degree {k}: relative residual "
                f"{rel:.3e}, tol {tol:.1e}, cond(basis) {np.linalg.cond(basis):.3e}"
            )
        powers.append(Sk)
    # Cayley-Hamilton guarantees termination at k <= r
    raise MinimalPolynomialError("no dependence found up to degree r; S is badly scaled")


# --------------------------------------------------------------------------
# Riccati / gains


def _newton_kleinman(A, B, Q, R, K0, iters=50, rtol=1e-13):
    """Refine a stabilizing state feedback ``u = K0 x`` towards the ARE solution."""
    Rinv = np.linalg.inv(R)
    K = K0
    X = None
    for _ in range(iters):
        Ac = A + B @ K
        X_new = scipy.linalg.solve_continuous_lyapunov(Ac.T, -(Q + K.T @ R @ K))
        X_new = 0.5 * (X_new + X_new.T)
        K = -Rinv @ B.T @ X_new
        if X is not None and np.linalg.norm(X_new - X) <= rtol * max(1.0, np.linalg.norm(X_new)):
            return X_new
        X = X_new
    return X


def _quasi_triangular_real_parts(T):
    """Real parts of the eigenvalues of a real Schur form, read off its diagonal blocks."""
    d = np.diag(T).copy()
    sub = np.abs(np.diag(T, -1)) > 0
    # a 2x2 block with complex eigenvalues has real part equal to half its trace
    for j in np.flatnonzero(sub):
        d[j] = d[j + 1] = 0.5 * (T[j, j] + T[j + 1, j + 1])
    return d


def solve_riccati(A, B, Q=None, R=None, tol=DEFAULT_TOL, check=True):
    """Stabilizing solution of ``A'X + XA - X B R^-1 B' X + Q = 0``.

    Uses the ordered real Schur form of the Hamiltonian matrix; when the basis
    of the stable subspace is badly conditioned the result is polished with
    Newton-Kleinman iterations.  ``check=False`` skips the PBH pre-test for
    callers that already know ``(A, B)`` is stabilizable.
    """
    A = _as2d(A)
    n = A.shape[0]
    B = _as2d(B, rows=n)
    Q = np.eye(n) if Q is None else _as2d(Q, rows=n, cols=n)
    R = np.eye(B.shape[1]) if R is None else _as2d(R, rows=B.shape[1], cols=B.shape[1])
    if check and not pbh_stabilizable(A, B, tol):
        raise RiccatiError("(A, B) is not stabilizable")
    Rinv = np.linalg.inv(R)
    H = np.empty((2 * n, 2 * n))
    H[:n, :n] = A
    H[:n, n:] = -B @ Rinv @ B.T
    H[n:, :n] = -Q
    H[n:, n:] = -A.T
    T, Z, sdim = scipy.linalg.schur(H, output="real", sort="lhp")
    scale = max(1.0, np.linalg.norm(H, 1))
    if np.min(np.abs(_quasi_triangular_real_parts(T))) <= tol * scale:
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis")
    if sdim != n:
        raise RiccatiError(f"stable subspace has dimension {sdim}, expected {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    X = np.linalg.solve(U1.T, U2.T).T
    X = 0.5 * (X + X.T)
    resid = A.T @ X + X @ A - X @ B @ Rinv @ B.T @ X + Q
    if np.linalg.cond(U1) > 1e10 or np.linalg.norm(resid) > 1e-8 * max(1.0, np.linalg.norm(X)):
        K0 = -Rinv @ B.T @ X
        if spectral_abscissa(A + B @ K0) < 0:
            X = _newton_kleinman(A, B, Q, R, K0)
    return X


def stabilizing_state_gain(A, B, Q=None, R=None, tol=DEFAULT_TOL, check=True):
    """LQR gain ``K = -R^-1 B' X`` so that ``A + B K`` is Hurwitz.

    ``Q`` and ``R`` default to identities.
    """
    A = _as2d(A)
    B = _as2d(B, rows=A.shape[0])
    R_ = np.eye(B.shape[1]) if R is None else _as2d(R)
    X = solve_riccati(A, B, Q, R_, tol, check)
    K = -np.linalg.solve(R_, B.T @ X)
    if spectral_abscissa(A + B @ K) >= 0:
        raise RiccatiError("Riccati gain failed to stabilize")
    return K


def stabilizing_observer_gain(A, C, Q=None, R=None, tol=DEFAULT_TOL):
    """Observer gain ``L`` with ``A - L C`` Hurwitz (dual LQR)."""
    A = _as2d(A)
    C = _as2d(C, cols=A.shape[0])
    if not pbh_detectable(C, A, tol):
        raise RiccatiError("(C, A) is not detectable")
    Kd = stabilizing_state_gain(A.T, C.T, Q, R, tol)
    return -Kd.T


# --------------------------------------------------------------------------
# Sylvester / spectra


def solve_sylvester(M, S, R, tol=1e-9):
    """Solve ``X S = M X + R`` for ``X``.

    Bartels-Stewart via :func:`scipy.linalg.solve_sylvester`.  Raises
    :class:`SpectraOverlapError` when ``sigma(M)`` and ``sigma(S)`` come
    within ``tol`` (scaled) of each other, since the solution is then not
    unique.
    """
    M = _as2d(M)
    S = _as2d(S)
    R = _as2d(R, rows=M.shape[0], cols=S.shape[0])
    scale = max(1.0, np.linalg.norm(M, 2), np.linalg.norm(S, 2))
    gap = set_distance(np.linalg.eigvals(M), np.linalg.eigvals(S))
    if gap <= tol * scale:
        raise SpectraOverlapError(f"spectra of M and S overlap (gap {gap:.3e})")
    # M X - X S = -R
    return scipy.linalg.solve_sylvester(M, -S, -R)


def spectral_abscissa(M) -> float:
    M = _as2d(M)
    if M.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(M).real))


def is_hurwitz(M, margin=0.0) -> bool:
    """True iff every eigenvalue of ``M`` has real part below ``-margin``."""
    return spectral_abscissa(M) < -margin
