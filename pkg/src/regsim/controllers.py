"""Distributed controller: exosystem generator and internal-model compensator."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .internal_model import InternalModelEstimate, assemble_lambda, build_q_copy, coeffs_from_roots
from .linalg import (
    AgentModel,
    LinalgError,
    set_distance,
    spectral_abscissa,
    stabilizing_observer_gain,
    stabilizing_state_gain,
    transmission_zeros,
)

__all__ = [
    "GeneratorState",
    "CompensatorGains",
    "CompensatorState",
    "SynthesisError",
    "generator_step",
    "augmented_pair",
    "synthesize_gains",
    "error_output",
    "regulated_output",
    "compensator_step",
    "control",
    "maybe_resynthesize",
    "euler_step",
    "rk4_step",
]

ZERO_MARGIN = 1e-6


class SynthesisError(LinalgError):
    pass


def euler_step(f, x, t, dt):
    return x + dt * f(t, x)


def rk4_step(f, x, t, dt):
    """Classical fourth-order Runge-Kutta step for ``x' = f(t, x)``."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_INTEGRATORS = {"euler": euler_step, "rk4": rk4_step}


@dataclass(frozen=True)
class GeneratorState:
    w: np.ndarray
    S: np.ndarray


@dataclass(frozen=True)
class CompensatorGains:
    K1: np.ndarray
    K2: np.ndarray
    L_obs: np.ndarray
    E: np.ndarray
    F: np.ndarray
    K: np.ndarray
    G: np.ndarray
    H: np.ndarray
    synth_lambda: np.ndarray


@dataclass(frozen=True)
class CompensatorState:
    xi: np.ndarray
    estimate: InternalModelEstimate
    gains: CompensatorGains


def generator_step(state: GeneratorState, neighbors, weights, dt, integrator="rk4") -> GeneratorState:
    """Advance one agent's exosystem generator by ``dt``.

    ``neighbors`` and ``weights`` are parallel sequences; neighbor states are
    frozen over the step (one synchronous round).  With no neighbors this is
    the free local dynamics ``w' = S w``.
    """
    step = _INTEGRATORS[integrator]
    r = state.w.size
    nb_w = [np.asarray(n.w, dtype=float) for n in neighbors]
    nb_S = [np.asarray(n.S, dtype=float) for n in neighbors]
    a = np.asarray(weights, dtype=float)

    def f(t, y):
        w, S = y[:r], y[r:].reshape(r, r)
        dw = S @ w + sum((ai * (wj - w) for ai, wj in zip(a, nb_w)), np.zeros(r))
        dS = sum((ai * (Sj - S) for ai, Sj in zip(a, nb_S)), np.zeros((r, r)))
        return np.concatenate([dw, dS.ravel()])

    y = step(f, np.concatenate([state.w, state.S.ravel()]), 0.0, dt)
    return GeneratorState(y[:r], y[r:].reshape(r, r))


def augmented_pair(model: AgentModel, G, H):
    """Design pair ``([[A, 0], [H C, G]], [[B], [H D]])``."""
    n, qk = model.n, G.shape[0]
    Aa = np.block([[model.A, np.zeros((n, qk))], [H @ model.C, G]])
    Ba = np.vstack([model.B, H @ model.D])
    return Aa, Ba


def synthesize_gains(nominal: AgentModel, lam, observer_gain=None, zeros=None,
                     zero_margin=ZERO_MARGIN) -> CompensatorGains:
    """Compensator matrices ``E, F, K`` for the eigenvalue estimate ``lam``.

    The state gain ``[K1 K2]`` is an LQR gain for the augmented pair, the
    observer gain ``L`` an LQR gain for the dual of ``(A, C)``.
    ``observer_gain`` and ``zeros`` (a :class:`ZeroStructure`) let a caller
    that re-synthesizes often reuse the parts that do not depend on ``lam``.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if np.any(lam.real < -1e-12):
        raise SynthesisError("eigenvalue estimates must lie in the closed right half plane")
    zs = transmission_zeros(nominal) if zeros is None else zeros
    if zs.degenerate:
        raise SynthesisError("system pencil is degenerate; every s is a transmission zero")
    if zs.zeros.size and set_distance(lam, zs.zeros) <= zero_margin:
        raise SynthesisError(
            f"eigenvalue estimate within {zero_margin:g} of a transmission zero"
        )
    c = coeffs_from_roots(lam)
    G, H = build_q_copy(c, nominal.q)
    Aa, Ba = augmented_pair(nominal, G, H)
    try:
        # stabilizable for lam off the zeros; A1 is checked by the audit
        Ka = stabilizing_state_gain(Aa, Ba, check=zeros is None)
        L = stabilizing_observer_gain(nominal.A, nominal.C) if observer_gain is None else observer_gain
    except LinalgError as exc:
        raise SynthesisError(str(exc)) from exc
    n = nominal.n
    K1, K2 = Ka[:, :n], Ka[:, n:]
    BLD = nominal.B - L @ nominal.D
    E = np.block([
        [nominal.A + BLD @ K1 - L @ nominal.C, BLD @ K2],
        [np.zeros((G.shape[0], n)), G],
    ])
    F = np.vstack([L, H])
    if observer_gain is None and spectral_abscissa(nominal.A - L @ nominal.C) >= 0:
        raise SynthesisError("observer error dynamics are not Hurwitz")
    return CompensatorGains(K1, K2, L, E, F, Ka, G, H, lam.copy())


def error_output(true_model: AgentModel, x, u, w_local):
    """Measured error ``C x + D u + Q w_i`` using the agent's local generator state."""
    return true_model.C @ x + true_model.D @ u + true_model.Q @ w_local


def regulated_output(true_model: AgentModel, x, u, w0):
    """Regulated output ``C x + D u + Q w0``; reporting only, never fed back."""
    return true_model.C @ x + true_model.D @ u + true_model.Q @ w0


def control(state: CompensatorState):
    return state.gains.K @ state.xi


def compensator_step(state: CompensatorState, e, dt, integrator="rk4") -> CompensatorState:
    """Advance ``xi' = E xi + F e`` by ``dt`` with ``e`` held over the step."""
    E, F = state.gains.E, state.gains.F
    drive = F @ np.asarray(e, dtype=float)
    xi = _INTEGRATORS[integrator](lambda t, z: E @ z + drive, state.xi, 0.0, dt)
    return replace(state, xi=xi)


def maybe_resynthesize(state: CompensatorState, nominal: AgentModel, margin=1e-3, zeros=None) -> CompensatorState:
    """Re-run :func:`synthesize_gains` once the estimate drifts more than
    ``margin`` (max-norm) from the eigenvalues the gains were built for."""
    lam = assemble_lambda(state.estimate)
    if np.max(np.abs(lam - state.gains.synth_lambda), initial=0.0) <= margin:
        return state
    gains = synthesize_gains(nominal, lam, observer_gain=state.gains.L_obs, zeros=zeros)
    return replace(state, gains=gains)
