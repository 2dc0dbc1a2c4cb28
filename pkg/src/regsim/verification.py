"""Numerical checks behind the regulation result.

Assumption audit, closed-loop assembly, the regulator equations and their
internal-model residual, log-linear decay fits, and a robustness sweep over
perturbed agent data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controllers import CompensatorGains, rk4_step, synthesize_gains
from .graphnet import UndecidableError, check_uniform_reachability
from .internal_model import InternalModelEstimate, assemble_lambda, leader_imag_parts
from .linalg import (
    AgentModel,
    ZeroStructure,
    compute_delta,
    minimal_polynomial,
    pbh_detectable,
    pbh_stabilizable,
    set_distance,
    solve_sylvester,
    spectral_abscissa,
    transmission_zeros,
)

__all__ = [
    "AssumptionReport",
    "RegulatorSolution",
    "RateFit",
    "SweepRow",
    "audit_assumptions",
    "exosystem_lambda",
    "closed_loop_matrix",
    "regulator_solution",
    "exp_rate_fit",
    "lemma2_probe",
    "perturbation_sweep",
    "HURWITZ_MARGIN",
]

HURWITZ_MARGIN = 1e-6
A3_TOL = 1e-9
A5_MARGIN = 1e-6


@dataclass
class AssumptionReport:
    A1: list
    A2: list
    A3: bool
    A3_max_abs_re: float
    A4: bool
    A4_window: float
    A5: list
    A5_separation: list
    delta: list
    zeros: list
    notes: list = field(default_factory=list)

    @property
    def failed(self) -> set:
        out = set()
        if not all(self.A1):
            out.add("A1")
        if not all(self.A2):
            out.add("A2")
        if not self.A3:
            out.add("A3")
        if not self.A4:
            out.add("A4")
        if not all(self.A5):
            out.add("A5")
        return out

    @property
    def passed(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failed": sorted(self.failed),
            "A1": [bool(v) for v in self.A1],
            "A2": [bool(v) for v in self.A2],
            "A3": bool(self.A3),
            "A3_max_abs_re": float(self.A3_max_abs_re),
            "A4": bool(self.A4),
            "A4_window": float(self.A4_window),
            "A5": [bool(v) for v in self.A5],
            "A5_separation": [float(v) if np.isfinite(v) else None for v in self.A5_separation],
            "delta": [float(v) for v in self.delta],
            "zeros": [[[z.real, z.imag] for z in zs.zeros] for zs in self.zeros],
            "notes": list(self.notes),
        }


@dataclass
class RegulatorSolution:
    M: np.ndarray
    X: np.ndarray
    sylvester_residual: float
    output_residual: float
    scale: float


@dataclass
class RateFit:
    slope: float
    r_squared: float
    t_start: float = float("nan")
    t_end: float = float("nan")
    converged: bool = False


def exosystem_lambda(S0):
    """``(k, leader_imags, lambda0)`` for the exosystem matrix, in broadcast order."""
    k, _, roots = minimal_polynomial(S0)
    leader = leader_imag_parts(roots)
    lam0 = assemble_lambda(InternalModelEstimate(k, np.zeros(k // 2), leader))
    return k, leader, lam0


def audit_assumptions(scenario) -> AssumptionReport:
    """Evaluate the five standing assumptions on the scenario's nominal data."""
    S0 = scenario.exosystem.S0
    sigma = np.linalg.eigvals(S0)
    max_re = float(np.max(np.abs(sigma.real)))
    a1, a2, a5, sep, deltas, zeros = [], [], [], [], [], []
    notes = []
    for i, spec in enumerate(scenario.agents):
        m = spec.nominal
        a1.append(pbh_stabilizable(m.A, m.B))
        a2.append(pbh_detectable(m.C, m.A))
        zs = transmission_zeros(m)
        if zs.degenerate:
            a5.append(False)
            sep.append(0.0)
            notes.append(f"agent {i + 1}: degenerate system pencil")
            zeros.append(zs)
            deltas.append(0.0)
            continue
        d = set_distance(sigma, zs.zeros) if zs.zeros.size else float("inf")
        a5.append(d > A5_MARGIN)
        sep.append(d)
        if A5_MARGIN < d < 1e3 * A5_MARGIN:
            notes.append(f"agent {i + 1}: exosystem eigenvalue within {d:.2e} of a transmission zero")
        delta = compute_delta(sigma, zs)
        deltas.append(delta)
        zeros.append(ZeroStructure(zs.zeros, zs.imag_zeros, delta, imag_tol=zs.imag_tol))
    window = scenario.sim.a4_window or scenario.schedule.period
    try:
        a4 = check_uniform_reachability(scenario.schedule, window, horizon=scenario.sim.t_final)
    except UndecidableError as exc:
        a4 = False
        notes.append(str(exc))
    return AssumptionReport(a1, a2, max_re <= A3_TOL, max_re, a4, window, a5, sep, deltas, zeros, notes)


def closed_loop_matrix(data: AgentModel, gains: CompensatorGains) -> np.ndarray:
    """Plant-plus-compensator matrix ``[[A, B K], [F C, E + F D K]]``."""
    K, E, F = gains.K, gains.E, gains.F
    return np.block([
        [data.A, data.B @ K],
        [F @ data.C, E + F @ data.D @ K],
    ])


def regulator_solution(data: AgentModel, gains: CompensatorGains, S0) -> RegulatorSolution:
    """Solve ``X S0 = M X + [P; F Q]`` and report how well ``[C, D K] X + Q = 0`` holds.

    The second identity is not imposed; with an exact internal model it is a
    consequence of the first.
    """
    S0 = np.asarray(S0, dtype=float)
    M = closed_loop_matrix(data, gains)
    if spectral_abscissa(M) >= -HURWITZ_MARGIN:
        raise ValueError("closed-loop matrix is not Hurwitz; regulator equations not uniquely solvable")
    R = np.vstack([data.P, gains.F @ data.Q])
    X = solve_sylvester(M, S0, R)
    syl = float(np.linalg.norm(X @ S0 - M @ X - R))
    out = float(np.linalg.norm(np.hstack([data.C, data.D @ gains.K]) @ X + data.Q))
    scale = (np.linalg.norm(M) + np.linalg.norm(S0) + 1.0) * np.linalg.norm(X) + np.linalg.norm(R)
    return RegulatorSolution(M, X, syl, out, float(scale))


def exp_rate_fit(t, values, tail_fraction=0.5, floor=1e-12, rel_floor=1e-10, envelope=True) -> RateFit:
    """Fit ``log(values) ~ a + slope * t`` over the tail of a decaying trace.

    ``values`` are nonnegative norms.  With ``envelope`` the fit uses the
    running supremum of the future, ``sup_{s >= t} values(s)``, so oscillating
    signals get a monotone majorant.  Samples at or below
    ``max(floor, rel_floor * max(values))`` count as numerically converged,
    since roundoff plateaus scale with the size of the signal: the trace is
    cut where the envelope first reaches that level and the tail window is
    the last ``tail_fraction`` of what remains.  A trace that starts at the
    floor returns ``slope = -inf``.
    """
    t = np.asarray(t, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    if t.shape != v.shape or t.size < 2:
        raise ValueError("t and values must be equal-length 1-d arrays")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must be in (0, 1]")
    if envelope:
        v = np.maximum.accumulate(v[::-1])[::-1]
    above = v > max(floor, rel_floor * float(v.max(initial=0.0)))
    if not above[0]:
        return RateFit(-np.inf, 1.0, t[0], t[-1], converged=True)
    stop = int(np.argmin(above)) if not above.all() else t.size
    t_res, v_res = t[:stop], v[:stop]
    t_cut = t_res[-1] - tail_fraction * (t_res[-1] - t_res[0])
    mask = t_res >= t_cut
    if mask.sum() < 3:
        raise ValueError("tail window holds fewer than three resolvable samples")
    tt, yy = t_res[mask], np.log(v_res[mask])
    slope, intercept = np.polyfit(tt, yy, 1)
    resid = yy - (slope * tt + intercept)
    ss_tot = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), r2, float(tt[0]), float(tt[-1]), converged=stop < t.size)


def lemma2_probe(A1_fn, A2_fn, A3_fn, x0, horizon, dt=1e-2, tail_fraction=0.5) -> RateFit:
    """Integrate ``x' = A1(t) x + A2(t) x + A3(t)`` with RK4 and fit the decay of ``|x|``."""
    x = np.asarray(x0, dtype=float).copy()

    def f(t, x):
        return A1_fn(t) @ x + A2_fn(t) @ x + A3_fn(t)

    steps = int(round(horizon / dt))
    ts = np.arange(steps + 1) * dt
    norms = np.empty(steps + 1)
    norms[0] = np.linalg.norm(x)
    for s in range(steps):
        x = rk4_step(f, x, ts[s], dt)
        norms[s + 1] = np.linalg.norm(x)
    return exp_rate_fit(ts, norms, tail_fraction=tail_fraction)


@dataclass
class SweepRow:
    radius: float
    fraction: float
    samples: int
    agent: int | None = None


def _passes(data, gains, S0, tol):
    M = closed_loop_matrix(data, gains)
    if spectral_abscissa(M) >= -HURWITZ_MARGIN:
        return False
    return regulator_solution(data, gains, S0).output_residual <= tol


def perturbation_sweep(scenario, radius_grid, samples_per_radius, seed, tol=1e-6):
    """Fraction of random data perturbations that keep regulation.

    For each agent the compensator is designed once from the nominal data at
    the exact exosystem eigenvalues.  Perturbations of ``(A, B, C, D, P, Q)``
    are drawn uniformly from the Frobenius ball of each radius; a sample
    passes if the closed loop stays Hurwitz and the output residual of the
    regulator equations is at most ``tol``.

    Returns ``(rows, fixed_probe)`` where ``rows`` has one aggregated
    :class:`SweepRow` per radius and ``fixed_probe`` lists, per agent,
    whether the scenario's own perturbation passes.
    """
    S0 = scenario.exosystem.S0
    _, _, lam0 = exosystem_lambda(S0)
    designs = [synthesize_gains(a.nominal, lam0) for a in scenario.agents]
    fixed = [_passes(a.true_model, g, S0, tol) for a, g in zip(scenario.agents, designs)]
    master = np.random.SeedSequence(seed)
    children = master.spawn(len(radius_grid))
    rows = []
    for radius, child in zip(radius_grid, children):
        rng = np.random.default_rng(child)
        ok = total = 0
        for spec, gains in zip(scenario.agents, designs):
            base = spec.nominal.data_vector()
            d = base.size
            for _ in range(samples_per_radius):
                direction = rng.standard_normal(d)
                direction /= np.linalg.norm(direction)
                rho = radius * rng.uniform() ** (1.0 / d)
                data = spec.nominal.from_data_vector(base + rho * direction)
                ok += bool(_passes(data, gains, S0, tol))
                total += 1
        rows.append(SweepRow(float(radius), ok / total if total else float("nan"), total))
    return rows, fixed
