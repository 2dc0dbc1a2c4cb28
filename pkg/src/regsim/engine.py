"""Fixed-step closed-loop simulation of the networked regulation problem.

One step of length ``dt`` is a synchronous round:

1. read the active graph (switching happens on step boundaries only);
2. advance the imaginary parts of every eigenvalue estimate by one Euler
   step of the consensus flow and re-project the real parts;
3. re-synthesize an agent's gains when its estimate has drifted more than
   ``resynth_margin`` from the eigenvalues the gains were built for;
4. integrate generators, compensators and plants together over ``[t, t+dt]``
   with the gains held fixed.

Step 4 integrates the coupled system in one RK4 (or Euler) stage rather than
one subsystem after another, so a frozen-gain run is exactly the same
integrator applied to the assembled linear closed loop.

The internal-model block ``G(lambda_i)`` of each compensator is refreshed
every step from the current estimate (it is an explicit function of the
estimate and costs nothing); only the Riccati gains ``K1, K2`` are held
piecewise constant between re-syntheses.

Random draws all come from ``numpy.random.default_rng(seed)`` in the order
recorded in :data:`DRAW_ORDER`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .controllers import SynthesisError, euler_step, rk4_step, synthesize_gains
from .graphnet import laplacian
from .internal_model import (
    InternalModelEstimate,
    assemble_lambda,
    eig_update_step,
    init_beta,
    pair_coeffs,
    project_alphas,
)
from .linalg import compute_delta, stabilizing_observer_gain, transmission_zeros
from .scenario import Scenario, Uniform
from .verification import audit_assumptions, closed_loop_matrix, exosystem_lambda

__all__ = ["SimulationTrace", "AuditFailure", "SimulationError", "simulate", "DRAW_ORDER", "rk4_step"]

DRAW_ORDER = "w0; then for agent 1..N: x, xi, w, beta"


class AuditFailure(RuntimeError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"standing assumptions failed: {sorted(report.failed)}")


class SimulationError(RuntimeError):
    def __init__(self, t, message):
        self.t = t
        super().__init__(f"t={t:.6g}: {message}")


@dataclass
class SimulationTrace:
    """Recorded closed-loop run.

    Arrays are indexed by sample along axis 0.  ``mu`` stacks every agent's
    ``[x_i, xi_i]``; use the accessor methods to slice one agent.
    """

    t: np.ndarray
    segment: np.ndarray
    w: np.ndarray           # (samples, N+1, r), node 0 first
    S_err: np.ndarray       # (samples, N) Frobenius distance to S0
    mu: np.ndarray          # (samples, D)
    lam: np.ndarray         # (samples, N, k) complex
    z: np.ndarray           # (samples, sum q)
    e: np.ndarray
    u: np.ndarray           # (samples, sum m)
    dims: list              # per agent (n, m, q, xi_dim)
    S0: np.ndarray
    lam0: np.ndarray
    events: list = field(default_factory=list)   # (t, agent) resynthesis log
    final_gains: list = field(default_factory=list)
    header: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.dims)

    def _mu_slices(self, i):
        off = 0
        for j, (n, _, _, nxi) in enumerate(self.dims):
            if j == i:
                return slice(off, off + n), slice(off + n, off + n + nxi)
            off += n + nxi
        raise IndexError(i)

    def _out_slice(self, i, which):
        pos = 1 if which == "m" else 2
        off = sum(d[pos] for d in self.dims[:i])
        return slice(off, off + self.dims[i][pos])

    def x(self, i):
        return self.mu[:, self._mu_slices(i)[0]]

    def xi(self, i):
        return self.mu[:, self._mu_slices(i)[1]]

    def z_i(self, i):
        return self.z[:, self._out_slice(i, "q")]

    def e_i(self, i):
        return self.e[:, self._out_slice(i, "q")]

    def u_i(self, i):
        return self.u[:, self._out_slice(i, "m")]

    def w_i(self, i):
        """Generator state of agent ``i`` (0-based agent index)."""
        return self.w[:, i + 1]

    @property
    def w0(self):
        return self.w[:, 0]

    def w_err(self, i):
        return np.linalg.norm(self.w[:, i + 1] - self.w[:, 0], axis=1)

    def z_norm(self, i):
        return np.linalg.norm(self.z_i(i), axis=1)

    def lam_err(self, i):
        return np.max(np.abs(self.lam[:, i] - self.lam0[None, :]), axis=1)

    def resynth_counts(self):
        counts = [0] * self.N
        for _, i in self.events:
            counts[i] += 1
        return counts


def _draw(spec, size, rng):
    if isinstance(spec, Uniform):
        return rng.uniform(spec.lo, spec.hi, size)
    return None


def _explicit(spec, i, size, name):
    vals = np.asarray(spec[i], dtype=float).ravel()
    if vals.size != size:
        raise ValueError(f"init.{name}[{i}] has length {vals.size}, expected {size}")
    return vals


def _segment_steps(schedule, dt):
    steps = []
    for d, _ in schedule.segments:
        s = d / dt
        if abs(s - round(s)) > 1e-9 * max(1.0, s) or round(s) < 1:
            raise ValueError(f"segment duration {d} is not a whole number of steps of {dt}")
        steps.append(int(round(s)))
    return np.cumsum(steps)


def simulate(scenario: Scenario, force=False, record_every=1, progress=None) -> SimulationTrace:
    """Run the closed loop described by ``scenario``.

    Parameters
    ----------
    scenario : Scenario
    force : bool
        Simulate even if the assumption audit fails.
    record_every : int
        Keep every ``record_every``-th sample (the first sample is ``t = 0``).
    progress : callable, optional
        Called as ``progress(step, total_steps)`` every 10000 steps.
    """
    report = audit_assumptions(scenario)
    if not report.passed and not force:
        raise AuditFailure(report)

    cfg = scenario.sim
    dt = float(cfg.dt)
    n_steps = int(round(cfg.t_final / dt))
    integrate = rk4_step if cfg.integrator == "rk4" else euler_step
    agents = scenario.agents
    N = len(agents)
    S0 = scenario.exosystem.S0
    r = S0.shape[0]
    k, leader, lam0 = exosystem_lambda(S0)
    h = k // 2
    odd = bool(k % 2)
    sigma = np.linalg.eigvals(S0)
    rng = np.random.default_rng(cfg.seed)
    init = scenario.init

    nominal = [a.nominal for a in agents]
    true = [a.true_model for a in agents]

    # per-agent zero data for the projection
    imag_zeros, deltas, zero_data = [], [], []
    for m in nominal:
        zs = transmission_zeros(m)
        zero_data.append(zs)
        imag_zeros.append(zs.imag_zeros.imag.copy())
        deltas.append(compute_delta(sigma, zs) if not zs.degenerate else 0.0)

    # ---- initial conditions (fixed draw order, see DRAW_ORDER)
    if scenario.exosystem.w0_init is not None:
        w0 = scenario.exosystem.w0_init.copy()
    else:
        w0 = _draw(init.w0, r, rng)
    dims = []
    xs, xis, ws, betas = [], [], [], []
    for i, m in enumerate(nominal):
        nxi = m.n + m.q * k
        dims.append((m.n, m.m, m.q, nxi))
        vals = []
        for name, size in (("x", m.n), ("xi", nxi), ("w", r)):
            spec = getattr(init, name)
            v = _draw(spec, size, rng)
            vals.append(v if v is not None else _explicit(spec, i, size, name))
        xs.append(vals[0])
        xis.append(vals[1])
        ws.append(vals[2])
        if isinstance(init.beta, Uniform):
            b = init_beta(imag_zeros[i], deltas[i], k, rng, (init.beta.lo, init.beta.hi))
        else:
            b = _explicit(init.beta, i, h, "beta")
        betas.append(b)

    if init.S == "nominal_A":
        S_init = []
        for i, m in enumerate(nominal):
            if m.A.shape != (r, r):
                raise ValueError(f"init.S = 'nominal_A' needs n = r, agent {i + 1} has n = {m.n}")
            S_init.append(m.A.copy())
    elif init.S == "S0":
        S_init = [S0.copy() for _ in range(N)]
    else:
        S_init = [np.asarray(s, dtype=float) for s in init.S]

    if cfg.learn_eigenvalues:
        beta = np.array(betas).reshape(N, h)
    else:
        beta = np.tile(leader, (N, 1))
    alpha = np.zeros((N, h))
    projected = [i for i in range(N) if deltas[i] > 0 and len(imag_zeros[i])]
    for i in projected:
        alpha[i] = project_alphas(beta[i], imag_zeros[i], deltas[i])

    def lam_of(i):
        return assemble_lambda(InternalModelEstimate(k, alpha[i], beta[i]))

    # ---- gains and global matrices
    observers = [stabilizing_observer_gain(m.A, m.C) for m in nominal]
    gains = []
    for i in range(N):
        try:
            gains.append(synthesize_gains(nominal[i], lam_of(i), observer_gain=observers[i],
                                          zeros=zero_data[i]))
        except SynthesisError as exc:
            raise SimulationError(0.0, f"agent {i + 1}: {exc}") from exc

    mu_off = np.cumsum([0] + [n + nxi for n, _, _, nxi in dims])
    D = int(mu_off[-1])
    q_off = np.cumsum([0] + [d[2] for d in dims])
    m_off = np.cumsum([0] + [d[1] for d in dims])
    Q_tot, M_tot = int(q_off[-1]), int(m_off[-1])
    nW = (N + 1) * r

    # rows/cols of the companion last rows inside the stacked closed loop
    im_rows, im_cols, im_agent = [], [], []
    for i, (n, _, q, _) in enumerate(dims):
        base = mu_off[i] + n + n   # plant x, then observer part of xi
        for j in range(q):
            start = base + j * k
            im_rows.append(np.full(k, start + k - 1))
            im_cols.append(np.arange(start, start + k))
            im_agent.append(i)
    im_rows = np.array(im_rows)
    im_cols = np.array(im_cols)
    im_agent = np.array(im_agent)

    M_base = np.zeros((D, D))
    Win = np.zeros((D, nW))
    Ku = np.zeros((M_tot, D))
    Cmu = np.zeros((Q_tot, D))
    Qz = np.zeros((Q_tot, nW))
    Qe = np.zeros((Q_tot, nW))

    def install(i):
        n, m_, q, nxi = dims[i]
        sl = slice(mu_off[i], mu_off[i + 1])
        g = gains[i]
        M_i = closed_loop_matrix(true[i], g)
        # strip the synthesized companion rows; the live ones are added per step
        for j in range(q):
            start = 2 * n + j * k
            M_i[start + k - 1, start:start + k] -= g.G[j * k + k - 1, j * k:(j + 1) * k]
        M_base[sl, sl] = M_i
        xi_sl = slice(mu_off[i] + n, mu_off[i + 1])
        Ku[m_off[i]:m_off[i + 1], :] = 0.0
        Ku[m_off[i]:m_off[i + 1], xi_sl] = g.K
        qs = slice(q_off[i], q_off[i + 1])
        Cmu[qs, :] = 0.0
        Cmu[qs, mu_off[i]:mu_off[i] + n] = true[i].C
        Cmu[qs, xi_sl] = true[i].D @ g.K

    for i in range(N):
        n, m_, q, nxi = dims[i]
        Win[mu_off[i]:mu_off[i] + n, 0:r] = true[i].P
        Win[mu_off[i] + n:mu_off[i + 1], (i + 1) * r:(i + 2) * r] = gains[i].F @ true[i].Q
        Qz[q_off[i]:q_off[i + 1], 0:r] = true[i].Q
        Qe[q_off[i]:q_off[i + 1], (i + 1) * r:(i + 2) * r] = true[i].Q
        install(i)

    # ---- state vector [w (N+1)r | S (N+1)r^2 | mu D]; everything except the
    # bilinear S_i w_i term is one linear map, rebuilt on topology switches
    nS = (N + 1) * r * r
    ny = nW + nS + D
    big = np.zeros((ny, ny))
    M_live = big[nW + nS:, nW + nS:]
    M_live[:] = M_base
    big[nW + nS:, :nW] = Win
    eye_r, eye_rr = np.eye(r), np.eye(r * r)
    synth_lam = np.array([g.synth_lambda for g in gains])

    def refresh_internal_model():
        c = pair_coeffs(alpha, beta, odd)                  # (N, k)
        M_live[im_rows, im_cols] = M_base[im_rows, im_cols] - c[im_agent][:, ::-1]

    refresh_internal_model()

    # ---- topology per segment
    seg_end = _segment_steps(scenario.schedule, dt)
    period_steps = int(seg_end[-1])
    seg_W = [g.weights for _, g in scenario.schedule.segments]
    seg_L = [laplacian(g).L for _, g in scenario.schedule.segments]

    seg_deg = [W.sum(axis=1) for W in seg_W]
    if cfg.learn_eigenvalues:
        for W in seg_W:
            # validates the Euler step bound once per segment
            eig_update_step(np.zeros((N, h)), leader, W, dt)
    full = np.empty((N + 1, h))
    full[0] = leader

    def seg_at(step):
        s = step % period_steps if scenario.schedule.repeat else min(step, period_steps - 1)
        return int(np.searchsorted(seg_end, s, side="right"))

    y = np.empty(ny)
    y[:nW] = np.concatenate([w0] + ws)
    y[nW:nW + nS] = np.concatenate([S0.ravel()] + [s.ravel() for s in S_init])
    y[nW + nS:] = np.concatenate([np.concatenate([xs[i], xis[i]]) for i in range(N)])

    def set_topology(si):
        big[:nW, :nW] = -np.kron(seg_L[si], eye_r)
        big[nW:nW + nS, nW:nW + nS] = -np.kron(seg_L[si], eye_rr)

    def field(t, y):
        out = big @ y
        S = y[nW:nW + nS].reshape(N + 1, r, r)
        out[:nW] += np.matmul(S, y[:nW].reshape(N + 1, r, 1)).ravel()
        return out

    # ---- recording
    rec_steps = np.arange(0, n_steps + 1, record_every)
    n_rec = rec_steps.size
    T_rec = rec_steps * dt
    seg_rec = np.empty(n_rec, dtype=int)
    w_rec = np.empty((n_rec, N + 1, r))
    Serr_rec = np.empty((n_rec, N))
    mu_rec = np.empty((n_rec, D))
    lam_rec = np.empty((n_rec, N, k), dtype=complex)
    z_rec = np.empty((n_rec, Q_tot))
    e_rec = np.empty((n_rec, Q_tot))
    u_rec = np.empty((n_rec, M_tot))

    def lam_all():
        out = np.zeros((N, k), dtype=complex)
        upper = alpha + 1j * beta
        out[:, :h] = upper
        out[:, h:2 * h] = np.conj(upper)
        return out

    def record(slot, step):
        wv = y[:nW]
        mu = y[nW + nS:]
        S = y[nW:nW + nS].reshape(N + 1, r, r)
        seg_rec[slot] = seg_at(step)
        w_rec[slot] = wv.reshape(N + 1, r)
        Serr_rec[slot] = np.sqrt(np.sum((S[1:] - S0) ** 2, axis=(1, 2)))
        mu_rec[slot] = mu
        lam_rec[slot] = lam_all()
        z_rec[slot] = Cmu @ mu + Qz @ wv
        e_rec[slot] = Cmu @ mu + Qe @ wv
        u_rec[slot] = Ku @ mu

    events = []
    slot = 0
    record(slot, 0)
    slot += 1
    margin = cfg.resynth_margin
    learn = cfg.learn_eigenvalues
    started = time.perf_counter()
    cur_seg = -1

    for step in range(n_steps):
        t = step * dt
        si = seg_at(step)
        if si != cur_seg:
            set_topology(si)
            cur_seg = si
        moved = False
        if learn:
            # same arithmetic as eig_update_step, without per-call validation
            full[1:] = beta
            Wseg = seg_W[si]
            beta_new = beta + dt * (Wseg[1:] @ full - seg_deg[si][1:, None] * beta)
            for i in projected:
                alpha[i] = project_alphas(beta_new[i], imag_zeros[i], deltas[i])
            # once consensus settles to the last bit the estimate stops moving
            moved = not np.array_equal(beta_new, beta)
            beta = beta_new
        if moved:
            refresh_internal_model()
            cur = lam_all()
            drift = np.max(np.abs(cur - synth_lam), axis=1)
            for i in np.flatnonzero(drift > margin):
                try:
                    gains[i] = synthesize_gains(nominal[i], cur[i], observer_gain=observers[i],
                                                zeros=zero_data[i])
                except SynthesisError as exc:
                    raise SimulationError(t, f"agent {i + 1}: {exc}") from exc
                synth_lam[i] = gains[i].synth_lambda
                install(i)
                sl = slice(mu_off[i], mu_off[i + 1])
                M_live[sl, sl] = M_base[sl, sl]
                events.append((t, int(i)))
            if events and events[-1][0] == t:
                refresh_internal_model()
        y = integrate(field, y, t, dt)
        if not np.all(np.isfinite(y[-D:])):
            raise SimulationError(t + dt, "state diverged to non-finite values")
        if slot < n_rec and rec_steps[slot] == step + 1:
            record(slot, step + 1)
            slot += 1
        if progress is not None and (step + 1) % 10000 == 0:
            progress(step + 1, n_steps)

    header = {
        "seed": cfg.seed,
        "dt": dt,
        "t_final": cfg.t_final,
        "integrator": cfg.integrator,
        "resynth_margin": margin,
        "draw_order": DRAW_ORDER,
        "k": k,
        "wall_time_s": time.perf_counter() - started,
    }
    return SimulationTrace(
        t=T_rec, segment=seg_rec, w=w_rec, S_err=Serr_rec, mu=mu_rec, lam=lam_rec,
        z=z_rec, e=e_rec, u=u_rec, dims=dims, S0=S0.copy(), lam0=lam0, events=events,
        final_gains=list(gains), header=header,
    )
