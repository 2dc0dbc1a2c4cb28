"""
Learning the exosystem frequencies away from plant zeros
========================================================

Each agent builds its internal model from eigenvalue estimates that it
learns from its neighbours.  If an estimate came close to a transmission
zero of the plant, the gain design would break down.  So the estimate is
pushed off the imaginary axis until it keeps a fixed distance from the
zero, and it returns to the axis once it has moved past.

Here agent 1 is a plant with zeros at +-3i, so the projection radius is 1.
Its initial frequency guess is above 3 and has to cross the zero on its
way to the true value 2.
"""

import dataclasses
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from regsim.engine import simulate
from regsim.linalg import AgentModel
from regsim.scenario import AgentSpec, Uniform, section5_scenario
from regsim.verification import audit_assumptions

# Plant (s + 1)^-3 * (s^2 + 9): stable, one input, zeros at +-3i.
A = np.array([[0, 1, 0], [0, 0, 1], [-1, -3, -3]], float)
plant = AgentModel(A, [[0], [0], [1]], [[9, 0, 1]], [[0]], np.zeros((3, 2)), [[-1, 0]])

base = section5_scenario(t_final=60.0, seed=0)
agents = (AgentSpec(plant, {"A": 0.05 * np.eye(3)}, "zeros at +-3i"),) + base.agents[1:]
init = dataclasses.replace(base.init, S="S0", beta=Uniform(-1.0, 5.0))
sc = dataclasses.replace(base, agents=agents, init=init)

delta = audit_assumptions(sc).delta[0]
tr = simulate(sc, record_every=10)
lam = tr.lam[:, 0, 0]
print(f"projection radius {delta:.3f}")
print(f"closest approach to 3i: {np.abs(lam - 3j).min():.6f}")
print(f"final estimate {lam[-1]:.6f}")

# Trajectory of the estimate in the complex plane, with the excluded disc.
fig, (ax_p, ax_t) = plt.subplots(1, 2, figsize=(10, 4))
th = np.linspace(0, 2 * np.pi, 200)
ax_p.fill(delta * np.cos(th), 3 + delta * np.sin(th), color="0.85", label="excluded disc")
ax_p.plot(lam.real, lam.imag, ".-", ms=2, label="agent 1 estimate")
ax_p.plot([0], [2], "k*", label="true eigenvalue 2i")
ax_p.set_aspect("equal")
ax_p.set_xlabel("Re")
ax_p.set_ylabel("Im")
ax_p.legend(loc="lower right", fontsize=8)

for i in range(tr.N):
    ax_t.semilogy(tr.t, np.maximum(tr.lam_err(i), 1e-16), label=f"agent {i + 1}")
ax_t.set_xlabel("t [s]")
ax_t.set_ylabel("eigenvalue error")
ax_t.legend()

out = Path(__file__).with_suffix(".png")
fig.tight_layout()
fig.savefig(out, dpi=120)
print("wrote", out)
