"""
Recovery of a permutation of three spikes
=========================================

Full gradient flow for p = 3, r = 3 at N = 150 with M = 4 N^2, started
from a point whose correlations with the spikes are all positive. The
greedy selection on the initialization matrix predicts which column ends
up on which spike and in what order.

Writes ``out/notebooks/recovery.svg`` and the trajectory CSV.
"""

import os

import numpy as np

from spikedgf import FlowConfig, correlations, generate, integrate, sample_positive
from spikedgf.population import detect_elimination
from spikedgf.svgplot import trajectory_svg
from spikedgf.theory import greedy_selection, init_matrix

out = os.path.join("out", "notebooks")
os.makedirs(out, exist_ok=True)

N = 150
model = generate(3, 3, N, [3.0, 2.0, 1.0], sqrt_m=2.0 * N, seed=1)
rng = np.random.default_rng(2)
X0 = sample_positive(model.spikes, rng)

# the prediction only needs the initial correlations
m0 = correlations(model, X0)
I0 = init_matrix(m0, model.lambdas, model.p)
sel = greedy_selection(I0)
print("I0 =\n", np.round(I0, 4))
print("predicted pairs (1-based):", [(i + 1, j + 1) for i, j in sel.pairs])

traj = integrate(model, X0, FlowConfig(eta=0.01, t_max=10.0))
rep = detect_elimination(traj, eps=0.1, prediction=sel)
print(f"{traj.termination} after {traj.info['steps']} steps, t = {traj.times[-1]:.4f}")
for i, j, T in rep.ordering:
    print(f"  m_{i + 1}{j + 1} crossed 0.9 at t = {T:.4f}")
print("matches prediction:", rep.matched_prediction)

# constraint drift stays at roundoff level
print("max |X^T X - N I|_F:", traj.info["max_orthogonality_error"])

traj.to_csv(os.path.join(out, "recovery.csv"))
trajectory_svg(traj, os.path.join(out, "recovery.svg"), selection=sel, title="p=3, r=3, N=150, M=4N^2")
