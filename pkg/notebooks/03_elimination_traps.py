"""
When the greedy ordering is not realised
========================================

In the noiseless correlation dynamics with p = 3, r = 3 and
lambda = (3, 2, 1), the first two eliminations push the last predicted
pair slightly negative in a fraction of draws. With odd p a negative
correlation cannot grow, so the pair stays trapped near zero and the
realised ordering is a strict prefix of the prediction.

The trap rate shrinks as the initial scale shrinks, i.e. it is a finite-N
effect. This script tabulates it (about five minutes).
"""

import math

import numpy as np

from spikedgf.population import detect_elimination, integrate_population
from spikedgf.theory import greedy_selection, init_matrix

lam = np.array([3.0, 2.0, 1.0])
n_draws = 100

print(f"{'scale':>12} {'exact':>6} {'prefix':>7} {'trapped':>8}")
for n in (1e3, 1e4, 1e5):
    rng = np.random.default_rng(0)
    exact = prefix = trapped = 0
    for _ in range(n_draws):
        m0 = rng.uniform(0, 1 / math.sqrt(n), (3, 3))
        sel = greedy_selection(init_matrix(m0, lam, 3))
        traj = integrate_population(m0, lam, 3)
        rep = detect_elimination(traj, prediction=sel)
        exact += rep.matched_prediction
        prefix += rep.consistent_with_prediction
        missing = sel.pairs[len(rep.pairs):]
        trapped += any(traj.final[i, j] < 0 for i, j in missing)
    print(f"{'1/sqrt(%g)' % n:>12} {exact:>6} {prefix:>7} {trapped:>8}")
