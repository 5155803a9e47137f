"""
Correlations under the uniform measure
======================================

For X uniform on the normalized Stiefel manifold, sqrt(N) m_ij is close to
a standard normal. Tail probabilities decay like exp(-c N t^2) and the
small-ball probability near zero follows 2 Phi(t) - 1.
"""

import os

import numpy as np

from spikedgf.experiments import concentration_experiment
from spikedgf.svgplot import line_chart

tab = concentration_experiment(400, 2, 10_000, np.random.default_rng(0))
print(f"KS distance to N(0, 1): {tab.ks:.4f}")
print(f"fit: P(|m| > t) ~ {tab.C:.3g} exp(-{tab.c:.3g} N t^2)")
for t, e, g in zip(tab.small_t, tab.small_ball_prob, tab.small_ball_gauss):
    print(f"P(|m_11| < {t}/sqrt(N)) = {e:.4f}   Gaussian {g:.4f}")

out = os.path.join("out", "notebooks")
os.makedirs(out, exist_ok=True)
s = tab.t_grid * np.sqrt(tab.N)
fit = tab.C * np.exp(-tab.c * s**2)
line_chart(s, {"empirical": np.maximum(tab.tail_prob, 1e-6), "fit": fit}, os.path.join(out, "tails.svg"),
           title="tail of |m_ij|, N=400", xlabel="sqrt(N) t", ylabel="P(|m| > t)")
