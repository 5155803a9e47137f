"""Acceptance criteria, one test each.

Every test records a line ``ACCEPTANCE <n> PASS|FAIL: <measurement>``; pytest
prints them in the terminal summary. The file also runs as a script::

    python tests/test_acceptance.py [n ...]
"""

import itertools
import json
import math
import sys
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from spikedgf import cli
from spikedgf.experiments import Cell, SweepSpec, concentration_experiment, parity_experiment, recovery_sweep
from spikedgf.manifold import orthogonality_error, polar_retract, project_tangent, sample_positive, sample_uniform
from spikedgf.model import (
    correlations,
    euclidean_risk_gradient,
    generate,
    generator_m,
    generator_m_projection,
    hamiltonian,
)
from spikedgf.population import detect_elimination, integrate_population
from spikedgf.theory import (
    EnvelopeParams,
    blowup_time,
    envelope_lower,
    envelope_upper,
    greedy_selection,
    hitting_time_bounds,
    init_matrix,
)
from spikedgf.trajectory import FlowConfig

pytestmark = pytest.mark.acceptance


def _verdict(log, n, ok, detail):
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    log[n] = line
    print(line)
    assert ok, line


# 1 ---------------------------------------------------------------------------

def test_1_manifold(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_sample = worst_retract = worst_idem = 0.0
    for _ in range(1000):
        N = int(rng.integers(1, 400))
        r = int(rng.integers(1, min(N, 5) + 1))
        X = sample_uniform(N, r, rng)
        worst_sample = max(worst_sample, orthogonality_error(X) / N)
        G = rng.standard_normal((N, r)) * rng.uniform(0.01, 100)
        U = project_tangent(X, G)
        worst_idem = max(worst_idem, np.linalg.norm(project_tangent(X, U) - U) / max(1.0, np.linalg.norm(U)))
        worst_retract = max(worst_retract, orthogonality_error(polar_retract(X, U)) / N)
    dt = time.perf_counter() - t0
    ok = worst_sample <= 1e-8 and worst_retract <= 1e-8 and worst_idem <= 1e-12 and dt < 10
    _verdict(acceptance_log, 1, ok,
             f"max |X^TX - N I|_F / N: samples {worst_sample:.2e}, retractions {worst_retract:.2e} (<= 1e-8); "
             f"projection idempotence {worst_idem:.2e} (<= 1e-12); {dt:.1f} s (< 10 s)")


# 2 ---------------------------------------------------------------------------

def _fd_gradient(f, X, h=1e-5):
    G = np.zeros_like(X)
    for idx in itertools.product(*map(range, X.shape)):
        E = np.zeros_like(X)
        E[idx] = h
        G[idx] = (f(X + E) - f(X - E)) / (2 * h)
    return G


def test_2_gradient_oracle(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst_fd = worst_gen = 0.0
    for k in range(20):
        p = 3 + k % 2
        N = int(rng.integers(4, 21))
        r = int(rng.integers(1, 4))
        lam = np.sort(rng.uniform(0.2, 3.0, r))[::-1]
        mod = generate(p, r, N, lam, rng.uniform(0.5, 50), seed=int(rng.integers(2**31)))
        X = sample_uniform(N, r, rng)
        G = euclidean_risk_gradient(mod, X)
        G_fd = _fd_gradient(lambda Y: hamiltonian(mod, Y), X)
        worst_fd = max(worst_fd, np.linalg.norm(G - G_fd) / np.linalg.norm(G))
        a, b = generator_m(mod, X), generator_m_projection(mod, X)
        worst_gen = max(worst_gen, np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))
    dt = time.perf_counter() - t0
    ok = worst_fd <= 1e-6 and worst_gen <= 1e-8 and dt < 30
    _verdict(acceptance_log, 2, ok,
             f"finite differences rel err {worst_fd:.2e} (<= 1e-6); generator routes {worst_gen:.2e} (<= 1e-8); "
             f"20 instances in {dt:.1f} s (< 30 s)")


# 3 ---------------------------------------------------------------------------

def test_3_envelopes(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst_cf, inside = 0.0, 0
    for _ in range(50):
        p = int(rng.integers(3, 7))
        par0 = EnvelopeParams(gamma=rng.uniform(0.5, 3), lam_prod=rng.uniform(0.2, 9), c0=0.0,
                              sqrt_m=rng.uniform(0.5, 30), p=p, N=int(rng.integers(50, 2000)))
        # the noiseless single-pair equation dm/dt = sqrt_m p lam_i lam_j m^{p-1}
        k = par0.sqrt_m * p * par0.lam_prod
        t_end = 0.9 * blowup_time(par0)
        ts = np.linspace(0, t_end, 40)
        sol = solve_ivp(lambda t, y: k * y ** (p - 1), (0, t_end), [par0.initial], t_eval=ts,
                        method="DOP853", rtol=1e-12, atol=1e-300)
        cf = np.array([envelope_lower(t, par0) for t in ts])
        worst_cf = max(worst_cf, float(np.max(np.abs(sol.y[0] / cf - 1))))
        # a drift that wanders inside (1 - c0, 1 + c0) hits the target between T_u and T_l
        par = EnvelopeParams(gamma=par0.gamma, lam_prod=par0.lam_prod, c0=rng.uniform(0.05, 0.9),
                             sqrt_m=par0.sqrt_m, p=p, N=par0.N)
        target = par.initial * rng.uniform(2, 20)
        T = hitting_time_bounds(par, target)
        # between 0.1 and 30 oscillations of the drift before the hit
        w, phi = 2 * np.pi * rng.uniform(0.1, 30) / T.upper_env, rng.uniform(0, 2 * np.pi)

        def hit(t, y):
            return y[0] - target

        hit.terminal = True
        sol = solve_ivp(lambda t, y: [k * (1 + par.c0 * np.sin(w * t + phi)) * y[0] ** (p - 1)],
                        (0, 2 * T.lower_env), [par.initial], events=hit, rtol=1e-11, atol=1e-300)
        th = sol.t_events[0][0]
        inside += T.upper_env * (1 - 1e-7) <= th <= T.lower_env * (1 + 1e-7)
        assert envelope_lower(0.5 * T.upper_env, par) <= envelope_upper(0.5 * T.upper_env, par)
    dt = time.perf_counter() - t0
    ok = worst_cf <= 1e-6 and inside == 50 and dt < 10
    _verdict(acceptance_log, 3, ok,
             f"closed form vs numeric up to 0.9 t*: rel err {worst_cf:.2e} (<= 1e-6); "
             f"hitting times inside [T_u, T_l] {inside}/50; {dt:.1f} s (< 10 s)")


# 4 ---------------------------------------------------------------------------

def _greedy_bruteforce(A):
    rows, cols = list(range(A.shape[0])), list(range(A.shape[1]))
    pairs = []
    while rows and cols:
        best = max(((i, j) for i in rows for j in cols), key=lambda ij: abs(A[ij]))
        if abs(A[best]) == 0:
            break
        pairs.append(best)
        rows.remove(best[0])
        cols.remove(best[1])
    return pairs


def test_4_greedy_oracle(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    agree = 0
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        A = (rng.permutation(n * n) + 1).reshape(n, n) * rng.uniform(0.01, 100)
        A = A * rng.choice([-1, 1], A.shape)
        agree += list(greedy_selection(A).pairs) == _greedy_bruteforce(A)
    dt = time.perf_counter() - t0
    _verdict(acceptance_log, 4, agree == 1000 and dt < 5,
             f"agreement with brute force {agree}/1000; {dt:.1f} s (< 5 s)")


# 5 ---------------------------------------------------------------------------

def _stage_margins(I0, pairs):
    """Relative gap between the chosen entry and the best remaining competitor at each greedy stage."""
    A = np.abs(I0).astype(float)
    rows, cols = list(range(A.shape[0])), list(range(A.shape[1]))
    out = []
    for i, j in pairs:
        competitors = [A[a, b] for a in rows for b in cols if (a, b) != (i, j)]
        best = A[i, j]
        out.append((best - max(competitors, default=0.0)) / best)
        rows.remove(i)
        cols.remove(j)
    return out


def sequential_elimination(n_draws=100, seed=0):
    lam = np.array([3.0, 2.0, 1.0])
    rng = np.random.default_rng(seed)
    exact, prefix, exceptions = 0, 0, []
    for d in range(n_draws):
        m0 = rng.uniform(0, 1 / math.sqrt(1000), (3, 3))
        I0 = init_matrix(m0, lam, 3)
        sel = greedy_selection(I0)
        traj = integrate_population(m0, lam, 3)
        rep = detect_elimination(traj, eps=0.1, prediction=sel)
        exact += rep.matched_prediction
        prefix += rep.consistent_with_prediction
        if not rep.matched_prediction:
            realised = rep.pairs
            k = next((s for s, (a, b) in enumerate(zip(realised, sel.pairs)) if a != b), len(realised))
            gap = _stage_margins(I0, sel.pairs)[k]
            exceptions.append({"draw": d, "stage": k + 1, "gap": gap,
                               "realised": [(i + 1, j + 1) for i, j in realised],
                               "predicted": [(i + 1, j + 1) for i, j in sel.pairs],
                               "final": traj.final.tolist()})
    return exact, prefix, exceptions


def test_5_sequential_elimination(acceptance_log):
    t0 = time.perf_counter()
    exact, prefix, exceptions = sequential_elimination()
    dt = time.perf_counter() - t0
    small_gap = sum(e["gap"] < 1e-3 for e in exceptions)
    ok = exact >= 99 and small_gap == len(exceptions) and dt < 60
    stalls = [e for e in exceptions if e["realised"] == e["predicted"][:len(e["realised"])]]
    stall_vals = [e["final"][i - 1][j - 1] for e in stalls for i, j in e["predicted"][len(e["realised"]):]]
    swaps = [e for e in exceptions if e not in stalls]
    swap_txt = "; ".join(f"draw {e['draw']} differs at stage {e['stage']} with I0 gap {e['gap']:.3f}" for e in swaps)
    _verdict(acceptance_log, 5, ok,
             f"ordering = greedy prediction in {exact}/100 (>= 99); realised ordering a prefix of the "
             f"prediction in {prefix}/100; {len(exceptions)} exceptions, {small_gap} with I0 gap < 1e-3. "
             f"{len(stalls)} stop early with the remaining predicted pair stuck at m in "
             f"[{min(stall_vals, default=0):.2g}, {max(stall_vals, default=0):.2g}]"
             f"{'; ' + swap_txt if swaps else ''}; {dt:.1f} s (< 60 s)")


# 6, 7 ------------------------------------------------------------------------

def _recovery_sweep(lambdas, sqrt_m, eta, master_seed):
    cell = Cell(3, 3, 150, tuple(lambdas), float(sqrt_m))
    spec = SweepSpec(cells=(cell,), seeds_per_cell=20, init_mode="conditioned_positive",
                     flow=FlowConfig(eta=eta, t_max=10.0), eps=0.1, master_seed=master_seed)
    (res,) = recovery_sweep(spec, threads=1)
    return res


def _initial_correlations(cell, seed):
    """Rebuild a sweep run's initial correlations from its recorded seed triple."""
    model_ss, init_ss = np.random.SeedSequence(list(seed)).spawn(2)
    model = generate(cell.p, cell.r, cell.N, cell.lambdas, cell.sqrt_m, noise=False,
                     seed=int(model_ss.generate_state(1, np.uint64)[0] >> np.uint64(1)))
    X0 = sample_positive(model.spikes, np.random.default_rng(init_ss))
    return correlations(model, X0), model.lambdas


def test_6_three_spike_recovery(acceptance_log):
    t0 = time.perf_counter()
    res = _recovery_sweep((3.0, 2.0, 1.0), 2 * 150, 0.01, master_seed=6)
    dt = time.perf_counter() - t0
    ok = res.recovery_rate >= 0.9 and res.prediction_match_rate >= 0.9 and res.failures == 0 and dt <= 15 * 60
    # do the mismatches come from the noise or from the deterministic part of the dynamics?
    misses = [r for r in res.runs if r.recovered and not r.matched]
    noiseless_same = 0
    for run in misses:
        m0, lam = _initial_correlations(res.cell, run.seed)
        sel = greedy_selection(init_matrix(m0, lam, 3))
        rep = detect_elimination(integrate_population(m0, lam, 3), eps=0.1, prediction=sel)
        noiseless_same += not rep.matched_prediction
    _verdict(acceptance_log, 6, ok,
             f"full recovery {res.recovery_rate:.2f} (>= 0.90); greedy match among recovered "
             f"{res.prediction_match_rate:.2f} (>= 0.90); {len(misses)} mismatches, of which the noiseless "
             f"dynamics from the same m0 also departs from the prediction in {noiseless_same}; "
             f"failures {res.failures}; {dt / 60:.1f} min (<= ~15 min)")


def test_7_weak_spike_loss(acceptance_log):
    t0 = time.perf_counter()
    res = _recovery_sweep((2.0, 1.0, 0.1), math.sqrt(150), 0.04, master_seed=7)
    dt = time.perf_counter() - t0
    s1, s2, s3 = res.spike_rates
    ok = s3 <= 0.5 * s1 and min(s1, s2) > s3 and res.failures == 0
    _verdict(acceptance_log, 7, ok,
             f"per-spike recovery rates {s1:.2f}, {s2:.2f}, {s3:.2f}; spike 3 <= 0.5 x spike 1: {s3 <= 0.5 * s1}; "
             f"failures {res.failures}; {dt / 60:.1f} min")


# 8 ---------------------------------------------------------------------------

def test_8_concentration(acceptance_log):
    t0 = time.perf_counter()
    tab = concentration_experiment(400, 2, 10_000, np.random.default_rng(808))
    dt = time.perf_counter() - t0
    dev = np.abs(tab.small_ball_prob - tab.small_ball_gauss)
    ok = tab.ks <= 0.02 and np.all(dev <= 0.02) and dt < 60
    balls = ", ".join(f"t={t:g}: {e:.4f} vs {g:.4f}" for t, e, g in
                      zip(tab.small_t, tab.small_ball_prob, tab.small_ball_gauss))
    _verdict(acceptance_log, 8, ok,
             f"KS {tab.ks:.4f} (<= 0.02); small ball {balls} (max dev {dev.max():.4f} <= 0.02); {dt:.1f} s (< 60 s)")


# 9 ---------------------------------------------------------------------------

def test_9_parity(acceptance_log):
    rows = {(r.p, r.init_sign): r for r in parity_experiment((3, 4), n_runs=20, rng=np.random.default_rng(909))}
    even_neg, even_pos = rows[(4, -1)], rows[(4, 1)]
    odd_neg = rows[(3, -1)]
    ok = even_neg.sign_matches == 20 and even_pos.sign_matches == 20 and odd_neg.crossed_plus_eps == 0
    _verdict(acceptance_log, 9, ok,
             f"p=4 sign recovered {even_neg.sign_matches}/20 (negative starts), {even_pos.sign_matches}/20 "
             f"(positive starts); p=3 negative starts crossing +0.1: {odd_neg.crossed_plus_eps}/20 "
             f"(max m {odd_neg.max_m:.3g})")


# 10 --------------------------------------------------------------------------

def test_10_determinism(acceptance_log, tmp_path):
    cfg = {"model": {"p": 3, "r": 3, "N": 60, "lambdas": [3, 2, 1], "M": 4 * 60**2, "seed": 10},
           "init": {"mode": "conditioned_positive"},
           "flow": {"eta": 0.01, "t_max": 10}, "output": {"dir": str(tmp_path / "unused")}}
    path = tmp_path / "det.json"
    path.write_text(json.dumps(cfg))
    blobs, codes = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        codes.append(cli.main(["simulate", "--config", str(path), "--out", str(out), "--seed", "12345",
                               "--deterministic"]))
        blobs.append((out / "trajectory.csv").read_bytes())
    same = blobs[0] == blobs[1]
    _verdict(acceptance_log, 10, same and codes == [0, 0],
             f"two deterministic runs: exit codes {codes}, trajectory CSVs byte-identical: {same} "
             f"({len(blobs[0])} bytes)")


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    chosen = {int(a) for a in sys.argv[1:]} or set(range(1, 11))
    log = {}
    tests = {1: test_1_manifold, 2: test_2_gradient_oracle, 3: test_3_envelopes, 4: test_4_greedy_oracle,
             5: test_5_sequential_elimination, 6: test_6_three_spike_recovery, 7: test_7_weak_spike_loss,
             8: test_8_concentration, 9: test_9_parity, 10: test_10_determinism}
    for n in sorted(chosen):
        try:
            if n == 10:
                with tempfile.TemporaryDirectory() as d:
                    tests[n](log, Path(d))
            else:
                tests[n](log)
        except AssertionError:
            pass
    sys.exit(0 if all("PASS" in line for line in log.values()) else 1)
