"""Monte-Carlo harnesses: concentration of the uniform measure, recovery sweeps
and the sign (parity) experiment.

Every run of a sweep gets its own seed ``SeedSequence([master, cell, run])``,
so results do not depend on scheduling and any single run can be replayed.
"""

import csv
import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .dynamics import integrate
from .errors import IntegrationError
from .manifold import sample_positive, sample_uniform
from .model import correlations, generate, point_with_correlations
from .population import POPULATION_CONFIG, detect_elimination, integrate_population
from .theory import greedy_selection, init_matrix
from .trajectory import FlowConfig

__all__ = [
    "ConcentrationTable",
    "concentration_experiment",
    "Cell",
    "SweepSpec",
    "RunResult",
    "CellResult",
    "run_seed",
    "run_single",
    "recovery_sweep",
    "write_sweep",
    "ParityRow",
    "parity_experiment",
]

INIT_MODES = ("uniform", "conditioned_positive", "explicit")


# ---------------------------------------------------------------------------
# concentration


@dataclass
class ConcentrationTable:
    """Tail and small-ball statistics of the correlations under ``mu_{N x r}``.

    ``tail_prob[k]`` estimates ``P(|m_ij| > t_grid[k])`` pooling all ``r^2``
    entries; ``(C, c)`` fit ``log P = log C - c N t^2`` on the grid points
    with at least 10 exceedances. ``small_ball_prob[k]`` estimates
    ``P(|m_11| < small_t[k] / sqrt(N))`` and ``small_ball_gauss`` is its
    Gaussian value ``2 Phi(t) - 1``. ``ks`` is the Kolmogorov-Smirnov
    distance between ``sqrt(N) m_11`` and N(0, 1).
    """

    N: int
    r: int
    n_samples: int
    t_grid: np.ndarray
    tail_prob: np.ndarray
    C: float
    c: float
    small_t: np.ndarray
    small_ball_prob: np.ndarray
    small_ball_gauss: np.ndarray
    ks: float
    scaled_m11: np.ndarray = field(repr=False)


def concentration_experiment(N, r, n_samples, rng, t_grid=None, small_t=(0.05, 0.1, 0.2)):
    """Sample correlations between a fixed spike matrix and ``X ~ mu_{N x r}``.

    Parameters
    ----------
    N, r : int
    n_samples : int
        At least 1000.
    rng : numpy.random.Generator
    t_grid : array, optional
        Tail thresholds on the ``m`` scale; default ``linspace(0, 5, 26) / sqrt(N)``.
    small_t : sequence of float
        Small-ball radii in units of ``1/sqrt(N)``.
    """
    if n_samples < 1000:
        raise ValueError(f"n_samples must be >= 1000, got {n_samples}")
    V = sample_uniform(N, r, rng)
    m = np.empty((n_samples, r, r))
    for k in range(n_samples):
        m[k] = V.T @ sample_uniform(N, r, rng) / N
    if t_grid is None:
        t_grid = np.linspace(0.0, 5.0, 26) / math.sqrt(N)
    t_grid = np.asarray(t_grid, dtype=float)
    a = np.abs(m).ravel()
    counts = np.array([(a > t).sum() for t in t_grid])
    tail = counts / a.size
    use = (counts >= 10) & (t_grid > 0)
    if use.sum() >= 2:
        slope, icpt = np.polyfit(N * t_grid[use] ** 2, np.log(tail[use]), 1)
        C, c = float(np.exp(icpt)), float(-slope)
    else:
        C = c = math.nan
    z = math.sqrt(N) * m[:, 0, 0]
    small_t = np.asarray(small_t, dtype=float)
    ball = np.array([(np.abs(z) < t).mean() for t in small_t])
    gauss = 2.0 * stats.norm.cdf(small_t) - 1.0
    ks = float(stats.kstest(z, "norm").statistic)
    return ConcentrationTable(N=N, r=r, n_samples=n_samples, t_grid=t_grid, tail_prob=tail, C=C, c=c,
                              small_t=small_t, small_ball_prob=ball, small_ball_gauss=gauss,
                              ks=ks, scaled_m11=z)


# ---------------------------------------------------------------------------
# recovery sweeps


@dataclass(frozen=True)
class Cell:
    p: int
    r: int
    N: int
    lambdas: tuple
    sqrt_m: float

    @property
    def M(self):
        return self.sqrt_m**2

    def key(self):
        """Short stable hash naming the per-run detail directory."""
        blob = json.dumps([self.p, self.r, self.N, [float(x) for x in self.lambdas], float(self.sqrt_m)])
        return hashlib.sha1(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class SweepSpec:
    """Cells, seeds per cell, initialization and flow settings.

    ``init_mode`` is ``uniform``, ``conditioned_positive`` (all initial
    correlations positive) or ``explicit`` (every run starts at correlations
    ``m0``, the rest of ``X0`` drawn at random).
    """

    cells: tuple
    seeds_per_cell: int
    init_mode: str = "conditioned_positive"
    flow: FlowConfig = FlowConfig()
    eps: float = 0.1
    master_seed: int = 0
    m0: tuple | None = None

    def __post_init__(self):
        if not self.cells:
            raise ValueError("sweep grid is empty")
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.init_mode == "explicit" and self.m0 is None:
            raise ValueError("explicit init needs m0")

    @classmethod
    def grid(cls, N, p, r, lambdas, sqrt_m=None, alpha=None, **kwargs):
        """Cartesian product of the parameter lists; give ``sqrt_m`` or ``alpha`` (``M = N^alpha``)."""
        if (sqrt_m is None) == (alpha is None):
            raise ValueError("give exactly one of sqrt_m and alpha")
        cells = []
        for n, pp, rr, lam in itertools.product(N, p, r, lambdas):
            if len(lam) != rr:
                continue
            for s in (sqrt_m if sqrt_m is not None else [n ** (a / 2.0) for a in alpha]):
                cells.append(Cell(pp, rr, n, tuple(float(x) for x in lam), float(s)))
        return cls(cells=tuple(cells), **kwargs)


@dataclass
class RunResult:
    cell: int
    run: int
    seed: tuple
    termination: str
    recovered: bool
    matched: bool
    spike_recovered: list
    spike_T: list
    error: str | None = None


@dataclass
class CellResult:
    """Aggregates over the runs of one cell. Rates lie in ``[0, 1]``;
    ``prediction_match_rate`` is NaN when no run recovered."""

    cell: Cell
    seeds: list
    recovery_rate: float
    prediction_match_rate: float
    spike_rates: list
    mean_T: list
    failures: int
    runs: list


def run_seed(master, cell_idx, run_idx):
    return (int(master), int(cell_idx), int(run_idx))


def _initial_point(spec, V, rng):
    if spec.init_mode == "uniform":
        return sample_uniform(V.shape[0], V.shape[1], rng)
    if spec.init_mode == "conditioned_positive":
        return sample_positive(V, rng)
    return point_with_correlations(V, np.asarray(spec.m0, dtype=float), rng)


def run_single(spec, cell_idx, run_idx, keep_trajectory=False):
    """One ``(model, X0, integrate, detect)`` pipeline; never raises on integration failure."""
    cell = spec.cells[cell_idx]
    seed = run_seed(spec.master_seed, cell_idx, run_idx)
    model_ss, init_ss = np.random.SeedSequence(list(seed)).spawn(2)
    model = generate(cell.p, cell.r, cell.N, cell.lambdas, cell.sqrt_m,
                     seed=int(model_ss.generate_state(1, np.uint64)[0] >> np.uint64(1)))
    X0 = _initial_point(spec, model.spikes, np.random.default_rng(init_ss))
    sel = greedy_selection(init_matrix(correlations(model, X0), model.lambdas, model.p))
    r = cell.r
    try:
        traj = integrate(model, X0, spec.flow)
    except IntegrationError as exc:
        res = RunResult(cell_idx, run_idx, seed, "failed", False, False, [False] * r, [math.nan] * r, str(exc))
        return (res, exc.trajectory) if keep_trajectory else res
    rep = detect_elimination(traj, eps=spec.eps, prediction=sel)
    spike_ok, spike_T = [False] * r, [math.nan] * r
    for i, _, T in rep.ordering:
        spike_ok[i], spike_T[i] = True, T
    recovered = len(rep.ordering) == r
    res = RunResult(cell_idx, run_idx, seed, traj.termination, recovered,
                    bool(recovered and rep.matched_prediction), spike_ok, spike_T)
    return (res, traj) if keep_trajectory else res


def _run_task(args):
    spec, c, k, out_dir = args
    res, traj = run_single(spec, c, k, keep_trajectory=True)
    if out_dir is not None and traj is not None:
        d = os.path.join(out_dir, spec.cells[c].key())
        os.makedirs(d, exist_ok=True)
        traj.to_csv(os.path.join(d, f"run_{k:04d}.csv"))
    return res


def _aggregate(cell, runs):
    n = len(runs)
    rec = [x for x in runs if x.recovered]
    r = cell.r
    spike_rates = [sum(x.spike_recovered[i] for x in runs) / n for i in range(r)]
    mean_T = []
    for i in range(r):
        ts = [x.spike_T[i] for x in runs if x.spike_recovered[i]]
        mean_T.append(float(np.mean(ts)) if ts else math.nan)
    return CellResult(cell=cell, seeds=[x.seed for x in runs], recovery_rate=len(rec) / n,
                      prediction_match_rate=(sum(x.matched for x in rec) / len(rec)) if rec else math.nan,
                      spike_rates=spike_rates, mean_T=mean_T,
                      failures=sum(x.termination == "failed" for x in runs), runs=runs)


def recovery_sweep(spec, threads=1, out_dir=None):
    """Run every cell of ``spec`` and aggregate per cell.

    With ``threads > 1`` runs are spread over worker processes; results are
    collected by ``(cell, run)`` index, so the aggregates do not depend on
    completion order. When ``out_dir`` is given each run's trajectory CSV is
    written to ``out_dir/<cell hash>/run_<k>.csv``.
    """
    tasks = [(spec, c, k, out_dir) for c in range(len(spec.cells)) for k in range(spec.seeds_per_cell)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    by_cell = {}
    for res in results:
        by_cell.setdefault(res.cell, {})[res.run] = res
    return [_aggregate(spec.cells[c], [by_cell[c][k] for k in sorted(by_cell[c])])
            for c in range(len(spec.cells))]


def _fmt(x):
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def write_sweep(results, out_dir):
    """Write ``sweep.csv`` (one row per cell) and ``<cell hash>/runs.csv`` details."""
    os.makedirs(out_dir, exist_ok=True)
    r_max = max(cr.cell.r for cr in results)
    header = (["p", "r", "N", "M"] + [f"lambda_{i + 1}" for i in range(r_max)]
              + ["seeds", "recovery_rate", "prediction_match_rate"]
              + [f"spike_rate_{i + 1}" for i in range(r_max)] + [f"mean_T_{i + 1}" for i in range(r_max)])
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for cr in results:
            c = cr.cell
            pad = [""] * (r_max - c.r)
            w.writerow([c.p, c.r, c.N, _fmt(float(c.M))] + [_fmt(float(x)) for x in c.lambdas] + pad
                       + [len(cr.runs), _fmt(float(cr.recovery_rate)), _fmt(float(cr.prediction_match_rate))]
                       + [_fmt(float(x)) for x in cr.spike_rates] + pad
                       + [_fmt(float(x)) for x in cr.mean_T] + pad)
            d = os.path.join(out_dir, c.key())
            os.makedirs(d, exist_ok=True)
            with open(os.path.join(d, "runs.csv"), "w", newline="") as fr:
                wr = csv.writer(fr, lineterminator="\n")
                wr.writerow(["run", "seed", "termination", "recovered", "matched"]
                            + [f"T_{i + 1}" for i in range(c.r)] + ["error"])
                for x in cr.runs:
                    wr.writerow([x.run, "-".join(map(str, x.seed)), x.termination, int(x.recovered),
                                 int(x.matched)] + [_fmt(float(t)) for t in x.spike_T] + [x.error or ""])
            with open(os.path.join(d, "cell.json"), "w") as fj:
                json.dump(asdict(c), fj, indent=2)
    return path


# ---------------------------------------------------------------------------
# parity


@dataclass
class ParityRow:
    """Outcome counts for one ``(p, initial sign)`` cell of noiseless ``r = 1`` runs."""

    p: int
    init_sign: int
    runs: int
    recovered_positive: int
    recovered_negative: int
    crossed_plus_eps: int
    sign_matches: int
    max_m: float
    min_m: float


def parity_experiment(p_values=(3, 4), n_runs=20, rng=None, N=1000, eps=0.1, lam=1.0,
                      cfg=POPULATION_CONFIG):
    """Sign outcomes of the noiseless single-spike flow from signed starts.

    Initial correlations are ``sign * U(0.5, 2) / sqrt(N)``. ``crossed_plus_eps``
    counts runs whose ``m`` ever exceeds ``+eps``; ``sign_matches`` counts
    runs ending at ``|m| >= 1 - eps`` with the sign of ``m(0)``.
    """
    rng = np.random.default_rng() if rng is None else rng
    rows = []
    for p in p_values:
        for sign in (+1, -1):
            pos = neg = crossed = match = 0
            hi, lo = -math.inf, math.inf
            for _ in range(n_runs):
                m0 = sign * rng.uniform(0.5, 2.0) / math.sqrt(N)
                traj = integrate_population(np.array([[m0]]), [lam], p, cfg)
                s = traj.snapshots[:, 0, 0]
                hi, lo = max(hi, float(s.max())), min(lo, float(s.min()))
                crossed += bool(np.any(s > eps))
                end = s[-1]
                if end >= 1 - eps:
                    pos += 1
                if end <= -(1 - eps):
                    neg += 1
                match += bool(abs(end) >= 1 - eps and np.sign(end) == sign)
            rows.append(ParityRow(p, sign, n_runs, pos, neg, crossed, match, hi, lo))
    return rows
