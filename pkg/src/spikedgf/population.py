"""Noiseless correlation dynamics and sequential-elimination analysis.

With the noise switched off and the signal strength absorbed into the clock,
the correlation matrix ``m`` obeys a closed ``r x r`` system

    dm_ij/dt = p lam_i lam_j m_ij^{p-1}
               - (p/2) sum_{k,l} lam_k m_kj m_kl m_il (lam_j m_kj^{p-2} + lam_l m_kl^{p-2}).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, LSODA
from scipy.optimize import brentq

from .errors import IntegrationError, ReductionBreakdownError
from .trajectory import FlowConfig, Trajectory, is_recovered

__all__ = [
    "TOL_CORR",
    "POPULATION_CONFIG",
    "population_rhs",
    "integrate_population",
    "EliminationReport",
    "default_eps_prime",
    "detect_elimination",
]

TOL_CORR = 1e-6

#: horizon long enough for tiny initial correlations; runs stop at recovery
POPULATION_CONFIG = FlowConfig(t_max=1e7)


def population_rhs(m, lambdas, p):
    """Right-hand side of the noiseless correlation system (unit signal strength)."""
    m = np.asarray(m, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    mp1 = m ** (p - 1)
    G = m @ m.T                                 # G[k, i] = sum_l m_kl m_il
    first = lam[None, :] * (G.T @ (lam[:, None] * mp1))
    B = (mp1 * lam[None, :]) @ m.T              # B[k, i] = sum_l lam_l m_kl^{p-1} m_il
    second = B.T @ (lam[:, None] * m)
    return p * np.outer(lam, lam) * mp1 - 0.5 * p * (first + second)


def _check_m0(m0, tol_corr):
    m0 = np.asarray(m0, dtype=float)
    if m0.ndim != 2 or m0.shape[0] != m0.shape[1]:
        raise ValueError(f"m0 must be square, got shape {m0.shape}")
    if np.linalg.norm(m0, 2) > 1 + tol_corr:
        raise ValueError("singular values of m0 exceed 1")
    return m0


class _Recorder:
    def __init__(self, cfg, tol_corr):
        self.cfg = cfg
        self.tol_corr = tol_corr
        self.times, self.snaps = [], []
        self.max_sv = 0.0

    def add(self, t, m):
        if self.times and t <= self.times[-1]:
            return
        sv = float(np.linalg.norm(m, 2))
        self.max_sv = max(self.max_sv, sv)
        self.times.append(float(t))
        self.snaps.append(np.array(m, dtype=float))
        if sv > 1 + 10 * self.tol_corr:
            raise ReductionBreakdownError(
                f"singular value {sv:.9f} of m exceeds 1 at t={t:.6g}",
                last_state=m, trajectory=self.build("failed", {}),
            )

    def build(self, termination, info):
        r = self.snaps[0].shape[0] if self.snaps else 0
        snaps = np.array(self.snaps).reshape(len(self.snaps), r, r)
        info = dict(info, max_singular_value=self.max_sv)
        return Trajectory(times=np.array(self.times), snapshots=snaps,
                          termination=termination, info=info)


_ADAPTIVE = {"LSODA": LSODA, "DOP853": DOP853}


def integrate_population(m0, lambdas, p, cfg=POPULATION_CONFIG, method="LSODA",
                         signal=1.0, rtol=1e-10, atol=1e-13, tol_corr=TOL_CORR):
    """Integrate the noiseless correlation system from ``m0``.

    Parameters
    ----------
    m0 : (r, r) array
        Initial correlations, operator norm at most one.
    lambdas : (r,) array
    p : int
    cfg : FlowConfig
        ``t_max``, ``stop_eps``, ``sample_dt``, ``settle`` and ``max_steps`` are used.
    method : {"LSODA", "DOP853", "RK4"}
        ``LSODA`` and ``DOP853`` are adaptive (tolerances ``rtol``/``atol``);
        they record each accepted step or a ``sample_dt`` grid and insert the
        exact times at which any ``|m_ij|`` crosses ``1 - stop_eps``. Once some
        pairs have saturated the system is stiff and the late, slow growth of
        the remaining pairs can take ``1e3``-``1e5`` time units, so the
        stiffness-switching ``LSODA`` is the default. ``RK4`` is classical
        fixed-step with ``h = 1e-3 / max(lam_i lam_j)``, halved once any
        ``|m_ij| > 0.99``; it is slow and meant for short horizons.
    signal : float
        Multiplies the right-hand side (``sqrt_m`` on the rescaled clock).

    Raises
    ------
    ReductionBreakdownError
        If a singular value of ``m`` exceeds ``1 + 10 * tol_corr``.
    IntegrationError
        On non-finite states.
    """
    m0 = _check_m0(m0, tol_corr)
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (m0.shape[0],):
        raise ValueError("lambdas must have one entry per row of m0")
    if method in _ADAPTIVE:
        return _integrate_adaptive(_ADAPTIVE[method], m0, lam, p, cfg, signal, rtol, atol, tol_corr)
    if method == "RK4":
        return _integrate_rk4(m0, lam, p, cfg, signal, tol_corr)
    raise ValueError(f"unknown method {method!r}")


def _integrate_adaptive(solver_cls, m0, lam, p, cfg, signal, rtol, atol, tol_corr):
    r = m0.shape[0]
    thr = 1.0 - cfg.stop_eps

    def fun(t, y):
        return signal * population_rhs(y.reshape(r, r), lam, p).ravel()

    rec = _Recorder(cfg, tol_corr)
    rec.add(0.0, m0)
    solver = solver_cls(fun, 0.0, m0.ravel().copy(), cfg.t_max, rtol=rtol, atol=atol)
    steps, t_rec, t_stop = 0, None, math.inf
    termination = "horizon"
    next_grid = cfg.sample_dt
    while solver.status == "running":
        t_old, y_old = solver.t, solver.y.copy()
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"{solver_cls.__name__} failed at t={t_old:.6g}: {msg}", last_state=y_old.reshape(r, r),
                                   trajectory=rec.build("failed", {}))
        steps += 1
        t_new, y_new = solver.t, solver.y
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(f"non-finite state at t={t_new:.6g}", last_state=y_old.reshape(r, r),
                                   trajectory=rec.build("failed", {}))
        dense = solver.dense_output()
        samples = _crossings(dense, y_old, y_new, t_old, t_new, thr)
        if cfg.sample_dt is not None:
            while next_grid <= t_new:
                samples.append(next_grid)
                next_grid += cfg.sample_dt
        t_end = min(t_new, t_stop)
        for t in sorted(s for s in samples if s <= t_end):
            rec.add(t, dense(t).reshape(r, r))
        last = t_new >= t_stop or solver.status != "running" or steps >= cfg.max_steps
        if cfg.sample_dt is None or last:
            rec.add(t_end, dense(t_end).reshape(r, r))
        if t_rec is None and is_recovered(y_new.reshape(r, r), cfg.stop_eps):
            t_rec = t_new
            termination = "recovered"
            if cfg.stop_on_recovery:
                t_stop = t_rec * (1.0 + cfg.settle)
        if t_new >= t_stop:
            break
        if steps >= cfg.max_steps:
            termination = "step_cap"
            break
    if termination == "horizon" or not is_recovered(rec.snaps[-1], cfg.stop_eps):
        termination = "step_cap" if termination == "step_cap" else "horizon"
    return rec.build(termination, {"method": solver_cls.__name__, "steps": steps, "t_recovered": t_rec})


def _crossings(dense, y_old, y_new, t_old, t_new, thr):
    a_old = np.abs(y_old) >= thr
    a_new = np.abs(y_new) >= thr
    out = []
    for k in np.flatnonzero(a_old != a_new):
        g = lambda t, k=k: abs(dense(t)[k]) - thr
        try:
            out.append(brentq(g, t_old, t_new, xtol=1e-14 * max(1.0, t_new)))
        except ValueError:
            continue
    return out


def _rk4_step(f, m, h):
    k1 = f(m)
    k2 = f(m + 0.5 * h * k1)
    k3 = f(m + 0.5 * h * k2)
    k4 = f(m + h * k3)
    return m + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_rk4(m0, lam, p, cfg, signal, tol_corr):
    lam_max = float(np.max(np.outer(lam, lam))) * signal
    h0 = 1e-3 / lam_max if lam_max > 0 else cfg.t_max / 1000.0

    def f(m):
        return signal * population_rhs(m, lam, p)

    rec = _Recorder(cfg, tol_corr)
    rec.add(0.0, m0)
    m, t, steps = m0.copy(), 0.0, 0
    t_rec, t_stop = None, cfg.t_max
    next_grid = cfg.sample_dt if cfg.sample_dt is not None else None
    termination = "horizon"
    while t < t_stop - 1e-15 * max(1.0, t_stop):
        h = h0 if np.max(np.abs(m)) <= 0.99 else 0.5 * h0
        h = min(h, t_stop - t)
        if next_grid is not None:
            h = min(h, next_grid - t)
        m_new = _rk4_step(f, m, h)
        if not np.all(np.isfinite(m_new)):
            raise IntegrationError(f"non-finite state at t={t + h:.6g}", last_state=m,
                                   trajectory=rec.build("failed", {}))
        m, t = m_new, t + h
        steps += 1
        on_grid = next_grid is None or abs(t - next_grid) <= 1e-12 * max(1.0, t)
        if on_grid:
            rec.add(t, m)
            if next_grid is not None:
                next_grid += cfg.sample_dt
        if t_rec is None and is_recovered(m, cfg.stop_eps):
            t_rec = t
            termination = "recovered"
            if cfg.stop_on_recovery:
                t_stop = min(t_stop, t_rec * (1.0 + cfg.settle))
        if steps >= cfg.max_steps:
            termination = "step_cap"
            break
    rec.add(t, m)
    if termination == "recovered" and not is_recovered(m, cfg.stop_eps):
        termination = "horizon"
    return rec.build(termination, {"method": "RK4", "steps": steps, "h": h0, "t_recovered": t_rec})


def default_eps_prime(N=None, p=None):
    """Suppression level for mates: ``10 N^{-(p-1)/4} / sqrt(log N)``, or 0.05 without N."""
    if N is None:
        return 0.05
    return 10.0 * N ** (-(p - 1) / 4.0) / math.sqrt(math.log(N))


@dataclass
class EliminationReport:
    """Sustained crossings of ``|m_ij| >= 1 - eps`` in time order.

    ``ordering`` holds ``(i, j, T)`` with 0-based indices. ``suppressed`` maps
    each ordered pair to the largest ``|m|`` among its row and column mates
    over ``[T, end]``; ``suppression_times`` gives the first recorded time after
    which all mates stay at or below ``eps_prime`` (None if never).
    ``transients`` lists pairs that crossed but fell back below the level.
    ``consistent_with_prediction`` is the weaker check that the realised
    sequence is a prefix of the predicted one (later pairs may not have
    crossed).
    """

    ordering: list
    suppressed: dict
    suppression_times: dict
    matched_prediction: bool | None
    consistent_with_prediction: bool | None
    transients: list
    eps: float
    eps_prime: float
    extras: dict = field(default_factory=dict)

    @property
    def pairs(self):
        return [(i, j) for i, j, _ in self.ordering]

    def to_json(self):
        return {
            "ordering": [{"i": i + 1, "j": j + 1, "T": T} for i, j, T in self.ordering],
            "suppressed": {f"{i + 1},{j + 1}": v for (i, j), v in self.suppressed.items()},
            "suppression_times": {f"{i + 1},{j + 1}": v for (i, j), v in self.suppression_times.items()},
            "matched_prediction": self.matched_prediction,
            "consistent_with_prediction": self.consistent_with_prediction,
            "transients": [{"i": i + 1, "j": j + 1, "T_first": T} for i, j, T in self.transients],
            "eps": self.eps,
            "eps_prime": self.eps_prime,
        }


def _suffix_start(ok):
    """Index from which ``ok`` stays True to the end, or None."""
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return 0 if bad.size == 0 else int(bad[-1]) + 1


def detect_elimination(traj, eps=0.1, eps_prime=None, prediction=None):
    """Read the sequential-elimination ordering off a recorded trajectory.

    ``T_k`` is the first recorded time from which ``|m_{i_k j_k}| >= 1 - eps``
    holds for the rest of the recording. The recording has to be dense
    enough that crossings are not skipped.

    Parameters
    ----------
    prediction : object with ``pairs``, optional
        Typically a :class:`~spikedgf.theory.GreedySelection`; sets
        ``matched_prediction`` to whether the realised pair sequence equals it.
    """
    eps_prime = default_eps_prime() if eps_prime is None else eps_prime
    A = np.abs(traj.snapshots)
    times = traj.times
    r = traj.r
    thr = 1.0 - eps
    ordering, transients = [], []
    suppressed, supp_times = {}, {}
    for i in range(r):
        for j in range(r):
            above = A[:, i, j] >= thr
            if not above.any():
                continue
            k = _suffix_start(above)
            if k is None:
                transients.append((i, j, float(times[np.argmax(above)])))
                continue
            ordering.append((i, j, float(times[k])))
            mates = np.concatenate([np.delete(A[:, i, :], j, axis=1),
                                    np.delete(A[:, :, j], i, axis=1)], axis=1)
            if mates.shape[1] == 0:
                suppressed[(i, j)] = 0.0
                supp_times[(i, j)] = float(times[k])
                continue
            tail = mates[k:].max(axis=1)
            suppressed[(i, j)] = float(tail.max())
            ks = _suffix_start(tail <= eps_prime)
            supp_times[(i, j)] = None if ks is None else float(times[k + ks])
    ordering.sort(key=lambda e: (e[2], e[0], e[1]))
    matched = consistent = None
    if prediction is not None:
        realised = [(i, j) for i, j, _ in ordering]
        predicted = [tuple(x) for x in prediction.pairs]
        matched = realised == predicted
        consistent = realised == predicted[:len(realised)]
    return EliminationReport(ordering=ordering, suppressed=suppressed, suppression_times=supp_times,
                             matched_prediction=matched, consistent_with_prediction=consistent,
                             transients=transients,
                             eps=eps, eps_prime=eps_prime)
