"""Closed-form predictors: initialization matrix, greedy maximum selection,
comparison envelopes, hitting times, initial-condition predicates and the
sample-complexity regime label.

Index pairs are 0-based throughout the Python API; JSON reports written by
:func:`prediction_report` are 1-based.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import AmbiguousSelectionError, DomainError
from .model import noise_drift

__all__ = [
    "init_matrix",
    "GreedySelection",
    "greedy_selection",
    "EnvelopeParams",
    "blowup_time",
    "envelope_lower",
    "envelope_upper",
    "HittingTimes",
    "hitting_time_bounds",
    "HeuristicTime",
    "predict_hitting_heuristic",
    "epsilon_n",
    "condition1_member",
    "condition2_member",
    "condition0_level1_member",
    "Regime",
    "regime_classifier",
    "prediction_report",
]


def init_matrix(m0, lambdas, p):
    """``I0_ij = lam_i lam_j m_ij^{p-2}``, with entries where ``m_ij^{p-2} < 0`` set to 0.

    For even ``p`` the power is never negative, so nothing is zeroed.
    """
    m0 = np.asarray(m0, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    power = m0 ** (p - 2)
    return np.outer(lam, lam) * np.where(power >= 0, power, 0.0)


@dataclass(frozen=True)
class GreedySelection:
    """Ordered pairs ``(i_k, j_k)`` with the matrix values that selected them."""

    pairs: tuple
    values: tuple

    @property
    def r_c(self):
        return len(self.pairs)

    def permutation(self, r):
        """``sigma[j] = i`` when column ``j`` is predicted to recover spike ``i``, else -1."""
        sigma = np.full(r, -1, dtype=int)
        for i, j in self.pairs:
            sigma[j] = i
        return sigma


def greedy_selection(A, tie_tol=1e-12):
    """Greedy maximum selection on ``|A|``.

    Repeatedly take the largest remaining absolute entry, then delete its row
    and column; stop once the remainder is all zero or empty.

    Raises
    ------
    AmbiguousSelectionError
        When two distinct candidates tie for the maximum within ``tie_tol``
        (relative), so the selection is not well defined.
    """
    B = np.abs(np.asarray(A, dtype=float))
    if B.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {B.shape}")
    B = B.copy()
    pairs, values = [], []
    while B.size and B.max() > 0:
        flat = np.argsort(B, axis=None)[::-1]
        top = B.flat[flat[0]]
        if flat.size > 1 and top - B.flat[flat[1]] <= tie_tol * top:
            i1, j1 = np.unravel_index(flat[0], B.shape)
            i2, j2 = np.unravel_index(flat[1], B.shape)
            raise AmbiguousSelectionError(
                f"tie between entries ({i1}, {j1}) and ({i2}, {j2}) at value {top:.6g}"
            )
        i, j = (int(k) for k in np.unravel_index(flat[0], B.shape))
        pairs.append((i, j))
        values.append(float(top))
        # deleted rows/columns are zeroed, which cannot win against a positive max
        B[i, :] = 0.0
        B[:, j] = 0.0
    return GreedySelection(pairs=tuple(pairs), values=tuple(values))


@dataclass(frozen=True)
class EnvelopeParams:
    """Parameters of the comparison envelopes for one pair ``(i, j)``.

    ``gamma`` sets the initial value ``gamma / sqrt(N)``, ``lam_prod`` is
    ``lam_i lam_j`` and ``c0`` the relative drift slack.
    """

    gamma: float
    lam_prod: float
    c0: float
    sqrt_m: float
    p: int
    N: int

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not 0 <= self.c0 < 1:
            raise ValueError(f"c0 must lie in [0, 1), got {self.c0}")
        if self.p < 3:
            raise ValueError(f"p must be >= 3, got {self.p}")

    @property
    def initial(self):
        return self.gamma / math.sqrt(self.N)

    def rate(self, sign):
        """``(1 + sign*c0) sqrt_m p (p-2) lam_prod a^{p-2}`` with ``a`` the initial value."""
        p = self.p
        return (1 + sign * self.c0) * self.sqrt_m * p * (p - 2) * self.lam_prod * self.initial ** (p - 2)


def blowup_time(par, upper=False):
    """Pole of the lower (default) or upper envelope; ``inf`` when the rate is zero."""
    rate = par.rate(+1 if upper else -1)
    return math.inf if rate == 0 else 1.0 / rate


def _envelope(t, par, sign):
    rate = par.rate(sign)
    base = 1.0 - rate * t
    if base <= 0:
        raise DomainError(f"t = {t} is at or past the blow-up time {1.0 / rate}", limit=1.0 / rate)
    return par.initial * base ** (-1.0 / (par.p - 2))


def envelope_lower(t, par):
    """Lower comparison envelope, slack factor ``1 - c0``."""
    return _envelope(t, par, -1)


def envelope_upper(t, par):
    """Upper comparison envelope, slack factor ``1 + c0``."""
    return _envelope(t, par, +1)


class HittingTimes(NamedTuple):
    lower_env: float  # time for the lower envelope to reach the target (the later one)
    upper_env: float


def hitting_time_bounds(par, target):
    """Times at which the lower and upper envelopes reach ``target``.

    Any curve squeezed between the envelopes hits ``target`` inside
    ``[upper_env, lower_env]``.
    """
    a = par.initial
    if not target > a:
        raise DomainError(f"target {target} must exceed the initial value {a}", limit=a)
    num = 1.0 - (a / target) ** (par.p - 2)
    r_lo, r_up = par.rate(-1), par.rate(+1)
    t_lo = math.inf if r_lo == 0 else num / r_lo
    t_up = math.inf if r_up == 0 else num / r_up
    return HittingTimes(lower_env=t_lo, upper_env=t_up)


class HeuristicTime(NamedTuple):
    original: float
    rescaled: float


def predict_hitting_heuristic(gamma, lam_i, lam_j, p, eps, N, sqrt_m=1.0):
    """Early-phase estimate of the time for ``m_ij`` to grow from ``gamma/sqrt(N)`` to ``eps``.

    ``original`` is on the unscaled clock (signal weight 1); ``rescaled`` divides
    by ``sqrt_m`` for the flow of ``H = sqrt(M) R``.
    """
    if not eps * math.sqrt(N) > gamma:
        raise DomainError(f"threshold eps*sqrt(N) = {eps * math.sqrt(N)} must exceed gamma = {gamma}",
                          limit=gamma / math.sqrt(N))
    rate = lam_i * lam_j * p * (p - 2) * gamma ** (p - 2)
    if rate == 0:
        return HeuristicTime(math.inf, math.inf)
    t = (1.0 - (gamma / (eps * math.sqrt(N))) ** (p - 2)) / rate * N ** ((p - 2) / 2.0)
    return HeuristicTime(t, t / sqrt_m if sqrt_m > 0 else math.inf)


def epsilon_n(N, p, C=1.0):
    """Mesoscopic threshold ``C N^{-(p-2)/(2(p-1))}``."""
    return C * N ** (-(p - 2) / (2.0 * (p - 1)))


def condition1_member(m0, gamma1, gamma2, N):
    """``gamma2/sqrt(N) <= m_ij < gamma1/sqrt(N)`` for every entry."""
    if not gamma1 > gamma2 > 0:
        raise ValueError("need gamma1 > gamma2 > 0")
    m0 = np.asarray(m0, dtype=float)
    s = math.sqrt(N)
    return bool(np.all((m0 >= gamma2 / s) & (m0 < gamma1 / s)))


def condition2_member(m0, lambdas, p, gamma1, gamma3):
    """Pairwise separation of the weighted entries ``lam_i lam_j m_ij^{p-2}``.

    Every ordered pair of distinct entries must satisfy
    ``|w_ij / w_kl - 1| > gamma3 / gamma1``. A zero denominator counts as
    separated unless the numerator is also zero.
    """
    if not gamma1 > gamma3 > 0:
        raise ValueError("need gamma1 > gamma3 > 0")
    m0 = np.asarray(m0, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    w = (np.outer(lam, lam) * m0 ** (p - 2)).ravel()
    bound = gamma3 / gamma1
    num, den = w[:, None], w[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.abs(num / den - 1.0)
    gap = np.where(den == 0, np.where(num == 0, 0.0, np.inf), gap)
    off = ~np.eye(w.size, dtype=bool)
    return bool(np.all(gap[off] > bound))


def condition0_level1_member(model, X0, gamma0):
    """``|L0 m_ij(X0)| <= gamma0 / sqrt(N)`` for every entry (first level only)."""
    if not gamma0 > 0:
        raise ValueError("gamma0 must be > 0")
    return bool(np.all(np.abs(noise_drift(model, X0)) <= gamma0 / math.sqrt(model.N)))


class Regime(str, Enum):
    ALL_SPIKES = "all_spikes"
    FIRST_SPIKE = "first_spike"
    SUB_THRESHOLD = "sub_threshold"


def regime_classifier(N, p, M):
    """Heuristic label from the exponent ``alpha = log M / log N``.

    ``all_spikes`` if ``alpha > p-1``, ``first_spike`` if ``p-2 < alpha <= p-1``,
    else ``sub_threshold``. The thresholds are asymptotic; at finite N this is
    only a label.
    """
    if N <= 1 or M < 1:
        raise ValueError(f"need N > 1 and M >= 1, got N={N}, M={M}")
    alpha = math.log(M) / math.log(N)
    if alpha > p - 1:
        return Regime.ALL_SPIKES
    if alpha > p - 2:
        return Regime.FIRST_SPIKE
    return Regime.SUB_THRESHOLD


def prediction_report(m0, lambdas, p, N, M, threshold=0.1, tie_tol=1e-12):
    """JSON-ready prediction for an initial correlation matrix.

    Keys: ``I0``, ``selection`` (1-based ``[i, j]`` pairs), ``r_c``,
    ``predicted_permutation`` (entry j is the 1-based spike recovered by column
    j, or null), ``predicted_hitting_times`` (early-phase estimate of reaching
    ``threshold`` per selected pair, both clocks), ``regime``.
    """
    m0 = np.asarray(m0, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    r = m0.shape[0]
    I0 = init_matrix(m0, lam, p)
    sel = greedy_selection(I0, tie_tol=tie_tol)
    sqrt_m = math.sqrt(M)
    times = []
    for i, j in sel.pairs:
        gamma = abs(m0[i, j]) * math.sqrt(N)
        entry = {"i": i + 1, "j": j + 1, "gamma": gamma, "threshold": threshold}
        try:
            ht = predict_hitting_heuristic(gamma, lam[i], lam[j], p, threshold, N, sqrt_m)
            entry.update(original=ht.original, rescaled=ht.rescaled)
        except DomainError:
            entry.update(original=0.0, rescaled=0.0)
        times.append(entry)
    sigma = sel.permutation(r)
    return {
        "I0": I0.tolist(),
        "selection": [[i + 1, j + 1] for i, j in sel.pairs],
        "r_c": sel.r_c,
        "predicted_permutation": [int(s) + 1 if s >= 0 else None for s in sigma],
        "predicted_hitting_times": times,
        "regime": regime_classifier(N, p, M).value if M >= 1 else Regime.SUB_THRESHOLD.value,
        "regime_note": "heuristic label from asymptotic exponents",
    }
