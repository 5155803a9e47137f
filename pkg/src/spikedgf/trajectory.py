"""Flow configuration, recorded trajectories and their CSV format."""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["FlowConfig", "Trajectory", "matched_columns", "is_recovered"]

TERMINATIONS = ("recovered", "horizon", "step_cap", "failed")


@dataclass(frozen=True)
class FlowConfig:
    """Discretisation and stopping parameters shared by all integrators.

    ``sample_dt=None`` records every accepted step (the natural choice for
    adaptive integrators). After recovery the run continues for
    ``settle * t_recovered`` more time so that suppressed correlations have
    a recorded tail; ``stop_on_recovery=False`` always runs to ``t_max``.
    """

    eta: float = 1e-2
    t_max: float = 10.0
    sample_dt: float | None = None
    stop_eps: float = 0.1
    max_steps: int = 1_000_000
    settle: float = 0.25
    stop_on_recovery: bool = True
    record_noise_drift: bool = False
    deterministic_reduction: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not self.t_max > 0:
            raise ValueError(f"t_max must be > 0, got {self.t_max}")
        if self.sample_dt is not None and not self.sample_dt > 0:
            raise ValueError(f"sample_dt must be > 0, got {self.sample_dt}")
        if not 0 < self.stop_eps < 1:
            raise ValueError(f"stop_eps must lie in (0, 1), got {self.stop_eps}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.settle < 0:
            raise ValueError("settle must be >= 0")


def matched_columns(m, eps):
    """Greedy column matching at level ``1 - eps``.

    Returns a dict ``column -> row`` of entries with ``|m_ij| >= 1 - eps``.
    Since the operator norm of ``m`` is at most one, two such entries cannot
    share a row or column once ``eps < 1 - 1/sqrt(2)``.
    """
    hits = np.argwhere(np.abs(m) >= 1.0 - eps)
    out, rows = {}, set()
    for i, j in hits:
        if j not in out and i not in rows:
            out[int(j)] = int(i)
            rows.add(int(i))
    return out


def is_recovered(m, eps):
    return len(matched_columns(m, eps)) == m.shape[1]


@dataclass
class Trajectory:
    """Time-stamped correlation snapshots.

    Attributes
    ----------
    times : ndarray, shape (T,)
        Strictly increasing.
    snapshots : ndarray, shape (T, r, r)
    noise_drift : ndarray, shape (T, r, r), or None
    terminal_X : ndarray or None
        Final manifold point (full flows only).
    termination : str
        One of ``recovered``, ``horizon``, ``step_cap``, ``failed``.
    info : dict
        Integrator diagnostics (step counts, constraint drift, ...).
    """

    times: np.ndarray
    snapshots: np.ndarray
    noise_drift: np.ndarray | None = None
    terminal_X: np.ndarray | None = None
    termination: str = "horizon"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.snapshots = np.asarray(self.snapshots, dtype=float)
        if self.snapshots.ndim != 3 or self.snapshots.shape[0] != self.times.size:
            raise ValueError("snapshots must have shape (len(times), r, r)")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")

    @property
    def r(self):
        return self.snapshots.shape[1]

    @property
    def final(self):
        return self.snapshots[-1]

    def series(self, i, j):
        return self.snapshots[:, i, j]

    def max_singular_value(self):
        return float(max(np.linalg.norm(m, 2) for m in self.snapshots))

    def header(self):
        r = self.r
        cols = ["t"] + [f"m_{i + 1}_{j + 1}" for i in range(r) for j in range(r)]
        if self.noise_drift is not None:
            cols += [f"d_{i + 1}_{j + 1}" for i in range(r) for j in range(r)]
        return cols

    def to_csv(self, path):
        """Write ``t,m_1_1,...,m_r_r[,d_1_1,...]`` with 17 significant digits."""
        n = self.times.size
        parts = [self.times[:, None], self.snapshots.reshape(n, -1)]
        if self.noise_drift is not None:
            parts.append(self.noise_drift.reshape(n, -1))
        table = np.hstack(parts)
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(self.header()) + "\n")
            for row in table:
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
        table = np.array(rows, dtype=float).reshape(len(rows), len(header))
        n_m = sum(1 for c in header if c.startswith("m_"))
        r = math.isqrt(n_m)
        snaps = table[:, 1:1 + n_m].reshape(-1, r, r)
        drift = None
        if len(header) > 1 + n_m:
            drift = table[:, 1 + n_m:1 + 2 * n_m].reshape(-1, r, r)
        return cls(times=table[:, 0], snapshots=snaps, noise_drift=drift)
