"""The multi-spiked tensor problem: noise tensor, Hamiltonians, correlations, gradients.

The ``M`` i.i.d. observations are represented by one effective Gaussian noise
tensor: the average of ``M`` i.i.d. standard Gaussian tensors has the law of
one such tensor scaled by ``1/sqrt(M)``. Working with the rescaled Hamiltonian

    H(X) = H0(X) - sqrt_m * sum_{ij} N lam_i lam_j m_ij(X)^p

absorbs that factor into ``sqrt_m`` and only changes the clock of the flow.

The noise tensor is stored raw (not symmetrised), flat in row-major order.
Gradients sum the contraction over all ``p`` slot positions, which is the
exact gradient of ``<W, x^{(x)p}>`` for an asymmetric ``W``.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, ManifoldError
from .manifold import check_point, project_tangent, sample_uniform, symmetric_inverse_sqrt
from .population import population_rhs as population_generator

__all__ = [
    "DEFAULT_MEMORY_BUDGET",
    "SpikedModel",
    "generate",
    "correlations",
    "h0_value",
    "hamiltonian",
    "h0_gradient",
    "euclidean_risk_gradient",
    "hamiltonian_and_gradients",
    "riemannian_gradient",
    "noise_drift",
    "population_generator",
    "generator_m",
    "generator_m_projection",
    "point_with_correlations",
    "save_model",
    "load_model",
]

DEFAULT_MEMORY_BUDGET = 50_000_000


@dataclass(frozen=True, eq=False)
class SpikedModel:
    """An immutable problem instance.

    Attributes
    ----------
    p : int
        Tensor order, ``p >= 3``.
    lambdas : ndarray, shape (r,)
        Non-increasing, non-negative SNRs.
    spikes : ndarray, shape (N, r)
        Orthogonal spikes ``v_i`` of norm ``sqrt(N)`` (columns).
    noise : ndarray, shape (N**p,), or None
        Flat row-major noise tensor ``W``; read-only. ``None`` means ``W = 0``.
    sqrt_m : float
        Signal multiplier of the rescaled dynamics (``M = sqrt_m**2``).
    seed : int or None
        Seed the instance was generated from; the noise is reproducible from it.
    """

    p: int
    lambdas: np.ndarray
    spikes: np.ndarray
    noise: np.ndarray
    sqrt_m: float
    seed: int | None = None

    @property
    def N(self):
        return self.spikes.shape[0]

    @property
    def r(self):
        return self.spikes.shape[1]

    @property
    def M(self):
        return self.sqrt_m**2

    def header(self):
        return {
            "p": self.p,
            "r": self.r,
            "N": self.N,
            "lambdas": [float(x) for x in self.lambdas],
            "sqrt_m": float(self.sqrt_m),
            "M": float(self.M),
            "seed": self.seed,
        }


def _check_lambdas(lambdas, r=None):
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if r is not None and lam.size != r:
        raise ValueError(f"expected {r} SNRs, got {lam.size}")
    if lam.size < 1:
        raise ValueError("need at least one SNR")
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError(f"SNRs must be finite and >= 0, got {lam.tolist()}")
    if np.any(np.diff(lam) > 0):
        raise ValueError(f"SNRs must be sorted non-increasing, got {lam.tolist()}")
    return lam


def _streams(seed):
    spike_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(spike_seq), np.random.default_rng(noise_seq)


def generate(p, r, N, lambdas, sqrt_m, seed=None, spikes=None, noise=True,
             memory_budget=DEFAULT_MEMORY_BUDGET):
    """Build a :class:`SpikedModel`.

    Spikes are drawn from ``mu_{N x r}`` unless given. The noise tensor is
    filled i.i.d. N(0, 1) from a stream derived from ``seed`` (independent of
    the spike stream), so it can always be regenerated. ``noise=False`` gives
    the noiseless (population) instance with ``W = 0``.
    """
    if int(p) != p or p < 3:
        raise ValueError(f"tensor order must be an integer >= 3, got {p}")
    p, r, N = int(p), int(r), int(N)
    if r < 1 or r > N:
        raise ValueError(f"need N >= r >= 1, got N={N}, r={r}")
    lam = _check_lambdas(lambdas, r)
    sqrt_m = float(sqrt_m)
    if not np.isfinite(sqrt_m) or sqrt_m < 0:
        raise ValueError(f"sqrt_m must be finite and >= 0, got {sqrt_m}")
    size = N**p
    if noise and size > memory_budget:
        raise BudgetError(f"noise tensor needs N^p = {size:.3e} entries > budget {memory_budget:.3e}")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
    spike_rng, noise_rng = _streams(seed)
    if spikes is None:
        V = sample_uniform(N, r, spike_rng)
    else:
        V = check_point(spikes)
        if V.shape != (N, r):
            raise ManifoldError(f"spikes have shape {V.shape}, expected {(N, r)}")
    W = None
    if noise:
        W = noise_rng.standard_normal(size)
        W.setflags(write=False)
    V = np.array(V, dtype=float)
    V.setflags(write=False)
    lam.setflags(write=False)
    return SpikedModel(p=p, lambdas=lam, spikes=V, noise=W, sqrt_m=sqrt_m, seed=int(seed))


def correlations(model, X):
    """Correlation matrix ``m_ij = <v_i, x_j> / N``."""
    X = np.asarray(X, dtype=float)
    if X.shape != model.spikes.shape:
        raise ValueError(f"X has shape {X.shape}, expected {model.spikes.shape}")
    return model.spikes.T @ X / model.N


def _kron_power(X, k):
    """Column-wise Kronecker power: column j is ``x_j^{(x)k}`` flattened row-major."""
    K = np.ones((1, X.shape[1]))
    for _ in range(k):
        K = (K[:, None, :] * X[None, :, :]).reshape(-1, X.shape[1])
    return K


def _contractions(model, X):
    """Per-column raw contractions of the noise tensor.

    Returns ``(values, slot_sums)`` where ``values[j] = <W, x_j^{(x)p}>`` and
    column j of ``slot_sums`` is the Euclidean gradient of that value. Two
    passes over ``W``: one contracting the last index, one leaving it free.
    """
    p, N = model.p, model.N
    r = X.shape[1]
    if model.noise is None:
        return np.zeros(r), np.zeros_like(X)
    Wm = model.noise.reshape(N ** (p - 1), N)
    K_full = _kron_power(X, p - 1)
    T = Wm @ X
    slot_sums = Wm.T @ K_full
    values = np.einsum("ar,ar->r", T, K_full)
    for s in range(p - 1):
        A, B = N**s, N ** (p - 2 - s)
        Ts = T.reshape(A, N, B, r)
        if A == 1:
            slot_sums += np.einsum("nbr,br->nr", Ts[0], _kron_power(X, p - 2 - s))
        elif B == 1:
            slot_sums += np.einsum("anr,ar->nr", Ts[:, :, 0, :], _kron_power(X, s))
        else:
            slot_sums += np.einsum("anbr,ar,br->nr", Ts, _kron_power(X, s),
                                   _kron_power(X, p - 2 - s), optimize=True)
    return values, slot_sums


def _noise_scale(model):
    return model.N ** (-(model.p - 1) / 2.0)


def h0_value(model, X):
    """Noise Hamiltonian ``N^{-(p-1)/2} sum_i lam_i <W, x_i^{(x)p}>``."""
    X = np.asarray(X, dtype=float)
    values, _ = _contractions(model, X)
    return float(_noise_scale(model) * model.lambdas @ values)


def _signal_value(model, X):
    m = correlations(model, X)
    L = np.outer(model.lambdas, model.lambdas)
    return float(-model.N * np.sum(L * m**model.p))


def hamiltonian(model, X):
    """Rescaled Hamiltonian ``H = H0 - sqrt_m sum_ij N lam_i lam_j m_ij^p``."""
    return h0_value(model, X) + model.sqrt_m * _signal_value(model, X)


def h0_gradient(model, X):
    """Euclidean gradient of :func:`h0_value`, shape (N, r)."""
    X = np.asarray(X, dtype=float)
    _, slot_sums = _contractions(model, X)
    return _noise_scale(model) * slot_sums * model.lambdas[None, :]


def _signal_gradient(model, X):
    """Euclidean gradient of ``-sum_ij N lam_i lam_j m_ij^p`` (without sqrt_m)."""
    m = correlations(model, X)
    p, lam = model.p, model.lambdas
    coef = -p * np.outer(lam, lam) * m ** (p - 1)
    return model.spikes @ coef


def euclidean_risk_gradient(model, X):
    """Euclidean gradient of the rescaled Hamiltonian ``H``, shape (N, r)."""
    return h0_gradient(model, X) + model.sqrt_m * _signal_gradient(model, X)


def hamiltonian_and_gradients(model, X):
    """``(H, grad H, grad H0)`` from a single pass over the noise tensor.

    Both gradients are Euclidean; this is what the flow integrator calls.
    """
    X = np.asarray(X, dtype=float)
    values, slot_sums = _contractions(model, X)
    scale = _noise_scale(model)
    h0 = float(scale * model.lambdas @ values)
    g0 = scale * slot_sums * model.lambdas[None, :]
    H = h0 + model.sqrt_m * _signal_value(model, X)
    return H, g0 + model.sqrt_m * _signal_gradient(model, X), g0


def riemannian_gradient(model, X):
    return project_tangent(X, euclidean_risk_gradient(model, X))


def noise_drift(model, X):
    """Noise part of ``dm_ij/dt``: ``-<(grad H0)_j, v_i> / N`` with the Riemannian gradient."""
    X = np.asarray(X, dtype=float)
    G0 = project_tangent(X, h0_gradient(model, X))
    return -model.spikes.T @ G0 / model.N


def generator_m(model, X):
    """Full ``dm_ij/dt`` under the rescaled flow, from the closed-form expansion.

    Noise part from :func:`noise_drift`, signal part from
    :func:`population_generator` scaled by ``sqrt_m``. Valid when the spikes are
    exactly orthogonal, which :func:`generate` guarantees.
    """
    m = correlations(model, X)
    return noise_drift(model, X) + model.sqrt_m * population_generator(m, model.lambdas, model.p)


def generator_m_projection(model, X):
    """``dm_ij/dt`` the direct way: ``-V^T (Riemannian grad H) / N``."""
    return -model.spikes.T @ riemannian_gradient(model, X) / model.N


def point_with_correlations(V, m0, rng):
    """A manifold point ``X`` with ``V^T X / N = m0`` exactly.

    ``X = V m0 + sqrt(N) Q (I - m0^T m0)^{1/2}`` with ``Q`` a random orthonormal
    frame in the complement of ``span(V)``. Requires ``||m0||_op < 1`` and
    ``N >= 2r``.
    """
    V = np.asarray(V, dtype=float)
    m0 = np.asarray(m0, dtype=float)
    N, r = V.shape
    if m0.shape != (r, r):
        raise ValueError(f"m0 has shape {m0.shape}, expected {(r, r)}")
    if N < 2 * r:
        raise ValueError(f"need N >= 2r to embed arbitrary correlations, got N={N}, r={r}")
    C = np.eye(r) - m0.T @ m0
    w, Q = np.linalg.eigh(0.5 * (C + C.T))
    if w[0] < -1e-12:
        raise ValueError("correlation matrix has operator norm > 1")
    root = (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T
    Z = rng.standard_normal((N, r))
    Z -= V @ (V.T @ Z) / N
    Z = Z @ symmetric_inverse_sqrt(Z.T @ Z)
    return V @ m0 + np.sqrt(N) * Z @ root


def save_model(model, path, include_spikes=True):
    """Write a JSON header line, optionally followed by the spike matrix.

    The spike block is little-endian float64 in column-major order. The noise
    tensor is never written; it is regenerated from ``seed``.
    """
    header = model.header()
    header["spikes"] = bool(include_spikes)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        if include_spikes:
            fh.write(np.asarray(model.spikes, dtype="<f8").tobytes(order="F"))


def load_model(path, memory_budget=DEFAULT_MEMORY_BUDGET):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        spikes = None
        if header.get("spikes"):
            N, r = header["N"], header["r"]
            raw = fh.read(8 * N * r)
            if len(raw) != 8 * N * r:
                raise ValueError(f"truncated spike block in {path}")
            spikes = np.frombuffer(raw, dtype="<f8").reshape((N, r), order="F").astype(float)
    return generate(header["p"], header["r"], header["N"], header["lambdas"], header["sqrt_m"],
                    seed=header["seed"], spikes=spikes, memory_budget=memory_budget)
