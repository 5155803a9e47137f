"""Geometry of the normalized Stiefel manifold ``{X in R^{N x r} : X^T X = N I_r}``.

Points and tangent vectors are plain ``(N, r)`` float arrays. Every function
here is pure apart from the random stream passed in explicitly.
"""

import numpy as np

from .errors import ManifoldError, NotPositiveDefiniteError, SamplingError

__all__ = [
    "TOL_ORTH_FACTOR",
    "tol_orth",
    "orthogonality_error",
    "check_point",
    "symmetric_inverse_sqrt",
    "sample_uniform",
    "sample_positive",
    "project_tangent",
    "tangency_error",
    "polar_retract",
]

#: default manifold tolerance is ``TOL_ORTH_FACTOR * N`` in Frobenius norm
TOL_ORTH_FACTOR = 1e-9


def tol_orth(N):
    return TOL_ORTH_FACTOR * N


def orthogonality_error(X):
    """Frobenius distance ``||X^T X - N I||_F``."""
    X = np.asarray(X, dtype=float)
    N, r = X.shape
    return float(np.linalg.norm(X.T @ X - N * np.eye(r)))


def check_point(X, tol=None):
    """Validate shape and constraint of a manifold point; return it as float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ManifoldError(f"expected an (N, r) matrix, got shape {X.shape}")
    N, r = X.shape
    if r < 1 or r > N:
        raise ManifoldError(f"need N >= r >= 1, got N={N}, r={r}")
    tol = tol_orth(N) if tol is None else tol
    err = orthogonality_error(X)
    if not err <= tol:
        raise ManifoldError(f"||X^T X - N I||_F = {err:.3e} exceeds tolerance {tol:.3e}")
    return X


def symmetric_inverse_sqrt(A, tol_pd=1e-12):
    """Inverse square root of a symmetric positive-definite matrix.

    Computed from the symmetric eigendecomposition, which is unconditionally
    stable at the tiny sizes (r x r) used here.

    Raises
    ------
    NotPositiveDefiniteError
        If the smallest eigenvalue is ``<= tol_pd``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    A = 0.5 * (A + A.T)
    w, Q = np.linalg.eigh(A)
    if w[0] <= tol_pd:
        cond = np.inf if w[0] <= 0 else w[-1] / w[0]
        raise NotPositiveDefiniteError(
            f"smallest eigenvalue {w[0]:.3e} <= {tol_pd:.1e} (condition number {cond:.3e})"
        )
    B = (Q / np.sqrt(w)) @ Q.T
    return 0.5 * (B + B.T)


def sample_uniform(N, r, rng, max_retries=3):
    """Draw ``X ~ mu_{N x r}``, the rotation-invariant law on the manifold.

    Uses ``X = Z (Z^T Z / N)^{-1/2}`` with ``Z`` standard Gaussian.

    Parameters
    ----------
    N, r : int
        Ambient dimension and number of columns, ``N >= r >= 1``.
    rng : numpy.random.Generator
    max_retries : int
        Redraws allowed when ``Z^T Z`` is numerically singular.
    """
    if not (isinstance(N, (int, np.integer)) and isinstance(r, (int, np.integer))):
        raise TypeError("N and r must be integers")
    if r < 1 or r > N:
        raise ValueError(f"need N >= r >= 1, got N={N}, r={r}")
    for _ in range(max_retries + 1):
        Z = rng.standard_normal((N, r))
        try:
            B = symmetric_inverse_sqrt(Z.T @ Z / N)
        except NotPositiveDefiniteError:
            continue
        X = Z @ B
        # one polish pass so roundoff in B does not leak into the constraint
        return X @ symmetric_inverse_sqrt(X.T @ X / N)
    raise SamplingError(f"Z^T Z singular after {max_retries} retries (N={N}, r={r})")


def sample_positive(V, rng, max_attempts=None):
    """Draw ``X ~ mu_{N x r}`` conditioned on every ``<v_i, x_j> > 0``.

    Plain rejection sampling, so the conditional law is exact. The acceptance
    rate is about ``2^{-r^2}``; the default attempt cap is ``10 * 2^{r^2}``.
    """
    V = np.asarray(V, dtype=float)
    N, r = V.shape
    if max_attempts is None:
        max_attempts = 10 * 2 ** (r * r)
    for _ in range(max_attempts):
        X = sample_uniform(N, r, rng)
        if np.all(V.T @ X > 0):
            return X
    raise SamplingError(f"no positive-correlation draw in {max_attempts} attempts (r={r})")


def project_tangent(X, G):
    """Project ``G`` onto the tangent space at ``X``.

    ``G - X (X^T G + G^T X) / (2N)``; this is the Riemannian gradient when
    ``G`` is a Euclidean gradient.
    """
    X = np.asarray(X, dtype=float)
    G = np.asarray(G, dtype=float)
    if X.shape != G.shape:
        raise ValueError(f"shape mismatch: X {X.shape} vs G {G.shape}")
    N = X.shape[0]
    S = X.T @ G
    return G - X @ (S + S.T) / (2.0 * N)


def tangency_error(X, U):
    """``||X^T U + U^T X||_F``, zero for tangent vectors."""
    S = np.asarray(X).T @ np.asarray(U)
    return float(np.linalg.norm(S + S.T))


def polar_retract(X, U):
    """Polar retraction ``(X + U)(I + U^T U / N)^{-1/2}``.

    For tangent ``U`` the result lies on the manifold exactly (up to roundoff).
    A final orthonormalising factor removes drift when ``U`` is only
    approximately tangent, which keeps long integrations on the manifold.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if X.shape != U.shape:
        raise ValueError(f"shape mismatch: X {X.shape} vs U {U.shape}")
    N, r = X.shape
    if not np.any(U):
        return X.copy()
    Y = (X + U) @ symmetric_inverse_sqrt(np.eye(r) + U.T @ U / N)
    return Y @ symmetric_inverse_sqrt(Y.T @ Y / N)
