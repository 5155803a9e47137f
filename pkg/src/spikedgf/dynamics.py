"""Gradient flow ``dX/dt = -grad H(X)`` on the normalized Stiefel manifold."""

import contextlib
import math

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import IntegrationError
from .manifold import check_point, orthogonality_error, polar_retract, project_tangent, tol_orth
from .model import correlations, hamiltonian_and_gradients
from .population import integrate_population
from .trajectory import FlowConfig, Trajectory, is_recovered

__all__ = ["step_size", "integrate", "evolve_correlations_only", "reduction_context"]


def reduction_context(deterministic):
    """Pin BLAS to one thread when a fixed floating-point reduction order is required."""
    return threadpool_limits(limits=1) if deterministic else contextlib.nullcontext()


def step_size(model, m, grad_norm, eta):
    """Euler step for the current state.

    The base rule ``eta sqrt(N) / (1 + ||grad H||_F)`` moves each column by
    a fixed fraction of its norm. Near a recovered state the gradient is
    small while the linearised flow contracts at rate about
    ``sqrt_m p (p-1) lam_i lam_j``, so the step is also capped at
    ``100 eta / L`` with ``L`` a local curvature estimate, which keeps
    explicit Euler stable and monotone there.
    """
    p, lam = model.p, model.lambdas
    base = eta * math.sqrt(model.N) / (1.0 + grad_norm)
    lam_max = float(lam.max()) if lam.size else 0.0
    curv = model.sqrt_m * float(np.max(np.outer(lam, lam) * np.abs(m) ** (p - 2)))
    L = p * (p - 1) * (curv + 2.0 * lam_max)
    return base if L == 0 else min(base, 100.0 * eta / L)


def integrate(model, X0, cfg=FlowConfig()):
    """Explicit Euler with polar retraction, ``X <- R_X(-dt grad H(X))``.

    Records correlations at every multiple of ``cfg.sample_dt`` (steps are
    shortened to land on them) or after every step when it is None. Stops
    with status ``recovered`` once every column is matched at level
    ``1 - stop_eps`` and a further ``settle * t`` has elapsed.

    ``info`` carries the step count, the largest constraint error seen, the
    number of steps where ``H`` rose by more than ``1e-8 |H|`` and the
    Hamiltonian at the end.

    Raises
    ------
    IntegrationError
        If the gradient becomes non-finite; the partial trajectory and last
        finite point are attached.
    """
    X = check_point(X0).copy()
    N = model.N
    V = model.spikes
    with reduction_context(cfg.deterministic_reduction):
        return _run(model, X, N, V, cfg)


def _run(model, X, N, V, cfg):
    times, snaps, drifts = [], [], []
    max_orth, rises, worst_rise = 0.0, 0, 0.0

    def record(t, X, G0):
        nonlocal max_orth
        times.append(t)
        snaps.append(V.T @ X / N)
        if cfg.record_noise_drift:
            drifts.append(-V.T @ project_tangent(X, G0) / N)
        max_orth = max(max_orth, orthogonality_error(X))

    def build(termination, steps, H):
        info = {"steps": steps, "max_orthogonality_error": max_orth,
                "tol_orth": tol_orth(N), "descent_violations": rises,
                "worst_relative_rise": worst_rise, "final_H": H, "t_recovered": t_rec}
        return Trajectory(times=np.array(times), snapshots=np.array(snaps),
                          noise_drift=np.array(drifts) if cfg.record_noise_drift else None,
                          terminal_X=X.copy(), termination=termination, info=info)

    t, steps, t_rec = 0.0, 0, None
    t_stop = cfg.t_max
    H, G, G0 = hamiltonian_and_gradients(model, X)
    record(0.0, X, G0)
    next_grid = cfg.sample_dt
    termination = "horizon"
    while t < t_stop * (1 - 1e-14):
        if steps >= cfg.max_steps:
            termination = "step_cap"
            break
        R = project_tangent(X, G)
        gnorm = float(np.linalg.norm(R))
        if not math.isfinite(gnorm):
            raise IntegrationError(f"non-finite gradient at t={t:.6g}", last_state=X,
                                   trajectory=build("failed", steps, H))
        dt = step_size(model, correlations(model, X), gnorm, cfg.eta)
        dt = min(dt, t_stop - t)
        if next_grid is not None:
            dt = min(dt, next_grid - t)
        X_new = polar_retract(X, -dt * R)
        H_new, G_new, G0_new = hamiltonian_and_gradients(model, X_new)
        if not (math.isfinite(H_new) and np.all(np.isfinite(G_new))):
            raise IntegrationError(f"non-finite gradient at t={t + dt:.6g}", last_state=X,
                                   trajectory=build("failed", steps, H))
        rise = (H_new - H) / max(abs(H), 1e-300)
        if H_new - H > 1e-8 * abs(H):
            rises += 1
            worst_rise = max(worst_rise, rise)
        X, H, G, G0 = X_new, H_new, G_new, G0_new
        t += dt
        steps += 1
        if next_grid is None:
            record(t, X, G0)
        elif t >= next_grid * (1 - 1e-12):
            t = next_grid  # remove roundoff from the shortened step
            record(t, X, G0)
            next_grid += cfg.sample_dt
        if t_rec is None and is_recovered(V.T @ X / N, cfg.stop_eps):
            t_rec = t
            termination = "recovered"
            if cfg.stop_on_recovery:
                t_stop = min(t_stop, t * (1.0 + cfg.settle))
    if times[-1] < t:
        record(t, X, G0)
    if termination == "recovered" and not is_recovered(snaps[-1], cfg.stop_eps):
        termination = "horizon"
    return build(termination, steps, H)


def evolve_correlations_only(model, m0, cfg=FlowConfig(), **kwargs):
    """Noiseless reduction: integrate the closed ``r x r`` system for ``m``.

    Same clock as :func:`integrate` (the right-hand side carries the factor
    ``sqrt_m``). Extra keyword arguments go to
    :func:`~spikedgf.population.integrate_population`. The result has no
    terminal point.
    """
    return integrate_population(m0, model.lambdas, model.p, cfg, signal=model.sqrt_m, **kwargs)
