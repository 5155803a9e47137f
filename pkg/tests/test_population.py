import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import spikedgf.population as population
from spikedgf.errors import ReductionBreakdownError
from spikedgf.manifold import sample_positive, sample_uniform
from spikedgf.model import correlations, generate
from spikedgf.dynamics import integrate
from spikedgf.population import (
    POPULATION_CONFIG,
    default_eps_prime,
    detect_elimination,
    integrate_population,
    population_rhs,
)
from spikedgf.theory import greedy_selection, init_matrix
from spikedgf.trajectory import FlowConfig, Trajectory


def test_rhs_examples():
    assert math.isclose(population_rhs([[0.5]], [2.0], 3)[0, 0], 2.25)
    assert np.allclose(population_rhs(np.eye(3), [3, 2, 1], 3), 0, atol=1e-14)


def test_rhs_early_phase_matches_leading_term():
    rng = np.random.default_rng(0)
    lam = np.array([3.0, 2.0, 1.0])
    for p in (3, 4):
        for _ in range(50):
            m = rng.uniform(0.005, 0.01, (3, 3)) * rng.choice([-1, 1], (3, 3))
            lead = p * np.outer(lam, lam) * m ** (p - 1)
            assert np.all(np.abs(population_rhs(m, lam, p) / lead - 1) <= 0.05)


def test_scalar_example_rk4():
    cfg = FlowConfig(t_max=10.0, sample_dt=0.01, stop_on_recovery=False)
    tr = integrate_population([[0.5]], [2.0], 3, cfg, method="RK4")
    m = tr.series(0, 0)
    assert np.all(np.diff(m) >= 0)
    assert abs(m[-1] - 1) <= 1e-6
    # scalar oracle: dm/dt = p lam^2 (m^{p-1} - m^{p+1})
    sol = solve_ivp(lambda t, y: 12 * (y**2 - y**4), (0, 10), [0.5], t_eval=tr.times, rtol=1e-12, atol=1e-14,
                    method="Radau")
    assert np.max(np.abs(sol.y[0] - m)) <= 1e-8


@pytest.mark.parametrize("method", ["LSODA", "DOP853", "RK4"])
def test_diagonal_invariant_subspace(method):
    cfg = FlowConfig(t_max=200.0)
    tr = integrate_population(np.diag([0.01, 0.02]), [2.0, 1.0], 3, cfg, method=method)
    assert np.all(tr.snapshots[:, 0, 1] == 0) and np.all(tr.snapshots[:, 1, 0] == 0)
    assert abs(tr.final[0, 0] - 1) < 1e-4 and abs(tr.final[1, 1] - 1) < 1e-4


def test_fixed_points():
    for m0 in (np.eye(3), np.zeros((3, 3))):
        tr = integrate_population(m0, [3, 2, 1], 3, FlowConfig(t_max=5.0, stop_on_recovery=False))
        assert np.all(tr.snapshots == m0)


def test_rejects_bad_initial_state():
    with pytest.raises(ValueError):
        integrate_population(2 * np.eye(2), [1, 1], 3)
    with pytest.raises(ValueError):
        integrate_population(np.zeros((2, 3)), [1, 1], 3)
    with pytest.raises(ValueError):
        integrate_population(np.zeros((2, 2)), [1, 1, 1], 3)
    with pytest.raises(ValueError):
        integrate_population(np.zeros((2, 2)), [1, 1], 3, method="Euler")


def test_breakdown_is_reported(monkeypatch):
    monkeypatch.setattr(population, "population_rhs", lambda m, lam, p: m)
    with pytest.raises(ReductionBreakdownError) as exc:
        integrate_population(0.5 * np.eye(2), [1, 1], 3, FlowConfig(t_max=10.0))
    assert exc.value.trajectory.termination == "failed"
    assert np.linalg.norm(exc.value.last_state, 2) > 1


def _closed_form(m0, LL, p, t, factor=1.0):
    return m0 / (1 - factor * LL * p * (p - 2) * m0 ** (p - 2) * t) ** (1 / (p - 2))


@pytest.mark.parametrize("p", [3, 4])
def test_early_phase_envelope(p):
    # entries bounded away from zero; near-zero entries are dominated by the coupling (see ledger)
    rng = np.random.default_rng(1)
    lam = np.array([3.0, 2.0, 1.0])
    LL = np.outer(lam, lam)
    scale = 1 / math.sqrt(1000) if p == 3 else 0.06
    for _ in range(20):
        m0 = rng.uniform(0.5, 1.0, (3, 3)) * scale
        tr = integrate_population(m0, lam, p)
        A = tr.snapshots
        k = int(np.argmax(np.abs(A).reshape(len(tr.times), -1).max(axis=1) >= 0.1))
        assert k > 5
        ratio = A[:k] / np.array([_closed_form(m0, LL, p, t) for t in tr.times[:k]])
        assert np.all(np.abs(ratio - 1) <= 0.05)


def test_singular_values_bounded():
    rng = np.random.default_rng(2)
    for _ in range(10):
        m0 = rng.uniform(0, 1 / math.sqrt(1000), (3, 3))
        tr = integrate_population(m0, [3, 2, 1], 3)
        assert tr.max_singular_value() <= 1 + 1e-6


def test_sign_behaviour_odd_and_even():
    cfg = FlowConfig(t_max=1e4, stop_on_recovery=False)
    odd = integrate_population([[-0.3]], [1.0], 3, cfg)
    assert np.all(odd.series(0, 0) < 0) and odd.final[0, 0] > -0.3
    assert np.all(np.diff(odd.series(0, 0)) >= 0)
    for s in (-1, 1):
        even = integrate_population([[0.3 * s]], [1.0], 4, FlowConfig(t_max=1e4))
        assert even.termination == "recovered"
        assert np.sign(even.final[0, 0]) == s and abs(even.final[0, 0]) >= 0.9


def test_elimination_order_matches_greedy():
    rng = np.random.default_rng(0)
    lam = np.array([3.0, 2.0, 1.0])
    exact = consistent = 0
    for _ in range(20):
        m0 = rng.uniform(0, 1 / math.sqrt(1000), (3, 3))
        sel = greedy_selection(init_matrix(m0, lam, 3))
        rep = detect_elimination(integrate_population(m0, lam, 3), prediction=sel)
        exact += rep.matched_prediction
        consistent += rep.consistent_with_prediction
    assert consistent == 20
    assert exact >= 17


def _synthetic(times, m11, m22, mate=None):
    n = len(times)
    snaps = np.zeros((n, 2, 2))
    snaps[:, 0, 0], snaps[:, 1, 1] = m11, m22
    if mate is not None:
        snaps[:, 0, 1] = mate
    return Trajectory(times=times, snapshots=snaps)


def test_detect_synthetic_ordering():
    t = np.arange(6.0)
    tr = _synthetic(t, [0.1, 0.5, 0.95, 0.97, 0.99, 0.99], [0.0, 0.1, 0.3, 0.6, 0.92, 0.99],
                    mate=[0.1, 0.2, 0.1, 0.04, 0.0, 0.0])
    rep = detect_elimination(tr, eps=0.1, eps_prime=0.05)
    assert rep.ordering == [(0, 0, 2.0), (1, 1, 4.0)]
    assert rep.suppressed[(0, 0)] == pytest.approx(0.1)
    assert rep.suppression_times[(0, 0)] == 3.0
    js = rep.to_json()
    assert js["ordering"][0] == {"i": 1, "j": 1, "T": 2.0}
    assert js["matched_prediction"] is None


def test_detect_transient_and_empty():
    t = np.arange(5.0)
    tr = _synthetic(t, [0.5, 0.95, 0.5, 0.4, 0.3], [0.1, 0.2, 0.5, 0.91, 0.95])
    rep = detect_elimination(tr)
    assert rep.ordering == [(1, 1, 3.0)]
    assert rep.transients == [(0, 0, 1.0)]
    empty = detect_elimination(Trajectory(times=t, snapshots=np.zeros((5, 3, 3))))
    assert empty.ordering == [] and empty.transients == []


def test_detect_against_prediction():
    t = np.arange(3.0)
    tr = _synthetic(t, [0.1, 0.5, 0.95], [0.1, 0.95, 0.97])
    sel = greedy_selection([[1.0, 0.0], [0.0, 2.0]])
    rep = detect_elimination(tr, prediction=sel)
    assert rep.pairs == [(1, 1), (0, 0)] and rep.matched_prediction
    rep = detect_elimination(tr, prediction=greedy_selection([[2.0, 0.0], [0.0, 1.0]]))
    assert rep.matched_prediction is False and rep.consistent_with_prediction is False


def test_default_eps_prime():
    assert default_eps_prime() == 0.05
    assert math.isclose(default_eps_prime(1000, 3), 10 * 1000 ** -0.5 / math.sqrt(math.log(1000)))


def test_weak_spike_is_lost_in_noisy_flow():
    # lambda = (2, 1, 0.1), desk-scale N with sqrt_m = sqrt(N)
    N = 150
    mod = generate(3, 3, N, [2.0, 1.0, 0.1], math.sqrt(N), seed=3)
    rng = np.random.default_rng(4)
    X0 = sample_positive(mod.spikes, rng)
    tr = integrate(mod, X0, FlowConfig(eta=0.04, t_max=10.0))
    rep = detect_elimination(tr, eps=0.1)
    assert len(rep.ordering) == 2
    assert all(i != 2 for i, _ in rep.pairs)
