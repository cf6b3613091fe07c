"""Stationary analysis: frozen reference values for the running example
plus structural identities that hold for any instance.

Reference numbers were frozen from an exact fraction-arithmetic solve of
the balance equations, then rounded once to double precision.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minwork.chain import (
    DaggerDecomposition,
    NonUniqueStationaryError,
    communicating_classes,
    dagger_rates,
    decompose_dagger_policy,
    max_service_rate,
    mixing_constants,
    potential_function,
    service_rate,
    service_reward,
    stationary_pmf,
    stationary_pmf_y,
    threshold_policy,
    threshold_rates,
    utilization_rate_y,
)
from minwork.model import PolicyY, ServerSpec, ybar_matrix

# (tau, service rate, utilization rate) for the five-state example
REFERENCE_TABLE = (
    (1, 0.0, 0.0),
    (2, 0.03470432078675262, 0.23827654760551015),
    (3, 0.19929742388758798, 0.4309133489461357),
    (4, 0.19473684210526307, 0.6315789473684211),
    (5, 0.3, 0.857142857142857),
    (6, 0.05, 1.0),
)


def test_stationary_pmf_two_state():
    # balance: pi0 * 0.1 = pi1 * 0.6, so pi = (6/7, 1/7)
    P = np.array([[0.9, 0.1], [0.6, 0.4]])
    np.testing.assert_allclose(stationary_pmf(P), [6 / 7, 1 / 7], atol=1e-14)


def test_stationary_pmf_skips_transient_states():
    # state 2 drains into the 2-cycle {0, 1} and carries no mass
    P = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.0, 0.5]])
    np.testing.assert_allclose(stationary_pmf(P), [0.5, 0.5, 0.0], atol=1e-14)


def test_stationary_pmf_rejects_two_recurrent_classes():
    P = np.eye(2)
    with pytest.raises(NonUniqueStationaryError) as err:
        stationary_pmf(P)
    classes = err.value.classes
    assert sum(1 for _, rec in classes if rec) == 2


def test_communicating_classes_partition():
    P = np.array(
        [
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.1, 0.0, 0.9, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    classes = {tuple(c): rec for c, rec in communicating_classes(P)}
    assert classes == {(0, 1): True, (2,): False, (3,): True}


def test_threshold_policy_shape():
    phi = threshold_policy(5, 3)
    np.testing.assert_array_equal(phi.work_prob, [1.0, 1.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        threshold_policy(5, 7)
    with pytest.raises(ValueError):
        threshold_policy(5, 0)


def test_threshold_rate_table(spec5):
    for tau, nu, u in REFERENCE_TABLE:
        got_nu, got_u = threshold_rates(spec5, tau)
        assert got_nu == pytest.approx(nu, abs=1e-12), f"tau={tau}"
        assert got_u == pytest.approx(u, abs=1e-12), f"tau={tau}"


def test_max_service_rate(spec5, spec2):
    assert max_service_rate(spec5) == (pytest.approx(0.3, abs=1e-12), 5)
    nu2, tau2 = max_service_rate(spec2)
    assert tau2 == 2
    assert nu2 == pytest.approx(0.4024390243902438, abs=1e-12)


def test_max_service_rate_single_state():
    spec = ServerSpec(n_s=1, mu=np.array([0.35]), rho_up=np.array([0.0]), rho_down=np.array([0.0]))
    nu, tau = max_service_rate(spec)
    # always-work completes at rate mu(1) every step
    assert (nu, tau) == (pytest.approx(0.35, abs=1e-15), 2)


def test_rates_need_positive_bottom_work(spec5):
    # tau = 1 rests everywhere when available; its chain sinks to (1, A)
    nu, u = threshold_rates(spec5, 1)
    assert nu == 0.0 and u == 0.0


def test_potential_identity_threshold_policies(spec5):
    for tau in range(2, 7):
        phi = threshold_policy(5, tau)
        P = ybar_matrix(spec5, phi)
        g = service_reward(spec5, phi)
        pot = potential_function(P, g)
        resid = np.max(np.abs(g - (P @ pot.h - pot.h) - pot.r_avg))
        assert resid < 1e-9
        assert pot.r_avg == pytest.approx(service_rate(spec5, phi), abs=1e-10)
        assert pot.h.min() == 0.0


def test_potential_accepts_transition_rewards():
    P = np.array([[0.9, 0.1], [0.6, 0.4]])
    R = np.array([[0.0, 1.0], [1.0, 0.0]])  # reward on switching
    pot = potential_function(P, R)
    g = np.einsum("ij,ij->i", P, R)
    assert pot.r_avg == pytest.approx(stationary_pmf(P) @ g, abs=1e-12)


def test_mixing_constants_recomputed(spec5):
    lam, eps = 0.15, 1e-3
    mc = mixing_constants(spec5, lam, eps, s_star=5)

    # recompute the printed products from scratch
    n = spec5.n_s
    two_n = 2 * n
    bt = (
        eps
        * lam
        * (1 - lam) ** two_n
        * np.min(1 - spec5.mu) ** two_n
        * np.min(spec5.mu)
        * np.prod(spec5.rho_down[1:])
        * np.prod(spec5.rho_up[:-1])
        * np.min((1 - spec5.rho_up) * (1 - spec5.rho_down)) ** two_n
    )
    at = eps * (1 - spec5.mu[-1]) ** two_n * np.prod(
        (1 - spec5.mu[:-1]) * spec5.rho_down[1:] * spec5.rho_up[:-1]
    )
    assert mc.beta_tilde == pytest.approx(bt, rel=1e-12)
    assert mc.alpha_tilde == pytest.approx(at, rel=1e-12)
    assert mc.K_eps == pytest.approx(1 / (1 - at), rel=1e-12)
    assert mc.sigma_eps ** two_n == pytest.approx(1 - at, rel=1e-9)
    assert mc.one_minus_sigma > 0.0
    assert mc.eta_eps == pytest.approx(
        4 * n + 2 * mc.K_eps * mc.sigma_eps ** (two_n + 1) / mc.one_minus_sigma, rel=1e-9
    )
    assert mc.beta == pytest.approx(lam * (1 - spec5.rho_down[4]) * bt, rel=1e-12)
    assert not mc.degenerate

    # constants scale linearly in eps through beta_tilde
    mc2 = mixing_constants(spec5, lam, 2 * eps, s_star=5)
    assert mc2.beta_tilde == pytest.approx(2 * mc.beta_tilde, rel=1e-12)


def test_mixing_constants_degenerate_and_s_star(spec5):
    mc0 = mixing_constants(spec5, 0.15, 0.0)
    assert mc0.degenerate
    assert mc0.beta_tilde == 0.0 and mc0.alpha_tilde == 0.0
    assert mc0.K_eps == 1.0
    # worst-case resolution picks the largest rho_down
    assert mc0.s_star == 5
    phi = threshold_policy(5, 3)
    mc1 = mixing_constants(spec5, 0.15, 1e-3, phi=phi)
    assert 1 <= mc1.s_star <= 5
    with pytest.raises(ValueError):
        mixing_constants(spec5, 0.15, 1e-3, s_star=9)


def test_decompose_pure_threshold(spec5):
    dec = decompose_dagger_policy(spec5, threshold_policy(5, 4))
    assert isinstance(dec, DaggerDecomposition)
    nu, u = dagger_rates(spec5, dec)
    assert nu == pytest.approx(0.19473684210526307, abs=1e-12)
    assert u == pytest.approx(0.6315789473684211, abs=1e-12)


def test_decompose_single_fraction_frozen(spec5):
    phi = PolicyY(np.array([1.0, 1.0, 0.0, 0.8, 0.0]))
    dec = decompose_dagger_policy(spec5, phi)
    assert (dec.tau1, dec.tau2) == (3, 5)
    assert dec.alpha == pytest.approx(0.38443056222969696, abs=1e-12)
    nu, u = dagger_rates(spec5, dec)
    assert nu == pytest.approx(service_rate(spec5, phi), abs=1e-12)
    assert u == pytest.approx(utilization_rate_y(spec5, phi), abs=1e-12)


def test_decompose_splits_stationary_pmf(spec5):
    phi = PolicyY(np.array([1.0, 0.35, 0.0, 0.0, 0.0]))
    dec = decompose_dagger_policy(spec5, phi)
    pi = stationary_pmf_y(spec5, phi)
    pi1 = stationary_pmf_y(spec5, threshold_policy(5, dec.tau1))
    pi2 = stationary_pmf_y(spec5, threshold_policy(5, dec.tau2))
    np.testing.assert_allclose((1 - dec.alpha) * pi1 + dec.alpha * pi2, pi, atol=1e-12)


def test_decompose_rejects_two_fractions(spec5):
    with pytest.raises(ValueError):
        decompose_dagger_policy(spec5, PolicyY(np.array([1.0, 0.5, 0.5, 0.0, 0.0])))


def test_no_policy_beats_best_threshold(spec5):
    # 200 random policies with a working bottom state; the best
    # threshold rate is an upper bound on every service rate
    rng = np.random.default_rng(7)
    nu_star, _ = max_service_rate(spec5)
    for _ in range(200):
        wp = rng.random(5)
        wp[0] = max(wp[0], 0.05)
        nu = service_rate(spec5, PolicyY(wp))
        assert nu <= nu_star + 1e-9


def test_chain_mixes_from_any_start(spec5):
    P = ybar_matrix(spec5, threshold_policy(5, 5))
    pi = stationary_pmf(P)
    Pk = np.linalg.matrix_power(P, 4096)
    for row in Pk:
        assert np.max(np.abs(row - pi)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(data=st.data())
def test_threshold_rates_bounded_by_mu(data):
    n = data.draw(st.integers(2, 4))
    unit = st.floats(0.05, 0.95)
    spec = ServerSpec(
        n_s=n,
        mu=np.array(data.draw(st.lists(unit, min_size=n, max_size=n))),
        rho_up=np.array(data.draw(st.lists(unit, min_size=n - 1, max_size=n - 1)) + [0.0]),
        rho_down=np.array([0.0] + data.draw(st.lists(unit, min_size=n - 1, max_size=n - 1))),
    )
    for tau in range(1, n + 2):
        nu, u = threshold_rates(spec, tau)
        assert -1e-12 <= nu <= spec.mu.max() + 1e-12
        assert -1e-12 <= u <= 1.0 + 1e-12
        assert nu <= u + 1e-12  # completing requires working
