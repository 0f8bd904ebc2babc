import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaselens.core import DomainError, complex_gaussian, make_rng
from phaselens.metrics import dist_up_to_phase, error_report, lifted_distance, rate_bound

from oracles import dist_grid


def test_pure_phase(rng):
    v = complex_gaussian(rng, 5)
    assert dist_up_to_phase(v, v)[0] == 0
    dist, theta = dist_up_to_phase(np.exp(1j * math.pi / 3) * v, v)
    assert dist <= 1e-14
    assert theta == pytest.approx(math.pi / 3, abs=1e-14)


def test_orthogonal_units():
    dist, theta = dist_up_to_phase(np.array([1, 0]), np.array([0, 1j]))
    assert dist == pytest.approx(math.sqrt(2), rel=1e-15)
    assert theta == 0.0


def test_grid_oracle(rng):
    for _ in range(100):
        u, v = complex_gaussian(rng, 4), complex_gaussian(rng, 4)
        dist, theta = dist_up_to_phase(u, v)
        assert abs(dist - dist_grid(u, v)) <= 1e-6 * (1 + dist)
        assert dist == pytest.approx(np.linalg.norm(u - np.exp(1j * theta) * v), rel=1e-10)
        assert 0 <= theta < 2 * math.pi


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32), re=st.floats(-5, 5), im=st.floats(-5, 5))
def test_dist_properties(seed, re, im):
    rng = make_rng(seed)
    u, v = complex_gaussian(rng, 3), complex_gaussian(rng, 3)
    d_uv = dist_up_to_phase(u, v)[0]
    assert d_uv == pytest.approx(dist_up_to_phase(v, u)[0], rel=1e-12)
    assert 0 <= d_uv <= np.linalg.norm(u) + np.linalg.norm(v)
    c = complex(re, im)
    if abs(c) > 1e-3:
        assert abs(dist_up_to_phase(c * u, c * v)[0] - abs(c) * d_uv) <= 1e-12 * abs(c) * d_uv + 1e-15
    assert error_report(u, v, np.ones(7), 7).inequality_ok


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        dist_up_to_phase(np.ones(3), np.ones(4))
    with pytest.raises(DomainError):
        error_report(np.ones(3), np.ones(3), np.ones(5), 4)


def test_claim_inequality_monte_carlo():
    rng = make_rng(3)
    n, d = 100_000, 4
    U = complex_gaussian(rng, (n, d))
    V = complex_gaussian(rng, (n, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    ip = np.abs(np.sum(V.conj() * U, axis=1))
    dist = np.sqrt(np.maximum(2 - 2 * ip, 0))
    # ||uu* - vv*||_F^2 = 2 - 2|<u,v>|^2 for unit vectors
    lifted = np.sqrt(np.maximum(2 - 2 * ip ** 2, 0))
    assert np.all(dist <= 2 * lifted + 1e-12)
    for k in range(200):
        assert error_report(U[k], V[k], np.ones(3), 3).inequality_ok
        assert lifted_distance(U[k], V[k]) == pytest.approx(lifted[k], abs=1e-12)


def test_error_report_conventions(rng):
    x0 = complex_gaussian(rng, 4)
    x_hat = x0 + 0.1 * complex_gaussian(rng, 4)
    rep = error_report(x_hat, x0, np.zeros(10), 10)
    assert rep.rho_m == 0 and rep.bound == 0
    eta = rng.standard_normal(10)
    rep = error_report(x_hat, x0, eta, 10)
    en, xn = np.linalg.norm(eta), np.linalg.norm(x0)
    assert rep.rho_m == pytest.approx(rep.dist * xn * math.sqrt(10) / en, rel=1e-12)
    assert rep.bound == pytest.approx(min(math.sqrt(en) / 10 ** 0.25, en / (xn * math.sqrt(10))))
    assert rep.dist == pytest.approx(np.linalg.norm(x_hat - np.exp(1j * rep.theta_star) * x0))
    assert set(rep.to_dict()) == {"dist", "theta_star", "rho_m", "bound", "lifted_dist",
                                  "inequality_ok"}
    assert rate_bound(4.0, 0.0, 16) == 1.0
