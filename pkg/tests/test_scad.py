import math

import numpy as np
import pytest
import scipy.optimize
from numpy.testing import assert_allclose

from ivselect import DesignData, NonConvergenceWarning, scad_initializer
from ivselect.scad import scad_objective, scad_penalty, scad_univariate


def make_data(X, y):
    return DesignData(y=y, X=X, W=np.ones((len(y), 1)), normalized=False)


def test_penalty_segments():
    lam, a = 1.0, 3.7
    assert scad_penalty(0.0, lam, a) == 0.0
    assert scad_penalty(0.5, lam, a) == pytest.approx(0.5)
    assert scad_penalty(a * lam + 5.0, lam, a) == pytest.approx((a + 1) * lam**2 / 2)
    # continuous at the segment joints
    assert scad_penalty(lam, lam, a) == pytest.approx(
        float(scad_penalty(lam + 1e-12, lam, a)), abs=1e-9)
    assert scad_penalty(a * lam, lam, a) == pytest.approx(
        float(scad_penalty(a * lam - 1e-12, lam, a)), abs=1e-9)


def test_zero_response_gives_zero():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 6))
    theta = scad_initializer(make_data(X, np.zeros(40)))
    assert np.array_equal(theta, np.zeros(6))


def test_orthogonal_design_unbiased_segment():
    # strong signal beyond a*lam: the SCAD solution equals plain least squares
    n, p = 64, 4
    Q = np.linalg.qr(np.random.default_rng(1).standard_normal((n, p)))[0]
    X = Q * math.sqrt(n)   # columns with ||X_j||^2 = n
    theta_true = np.array([10.0, -8.0, 12.0, 9.0])
    y = X @ theta_true
    theta = scad_initializer(make_data(X, y), lambda_scad=1.0)
    ols = X.T @ y / n
    assert_allclose(theta, ols, atol=1e-10)


def test_univariate_matches_grid_search():
    rng = np.random.default_rng(5)
    for _ in range(200):
        z = float(rng.uniform(-8, 8))
        c = float(rng.uniform(0.05, 4.0))
        lam = float(rng.uniform(0.2, 2.0))
        t_hat = scad_univariate(z, c, lam)
        grid = np.linspace(-12, 12, 20001)
        vals = 0.5 * c * grid**2 - z * grid + scad_penalty(grid, lam)
        t_grid = grid[np.argmin(vals)]
        f = lambda t: 0.5 * c * t * t - z * t + float(scad_penalty(t, lam))
        assert f(t_hat) <= f(t_grid) + 1e-9


def test_objective_matches_proximal_gradient_oracle():
    rng = np.random.default_rng(7)
    n, p = 50, 10
    X = rng.standard_normal((n, p)) * rng.uniform(0.5, 2.0, size=p)
    theta_true = np.zeros(p)
    theta_true[:3] = (3.0, -2.0, 1.5)
    y = X @ theta_true + 0.5 * rng.standard_normal(n)
    lam = 0.4
    data = make_data(X, y)
    theta_cd = scad_initializer(data, lambda_scad=lam)

    # oracle: proximal gradient with an exact scalar prox found by grid
    # search plus local polish, run to tight tolerance
    step = 1.0 / np.linalg.eigvalsh(X.T @ X / n)[-1]

    def prox(v, eta):
        out = np.empty_like(v)
        grid = np.linspace(-10, 10, 4001)
        for i, vi in enumerate(v):
            vals = (grid - vi) ** 2 / (2 * eta) + scad_penalty(grid, lam)
            t0 = grid[np.argmin(vals)]
            res = scipy.optimize.minimize_scalar(
                lambda t: (t - vi) ** 2 / (2 * eta) + float(scad_penalty(t, lam)),
                bounds=(t0 - 0.01, t0 + 0.01), method="bounded",
                options={"xatol": 1e-12})
            out[i] = res.x if res.fun <= vals.min() else t0
        return out

    theta_pg = np.zeros(p)
    for _ in range(4000):
        grad = -X.T @ (y - X @ theta_pg) / n
        new = prox(theta_pg - step * grad, step)
        if np.max(np.abs(new - theta_pg)) < 1e-12:
            theta_pg = new
            break
        theta_pg = new

    f_cd = scad_objective(theta_cd, X, y, lam)
    f_pg = scad_objective(theta_pg, X, y, lam)
    assert f_cd <= f_pg + 1e-6


def test_nonconvergence_warns():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((30, 8))
    y = rng.standard_normal(30)
    with pytest.warns(NonConvergenceWarning):
        scad_initializer(make_data(X, y), lambda_scad=0.05, max_passes=1)


def test_rejects_bad_parameters():
    data = make_data(np.ones((5, 1)), np.ones(5))
    with pytest.raises(ValueError):
        scad_initializer(data, lambda_scad=0.0)
    with pytest.raises(ValueError):
        scad_initializer(data, a=2.0)
