import numpy as np
import pytest

from pulseforge.simplex import nelder_mead


def rosenbrock(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


def test_rosenbrock():
    res = nelder_mead(rosenbrock, [-1.2, 1.0])
    assert res.fun < 1e-8
    assert np.allclose(res.x, [1, 1], atol=1e-3)
    assert res.converged


def test_quadratic_8d():
    c = np.arange(8) / 3.0
    res = nelder_mead(lambda x: np.sum((x - c) ** 2), np.zeros(8))
    assert np.max(np.abs(res.x - c)) < 1e-6


def test_history_non_increasing():
    res = nelder_mead(rosenbrock, [-1.2, 1.0], record_history=True)
    h = np.array(res.history)
    # initial simplex plus one entry per iteration
    assert len(h) == res.nit + 1
    assert np.all(np.diff(h) <= 0)


def test_budget_exhaustion_flags_non_converged():
    res = nelder_mead(rosenbrock, [-1.2, 1.0], max_fev=30)
    assert not res.converged
    assert res.nfev <= 30 + 3
    assert res.fun <= rosenbrock([-1.2, 1.0])


def test_deterministic():
    a = nelder_mead(rosenbrock, [-1.2, 1.0], max_fev=500)
    b = nelder_mead(rosenbrock, [-1.2, 1.0], max_fev=500)
    assert np.array_equal(a.x, b.x) and a.fun == b.fun


def test_non_finite_values_are_avoided():
    f = lambda x: np.nan if x[0] > 0.5 else (x[0] - 0.4) ** 2 + x[1] ** 2
    res = nelder_mead(f, [0.0, 0.3])
    assert np.isfinite(res.fun) and res.fun < 1e-10


def test_non_finite_start_rejected():
    with pytest.raises(ValueError):
        nelder_mead(lambda x: np.inf, [0.0])


def test_bad_coefficients():
    with pytest.raises(ValueError):
        nelder_mead(rosenbrock, [0.0, 0.0], rho=0)
