import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ropdf.closure import (ClosureFitError, ClosureModel, CoefficientField, GlobalLinearFit,
                           coefficient_field, cv_bandwidth_grid, fit_closure, fit_global_linear,
                           fit_local_linear, fit_lowess_2d, write_coefficients_csv, _cv_folds)


def binned_mean(x, y, q, n_bins=50):
    edges = np.linspace(x.min(), x.max(), n_bins + 1)
    k = np.clip(np.searchsorted(edges, q, side="right") - 1, 0, n_bins - 1)
    sel = (x >= edges[k]) & (x <= edges[k + 1])
    return y[sel].mean()


# --- global linear ---------------------------------------------------------

def test_global_exact_affine():
    x = np.linspace(-1, 3, 20)
    f = fit_global_linear(x, 2 * x + 1)
    assert f.intercept == pytest.approx(1.0, abs=1e-10)
    assert f.slope[0] == pytest.approx(2.0, abs=1e-10)


def test_global_normal_equations_value():
    f = fit_global_linear([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0])
    assert f.slope[0] == pytest.approx(0.0, abs=1e-12)
    assert f.intercept == pytest.approx(2 / 3, abs=1e-12)


def test_global_constant_coordinate_named():
    with pytest.raises(ClosureFitError, match="coordinate 0"):
        fit_global_linear(np.ones(10), np.arange(10.0))
    X = np.column_stack([np.arange(10.0), np.full(10, 3.0)])
    with pytest.raises(ClosureFitError, match="coordinate 1"):
        fit_global_linear(X, np.arange(10.0))


def test_global_2d_affine():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 2))
    f = fit_global_linear(X, 0.5 - X[:, 0] + 4 * X[:, 1])
    Q = rng.normal(size=(7, 2))
    assert np.allclose(f(Q), 0.5 - Q[:, 0] + 4 * Q[:, 1], atol=1e-10)


# --- local linear ----------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 10_000))
def test_local_linear_affine_exact_any_bandwidth(h, slope, icpt, seed):
    x = np.random.default_rng(seed).uniform(0, 4, 200)
    fit = fit_local_linear(x, slope * x + icpt, bandwidth=h)
    q = np.linspace(x.min(), x.max(), 25)
    assert np.allclose(fit(q), slope * q + icpt, atol=1e-6 * max(1.0, abs(slope), abs(icpt)))


def test_local_linear_spec_affine_example():
    x = np.random.default_rng(1).normal(size=500)
    fit = fit_local_linear(x, 3 * x - 2)
    q = np.linspace(-1.5, 1.5, 11)
    assert np.allclose(fit(q), 3 * q - 2, atol=1e-8)


def test_local_linear_quadratic_against_binned_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=5000)
    y = x ** 2 + rng.normal(0, 0.01, size=5000)
    pred = float(fit_local_linear(x, y)(np.array([1.0]))[0])
    assert abs(pred - 1.0) <= 0.05
    assert abs(pred - binned_mean(x, y, 1.0)) <= 0.05


def test_local_linear_infinite_bandwidth_is_global_fit():
    rng = np.random.default_rng(3)
    x = rng.normal(size=300)
    y = np.sin(2 * x) + 0.1 * rng.normal(size=300)
    q = np.linspace(-1, 1, 9)
    assert np.allclose(fit_local_linear(x, y, bandwidth=1e7)(q), fit_global_linear(x, y)(q), atol=1e-6)


def test_local_linear_extrapolates_constant():
    x = np.linspace(0, 1, 100)
    fit = fit_local_linear(x, x ** 2, bandwidth=0.1)
    assert fit(np.array([5.0]))[0] == pytest.approx(fit(np.array([1.0]))[0])
    assert fit(np.array([-5.0]))[0] == pytest.approx(fit(np.array([0.0]))[0])


def test_local_linear_errors():
    with pytest.raises(ClosureFitError):
        fit_local_linear(np.arange(10.0), np.arange(10.0))
    with pytest.raises(ClosureFitError, match="variance"):
        fit_local_linear(np.ones(100), np.arange(100.0))
    with pytest.raises(ClosureFitError, match="folds"):
        fit_local_linear(np.arange(40.0), np.arange(40.0), n_folds=50)
    with pytest.raises(ClosureFitError):
        fit_local_linear(np.arange(40.0), np.arange(40.0), bandwidth=-1.0)


def test_cv_grid_and_folds():
    x = np.random.default_rng(0).normal(0, 2, 1000)
    g = cv_bandwidth_grid(x)
    assert g.size == 10
    assert g[0] == pytest.approx(0.1 * np.std(x)) and g[-1] == pytest.approx(2 * np.std(x))
    assert np.allclose(np.diff(np.log(g)), np.log(20) / 9)
    folds = _cv_folds(103, 10, seed=4)
    assert len(folds) == 10 and sorted(np.concatenate(folds)) == list(range(103))
    assert {f.size for f in folds} <= {10, 11}


def test_cv_deterministic_and_seed_dependent():
    rng = np.random.default_rng(5)
    x = rng.normal(size=400)
    y = np.tanh(x) + 0.3 * rng.normal(size=400)
    a, b = fit_local_linear(x, y, seed=1), fit_local_linear(x, y, seed=1)
    assert a.bandwidth == b.bandwidth and np.array_equal(a.cv_scores, b.cv_scores)
    c = fit_local_linear(x, y, seed=2)
    assert not np.array_equal(a.cv_scores, c.cv_scores)


def test_cv_tie_goes_to_larger_bandwidth():
    x = np.random.default_rng(6).normal(size=200)
    fit = fit_local_linear(x, 2 * x)  # every bandwidth is exact
    assert fit.bandwidth == pytest.approx(cv_bandwidth_grid(x)[-1])


def test_ou_slope_recovery():
    theta, alpha = 1.0, 0.05
    rng = np.random.default_rng(7)
    eta = alpha * rng.normal(size=5000)
    # drift sample -theta*eta plus the Ito increment scaled to a single step
    mu = -theta * eta + alpha * np.sqrt(2 * theta) * rng.normal(size=5000) / np.sqrt(1e-2) * 1e-2
    fit = fit_local_linear(eta, mu)
    q = np.linspace(-alpha, alpha, 21)
    slope = np.polyfit(q, fit(q), 1)[0]
    assert slope == pytest.approx(-theta, rel=0.05)


def test_binned_discrepancy_does_not_grow_with_m():
    def disc(m, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=m)
        y = np.sin(x) + 0.2 * rng.normal(size=m)
        q = np.linspace(-1, 1, 11)
        return np.mean(np.abs(fit_local_linear(x, y, bandwidth=0.3)(q) - np.sin(q)))
    small = np.mean([disc(1000, s) for s in range(10)])
    large = np.mean([disc(2000, s) for s in range(10)])
    assert large <= small


# --- lowess ----------------------------------------------------------------

@pytest.mark.parametrize("span", [0.05, 0.3, 1.0])
def test_lowess_affine_exact(span):
    rng = np.random.default_rng(8)
    X = rng.normal(size=(400, 2)) * [1.0, 10.0]
    y = 1 + 2 * X[:, 0] - 0.5 * X[:, 1]
    Q = rng.normal(size=(15, 2))
    assert np.allclose(fit_lowess_2d(X, y, span)(Q), 1 + 2 * Q[:, 0] - 0.5 * Q[:, 1], atol=1e-6)


def test_lowess_bilinear_against_binned_oracle():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(10_000, 2))
    y = X[:, 0] * X[:, 1] + rng.normal(0, 0.01, size=10_000)
    pred = float(fit_lowess_2d(X, y, 0.3)(np.array([[1.0, 1.0]]))[0])
    assert abs(pred - 1.0) <= 0.1
    e = np.linspace(-4, 4, 21)
    i, j = np.searchsorted(e, 1.0) - 1, np.searchsorted(e, 1.0) - 1
    sel = (X[:, 0] >= e[i]) & (X[:, 0] < e[i + 1]) & (X[:, 1] >= e[j]) & (X[:, 1] < e[j + 1])
    assert abs(pred - y[sel].mean()) <= 0.1


def test_lowess_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ClosureFitError, match="local points"):
        fit_lowess_2d(rng.normal(size=(20, 2)), np.zeros(20), span=0.1)
    with pytest.raises(ClosureFitError):
        fit_lowess_2d(rng.normal(size=(40, 2)), np.zeros(40), span=0.5)
    X = np.column_stack([rng.normal(size=100), np.zeros(100)])
    with pytest.raises(ClosureFitError, match="coordinate 1"):
        fit_lowess_2d(X, np.zeros(100))


# --- time interpolation ----------------------------------------------------

def _const_model(values):
    fits = tuple(GlobalLinearFit(float(c), np.zeros(1)) for c in values)
    return ClosureModel("global-linear", np.arange(len(values), dtype=float), fits)


def test_coefficient_field_interpolation():
    model = _const_model([1.0, 3.0, -1.0])
    pts = np.linspace(0, 1, 5)
    assert np.array_equal(coefficient_field(model, 1.0, pts), model.evaluate(1, pts))
    assert np.allclose(coefficient_field(model, 0.5, pts), 2.0)
    assert np.allclose(coefficient_field(model, 1.75, pts), 0.0)
    assert np.allclose(coefficient_field(model, 2.0, pts), -1.0)
    with pytest.raises(ValueError):
        coefficient_field(model, 2.5, pts)
    with pytest.raises(ValueError):
        coefficient_field(model, -0.1, pts)


def test_closure_model_validates_knots():
    with pytest.raises(ValueError):
        ClosureModel("global-linear", np.array([0.0, 0.0]), (None, None))
    with pytest.raises(ValueError):
        ClosureModel("global-linear", np.array([0.0, 1.0]), (None,))


def test_fit_closure_knots_and_cv_carry():
    rng = np.random.default_rng(10)
    times = np.linspace(0, 1, 7)
    x = rng.normal(size=(300, 7)) * (1 + times)
    y = -x + 0.1 * rng.normal(size=(300, 7))
    model = fit_closure(times, x, y, "local-linear", cv_every=3)
    assert model.bandwidth.size == 7
    rel = model.bandwidth / x.std(axis=0)
    assert rel[1] == pytest.approx(rel[0]) and rel[2] == pytest.approx(rel[0])
    pts = np.linspace(-1, 1, 5)
    assert np.allclose(CoefficientField(model, pts)(0.0), -pts, atol=0.1)
    g = fit_closure(times, x, y, "global-linear")
    assert g.bandwidth is None and len(g.fits) == 7


def test_fit_closure_error_names_knot():
    x = np.random.default_rng(0).normal(size=(100, 3))
    x[:, 2] = 1.0
    with pytest.raises(ClosureFitError, match=r"knot 2 \(t=2\) for 4-9"):
        fit_closure(np.arange(3.0), x, x, "local-linear", label="4-9")
    with pytest.raises(ValueError):
        fit_closure(np.arange(3.0), x, x, "spline")


def test_coefficients_csv(tmp_path):
    model = _const_model([1.0, 2.0])
    p = tmp_path / "c.csv"
    write_coefficients_csv(model, np.array([0.0, 0.5]), p, scale=2.0)
    rows = p.read_text().splitlines()
    assert rows[0] == "t,U1,value" and len(rows) == 5
    assert rows[-1].split(",")[-1] == "4.0"
