"""Regression closures for the coefficients of reduced-order PDF equations.

Each closure estimates a conditional expectation ``E[y | x]`` from Monte Carlo
samples at a set of time knots. Three smoothers are provided: a global affine
least-squares fit, a Gaussian-kernel local linear fit (1D) with cross-validated
bandwidth, and a tricube-weighted local linear fit over nearest neighbours in
2D (lowess).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

__all__ = [
    "ClosureFitError",
    "GlobalLinearFit",
    "LocalLinearFit",
    "Lowess2DFit",
    "ClosureModel",
    "CoefficientField",
    "fit_global_linear",
    "fit_local_linear",
    "fit_lowess_2d",
    "fit_closure",
    "coefficient_field",
    "cv_bandwidth_grid",
    "write_coefficients_csv",
]

MIN_LOCAL_SAMPLES = 30
MIN_LOWESS_SAMPLES = 50
_CHUNK = 256


class ClosureFitError(ValueError):
    """Raised when a regression cannot be fitted; names the knot when known."""


# ---------------------------------------------------------------------------
# global affine fit


@dataclass(frozen=True)
class GlobalLinearFit:
    intercept: float
    slope: np.ndarray

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.slope.size == 1:
            return self.intercept + self.slope[0] * q.reshape(q.shape[0], -1)[:, 0] if q.ndim > 1 \
                else self.intercept + self.slope[0] * q
        return self.intercept + q @ self.slope


def _design(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def fit_global_linear(x, y) -> GlobalLinearFit:
    """Ordinary least squares ``y ~ a + b^T x`` for 1D or 2D ``x``."""
    X = _design(x)
    y = np.asarray(y, dtype=float)
    m, dim = X.shape
    if m < dim + 1:
        raise ClosureFitError(f"need at least {dim + 1} samples, got {m}")
    for k in range(dim):
        if np.ptp(X[:, k]) == 0:
            raise ClosureFitError(f"coordinate {k} is constant; affine design is rank deficient")
    # centring keeps the normal equations well conditioned
    xm, ym = X.mean(axis=0), y.mean()
    coef, *_ = np.linalg.lstsq(X - xm, y - ym, rcond=None)
    return GlobalLinearFit(float(ym - xm @ coef), coef)


# ---------------------------------------------------------------------------
# Gaussian local linear fit


def _local_linear(x, y, q, h) -> np.ndarray:
    """Gaussian-kernel local linear estimate at ``q``.

    Weighted moments come from one matrix product per chunk. Coordinates are
    centred on the sample mean and the log-weights of each query are shifted
    by their maximum, so tiny bandwidths do not underflow.
    """
    xc = x.mean()
    xs = x - xc
    ym = y.mean()
    ys = y - ym
    V = np.stack([np.ones_like(xs), xs, xs * xs, ys, xs * ys], axis=1)
    out = np.empty(q.shape[0])
    inv = 0.5 / (h * h)
    span2 = np.ptp(xs) ** 2 + 1e-300
    for a in range(0, q.shape[0], _CHUNK):
        qq = q[a:a + _CHUNK] - xc
        logw = -((qq[:, None] - xs) ** 2) * inv
        logw -= logw.max(axis=1, keepdims=True)
        S = np.exp(logw) @ V
        s0 = S[:, 0]
        xb, yb = S[:, 1] / s0, S[:, 3] / s0
        sxx = S[:, 2] / s0 - xb * xb
        sxy = S[:, 4] / s0 - xb * yb
        # narrow kernels cancel badly in the raw moments; redo those rows centred
        bad = np.flatnonzero(sxx < 1e-6 * S[:, 2] / s0)
        if bad.size:
            w = np.exp(logw[bad])
            dx = xs - xb[bad, None]
            sxx[bad] = np.einsum("ij,ij->i", w, dx * dx) / s0[bad]
            sxy[bad] = np.einsum("ij,ij->i", w * dx, ys - yb[bad, None]) / s0[bad]
        # a single effective point: fall back to the local constant
        ok = sxx > 1e-14 * span2
        slope = np.where(ok, sxy / np.where(ok, sxx, 1.0), 0.0)
        out[a:a + _CHUNK] = ym + yb + slope * (qq - xb)
    return out


def cv_bandwidth_grid(x, n: int = 10, lo: float = 0.1, hi: float = 2.0) -> np.ndarray:
    return np.geomspace(lo, hi, n) * np.std(x)


def _cv_folds(m: int, n_folds: int, seed: int) -> List[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(m)
    return np.array_split(perm, n_folds)


def _cv_select(x, y, grid, n_folds, seed):
    folds = _cv_folds(x.size, n_folds, seed)
    scores = np.zeros(grid.size)
    for test in folds:
        train = np.ones(x.size, dtype=bool)
        train[test] = False
        xt, yt = x[train], y[train]
        for k, h in enumerate(grid):
            pred = _local_linear(xt, yt, x[test], h)
            scores[k] += np.mean((pred - y[test]) ** 2)
    scores /= len(folds)
    # ties, including round-off level differences, go to the smoother fit
    tol = 1e-12 * max(scores.min(), np.var(y))
    best = np.flatnonzero(scores <= scores.min() + tol)[-1]
    return grid[best], scores


@dataclass(frozen=True)
class LocalLinearFit:
    x: np.ndarray
    y: np.ndarray
    bandwidth: float
    cv_scores: Optional[np.ndarray] = None

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        shape = q.shape
        # outside the data the boundary local fit is held constant
        qc = np.clip(q.ravel(), self.x[0], self.x[-1])
        return _local_linear(self.x, self.y, qc, self.bandwidth).reshape(shape)


def fit_local_linear(x, y, bandwidth: float | None = None, n_folds: int = 10,
                     seed: int = 0, grid: Sequence[float] | None = None) -> LocalLinearFit:
    """Gaussian local linear regression of ``y`` on scalar ``x``.

    Parameters
    ----------
    x, y : array_like, shape (m,)
    bandwidth : float, optional
        Kernel standard deviation in units of ``x``. When omitted it is chosen
        by ``n_folds``-fold cross validation (mean squared error) over
        :func:`cv_bandwidth_grid` or the supplied ``grid``.
    seed : int
        Seed of the fold shuffle.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ClosureFitError("x and y lengths differ")
    if x.size < MIN_LOCAL_SAMPLES:
        raise ClosureFitError(f"local linear fit needs at least {MIN_LOCAL_SAMPLES} samples, got {x.size}")
    if np.std(x) == 0:
        raise ClosureFitError("x has zero sample variance")
    scores = None
    if bandwidth is None:
        if x.size < n_folds:
            raise ClosureFitError(f"{x.size} samples for {n_folds} folds")
        grid = cv_bandwidth_grid(x) if grid is None else np.asarray(grid, dtype=float)
        bandwidth, scores = _cv_select(x, y, grid, n_folds, seed)
    elif not bandwidth > 0:
        raise ClosureFitError("bandwidth must be positive")
    order = np.argsort(x, kind="stable")
    return LocalLinearFit(x[order], y[order], float(bandwidth), scores)


# ---------------------------------------------------------------------------
# 2D lowess


@dataclass(frozen=True)
class Lowess2DFit:
    X: np.ndarray
    y: np.ndarray
    span: float
    center: np.ndarray
    scale: np.ndarray
    tree: cKDTree = field(repr=False, compare=False)

    @property
    def k(self) -> int:
        return int(np.ceil(self.span * self.X.shape[0]))

    def __call__(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Z = (Q - self.center) / self.scale
        Zs = (self.X - self.center) / self.scale
        out = np.empty(Q.shape[0])
        k = self.k
        for a in range(0, Q.shape[0], _CHUNK):
            dist, idx = self.tree.query(Z[a:a + _CHUNK], k=k)
            dmax = dist[:, -1:] * (1 + 1e-10) + 1e-300
            w = (1 - (dist / dmax) ** 3) ** 3
            xs = Zs[idx] - Z[a:a + _CHUNK, None, :]  # local coordinates, query at origin
            A = np.concatenate([np.ones(idx.shape + (1,)), xs], axis=2)
            Aw = A * w[..., None]
            M = np.einsum("qki,qkj->qij", Aw, A)
            r = np.einsum("qki,qk->qi", Aw, self.y[idx])
            # tiny ridge keeps collinear neighbourhoods solvable
            M += 1e-12 * np.trace(M, axis1=1, axis2=2)[:, None, None] * np.eye(3)
            out[a:a + _CHUNK] = np.linalg.solve(M, r[..., None])[:, 0, 0]
        return out


def fit_lowess_2d(X, y, span: float = 0.3) -> Lowess2DFit:
    """Tricube-weighted local linear regression on ``ceil(span*m)`` nearest neighbours.

    Distances are Euclidean in coordinates standardized by the sample mean and
    standard deviation.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] != 2 or X.shape[0] != y.size:
        raise ClosureFitError("X must be (m, 2) and match y")
    m = X.shape[0]
    if not 0 < span <= 1:
        raise ClosureFitError("span must lie in (0, 1]")
    if span * m < 4:
        raise ClosureFitError(f"span*m = {span * m:.3g} < 4 local points")
    if m < MIN_LOWESS_SAMPLES:
        raise ClosureFitError(f"lowess needs at least {MIN_LOWESS_SAMPLES} samples, got {m}")
    center, scale = X.mean(axis=0), X.std(axis=0)
    if np.any(scale == 0):
        raise ClosureFitError(f"coordinate {int(np.argmin(scale))} has zero variance")
    return Lowess2DFit(X.copy(), y.copy(), float(span), center, scale, cKDTree((X - center) / scale))


# ---------------------------------------------------------------------------
# knot sequences and time interpolation


@dataclass(frozen=True)
class ClosureModel:
    """Fitted conditional expectations at strictly increasing time knots."""

    kind: str
    time_knots: np.ndarray
    fits: tuple
    bandwidth: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.time_knots, dtype=float)
        if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
            raise ValueError("time knots must be a nonempty strictly increasing sequence")
        if len(self.fits) != t.size:
            raise ValueError("one fit per knot required")
        object.__setattr__(self, "time_knots", t)

    def evaluate(self, k: int, points) -> np.ndarray:
        vals = np.asarray(self.fits[k](points), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ClosureFitError(f"non-finite closure values at knot {k} (t={self.time_knots[k]:.4g})")
        return vals

    def field(self, points) -> "CoefficientField":
        return CoefficientField(self, points)


class CoefficientField:
    """Closure evaluated on fixed points and interpolated linearly in time.

    Knot evaluations are cached, so sweeping forward in time evaluates each
    knot once.
    """

    def __init__(self, model: ClosureModel, points):
        self.model = model
        self.points = np.asarray(points, dtype=float)
        self._cache = {}

    @property
    def knots(self) -> np.ndarray:
        return self.model.time_knots

    def at_knot(self, k: int) -> np.ndarray:
        if k not in self._cache:
            if len(self._cache) > 4:
                self._cache.pop(min(self._cache))
            self._cache[k] = self.model.evaluate(k, self.points)
        return self._cache[k]

    def __call__(self, t: float) -> np.ndarray:
        tk = self.knots
        if t < tk[0] - 1e-12 or t > tk[-1] + 1e-12:
            raise ValueError(f"t={t} outside knot range [{tk[0]}, {tk[-1]}]")
        k = int(np.searchsorted(tk, t, side="right")) - 1
        k = min(max(k, 0), tk.size - 1)
        if k == tk.size - 1 or abs(t - tk[k]) <= 1e-12 * max(1.0, abs(t)):
            return self.at_knot(k)
        w = (t - tk[k]) / (tk[k + 1] - tk[k])
        return (1 - w) * self.at_knot(k) + w * self.at_knot(k + 1)


def coefficient_field(model: ClosureModel, t: float, points) -> np.ndarray:
    """Closure values at ``points``, linearly interpolated between bracketing knots."""
    return CoefficientField(model, points)(t)


def fit_closure(times, x, y, kind: str = "local-linear", n_folds: int = 10, cv_every: int = 100,
                seed: int = 0, span: float = 0.3, bandwidth: float | None = None,
                label: str = "") -> ClosureModel:
    """Fit one regression per time knot.

    Parameters
    ----------
    times : array_like, shape (Nt,)
    x : ndarray, shape (m, Nt) or (m, Nt, 2)
        Regressors (QoI samples) per knot.
    y : ndarray, shape (m, Nt)
        Responses per knot.
    kind : {"global-linear", "local-linear", "lowess-2d"}
    cv_every : int
        For ``local-linear`` without a fixed ``bandwidth``, cross validation is
        run at every ``cv_every``-th knot; the selected bandwidth, in units of
        the knot's sample standard deviation, is reused until the next one.
    """
    times = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fits, bws = [], []
    rel_bw = None
    for k in range(times.size):
        xk, yk = x[:, k], y[:, k]
        try:
            if kind == "global-linear":
                fits.append(fit_global_linear(xk, yk))
            elif kind == "local-linear":
                if bandwidth is not None:
                    f = fit_local_linear(xk, yk, bandwidth)
                elif rel_bw is None or k % cv_every == 0:
                    f = fit_local_linear(xk, yk, n_folds=n_folds, seed=seed + k)
                    rel_bw = f.bandwidth / np.std(xk)
                else:
                    f = fit_local_linear(xk, yk, rel_bw * np.std(xk))
                fits.append(f)
                bws.append(f.bandwidth)
            elif kind == "lowess-2d":
                fits.append(fit_lowess_2d(xk, yk, span))
            else:
                raise ValueError(f"unknown closure kind {kind!r}")
        except ClosureFitError as exc:
            where = f" for {label}" if label else ""
            raise ClosureFitError(f"knot {k} (t={times[k]:.4g}){where}: {exc}") from exc
    return ClosureModel(kind, times, tuple(fits), np.asarray(bws) if bws else None)


def write_coefficients_csv(model: ClosureModel, points, path, scale: float = 1.0) -> None:
    """Write ``t, coordinates..., value`` rows for every knot."""
    import csv

    P = np.asarray(points, dtype=float)
    P2 = P[:, None] if P.ndim == 1 else P
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"U{k + 1}" for k in range(P2.shape[1])] + ["value"])
        for k, t in enumerate(model.time_knots):
            vals = scale * model.evaluate(k, P)
            for row, v in zip(P2, vals):
                w.writerow([repr(float(t))] + [repr(float(c)) for c in row] + [repr(float(v))])
