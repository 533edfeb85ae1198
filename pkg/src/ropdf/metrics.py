"""Density benchmarks and probability metrics on finite-volume grids.

Kernel density estimates, empirical and integrated exceedance probabilities,
space-time L1 distances, mutual information and sample-complexity summaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from .case_model import LineId, _as_line
from .fv import DensityField, Grid1D, Grid2D, ZeroVarianceError

log = logging.getLogger(__name__)

__all__ = [
    "ExceedanceEvent",
    "InconsistentDensityError",
    "silverman_bandwidth",
    "kde",
    "kde_frames",
    "ecdf_exceedance",
    "union_exceedance",
    "tail_probability",
    "joint_exceedance",
    "union_tail_probability",
    "independence_joint",
    "l1_error",
    "mutual_information",
    "sample_complexity",
    "loglog_slope",
    "binomial_standard_error",
]

MI_FLOOR = 1e-12
_CHUNK = 4096


class InconsistentDensityError(ValueError):
    pass


@dataclass(frozen=True)
class ExceedanceEvent:
    """Single-line event ``u > T`` or the union of two such events."""

    lines: Tuple[LineId, ...]
    thresholds: Tuple[float, ...]
    mode: str = "single"

    def __post_init__(self):
        lines = tuple(_as_line(l) for l in self.lines)
        th = tuple(float(t) for t in self.thresholds)
        if len(lines) != len(th) or len(lines) not in (1, 2):
            raise ValueError("one or two lines with one threshold each")
        if any(t <= 0 for t in th):
            raise ValueError("thresholds must be positive")
        if self.mode not in ("single", "union") or (self.mode == "single") != (len(lines) == 1):
            raise ValueError("mode is 'single' for one line and 'union' for two")
        object.__setattr__(self, "lines", lines)
        object.__setattr__(self, "thresholds", th)


# ---------------------------------------------------------------------------
# kernel density estimates


def silverman_bandwidth(x) -> float:
    """0.9 min(sigma, IQR/1.34) m^(-1/5)."""
    x = np.asarray(x, dtype=float).ravel()
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


def _kernel_matrix(centers, x, h):
    """Gaussian kernel values, (n_cells, m), without the normalizing constant."""
    return np.exp(-0.5 * ((centers[:, None] - x[None, :]) / h) ** 2)


def _kde_1d(x, centers, h):
    out = np.zeros(centers.size)
    for a in range(0, x.size, _CHUNK):
        out += _kernel_matrix(centers, x[a:a + _CHUNK], h).sum(axis=1)
    return out


def _kde_2d(X, cx, cy, h):
    out = np.zeros((cx.size, cy.size))
    for a in range(0, X.shape[0], _CHUNK):
        out += _kernel_matrix(cx, X[a:a + _CHUNK, 0], h[0]) @ _kernel_matrix(cy, X[a:a + _CHUNK, 1], h[1]).T
    return out


def kde(samples, grid) -> np.ndarray:
    """Gaussian (product) kernel density at cell centres, unit mass on the grid.

    1D bandwidth is Silverman's robust rule; in 2D each axis uses
    ``h_k = sigma_k m^(-1/6)``.
    """
    x = np.asarray(samples, dtype=float)
    if grid.ndim == 1:
        x = x.ravel()
        if x.size < 2:
            raise ValueError("kde needs at least two samples")
        if np.std(x) == 0:
            raise ZeroVarianceError("samples have zero variance")
        f = _kde_1d(x, grid.centers, silverman_bandwidth(x))
    else:
        if x.ndim != 2 or x.shape[1] != 2 or x.shape[0] < 2:
            raise ValueError("2D kde needs an (m, 2) array with m >= 2")
        sd = np.std(x, axis=0, ddof=1)
        if np.any(sd == 0):
            raise ZeroVarianceError(f"axis {int(np.argmin(sd))} has zero variance")
        f = _kde_2d(x, grid.x.centers, grid.y.centers, sd * x.shape[0] ** (-1.0 / 6.0))
    mass = f.sum() * grid.cell_volume
    if not mass > 0:
        raise ValueError("kde has no mass on the grid")
    return f / mass


def kde_frames(samples_over_time, times, grid) -> DensityField:
    """KDE per time column. ``samples_over_time`` is (m, N_t) or (m, N_t, 2)."""
    S = np.asarray(samples_over_time, dtype=float)
    return DensityField(grid, np.asarray(times), np.array([kde(S[:, k], grid) for k in range(S.shape[1])]))


# ---------------------------------------------------------------------------
# probabilities


def ecdf_exceedance(samples, threshold: float) -> float:
    x = np.asarray(samples, dtype=float).ravel()
    return float(np.count_nonzero(x > threshold)) / x.size


def union_exceedance(samples1, samples2, thresholds) -> float:
    a = np.asarray(samples1).ravel() > thresholds[0]
    b = np.asarray(samples2).ravel() > thresholds[1]
    return float(np.count_nonzero(a | b)) / a.size


def binomial_standard_error(p: float, m: int) -> float:
    """Binomial standard error sqrt(p(1-p)/m) of an ECDF value ``p`` from ``m`` samples."""
    return float(np.sqrt(max(p, 0.0) * max(1.0 - p, 0.0) / m))


def _below_weights(axis: Grid1D, T: float) -> np.ndarray:
    """Fraction of each cell lying at or below ``T``."""
    if not axis.U_min <= T <= axis.U_max:
        raise ValueError(f"threshold {T} outside grid [{axis.U_min}, {axis.U_max}]")
    lo, hi = axis.faces[:-1], axis.faces[1:]
    return np.where(hi <= T, 1.0, np.clip((T - lo) / axis.dx, 0.0, 1.0))


def tail_probability(frame, grid: Grid1D, threshold: float) -> float:
    """Integral of the density above ``threshold``; the straddling cell counts fractionally."""
    w = 1.0 - _below_weights(grid, threshold)
    return float(np.sum(np.asarray(frame) * w) * grid.dx)


def joint_exceedance(frame, grid: Grid2D, thresholds) -> float:
    """Union probability ``1 - P(U1 <= T1, U2 <= T2)``."""
    w1 = _below_weights(grid.x, thresholds[0])
    w2 = _below_weights(grid.y, thresholds[1])
    return float(1.0 - w1 @ np.asarray(frame) @ w2 * grid.cell_volume)


def union_tail_probability(frame, grid: Grid2D, thresholds) -> float:
    """Integral of the density over ``{U1 > T1} or {U2 > T2}``.

    Equals ``joint_exceedance`` minus the mass missing from the grid.
    """
    w = np.outer(_below_weights(grid.x, thresholds[0]), _below_weights(grid.y, thresholds[1]))
    return float(np.sum(np.asarray(frame) * (1.0 - w)) * grid.cell_volume)


def independence_joint(p1: float, p2: float) -> float:
    """Union probability when the non-exceedance probabilities ``p1``, ``p2`` multiply."""
    for p in (p1, p2):
        if not 0.0 <= p <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
    return 1.0 - p1 * p2


# ---------------------------------------------------------------------------
# distances and information


def _same_grid(g1, g2) -> bool:
    return g1 == g2


def l1_error(fhat: DensityField, fbench: DensityField) -> float:
    """Space-time L1 distance, trapezoid rule over ``fhat``'s frame times.

    The benchmark is interpolated linearly in time onto those frames.
    """
    if not _same_grid(fhat.grid, fbench.grid):
        raise ValueError("density fields live on different grids")
    diffs = np.array([np.abs(fr - fbench.frame_at(t)).sum() * fhat.grid.cell_volume
                      for t, fr in zip(fhat.times, fhat.frames)])
    if diffs.size == 1:
        return float(diffs[0])
    return float(np.trapezoid(diffs, fhat.times))


def mutual_information(joint, marg1, marg2, grid: Grid2D, raw: bool = False) -> float:
    """Mutual information (nats) of a gridded joint density against two marginals.

    Cells with joint density at or below 1e-12 contribute zero. The result is
    floored at 0 unless ``raw``.
    """
    J = np.asarray(joint, dtype=float)
    f1 = np.asarray(marg1, dtype=float)
    f2 = np.asarray(marg2, dtype=float)
    if J.shape != (f1.size, f2.size):
        raise ValueError("marginals do not match the joint grid")
    P = np.outer(f1, f2)
    live = J > MI_FLOOR
    bad = live & (P <= 0) & (J * grid.cell_volume > 1e-9)
    if bad.any():
        raise InconsistentDensityError("marginal vanishes where the joint carries mass")
    live &= P > 0
    val = float(np.sum(J[live] * np.log(J[live] / P[live])) * grid.cell_volume)
    if val < 0:
        log.debug("raw mutual information %.3e floored at 0", val)
    return val if raw else max(val, 0.0)


def own_marginals(joint, grid: Grid2D):
    J = np.asarray(joint, dtype=float)
    return J.sum(axis=1) * grid.y.dx, J.sum(axis=0) * grid.x.dx


# ---------------------------------------------------------------------------
# sample complexity


def sample_complexity(error_curves: Mapping, gamma: float):
    """First sample size per line whose error drops below ``gamma``.

    Parameters
    ----------
    error_curves : mapping
        ``{line: {m: error}}``.

    Returns
    -------
    per_line : dict
        ``{line: m*}`` with ``None`` where the curve never crosses ``gamma``.
    total : int or None
        Sum over lines that crossed; ``None`` if none did.
    """
    if not error_curves:
        raise ValueError("no error curves")
    per_line = {}
    for line, curve in error_curves.items():
        if not curve:
            raise ValueError(f"empty error curve for {line}")
        hit = [m for m in sorted(curve) if curve[m] < gamma]
        per_line[line] = hit[0] if hit else None
    achieved = [m for m in per_line.values() if m is not None]
    missing = [str(l) for l, m in per_line.items() if m is None]
    if missing:
        log.info("gamma=%g not reached for %s", gamma, ", ".join(missing))
    return per_line, (int(sum(achieved)) if achieved else None)


def loglog_slope(sizes: Sequence[float], values: Sequence[float]):
    """Least-squares slope of log(values) against log(sizes); ``None`` below two points."""
    pts = [(s, v) for s, v in zip(sizes, values) if s and v and s > 0 and v > 0]
    if len(pts) < 2 or len({p[0] for p in pts}) < 2:
        return None
    x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])
