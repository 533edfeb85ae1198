"""Finite-volume solvers for reduced-order PDF equations.

1D:  f_t + (a f)_U = (D f)_UU, limited Lax-Wendroff fluxes (monotonized
     central limiter) plus an explicit diffusion flux.
2D:  f_t + (a1 f)_U1 + (a2 f)_U2 = 0, corner transport upwind with transverse
     corrections and van Leer limited second-order corrections.

Advection values live on cell faces, densities are cell averages. Two layers
of zero-valued ghost cells sit outside each boundary.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import _binio

log = logging.getLogger(__name__)

__all__ = [
    "Grid1D",
    "Grid2D",
    "DensityField",
    "ZeroVarianceError",
    "CFLViolation",
    "SolverError",
    "build_grid",
    "cfl_dt",
    "fluxes_1d",
    "step_1d",
    "fluxes_2d",
    "step_2d",
    "solve_ropdf",
    "mc_limiter",
    "van_leer_limiter",
    "write_density_csv",
    "write_density",
    "read_density",
]

# negative round-off allowed, relative to max(1, peak density)
NEG_TOL = 1e-9
_DEN_MAGIC = b"ROPDFDEN"


class ZeroVarianceError(ValueError):
    pass


class CFLViolation(AssertionError):
    pass


class SolverError(FloatingPointError):
    pass


@dataclass(frozen=True)
class Grid1D:
    U_min: float
    U_max: float
    n_cells: int

    def __post_init__(self):
        if not self.U_min < self.U_max:
            raise ValueError(f"need U_min < U_max, got [{self.U_min}, {self.U_max}]")
        if self.n_cells < 16:
            raise ValueError("need at least 16 cells")

    ndim = 1

    @property
    def dx(self) -> float:
        return (self.U_max - self.U_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.U_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return self.U_min + np.arange(self.n_cells + 1) * self.dx

    @property
    def cell_volume(self) -> float:
        return self.dx

    @property
    def shape(self):
        return (self.n_cells,)


@dataclass(frozen=True)
class Grid2D:
    x: Grid1D
    y: Grid1D

    ndim = 2

    @property
    def shape(self):
        return (self.x.n_cells, self.y.n_cells)

    @property
    def cell_volume(self) -> float:
        return self.x.dx * self.y.dx

    def centers(self):
        """Cell-centre meshes ``(U1, U2)`` with ``indexing='ij'``."""
        return np.meshgrid(self.x.centers, self.y.centers, indexing="ij")

    def x_faces(self) -> np.ndarray:
        """Points (nx+1)*ny of the faces normal to axis 1, row-major in (i, j)."""
        X, Y = np.meshgrid(self.x.faces, self.y.centers, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def y_faces(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x.centers, self.y.faces, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def cell_points(self) -> np.ndarray:
        X, Y = self.centers()
        return np.column_stack([X.ravel(), Y.ravel()])


def _axis_bounds(s, n_cells, padding_stds, floor):
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        raise ValueError("no samples")
    sd = float(np.std(s))
    if not sd > 0:
        raise ZeroVarianceError("samples have zero variance; cannot size the grid")
    lo, hi = float(s.min()) - padding_stds * sd, float(s.max()) + padding_stds * sd
    if floor is not None:
        lo = max(lo, floor)
    return Grid1D(lo, hi, int(n_cells))


def build_grid(samples, n_cells=400, padding_stds: float = 1.0, floor: float | None = 0.0):
    """Uniform grid covering all samples (over all times) with padding.

    Parameters
    ----------
    samples : ndarray or sequence of two ndarrays
        One array gives a :class:`Grid1D`; a list or tuple of two arrays gives
        a :class:`Grid2D` with independent axis bounds.
    n_cells : int or pair of int
    padding_stds : float
        Padding in pooled sample standard deviations, between 0.5 and 1.
    floor : float or None
        Lower bound floor (0 for line energies); ``None`` disables it.
    """
    if not 0.5 <= padding_stds <= 1.0:
        raise ValueError("padding_stds must lie in [0.5, 1.0]")
    if isinstance(samples, (list, tuple)) and len(samples) == 2 and np.ndim(samples[0]) > 0:
        nx, ny = (n_cells, n_cells) if np.isscalar(n_cells) else n_cells
        return Grid2D(_axis_bounds(samples[0], nx, padding_stds, floor),
                      _axis_bounds(samples[1], ny, padding_stds, floor))
    return _axis_bounds(samples, n_cells, padding_stds, floor)


def cfl_dt(a, D, grid, cfl_number: float = 0.9, max_dt: float = math.inf) -> float:
    """Explicit time step from the advective and diffusive stability limits.

    ``a`` is the face advection array (1D) or a pair of arrays (2D); ``D`` is
    a scalar, an array, or ``None``. The result never exceeds ``max_dt``.
    """
    if grid.ndim == 1:
        pairs = [(np.asarray(a), grid.dx)]
        dxmin = grid.dx
    else:
        pairs = [(np.asarray(a[0]), grid.x.dx), (np.asarray(a[1]), grid.y.dx)]
        dxmin = min(grid.x.dx, grid.y.dx)
    limits = []
    for arr, dx in pairs:
        if not np.all(np.isfinite(arr)):
            raise SolverError("non-finite advection coefficients")
        amax = float(np.max(np.abs(arr))) if arr.size else 0.0
        if amax > 0:
            limits.append(dx / amax)
    if D is not None:
        Dmax = float(np.max(np.abs(D)))
        if not np.isfinite(Dmax):
            raise SolverError("non-finite diffusion coefficients")
        if Dmax > 0:
            limits.append(dxmin ** 2 / (2.0 * Dmax * grid.ndim))
    dt = cfl_number * min(limits) if limits else math.inf
    dt = min(dt, max_dt)
    if not np.isfinite(dt):
        raise SolverError("zero coefficients and no knot interval to cap the step")
    return dt


def mc_limiter(r):
    """Monotonized-central limiter max(0, min(2r, (1+r)/2, 2))."""
    return np.maximum(0.0, np.minimum(np.minimum(2.0 * r, 0.5 * (1.0 + r)), 2.0))


def van_leer_limiter(r):
    return (r + np.abs(r)) / (1.0 + np.abs(r))


def _ratio(num, den):
    # both limiters saturate long before |r| = 1e12; clipping keeps van Leer finite
    safe = np.where(den == 0, 1.0, den)
    with np.errstate(over="ignore"):
        r = num / safe
    return np.where(den == 0, 0.0, np.clip(r, -1e12, 1e12))


def _limited_flux(q, a, dt, dx, limiter, axis=0):
    """High-resolution advective flux at the n+1 interior faces of ``q``.

    ``q`` carries two ghost layers along ``axis``; ``a`` holds face values.
    """
    q = np.moveaxis(q, axis, 0)
    a = np.moveaxis(a, axis, 0)
    qm2, qm1, q0, qp1 = q[:-3], q[1:-2], q[2:-1], q[3:]
    jump = q0 - qm1
    up = np.where(a >= 0, qm1 - qm2, qp1 - q0)
    phi = limiter(_ratio(up, jump))
    aa = np.abs(a)
    F = np.maximum(a, 0) * qm1 + np.minimum(a, 0) * q0 + 0.5 * aa * (1.0 - aa * dt / dx) * phi * jump
    return np.moveaxis(F, 0, axis)


def _check_cfl(a, dt, dx):
    nu = float(np.max(np.abs(a))) * dt / dx if np.size(a) else 0.0
    if nu > 1.0 + 1e-12:
        raise CFLViolation(f"Courant number {nu:.4g} > 1")


def fluxes_1d(f, a, D, dt, grid: Grid1D) -> np.ndarray:
    """Total flux at the ``n+1`` faces (advective plus diffusive)."""
    f = np.asarray(f, dtype=float)
    a = np.asarray(a, dtype=float)
    dx = grid.dx
    if a.shape != (f.size + 1,):
        raise ValueError(f"advection must be given at {f.size + 1} faces")
    _check_cfl(a, dt, dx)
    q = np.pad(f, 2)
    F = _limited_flux(q, a, dt, dx, mc_limiter)
    if D is not None:
        Df = np.pad(np.broadcast_to(D, f.shape) * f, 1)
        F = F - (Df[1:] - Df[:-1]) / dx
    return F


def step_1d(f, a, D, dt, grid: Grid1D, return_flux: bool = False):
    """One conservative step; with ``return_flux`` also the face fluxes."""
    F = fluxes_1d(f, a, D, dt, grid)
    out = np.asarray(f, dtype=float) - dt / grid.dx * (F[1:] - F[:-1])
    if not np.all(np.isfinite(out)):
        raise SolverError("non-finite density after step")
    return (out, F) if return_flux else out


def fluxes_2d(f, a1, a2, dt, grid: Grid2D):
    """CTU fluxes: ``F`` on x-faces (nx+1, ny) and ``G`` on y-faces (nx, ny+1).

    Each axis first gets its van Leer limited Lax-Wendroff flux. The upwind
    state of every face is then advanced half a step in the transverse
    direction with those same limited fluxes, so the corner transport agrees
    with what the transverse faces actually carry.
    """
    f = np.asarray(f, dtype=float)
    nx, ny = f.shape
    dx, dy = grid.x.dx, grid.y.dx
    a1 = np.asarray(a1, dtype=float).reshape(nx + 1, ny)
    a2 = np.asarray(a2, dtype=float).reshape(nx, ny + 1)
    _check_cfl(a1, dt, dx)
    _check_cfl(a2, dt, dy)
    q = np.pad(f, 2)
    F1 = _limited_flux(q[:, 2:-2], a1, dt, dx, van_leer_limiter, axis=0)
    G1 = _limited_flux(q[2:-2, :], a2, dt, dy, van_leer_limiter, axis=1)
    # half-step transverse changes per cell, zero in the ghost layers
    ty = np.pad(0.5 * dt / dy * (G1[:, 1:] - G1[:, :-1]), ((1, 1), (0, 0)))
    tx = np.pad(0.5 * dt / dx * (F1[1:] - F1[:-1]), ((0, 0), (1, 1)))
    F = F1 - (np.maximum(a1, 0) * ty[:-1] + np.minimum(a1, 0) * ty[1:])
    G = G1 - (np.maximum(a2, 0) * tx[:, :-1] + np.minimum(a2, 0) * tx[:, 1:])
    return _limit_outflow(f, F, G, dt, dx, dy)


def _limit_outflow(f, F, G, dt, dx, dy, max_passes: int = 20):
    """Scale the fluxes leaving any cell that would export more than it holds
    plus what flows in during the step.

    Each face flux is scaled by the factor of its donor cell, so the update
    stays conservative. Scaling a donor reduces its neighbours' inflow, so
    the check repeats until no cell over-exports; fluxes only shrink, so the
    passes terminate. Smooth solutions never trigger the scaling; it acts at
    very steep fronts, where the transverse corrections of an unsplit limited
    scheme can drive a nearly empty cell negative.
    """
    f0 = np.maximum(f, 0.0)
    # rounding-level overshoots in empty regions are left alone
    tol = 1e-13 * float(f0.max()) if f0.size else 0.0
    for _ in range(max_passes):
        out = dt / dx * (np.maximum(F[1:], 0) + np.maximum(-F[:-1], 0)) \
            + dt / dy * (np.maximum(G[:, 1:], 0) + np.maximum(-G[:, :-1], 0))
        inflow = dt / dx * (np.maximum(-F[1:], 0) + np.maximum(F[:-1], 0)) \
            + dt / dy * (np.maximum(-G[:, 1:], 0) + np.maximum(G[:, :-1], 0))
        avail = f0 + inflow
        over = out > avail + tol
        if not over.any():
            break
        theta = np.ones_like(f0)
        theta[over] = avail[over] / out[over]
        tp = np.pad(theta, 1, constant_values=1.0)
        sx = tp[:, 1:-1]  # donor factors for x-faces, (nx+2, ny)
        sy = tp[1:-1, :]  # donor factors for y-faces, (nx, ny+2)
        F = F * np.where(F > 0, sx[:-1], sx[1:])
        G = G * np.where(G > 0, sy[:, :-1], sy[:, 1:])
    return F, G


def step_2d(f, a1, a2, dt, grid: Grid2D, return_flux: bool = False):
    F, G = fluxes_2d(f, a1, a2, dt, grid)
    out = np.asarray(f, dtype=float) - dt / grid.x.dx * (F[1:] - F[:-1]) - dt / grid.y.dx * (G[:, 1:] - G[:, :-1])
    if not np.all(np.isfinite(out)):
        raise SolverError("non-finite density after step")
    return (out, (F, G)) if return_flux else out


def boundary_outflow(flux, grid) -> float:
    """Net rate of mass leaving the domain given face fluxes."""
    if grid.ndim == 1:
        return float(flux[-1] - flux[0])
    F, G = flux
    return float((F[-1].sum() - F[0].sum()) * grid.y.dx + (G[:, -1].sum() - G[:, 0].sum()) * grid.x.dx)


@dataclass
class DensityField:
    """Time-stamped cell-average densities on a grid.

    ``frames`` has shape ``(N_t,) + grid.shape``.
    """

    grid: object
    times: np.ndarray
    frames: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.shape != (self.times.size,) + tuple(self.grid.shape):
            raise ValueError(f"frames shape {self.frames.shape} does not match times/grid")
        if not np.all(np.isfinite(self.frames)):
            raise SolverError("density field has non-finite values")
        fmin = float(self.frames.min()) if self.frames.size else 0.0
        if fmin < -NEG_TOL * max(1.0, float(np.abs(self.frames).max())):
            raise SolverError(f"density field has negative values (min {fmin:.3e})")

    def mass(self) -> np.ndarray:
        axes = tuple(range(1, self.frames.ndim))
        return self.frames.sum(axis=axes) * self.grid.cell_volume

    def frame_at(self, t: float) -> np.ndarray:
        """Frame at ``t`` (linear interpolation between stored frames)."""
        k = int(np.searchsorted(self.times, t))
        if k < self.times.size and abs(self.times[k] - t) < 1e-12:
            return self.frames[k]
        if k == 0 or k == self.times.size:
            raise ValueError(f"t={t} outside stored frames")
        w = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1])
        return (1 - w) * self.frames[k - 1] + w * self.frames[k]


def solve_ropdf(f0, grid, advection: Callable, T: float, diffusion: Callable | None = None,
                scale=1.0, t0: float = 0.0, knots: Sequence[float] | None = None,
                out_times: Sequence[float] | None = None, cfl_number: float = 0.9,
                max_steps: int = 10_000_000) -> DensityField:
    """Integrate a reduced-order PDF equation from ``t0`` to ``T``.

    Parameters
    ----------
    f0 : ndarray
        Initial cell averages.
    advection : callable
        ``advection(t)`` returns face values (1D) or a pair ``(a1, a2)`` of
        x-face and y-face values (2D), before scaling.
    diffusion : callable, optional
        ``diffusion(t)`` returns cell values (1D only).
    scale : float or pair of float
        Multiplier applied to the advection (per axis in 2D).
    knots : sequence of float, optional
        Coefficient knots; steps never straddle one.
    out_times : sequence of float, optional
        Frame times; defaults to the knots inside ``[t0, T]``, else ``[t0, T]``.
    """
    f = np.array(f0, dtype=float)
    if f.shape != tuple(grid.shape):
        raise ValueError("initial density does not match the grid")
    if grid.ndim == 2 and diffusion is not None:
        raise ValueError("the 2D solver is advection-only")
    knots = np.asarray(knots if knots is not None else [], dtype=float)
    if out_times is None:
        inside = knots[(knots >= t0 - 1e-12) & (knots <= T + 1e-12)]
        out_times = inside if inside.size else np.array([t0, T])
    out_times = np.asarray(out_times, dtype=float)
    events = np.unique(np.concatenate([knots[(knots > t0) & (knots < T)], out_times, [T]]))
    s1, s2 = (scale, scale) if np.isscalar(scale) else scale

    frames, times = [], []
    t, lost, nsteps = t0, 0.0, 0
    ev = 0

    def record_if_due():
        while len(times) < out_times.size and abs(out_times[len(times)] - t) <= 1e-9 * max(1.0, abs(t)):
            frames.append(f.copy())
            times.append(out_times[len(times)])

    record_if_due()
    while t < T - 1e-12:
        while events[ev] <= t + 1e-12:
            ev += 1
        if grid.ndim == 1:
            a = s1 * np.asarray(advection(t))
            D = None if diffusion is None else np.asarray(diffusion(t))
            dt = cfl_dt(a, D, grid, cfl_number, events[ev] - t)
            try:
                f, F = step_1d(f, a, D, dt, grid, return_flux=True)
            except SolverError as exc:
                raise SolverError(f"step {nsteps} at t={t:.6g}: {exc}") from exc
        else:
            a1, a2 = advection(t)
            a1, a2 = s1 * np.asarray(a1), s2 * np.asarray(a2)
            dt = cfl_dt((a1, a2), None, grid, cfl_number, events[ev] - t)
            try:
                f, F = step_2d(f, a1, a2, dt, grid, return_flux=True)
            except SolverError as exc:
                raise SolverError(f"step {nsteps} at t={t:.6g}: {exc}") from exc
        lost += dt * boundary_outflow(F, grid)
        t = events[ev] if events[ev] - t - dt <= 1e-12 * max(1.0, abs(t)) else t + dt
        nsteps += 1
        if nsteps > max_steps:
            raise SolverError(f"exceeded {max_steps} steps at t={t:.6g}")
        record_if_due()
    if len(times) != out_times.size:
        raise SolverError("requested output times were not reached")
    if abs(lost) > 1e-3:
        log.info("mass through boundaries: %.3e", lost)
    return DensityField(grid, np.array(times), np.array(frames), {"boundary_loss": lost, "steps": nsteps})


# ---------------------------------------------------------------------------
# export


def _grid_meta(grid):
    if grid.ndim == 1:
        return {"ndim": 1, "bounds": [[grid.U_min, grid.U_max]], "n_cells": [grid.n_cells]}
    return {"ndim": 2, "bounds": [[grid.x.U_min, grid.x.U_max], [grid.y.U_min, grid.y.U_max]],
            "n_cells": [grid.x.n_cells, grid.y.n_cells]}


def _grid_from_meta(meta):
    axes = [Grid1D(lo, hi, n) for (lo, hi), n in zip(meta["bounds"], meta["n_cells"])]
    return axes[0] if meta["ndim"] == 1 else Grid2D(*axes)


def write_density_csv(field_: DensityField, path) -> Path:
    """Rows ``t, U, f`` (1D) or ``t, U1, U2, f`` (2D) at cell centres."""
    path = Path(path)
    g = field_.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if g.ndim == 1:
            w.writerow(["t", "U", "f"])
            c = g.centers
            for t, fr in zip(field_.times, field_.frames):
                ts = repr(float(t))
                w.writerows([ts, repr(float(u)), repr(float(v))] for u, v in zip(c, fr))
        else:
            w.writerow(["t", "U1", "U2", "f"])
            P = g.cell_points()
            for t, fr in zip(field_.times, field_.frames):
                ts = repr(float(t))
                w.writerows([ts, repr(float(p[0])), repr(float(p[1])), repr(float(v))]
                            for p, v in zip(P, fr.ravel()))
    return path


def write_density(field_: DensityField, path) -> Path:
    meta = {**_grid_meta(field_.grid), **{k: v for k, v in field_.meta.items() if isinstance(v, (int, float, str))}}
    return _binio.write_arrays(path, _DEN_MAGIC, {"times": field_.times, "frames": field_.frames}, meta)


def read_density(path) -> DensityField:
    arrays, meta = _binio.read_arrays(path, _DEN_MAGIC)
    grid = _grid_from_meta(meta)
    extra = {k: v for k, v in meta.items() if k not in ("ndim", "bounds", "n_cells")}
    return DensityField(grid, arrays["times"], arrays["frames"], extra)
