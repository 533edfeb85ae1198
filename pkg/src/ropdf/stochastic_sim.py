"""Monte Carlo ensembles of the OU-driven classical multimachine model.

Per sample the state is ``z = [v, omega, delta, eta]`` and evolves as::

    dv     = 0
    domega = omega_R/(2h) * [-(omega - omega_R) d + p_m - p_e(v, delta) + eta] dt
    ddelta = (omega - omega_R) dt
    deta   = -theta eta dt + alpha sqrt(2 theta) C dW

The diffusion is additive, so the Milstein correction is identically zero and
the scheme used here is Euler-Maruyama.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import _binio
from .case_model import EquilibriumPoint, LineId, PowerCase, _as_line, remove_line
from .qoi import LineQoi, line_energy, line_energy_drift

log = logging.getLogger(__name__)

__all__ = [
    "NoiseModel",
    "EnsembleState",
    "ScenarioConfig",
    "TrajectoryRecord",
    "EnsembleRNG",
    "SampleDivergenceError",
    "SimulationDivergenceError",
    "build_noise",
    "diffusion_matrix",
    "electrical_power",
    "system_drift",
    "sample_initial",
    "step",
    "milstein_correction",
    "run_scenario",
    "write_record",
    "read_record",
    "write_record_csv",
]

CHUNK_SIZE = 1024
DIVERGENCE_ABORT_FRACTION = 1e-3
_TRJ_MAGIC = b"ROPDFTRJ"


class SampleDivergenceError(FloatingPointError):
    def __init__(self, indices, where=""):
        self.indices = np.asarray(indices)
        super().__init__(f"non-finite values {where} in samples {self.indices[:10].tolist()}"
                         + (" ..." if self.indices.size > 10 else ""))


class SimulationDivergenceError(FloatingPointError):
    def __init__(self, n_diverged: int, m: int, t: float):
        self.n_diverged = n_diverged
        super().__init__(f"{n_diverged} of {m} samples diverged by t={t:.4g}; aborting")


@dataclass(frozen=True)
class NoiseModel:
    theta: float
    alpha: float
    R: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if not self.theta > 0 or not self.alpha >= 0:
            raise ValueError("need theta > 0 and alpha >= 0")
        if np.max(np.abs(R - R.T)) > 1e-12 or np.max(np.abs(np.diag(R) - 1)) > 1e-12:
            raise ValueError("R must be symmetric with unit diagonal")
        if np.max(np.abs(C @ C.T - R)) > 1e-10:
            raise ValueError("C C^T does not reproduce R")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def scale(self) -> float:
        """Diffusion amplitude alpha * sqrt(2 theta) multiplying C."""
        return self.alpha * math.sqrt(2.0 * self.theta)


def build_noise(n: int, r_offdiag: float, theta: float = 1.0, alpha: float = 0.05) -> NoiseModel:
    """Constant-correlation OU noise: R = (1 - r) I + r 11^T, C lower-triangular Cholesky factor."""
    R = (1.0 - r_offdiag) * np.eye(n) + r_offdiag * np.ones((n, n))
    try:
        C = np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"correlation {r_offdiag} gives a non positive-definite R for n={n}"
        ) from exc
    return NoiseModel(float(theta), float(alpha), R, C)


def diffusion_matrix(noise: NoiseModel, n: int) -> np.ndarray:
    """Full (4n x 4n) diffusion matrix; only the eta block is nonzero."""
    sigma = np.zeros((4 * n, 4 * n))
    sigma[3 * n:, 3 * n:] = noise.scale * noise.C
    return sigma


@dataclass
class EnsembleState:
    t: float
    v: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    eta: np.ndarray

    @property
    def m(self) -> int:
        return self.v.shape[0]

    def as_array(self) -> np.ndarray:
        return np.hstack([self.v, self.omega, self.delta, self.eta])

    @classmethod
    def from_array(cls, z: np.ndarray, t: float = 0.0) -> "EnsembleState":
        z = np.atleast_2d(z)
        n = z.shape[1] // 4
        return cls(t, z[:, :n].copy(), z[:, n:2 * n].copy(), z[:, 2 * n:3 * n].copy(), z[:, 3 * n:].copy())

    def copy(self) -> "EnsembleState":
        return EnsembleState(self.t, self.v.copy(), self.omega.copy(), self.delta.copy(), self.eta.copy())


class EnsembleRNG:
    """Random streams for an ensemble, split into fixed-size sample chunks.

    Chunk ``k`` always covers samples ``[k*CHUNK_SIZE, (k+1)*CHUNK_SIZE)`` and
    owns its own generator spawned from ``seed``, so draws do not depend on how
    chunks are scheduled.
    """

    def __init__(self, seed: int, m: int, chunk_size: int = CHUNK_SIZE):
        self.m = m
        self.chunk_size = chunk_size
        nchunks = max(1, -(-m // chunk_size))
        self.bounds = [(k * chunk_size, min(m, (k + 1) * chunk_size)) for k in range(nchunks)]
        self.generators = [np.random.Generator(np.random.PCG64(s))
                           for s in np.random.SeedSequence(seed).spawn(nchunks)]

    def standard_normal(self, n: int) -> np.ndarray:
        out = np.empty((self.m, n))
        for (a, b), g in zip(self.bounds, self.generators):
            out[a:b] = g.standard_normal((b - a, n))
        return out


class _Network:
    """Edge-list form of the electrical power p_e = {[G cos D + B sin D] v} * v."""

    def __init__(self, case: PowerCase):
        G, B = case.G, case.B
        iu, ju = np.nonzero(np.triu((G != 0) | (B != 0), 1))
        self.i, self.j = iu, ju
        self.g, self.b = G[iu, ju], B[iu, ju]
        self.gdiag = np.diag(G).copy()
        E, n = iu.size, case.n
        self.Si = np.zeros((E, n))
        self.Sj = np.zeros((E, n))
        self.Si[np.arange(E), iu] = 1.0
        self.Sj[np.arange(E), ju] = 1.0

    def power(self, v: np.ndarray, delta: np.ndarray) -> np.ndarray:
        dd = delta[:, self.i] - delta[:, self.j]
        c, s = np.cos(dd), np.sin(dd)
        vv = v[:, self.i] * v[:, self.j]
        gc, bs = self.g * c, self.b * s
        return self.gdiag * v * v + (vv * (gc + bs)) @ self.Si + (vv * (gc - bs)) @ self.Sj


def electrical_power(v, delta, case: PowerCase) -> np.ndarray:
    return _Network(case).power(np.atleast_2d(v), np.atleast_2d(delta))


def _omega_rate(net, case, v, omega, delta, eta):
    pe = net.power(v, delta)
    return (0.5 * case.omega_R / case.h) * (
        -(omega - case.omega_R) * case.d + case.p_m - pe + eta
    )


def system_drift(state: EnsembleState, case: PowerCase, noise: NoiseModel, _net=None) -> np.ndarray:
    """Per-sample drift [0; omega_dot; delta_dot; -theta eta] as an (m, 4n) array."""
    n = case.n
    if state.v.shape[1] != n or noise.n != n:
        raise ValueError("state, case and noise dimensions disagree")
    net = _net or _Network(case)
    out = np.zeros((state.m, 4 * n))
    out[:, n:2 * n] = _omega_rate(net, case, state.v, state.omega, state.delta, state.eta)
    out[:, 2 * n:3 * n] = state.omega - case.omega_R
    out[:, 3 * n:] = -noise.theta * state.eta
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        raise SampleDivergenceError(np.flatnonzero(bad), "in drift")
    return out


def sample_initial(case: PowerCase, eq: EquilibriumPoint, noise: NoiseModel, m: int,
                   seed: int | EnsembleRNG) -> EnsembleState:
    """Folded-Gaussian voltages around v*, speeds at omega_R, angles at delta*, eta ~ N(0, alpha^2 R)."""
    if m < 1:
        raise ValueError("ensemble size must be at least 1")
    rng = seed if isinstance(seed, EnsembleRNG) else EnsembleRNG(seed, m)
    n = case.n
    std = 0.1 * float(np.std(eq.v_star))
    if std == 0.0:
        warnings.warn("equilibrium voltages are all equal; using a 1e-4 voltage perturbation",
                      RuntimeWarning, stacklevel=2)
        std = 1e-4
    v = np.abs(eq.v_star + std * rng.standard_normal(n))
    eta = noise.alpha * rng.standard_normal(n) @ noise.C.T
    omega = np.full((m, n), case.omega_R)
    delta = np.tile(eq.delta_star, (m, 1))
    return EnsembleState(0.0, v, omega, delta, eta)


def milstein_correction(noise: NoiseModel, dW: np.ndarray, dt: float) -> np.ndarray:
    """Milstein term 1/2 sum_j (L^j sigma)(dW_j^2 - dt) for this model.

    The diffusion alpha sqrt(2 theta) C does not depend on the state, so
    every L^j sigma vanishes and the correction is exactly zero.
    """
    dsigma = np.zeros((noise.n, noise.n))  # d sigma / d eta
    return 0.5 * (dW * dW - dt) @ dsigma


def _advance(net, case, noise, st: EnsembleState, dt, xi, milstein=False):
    """In-place Euler-Maruyama update of ``st`` with standard normals ``xi``."""
    domega = _omega_rate(net, case, st.v, st.omega, st.delta, st.eta)
    ddelta = st.omega - case.omega_R
    dW = math.sqrt(dt) * xi
    deta = -noise.theta * st.eta * dt + noise.scale * (dW @ noise.C.T)
    if milstein:
        deta = deta + milstein_correction(noise, dW, dt)
    st.omega += domega * dt
    st.delta += ddelta * dt
    st.eta += deta
    st.t += dt


def step(state: EnsembleState, case: PowerCase, noise: NoiseModel, dt: float,
         rng: EnsembleRNG | np.random.Generator | None = None, xi: np.ndarray | None = None,
         milstein: bool = False) -> EnsembleState:
    """Advance every sample by ``dt``; returns a new state.

    Standard normals come from ``xi`` if given, otherwise from ``rng``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if xi is None:
        if rng is None:
            raise ValueError("need rng or xi")
        xi = rng.standard_normal(case.n) if isinstance(rng, EnsembleRNG) else \
            rng.standard_normal((state.m, case.n))
    new = state.copy()
    _advance(_Network(case), case, noise, new, dt, xi, milstein)
    bad = ~(np.all(np.isfinite(new.omega), axis=1) & np.all(np.isfinite(new.delta), axis=1))
    if bad.any():
        raise SampleDivergenceError(np.flatnonzero(bad), f"after step to t={new.t:.4g}")
    return new


@dataclass
class ScenarioConfig:
    dt: float = 1e-2
    burn_in_T: float = 50.0
    post_T: float = 10.0
    tripped_line: Optional[LineId] = None
    m: int = 5000
    seed: int = 0
    record_lines: Sequence[LineId] = ()
    record_stride: int = 1
    trip_keep_diagonal: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.burn_in_T < 0 or self.post_T < 0:
            raise ValueError("durations must be nonnegative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.tripped_line is not None:
            self.tripped_line = _as_line(self.tripped_line)
        self.record_lines = tuple(_as_line(l) for l in self.record_lines)

    def n_steps(self, T: float) -> int:
        return int(round(T / self.dt))


@dataclass
class TrajectoryRecord:
    """Recorded line energies ``u[l]`` and drift responses ``mu[l]``, each (m, N_t)."""

    times: np.ndarray
    lines: List[LineId]
    b: Dict[LineId, float]
    u: Dict[LineId, np.ndarray]
    mu: Dict[LineId, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return next(iter(self.u.values())).shape[0] if self.u else 0

    def subset(self, m: int) -> "TrajectoryRecord":
        """First ``m`` samples (chunks are nested, so this is a smaller ensemble)."""
        return replace(self, u={l: a[:m] for l, a in self.u.items()},
                       mu={l: a[:m] for l, a in self.mu.items()}, meta={**self.meta, "m": m})


def _integrate(net, case, noise, st, dt, nsteps, rng, alive, on_step=None):
    m = st.m
    for k in range(nsteps):
        xi = rng.standard_normal(case.n)
        _advance(net, case, noise, st, dt, xi)
        finite = np.all(np.isfinite(st.omega), axis=1) & np.all(np.isfinite(st.delta), axis=1)
        newly = alive & ~finite
        if newly.any():
            alive &= finite
            n_bad = int(m - alive.sum())
            log.warning("%d samples diverged by t=%.4g", n_bad, st.t)
            if n_bad > DIVERGENCE_ABORT_FRACTION * m:
                raise SimulationDivergenceError(n_bad, m, st.t)
            # park diverged samples at a finite point; they are dropped from the record
            for arr in (st.omega, st.delta, st.eta):
                arr[~alive] = 0.0
        if on_step is not None:
            on_step(k + 1)


def run_scenario(case: PowerCase, eq: EquilibriumPoint, noise: NoiseModel,
                 cfg: ScenarioConfig, progress=None) -> TrajectoryRecord:
    """Burn-in on the intact network, optional line trip, then a recorded window.

    Recorded times are relative to the trip instant.
    """
    post_case = case
    if cfg.tripped_line is not None:
        post_case = remove_line(case, cfg.tripped_line, keep_diagonal=cfg.trip_keep_diagonal)
    qois = []
    for l in cfg.record_lines:
        if not post_case.has_edge(l):
            raise KeyError(f"recorded line {l} is not in service after the trip")
        qois.append(LineQoi.from_case(case, l))

    rng = EnsembleRNG(cfg.seed, cfg.m)
    st = sample_initial(case, eq, noise, cfg.m, rng)
    alive = np.ones(cfg.m, dtype=bool)
    _integrate(_Network(case), case, noise, st, cfg.dt, cfg.n_steps(cfg.burn_in_T), rng, alive, progress)

    st.t = 0.0
    n_post = cfg.n_steps(cfg.post_T)
    frames = list(range(0, n_post + 1, cfg.record_stride)) if n_post > 0 else []
    times = np.array([k * cfg.dt for k in frames])
    U = {q.line: np.empty((cfg.m, len(frames))) for q in qois}
    MU = {q.line: np.empty((cfg.m, len(frames))) for q in qois}
    slot = {k: idx for idx, k in enumerate(frames)}

    def record(k):
        idx = slot.get(k)
        if idx is None:
            return
        for q in qois:
            U[q.line][:, idx] = line_energy(st, q)
            MU[q.line][:, idx] = line_energy_drift(st, q)

    if frames:
        record(0)
        _integrate(_Network(post_case), post_case, noise, st, cfg.dt, n_post, rng, alive, record)

    keep = alive
    meta = {"case": case.name, "seed": cfg.seed, "m": int(keep.sum()), "dt": cfg.dt,
            "burn_in_T": cfg.burn_in_T, "post_T": cfg.post_T,
            "tripped_line": str(cfg.tripped_line) if cfg.tripped_line else None,
            "diverged": int(cfg.m - keep.sum())}
    if not keep.all():
        U = {l: a[keep] for l, a in U.items()}
        MU = {l: a[keep] for l, a in MU.items()}
    return TrajectoryRecord(times, [q.line for q in qois], {q.line: q.b_ij for q in qois}, U, MU, meta)


# ---------------------------------------------------------------------------
# serialization


def write_record(rec: TrajectoryRecord, path) -> Path:
    arrays = {"times": rec.times}
    for l in rec.lines:
        arrays[f"u/{l}"] = rec.u[l]
        arrays[f"mu/{l}"] = rec.mu[l]
    meta = {**rec.meta, "lines": [str(l) for l in rec.lines], "b": {str(l): rec.b[l] for l in rec.lines}}
    return _binio.write_arrays(path, _TRJ_MAGIC, arrays, meta)


def read_record(path) -> TrajectoryRecord:
    arrays, meta = _binio.read_arrays(path, _TRJ_MAGIC)
    meta = dict(meta)
    lines = [LineId.parse(s) for s in meta.pop("lines")]
    b = {LineId.parse(k): v for k, v in meta.pop("b").items()}
    return TrajectoryRecord(arrays["times"], lines, b,
                            {l: arrays[f"u/{l}"] for l in lines},
                            {l: arrays[f"mu/{l}"] for l in lines}, meta)


def write_record_csv(rec: TrajectoryRecord, path) -> Path:
    """One row per (sample, time) pair."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "t"] + [f"{k}_{l}" for l in rec.lines for k in ("u", "mu")])
        for s in range(rec.m):
            for k, t in enumerate(rec.times):
                w.writerow([s, repr(float(t))] + [repr(float(arr[l][s, k]))
                                                  for l in rec.lines for arr in (rec.u, rec.mu)])
    return path
