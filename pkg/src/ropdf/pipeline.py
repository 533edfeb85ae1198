"""End-to-end experiments: marginal, joint and sample-complexity studies.

An experiment is described by an INI file (see :data:`CONFIG_SCHEMA`). Every
stage is deterministic given the seed: the closure ensemble uses ``seed``,
the benchmark ensemble uses ``seed + 1``.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .case_model import CaseParseError, LineId, load_case, _as_line
from .closure import fit_closure
from .fv import (DensityField, Grid1D, Grid2D, build_grid, solve_ropdf, write_density,
                 write_density_csv)
from .metrics import (independence_joint, kde, kde_frames, l1_error,
                      loglog_slope, mutual_information, own_marginals, sample_complexity,
                      binomial_standard_error, tail_probability, ecdf_exceedance, union_exceedance,
                      union_tail_probability)
from .stochastic_sim import ScenarioConfig, build_noise, run_scenario

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "StageError",
    "ExperimentConfig",
    "CONFIG_SCHEMA",
    "default_config",
    "load_config",
    "quick",
    "validate",
    "run_marginal",
    "run_joint",
    "run_complexity",
    "emit_plotdata",
]


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """Failure inside a pipeline stage; ``cause`` holds the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


# builtin scenarios: noise correlation, tripped line, recorded lines
CASE_SCENARIOS = {
    "case9": (0.44, "8-9", ("4-9", "7-8")),
    "case30": (0.36, "6-8", ("6-7", "6-9")),
    "case57": (0.36, "36-37", ("35-36", "36-40")),
}


@dataclass
class ExperimentConfig:
    case: str = "case9"
    theta: float = 1.0
    alpha: float = 0.05
    r: float = 0.44
    dt: float = 1e-2
    burn_in_T: float = 50.0
    post_T: float = 10.0
    tripped_line: Optional[LineId] = None
    record_lines: Tuple[LineId, ...] = ()
    record_stride: int = 1
    m_R: int = 5000
    m_KDE: int = 10000
    seed: int = 0
    n_cells: int = 400
    n_cells_2d: int = 200
    padding: float = 1.0
    method: str = "local-linear"
    method_2d: str = "global-linear"
    cv_folds: int = 10
    cv_every: int = 100
    span: float = 0.3
    frame_stride_2d: int = 10
    # sample-complexity study
    cx_T: float = 2.0
    cx_dt: float = 5e-3
    cx_burn_in_T: float = 50.0
    cx_ladder: Tuple[int, ...] = (4096, 8192, 16384)
    cx_m_bench: int = 32768
    cx_seeds: Tuple[int, ...] = (0,)
    cx_gamma: float = 0.01
    cx_lines: Tuple[LineId, ...] = ()
    cx_frame_stride: int = 4
    out: str = "results"

    def __post_init__(self):
        self.tripped_line = _as_line(self.tripped_line) if self.tripped_line else None
        self.record_lines = tuple(_as_line(l) for l in self.record_lines)
        self.cx_lines = tuple(_as_line(l) for l in self.cx_lines)
        self.cx_ladder = tuple(int(m) for m in self.cx_ladder)
        self.cx_seeds = tuple(int(s) for s in self.cx_seeds)
        problems = []
        for name in ("m_R", "m_KDE", "n_cells", "n_cells_2d", "record_stride", "cv_folds",
                     "cv_every", "frame_stride_2d", "cx_m_bench", "cx_frame_stride"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        for name in ("theta", "dt", "cx_dt", "cx_T", "cx_gamma"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.alpha < 0:
            problems.append("alpha must be nonnegative")
        if not 0.5 <= self.padding <= 1.0:
            problems.append("padding must lie in [0.5, 1.0]")
        if self.method not in ("local-linear", "global-linear"):
            problems.append(f"unknown 1D closure method {self.method!r}")
        if self.method_2d not in ("global-linear", "lowess-2d"):
            problems.append(f"unknown 2D closure method {self.method_2d!r}")
        if not self.cx_ladder or not self.cx_seeds:
            problems.append("complexity ladder and seeds must be nonempty")
        if problems:
            raise ConfigError("; ".join(problems))
        if self.m_KDE < self.m_R:
            warnings.warn("m_KDE < m_R: the benchmark is noisier than the closure ensemble", stacklevel=2)


def _parse_lines(text: str) -> Tuple[LineId, ...]:
    return tuple(LineId.parse(s) for s in text.replace(";", " ").split() if s)


def _parse_ints(text: str) -> Tuple[int, ...]:
    return tuple(int(s) for s in text.replace(",", " ").split())


# section -> key -> (field, parser)
CONFIG_SCHEMA = {
    "case": {"bundle": ("case", str)},
    "noise": {"theta": ("theta", float), "alpha": ("alpha", float), "r": ("r", float)},
    "scenario": {
        "dt": ("dt", float), "burn_in_T": ("burn_in_T", float), "post_T": ("post_T", float),
        "tripped_line": ("tripped_line", lambda s: None if s.strip().lower() in ("", "none") else LineId.parse(s)),
        "record_lines": ("record_lines", _parse_lines), "record_stride": ("record_stride", int),
    },
    "ensemble": {"m_R": ("m_R", int), "m_KDE": ("m_KDE", int), "seed": ("seed", int)},
    "grid": {"n_cells": ("n_cells", int), "n_cells_2d": ("n_cells_2d", int), "padding": ("padding", float),
             "frame_stride_2d": ("frame_stride_2d", int)},
    "closure": {"method": ("method", str), "method_2d": ("method_2d", str), "cv_folds": ("cv_folds", int),
                "cv_every": ("cv_every", int), "span": ("span", float)},
    "complexity": {
        "T": ("cx_T", float), "dt": ("cx_dt", float), "burn_in_T": ("cx_burn_in_T", float),
        "ladder": ("cx_ladder", _parse_ints), "m_bench": ("cx_m_bench", int), "seeds": ("cx_seeds", _parse_ints),
        "gamma": ("cx_gamma", float), "lines": ("cx_lines", _parse_lines), "frame_stride": ("cx_frame_stride", int),
    },
    "output": {"dir": ("out", str)},
}


def default_config(case: str = "case9", **overrides) -> ExperimentConfig:
    """Reference defaults for a builtin case, with keyword overrides."""
    base = {"case": case}
    name = Path(case).name
    if name in CASE_SCENARIOS:
        r, trip, lines = CASE_SCENARIOS[name]
        base.update(r=r, tripped_line=LineId.parse(trip), record_lines=tuple(LineId.parse(l) for l in lines))
    base.update(overrides)
    return ExperimentConfig(**base)


def load_config(path) -> ExperimentConfig:
    """Read an INI experiment file; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            fname, conv = CONFIG_SCHEMA[section][key]
            try:
                values[fname] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {section}.{key}: {exc}") from exc
    case = values.pop("case", "case9")
    # relative bundle paths resolve against the config file
    cand = Path(path).parent / case
    if not Path(case).exists() and cand.exists():
        case = str(cand)
    try:
        return default_config(case, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def quick(cfg: ExperimentConfig) -> ExperimentConfig:
    """Smoke-test settings: small ensembles, short burn-in, cheap complexity ladder."""
    return replace(cfg, m_R=500, m_KDE=1000, burn_in_T=5.0, cv_every=max(cfg.cv_every, 200),
                   cx_burn_in_T=5.0, cx_ladder=(512, 1024), cx_m_bench=2048, cx_seeds=cfg.cx_seeds[:1],
                   cx_T=0.5)


def validate(cfg: ExperimentConfig):
    """Load the case and check every referenced line; returns ``(case, eq)``."""
    try:
        case, eq = load_case(cfg.case)
    except (CaseParseError, FileNotFoundError, KeyError) as exc:
        raise ConfigError(f"cannot load case {cfg.case!r}: {exc}") from exc
    if cfg.tripped_line is not None and not case.has_edge(cfg.tripped_line):
        raise ConfigError(f"tripped line {cfg.tripped_line} is not in {cfg.case}")
    for l in cfg.record_lines + cfg.cx_lines:
        if not case.has_edge(l):
            raise ConfigError(f"line {l} is not in {cfg.case}")
        if l == cfg.tripped_line:
            raise ConfigError(f"recorded line {l} is the tripped line")
    for l in cfg.record_lines:
        if l not in case.ratings:
            raise ConfigError(f"recorded line {l} has no rating")
    if cfg.tripped_line is not None:
        from .case_model import remove_line
        try:
            remove_line(case, cfg.tripped_line)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if not -1.0 / (case.n - 1) < cfg.r < 1.0:
        raise ConfigError(f"correlation r={cfg.r} is not positive definite for n={case.n}")
    return case, eq


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)

    def __exit__(self, etype, exc, tb):
        if exc is not None and not isinstance(exc, (StageError, ConfigError, KeyboardInterrupt)):
            raise StageError(self.name, exc) from exc
        log.info("stage %s done in %.1fs", self.name, time.perf_counter() - self.t0)
        return False


# ---------------------------------------------------------------------------
# shared pieces


def _simulate(cfg, case, eq, m, seed, lines, tripped=True, T=None, dt=None, burn=None, stride=None):
    noise = build_noise(case.n, cfg.r, cfg.theta, cfg.alpha)
    sc = ScenarioConfig(dt=dt or cfg.dt, burn_in_T=cfg.burn_in_T if burn is None else burn,
                        post_T=cfg.post_T if T is None else T,
                        tripped_line=cfg.tripped_line if tripped else None, m=m, seed=seed,
                        record_lines=lines, record_stride=stride or cfg.record_stride)
    return run_scenario(case, eq, noise, sc)


def _clip_threshold(axis: Grid1D, T: float):
    """Clamp a rating into the grid; the density vanishes outside it."""
    return min(max(T, axis.U_min), axis.U_max), not axis.U_min <= T <= axis.U_max


def _solve_marginal(u, mu, b, times, cfg, grid, seed, label):
    """Fit the 1D closure for one line and solve its RO-PDF on ``grid``."""
    model = fit_closure(times, u, mu / b ** 2, cfg.method, n_folds=cfg.cv_folds, cv_every=cfg.cv_every,
                        seed=seed, label=label)
    f0 = kde(u[:, 0], grid)
    return solve_ropdf(f0, grid, model.field(grid.faces), times[-1], scale=b ** 2, t0=times[0],
                       knots=times, out_times=times)


def _peak_index(u) -> int:
    return int(np.argmax(u.mean(axis=0)))


# ---------------------------------------------------------------------------
# marginal study


@dataclass
class LineResult:
    line: LineId
    rating: float
    peak_time: float
    predicted: float
    empirical: float
    empirical_bench: float
    standard_error: float
    l1: float
    threshold_outside_grid: bool
    ropdf: DensityField = field(repr=False)
    bench: DensityField = field(repr=False)
    prob_series: np.ndarray = field(repr=False)  # (N_t, 3): predicted, empirical, empirical_bench


@dataclass
class MarginalResult:
    cfg: ExperimentConfig
    lines: List[LineResult]

    def summary(self) -> dict:
        return {
            "kind": "marginal", "case": _case_name(self.cfg), "seed": self.cfg.seed,
            "m_R": self.cfg.m_R, "m_KDE": self.cfg.m_KDE,
            "lines": [{
                "line": str(r.line), "rating": r.rating, "t": r.peak_time, "predicted": r.predicted,
                "empirical": r.empirical, "empirical_bench": r.empirical_bench,
                "standard_error": r.standard_error, "l1": r.l1,
                "threshold_outside_grid": r.threshold_outside_grid,
            } for r in self.lines],
        }


def _case_name(cfg) -> str:
    return Path(cfg.case).name


def run_marginal(cfg: ExperimentConfig) -> MarginalResult:
    """1D RO-PDF per recorded line against an independent KDE benchmark."""
    with _Stage("validate"):
        case, eq = validate(cfg)
    if not cfg.record_lines:
        raise ConfigError("no record_lines")
    with _Stage("simulate"):
        rec = _simulate(cfg, case, eq, cfg.m_R, cfg.seed, cfg.record_lines)
    with _Stage("simulate-benchmark"):
        bench = _simulate(cfg, case, eq, cfg.m_KDE, cfg.seed + 1, cfg.record_lines)
    times = rec.times
    out = []
    for l in cfg.record_lines:
        u, mu, b = rec.u[l], rec.mu[l], rec.b[l]
        with _Stage(f"grid {l}"):
            grid = build_grid(u, cfg.n_cells, cfg.padding)
        with _Stage(f"closure+solve {l}"):
            F = _solve_marginal(u, mu, b, times, cfg, grid, cfg.seed, f"line {l}")
        with _Stage(f"benchmark-kde {l}"):
            B = kde_frames(bench.u[l], times, grid)
        with _Stage(f"metrics {l}"):
            rating = case.ratings[l]
            T, outside = _clip_threshold(grid, rating)
            series = np.array([[tail_probability(F.frames[k], grid, T), ecdf_exceedance(u[:, k], rating),
                                ecdf_exceedance(bench.u[l][:, k], rating)] for k in range(times.size)])
            k = _peak_index(u)
            pred = float(series[k, 0])
            out.append(LineResult(l, rating, float(times[k]), pred, float(series[k, 1]), float(series[k, 2]),
                                  binomial_standard_error(float(series[k, 1]), u.shape[0]), l1_error(F, B), outside,
                                  F, B, series))
    return MarginalResult(cfg, out)


# ---------------------------------------------------------------------------
# joint study


@dataclass
class JointResult:
    cfg: ExperimentConfig
    lines: Tuple[LineId, LineId]
    ratings: Tuple[float, float]
    peak_time: float
    predicted: float
    independent: float
    independent_own: float
    empirical: float
    empirical_bench: float
    standard_error: float
    l1: float
    mi_times: np.ndarray
    mi: np.ndarray
    mi_bench: np.ndarray
    ropdf: DensityField = field(repr=False)
    bench: DensityField = field(repr=False)
    marginals: Tuple[DensityField, DensityField] = field(repr=False)
    threshold_outside_grid: bool = False

    def summary(self) -> dict:
        k = int(np.argmin(np.abs(self.mi_times - self.peak_time)))
        return {
            "kind": "joint", "case": _case_name(self.cfg), "seed": self.cfg.seed,
            "m_R": self.cfg.m_R, "m_KDE": self.cfg.m_KDE,
            "lines": [str(l) for l in self.lines], "ratings": list(self.ratings), "t": self.peak_time,
            "predicted": self.predicted, "independent": self.independent,
            "independent_own_marginals": self.independent_own, "empirical": self.empirical,
            "empirical_bench": self.empirical_bench, "standard_error": self.standard_error,
            "l1": self.l1, "mi_at_peak": float(self.mi[k]), "mi_bench_at_peak": float(self.mi_bench[k]),
            "threshold_outside_grid": self.threshold_outside_grid,
        }


def _shares_bus(l1: LineId, l2: LineId) -> bool:
    return bool({l1.i, l1.j} & {l2.i, l2.j})


def run_joint(cfg: ExperimentConfig) -> JointResult:
    """2D RO-PDF of two line energies, union exceedance and mutual information."""
    with _Stage("validate"):
        case, eq = validate(cfg)
    if len(cfg.record_lines) != 2:
        raise ConfigError(f"joint study needs exactly 2 record_lines, got {len(cfg.record_lines)}")
    l1, l2 = cfg.record_lines
    if not _shares_bus(l1, l2):
        warnings.warn(f"lines {l1} and {l2} share no bus", stacklevel=2)
    with _Stage("simulate"):
        rec = _simulate(cfg, case, eq, cfg.m_R, cfg.seed, cfg.record_lines)
    with _Stage("simulate-benchmark"):
        bench = _simulate(cfg, case, eq, cfg.m_KDE, cfg.seed + 1, cfg.record_lines)
    times = rec.times
    U = np.stack([rec.u[l1], rec.u[l2]], axis=2)
    b1, b2 = rec.b[l1], rec.b[l2]
    # the peak of whichever line reaches the larger mean energy
    means = [rec.u[l].mean(axis=0) for l in (l1, l2)]
    lead = int(np.argmax([m.max() for m in means]))
    kpeak = int(np.argmax(means[lead]))
    frame_idx = sorted(set(range(0, times.size, cfg.frame_stride_2d)) | {times.size - 1, kpeak})
    out_times = times[frame_idx]

    with _Stage("grid-2d"):
        grid = build_grid([rec.u[l1], rec.u[l2]], cfg.n_cells_2d, cfg.padding)
    with _Stage("closure+solve-2d"):
        m1 = fit_closure(times, U, rec.mu[l1] / b1 ** 2, cfg.method_2d, span=cfg.span, label=f"line {l1}")
        m2 = fit_closure(times, U, rec.mu[l2] / b2 ** 2, cfg.method_2d, span=cfg.span, label=f"line {l2}")
        nx, ny = grid.shape
        fa1, fa2 = m1.field(grid.x_faces()), m2.field(grid.y_faces())
        f0 = kde(U[:, 0], grid)
        F = solve_ropdf(f0, grid, lambda t: (fa1(t).reshape(nx + 1, ny), fa2(t).reshape(nx, ny + 1)),
                        times[-1], scale=(b1 ** 2, b2 ** 2), t0=times[0], knots=times, out_times=out_times)
    with _Stage("marginals-on-axes"):
        M1 = _solve_marginal(rec.u[l1], rec.mu[l1], b1, times, cfg, grid.x, cfg.seed, f"line {l1}")
        M2 = _solve_marginal(rec.u[l2], rec.mu[l2], b2, times, cfg, grid.y, cfg.seed, f"line {l2}")
    with _Stage("benchmark-kde-2d"):
        UB = np.stack([bench.u[l1], bench.u[l2]], axis=2)
        B = DensityField(grid, out_times, np.array([kde(UB[:, k], grid) for k in frame_idx]))
    with _Stage("metrics-2d"):
        r1, r2 = case.ratings[l1], case.ratings[l2]
        T1, out1 = _clip_threshold(grid.x, r1)
        T2, out2 = _clip_threshold(grid.y, r2)
        jpk = frame_idx.index(kpeak)
        # mass above the thresholds, as for the 1D tails; mass that left
        # through the boundaries does not count as exceedance
        pred = union_tail_probability(F.frames[jpk], grid, (T1, T2))
        p1 = 1.0 - tail_probability(M1.frames[kpeak], grid.x, T1)
        p2 = 1.0 - tail_probability(M2.frames[kpeak], grid.y, T2)
        o1, o2 = own_marginals(F.frames[jpk], grid)
        q1 = 1.0 - tail_probability(o1, grid.x, T1)
        q2 = 1.0 - tail_probability(o2, grid.y, T2)
        mi = np.array([mutual_information(fr, *own_marginals(fr, grid), grid) for fr in F.frames])
        mib = np.array([mutual_information(fr, *own_marginals(fr, grid), grid) for fr in B.frames])
        emp = union_exceedance(rec.u[l1][:, kpeak], rec.u[l2][:, kpeak], (r1, r2))
        empb = union_exceedance(bench.u[l1][:, kpeak], bench.u[l2][:, kpeak], (r1, r2))
        pred = min(max(pred, 0.0), 1.0)
        return JointResult(cfg, (l1, l2), (r1, r2), float(times[kpeak]), pred,
                           independence_joint(min(max(p1, 0), 1), min(max(p2, 0), 1)),
                           independence_joint(min(max(q1, 0), 1), min(max(q2, 0), 1)),
                           emp, empb, binomial_standard_error(emp, cfg.m_R), l1_error(F, B),
                           out_times, mi, mib, F, B, (M1, M2), out1 or out2)


# ---------------------------------------------------------------------------
# sample complexity


@dataclass
class ComplexityResult:
    cfg: ExperimentConfig
    lines: List[LineId]
    ladder: Tuple[int, ...]
    # errors[method][seed][line][m]
    errors: Dict[str, Dict[int, Dict[LineId, Dict[int, float]]]]
    gamma: float

    def mean_curves(self, method: str) -> Dict[LineId, Dict[int, float]]:
        per_seed = self.errors[method]
        return {l: {m: float(np.mean([per_seed[s][l][m] for s in per_seed])) for m in self.ladder}
                for l in self.lines}

    def mean_error(self, method: str, m: int) -> float:
        return float(np.mean([c[m] for c in self.mean_curves(method).values()]))

    def summary(self) -> dict:
        out = {"kind": "complexity", "case": _case_name(self.cfg), "gamma": self.gamma,
               "ladder": list(self.ladder), "seeds": list(self.cfg.cx_seeds), "m_bench": self.cfg.cx_m_bench,
               "n_lines": len(self.lines)}
        for method in ("ropdf", "kde"):
            per_line, total = sample_complexity(self.mean_curves(method), self.gamma)
            out[method] = {
                "mean_error": {str(m): self.mean_error(method, m) for m in self.ladder},
                "m_star": {str(l): v for l, v in per_line.items()},
                "m_star_total": total,
            }
        return out


def run_complexity(cfg: ExperimentConfig) -> ComplexityResult:
    """L1 error of RO-PDF and same-size KDE against a large KDE benchmark, no trip."""
    with _Stage("validate"):
        case, eq = validate(cfg)
    lines = list(cfg.cx_lines) or list(case.edges)
    mmax = max(cfg.cx_ladder)
    kw = dict(tripped=False, T=cfg.cx_T, dt=cfg.cx_dt, burn=cfg.cx_burn_in_T, stride=cfg.cx_frame_stride)
    with _Stage("simulate-benchmark"):
        bench = _simulate(cfg, case, eq, cfg.cx_m_bench, 10_000 + cfg.seed, lines, **kw)
    times = bench.times
    grids, bfields = {}, {}
    with _Stage("benchmark-kde"):
        for l in lines:
            grids[l] = build_grid(bench.u[l], cfg.n_cells, cfg.padding)
            bfields[l] = kde_frames(bench.u[l], times, grids[l])
    errors = {"ropdf": {}, "kde": {}}
    for s in cfg.cx_seeds:
        with _Stage(f"simulate seed {s}"):
            rec = _simulate(cfg, case, eq, mmax, cfg.seed + s, lines, **kw)
        errors["ropdf"][s] = {l: {} for l in lines}
        errors["kde"][s] = {l: {} for l in lines}
        for m in cfg.cx_ladder:
            sub = rec.subset(m)
            for l in lines:
                with _Stage(f"seed {s} m={m} line {l}"):
                    F = _solve_marginal(sub.u[l], sub.mu[l], sub.b[l], times, cfg, grids[l], cfg.seed + s,
                                        f"line {l}")
                    K = kde_frames(sub.u[l], times, grids[l])
                    errors["ropdf"][s][l][m] = l1_error(F, bfields[l])
                    errors["kde"][s][l][m] = l1_error(K, bfields[l])
    return ComplexityResult(cfg, lines, cfg.cx_ladder, errors, cfg.cx_gamma)


def cross_case_slopes(results: Sequence[ComplexityResult]) -> dict:
    """Log-log slope of aggregate m* against the number of lines, per method."""
    out = {}
    for method in ("ropdf", "kde"):
        sizes, totals = [], []
        for r in results:
            _, total = sample_complexity(r.mean_curves(method), r.gamma)
            sizes.append(len(r.lines))
            totals.append(total)
        out[method] = loglog_slope(sizes, totals)
    return out


# ---------------------------------------------------------------------------
# output


def _write_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _ensure_dir(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def emit_plotdata(result, out=None) -> List[Path]:
    """Write CSV/JSON/binary files named ``{case}_{lines}_{kind}.{ext}``."""
    cfg = result.cfg
    out = _ensure_dir(out or cfg.out)
    case = _case_name(cfg)
    written = []

    def w(path):
        written.append(path)
        return path

    try:
        if isinstance(result, MarginalResult):
            for r in result.lines:
                stem = f"{case}_{r.line}"
                write_density_csv(r.ropdf, w(out / f"{stem}_pdf.csv"))
                write_density_csv(r.bench, w(out / f"{stem}_kde.csv"))
                write_density(r.ropdf, w(out / f"{stem}_pdf.bin"))
                with open(w(out / f"{stem}_probability.csv"), "w", newline="") as fh:
                    cw = csv.writer(fh)
                    cw.writerow(["t", "predicted", "empirical", "empirical_bench", "ratio"])
                    for t, (p, e, eb) in zip(r.ropdf.times, r.prob_series):
                        cw.writerow([repr(float(t)), repr(float(p)), repr(float(e)), repr(float(eb)),
                                     repr(float(p / e)) if e > 0 else "nan"])
            _write_json(result.summary(), w(out / f"{case}_summary.json"))
        elif isinstance(result, JointResult):
            stem = f"{case}_{result.lines[0]}_{result.lines[1]}"
            k = int(np.argmin(np.abs(result.ropdf.times - result.peak_time)))
            peak = DensityField(result.ropdf.grid, result.ropdf.times[k:k + 1], result.ropdf.frames[k:k + 1])
            bpeak = DensityField(result.bench.grid, result.bench.times[k:k + 1], result.bench.frames[k:k + 1])
            write_density_csv(peak, w(out / f"{stem}_pdf2d_peak.csv"))
            write_density_csv(bpeak, w(out / f"{stem}_kde2d_peak.csv"))
            write_density(result.ropdf, w(out / f"{stem}_pdf2d.bin"))
            write_density(result.bench, w(out / f"{stem}_kde2d.bin"))
            _write_mi(result, w(out / f"{stem}_mi.csv"))
            _write_json(result.summary(), w(out / f"{stem}_summary.json"))
        elif isinstance(result, ComplexityResult):
            with open(w(out / f"{case}_complexity_curves.csv"), "w", newline="") as fh:
                cw = csv.writer(fh)
                cw.writerow(["method", "seed", "line", "m", "l1"])
                for method, per_seed in result.errors.items():
                    for s, per_line in per_seed.items():
                        for l, curve in per_line.items():
                            for m, e in curve.items():
                                cw.writerow([method, s, str(l), m, repr(float(e))])
            _write_json(result.summary(), w(out / f"{case}_complexity_summary.json"))
        else:
            raise TypeError(f"cannot emit {type(result).__name__}")
    except OSError as exc:
        raise OSError(f"writing results to {out}: {exc}") from exc
    return written


def _write_mi(result: JointResult, path: Path):
    with open(path, "w", newline="") as fh:
        cw = csv.writer(fh)
        cw.writerow(["t", "mi_ropdf", "mi_kde"])
        for t, a, b in zip(result.mi_times, result.mi, result.mi_bench):
            cw.writerow([repr(float(t)), repr(float(a)), repr(float(b))])


def emit_mutualinfo(result: JointResult, out=None) -> List[Path]:
    out = _ensure_dir(out or result.cfg.out)
    path = out / f"{_case_name(result.cfg)}_{result.lines[0]}_{result.lines[1]}_mi.csv"
    _write_mi(result, path)
    return [path]
