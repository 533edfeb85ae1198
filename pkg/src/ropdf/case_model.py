"""Reduced power-network cases: bundle parsing, serialization and line removal.

A case bundle is a directory holding four plain-text files::

    network       n, edge list with (g_ij, b_ij), dense G and B rows
    machines      omega_R, then one row per bus: h d p_m
    equilibrium   one row per bus: v_star delta_star
    ratings       one row per rated line: i j u_max

Grammar (all files)
-------------------
* ``#`` starts a comment that runs to the end of the line; blank lines are
  ignored.
* Numbers are decimal ASCII floats/ints as accepted by :func:`float`.
* Bus indices are 1-based.

``network``::

    n <int>
    edges <int E>
    <i> <j> <g_ij> <b_ij>        # E rows, i < j
    G
    <n floats>                   # n rows, row-major
    B
    <n floats>                   # n rows

``machines``::

    omega_R <float>
    <i> <h> <d> <p_m>            # n rows, i = 1..n in order

``equilibrium``::

    <i> <v_star> <delta_star>    # n rows, i = 1..n in order, delta in rad

``ratings``::

    <i> <j> <u_max>              # any number of rows, each an existing edge

Anything else (unknown keywords, extra tokens, extra rows) is rejected.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

__all__ = [
    "CaseParseError",
    "MissingFileError",
    "DimensionMismatchError",
    "AsymmetricMatrixError",
    "NonPositiveRatingError",
    "MalformedBundleError",
    "UnknownLineError",
    "IslandingError",
    "MissingRatingError",
    "LineId",
    "PowerCase",
    "EquilibriumPoint",
    "parse_case_bundle",
    "write_case_bundle",
    "load_case",
    "builtin_cases",
    "remove_line",
    "line_rating",
    "is_connected",
]

SYMMETRY_TOL = 1e-12


class CaseParseError(ValueError):
    """Base class for case-bundle parse failures."""


class MissingFileError(CaseParseError, FileNotFoundError):
    pass


class DimensionMismatchError(CaseParseError):
    pass


class AsymmetricMatrixError(CaseParseError):
    pass


class NonPositiveRatingError(CaseParseError):
    pass


class MalformedBundleError(CaseParseError):
    """Unknown keyword, bad token, trailing garbage or broken invariant."""


class UnknownLineError(KeyError):
    pass


class IslandingError(ValueError):
    pass


class MissingRatingError(KeyError):
    pass


@dataclass(frozen=True, order=True)
class LineId:
    """Undirected line between buses ``i`` and ``j`` (1-based, ``i < j``)."""

    i: int
    j: int

    def __post_init__(self):
        i, j = int(self.i), int(self.j)
        if i == j:
            raise ValueError(f"line endpoints must differ, got ({i}, {j})")
        object.__setattr__(self, "i", min(i, j))
        object.__setattr__(self, "j", max(i, j))

    @classmethod
    def parse(cls, text: str) -> "LineId":
        """Parse ``"4-9"``, ``"4,9"`` or ``"(4, 9)"``."""
        cleaned = text.strip().strip("()").replace(",", "-").replace(" ", "")
        parts = [p for p in cleaned.split("-") if p]
        if len(parts) != 2:
            raise ValueError(f"cannot parse line id {text!r}")
        return cls(int(parts[0]), int(parts[1]))

    def __str__(self):
        return f"{self.i}-{self.j}"


def _as_line(l) -> LineId:
    if isinstance(l, LineId):
        return l
    if isinstance(l, str):
        return LineId.parse(l)
    i, j = l
    return LineId(i, j)


@dataclass(frozen=True)
class PowerCase:
    """Reduced network with one machine per bus.

    Matrices are stored 0-based; ``edges`` and ``ratings`` use 1-based
    :class:`LineId` keys as in the bundle files.
    """

    n: int
    edges: Tuple[LineId, ...]
    G: np.ndarray
    B: np.ndarray
    h: np.ndarray
    d: np.ndarray
    p_m: np.ndarray
    omega_R: float = 1.0
    ratings: Dict[LineId, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        for attr in ("G", "B", "h", "d", "p_m"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "edges", tuple(sorted(_as_line(e) for e in self.edges)))
        object.__setattr__(
            self, "ratings", {_as_line(k): float(v) for k, v in dict(self.ratings).items()}
        )
        _validate_case(self)

    def b(self, l) -> float:
        l = _as_line(l)
        return float(self.B[l.i - 1, l.j - 1])

    def has_edge(self, l) -> bool:
        return _as_line(l) in set(self.edges)

    def __eq__(self, other):
        if not isinstance(other, PowerCase):
            return NotImplemented
        return (
            self.n == other.n
            and self.edges == other.edges
            and self.omega_R == other.omega_R
            and self.ratings == other.ratings
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("G", "B", "h", "d", "p_m")
            )
        )

    __hash__ = None


@dataclass(frozen=True)
class EquilibriumPoint:
    v_star: np.ndarray
    delta_star: np.ndarray

    def __post_init__(self):
        for attr in ("v_star", "delta_star"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if self.v_star.shape != self.delta_star.shape or self.v_star.ndim != 1:
            raise DimensionMismatchError("v_star and delta_star must be equal-length vectors")
        if np.any(self.v_star <= 0):
            raise MalformedBundleError("equilibrium voltages must be positive")

    def __eq__(self, other):
        if not isinstance(other, EquilibriumPoint):
            return NotImplemented
        return np.array_equal(self.v_star, other.v_star) and np.array_equal(
            self.delta_star, other.delta_star
        )

    __hash__ = None


def _validate_case(case: PowerCase) -> None:
    n = case.n
    for name in ("G", "B"):
        M = getattr(case, name)
        if M.shape != (n, n):
            raise DimensionMismatchError(f"{name} has shape {M.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(M)):
            raise MalformedBundleError(f"{name} has non-finite entries")
        asym = np.max(np.abs(M - M.T)) if n else 0.0
        if asym > SYMMETRY_TOL:
            raise AsymmetricMatrixError(f"{name} is not symmetric (max |M - M^T| = {asym:.3e})")
    for name in ("h", "d", "p_m"):
        if getattr(case, name).shape != (n,):
            raise DimensionMismatchError(f"{name} must have length {n}")
    if np.any(case.h <= 0):
        raise MalformedBundleError("inertia constants must be positive")
    if np.any(case.d < 0):
        raise MalformedBundleError("damping factors must be nonnegative")
    seen = set()
    for e in case.edges:
        if not (1 <= e.i < e.j <= n):
            raise DimensionMismatchError(f"edge {e} out of range for n={n}")
        if e in seen:
            raise MalformedBundleError(f"duplicate edge {e}")
        seen.add(e)
    # the off-diagonal sparsity pattern must be exactly the edge list
    for i in range(n):
        for j in range(i + 1, n):
            nz = case.G[i, j] != 0 or case.B[i, j] != 0
            if nz and LineId(i + 1, j + 1) not in seen:
                raise MalformedBundleError(f"nonzero admittance at ({i + 1}, {j + 1}) without an edge")
    for e, r in case.ratings.items():
        if e not in seen:
            raise MalformedBundleError(f"rating given for non-edge {e}")
        if not r > 0:
            raise NonPositiveRatingError(f"rating of line {e} must be positive, got {r}")


# ---------------------------------------------------------------------------
# parsing


def _lines(path: Path) -> List[Tuple[int, List[str]]]:
    if not path.is_file():
        raise MissingFileError(f"missing bundle file: {path}")
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            out.append((lineno, body.split()))
    return out


def _num(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MalformedBundleError(f"{where}: not a number: {tok!r}") from None


def _int(tok: str, where: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise MalformedBundleError(f"{where}: not an integer: {tok!r}") from None


class _Cursor:
    def __init__(self, path: Path):
        self.name = path.name
        self.rows = _lines(path)
        self.pos = 0

    def next(self, ntok: int | None = None, what: str = "row"):
        if self.pos >= len(self.rows):
            raise DimensionMismatchError(f"{self.name}: unexpected end of file, expected {what}")
        lineno, toks = self.rows[self.pos]
        self.pos += 1
        if ntok is not None and len(toks) != ntok:
            raise DimensionMismatchError(
                f"{self.name}:{lineno}: expected {ntok} tokens for {what}, got {len(toks)}"
            )
        return f"{self.name}:{lineno}", toks

    def keyword(self, key: str, nargs: int):
        where, toks = self.next(what=f"'{key}'")
        if toks[0] != key:
            raise MalformedBundleError(f"{where}: expected keyword '{key}', got {toks[0]!r}")
        if len(toks) != nargs + 1:
            raise MalformedBundleError(f"{where}: '{key}' takes {nargs} value(s)")
        return where, toks[1:]

    def finish(self):
        if self.pos < len(self.rows):
            lineno, toks = self.rows[self.pos]
            raise MalformedBundleError(f"{self.name}:{lineno}: trailing content {' '.join(toks)!r}")


def _parse_matrix(cur: _Cursor, key: str, n: int) -> np.ndarray:
    cur.keyword(key, 0)
    M = np.empty((n, n))
    for r in range(n):
        where, toks = cur.next(n, f"row {r + 1} of {key}")
        M[r] = [_num(t, where) for t in toks]
    return M


def parse_case_bundle(path) -> Tuple[PowerCase, EquilibriumPoint]:
    """Read a case bundle directory; see the module docstring for the grammar."""
    path = Path(path)
    if not path.is_dir():
        raise MissingFileError(f"case bundle directory not found: {path}")

    cur = _Cursor(path / "network")
    where, (tok,) = cur.keyword("n", 1)
    n = _int(tok, where)
    if n < 1:
        raise DimensionMismatchError(f"{where}: n must be positive")
    where, (tok,) = cur.keyword("edges", 1)
    n_edges = _int(tok, where)
    edge_vals = []
    for _ in range(n_edges):
        where, toks = cur.next(4, "edge row 'i j g_ij b_ij'")
        i, j = _int(toks[0], where), _int(toks[1], where)
        if not (1 <= i < j <= n):
            raise DimensionMismatchError(f"{where}: edge ({i}, {j}) must satisfy 1 <= i < j <= {n}")
        edge_vals.append((where, LineId(i, j), _num(toks[2], where), _num(toks[3], where)))
    G = _parse_matrix(cur, "G", n)
    B = _parse_matrix(cur, "B", n)
    cur.finish()
    for M, name in ((G, "G"), (B, "B")):
        asym = np.max(np.abs(M - M.T))
        if asym > SYMMETRY_TOL:
            raise AsymmetricMatrixError(f"network: {name} is not symmetric (max deviation {asym:.3e})")
    for where, e, g, b in edge_vals:
        if g != G[e.i - 1, e.j - 1] or b != B[e.i - 1, e.j - 1]:
            raise MalformedBundleError(f"{where}: edge values for {e} disagree with the G/B matrices")
        if b == 0:
            raise MalformedBundleError(f"{where}: edge {e} has zero susceptance")

    cur = _Cursor(path / "machines")
    where, (tok,) = cur.keyword("omega_R", 1)
    omega_R = _num(tok, where)
    mach = np.empty((n, 3))
    for k in range(n):
        where, toks = cur.next(4, "machine row 'i h d p_m'")
        if _int(toks[0], where) != k + 1:
            raise MalformedBundleError(f"{where}: machine rows must be listed in bus order")
        mach[k] = [_num(t, where) for t in toks[1:]]
    cur.finish()

    cur = _Cursor(path / "equilibrium")
    eq = np.empty((n, 2))
    for k in range(n):
        where, toks = cur.next(3, "equilibrium row 'i v_star delta_star'")
        if _int(toks[0], where) != k + 1:
            raise MalformedBundleError(f"{where}: equilibrium rows must be listed in bus order")
        eq[k] = [_num(t, where) for t in toks[1:]]
    cur.finish()

    cur = _Cursor(path / "ratings")
    ratings: Dict[LineId, float] = {}
    for lineno, toks in cur.rows:
        where = f"ratings:{lineno}"
        if len(toks) != 3:
            raise MalformedBundleError(f"{where}: expected 'i j u_max'")
        l = LineId(_int(toks[0], where), _int(toks[1], where))
        r = _num(toks[2], where)
        if not r > 0:
            raise NonPositiveRatingError(f"{where}: rating of line {l} must be positive, got {r}")
        if l in ratings:
            raise MalformedBundleError(f"{where}: duplicate rating for {l}")
        ratings[l] = r

    case = PowerCase(
        n=n,
        edges=tuple(e for _, e, _, _ in edge_vals),
        G=G,
        B=B,
        h=mach[:, 0],
        d=mach[:, 1],
        p_m=mach[:, 2],
        omega_R=omega_R,
        ratings=ratings,
        name=path.name,
    )
    return case, EquilibriumPoint(eq[:, 0], eq[:, 1])


def _fmt(x: float) -> str:
    return repr(float(x))


def write_case_bundle(case: PowerCase, eq: EquilibriumPoint, path, header: str = "") -> Path:
    """Write ``case`` and ``eq`` as a bundle that parses back to identical values."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    head = "".join(f"# {line}\n" for line in header.splitlines())

    rows = [head, f"n {case.n}\n", f"edges {len(case.edges)}\n"]
    rows += [
        f"{e.i} {e.j} {_fmt(case.G[e.i - 1, e.j - 1])} {_fmt(case.B[e.i - 1, e.j - 1])}\n"
        for e in case.edges
    ]
    for name in ("G", "B"):
        rows.append(f"{name}\n")
        rows += [" ".join(_fmt(x) for x in r) + "\n" for r in getattr(case, name)]
    (path / "network").write_text("".join(rows))

    rows = [head, f"omega_R {_fmt(case.omega_R)}\n", "# i h d p_m\n"]
    rows += [
        f"{k + 1} {_fmt(case.h[k])} {_fmt(case.d[k])} {_fmt(case.p_m[k])}\n" for k in range(case.n)
    ]
    (path / "machines").write_text("".join(rows))

    rows = [head, "# i v_star delta_star(rad)\n"]
    rows += [f"{k + 1} {_fmt(eq.v_star[k])} {_fmt(eq.delta_star[k])}\n" for k in range(case.n)]
    (path / "equilibrium").write_text("".join(rows))

    rows = [head, "# i j u_max\n"]
    rows += [f"{l.i} {l.j} {_fmt(r)}\n" for l, r in sorted(case.ratings.items())]
    (path / "ratings").write_text("".join(rows))
    return path


def builtin_cases() -> List[str]:
    root = resources.files("ropdf") / "data"
    return sorted(p.name for p in root.iterdir() if p.is_dir() and (p / "network").is_file())


def load_case(name_or_path) -> Tuple[PowerCase, EquilibriumPoint]:
    """Load a shipped bundle by name (``"case9"``) or any bundle directory."""
    p = Path(name_or_path)
    if p.is_dir():
        return parse_case_bundle(p)
    with resources.as_file(resources.files("ropdf") / "data" / str(name_or_path)) as bundled:
        if not bundled.is_dir():
            raise MissingFileError(
                f"no bundle directory {name_or_path!r}; builtin cases: {', '.join(builtin_cases())}"
            )
        return parse_case_bundle(bundled)


# ---------------------------------------------------------------------------
# topology


def is_connected(n: int, edges) -> bool:
    """BFS connectivity over buses 1..n."""
    if n <= 1:
        return True
    adj = {k: [] for k in range(1, n + 1)}
    for e in edges:
        e = _as_line(e)
        adj[e.i].append(e.j)
        adj[e.j].append(e.i)
    seen = {1}
    queue = deque([1])
    while queue:
        k = queue.popleft()
        for nb in adj[k]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == n


def remove_line(case: PowerCase, l, keep_diagonal: bool = True) -> PowerCase:
    """Return a copy of ``case`` with line ``l`` taken out of service.

    Off-diagonal G/B entries of the line are zeroed. With ``keep_diagonal``
    (the default) the diagonal is left as it is, so the line's series
    admittance stays behind as a shunt at both ends. ``keep_diagonal=False``
    also removes the series part from the diagonal (``Y_ii += Y_ij``), which is
    what taking the branch out of the admittance matrix does for untapped
    lines; line charging only touches B_ii and does not enter the active power.
    """
    l = _as_line(l)
    if l not in set(case.edges):
        raise UnknownLineError(f"line {l} is not in service in case {case.name or '<unnamed>'}")
    remaining = tuple(e for e in case.edges if e != l)
    if not is_connected(case.n, remaining):
        raise IslandingError(f"removing line {l} would island the network")
    G = case.G.copy()
    B = case.B.copy()
    a, b = l.i - 1, l.j - 1
    if not keep_diagonal:
        for k in (a, b):
            G[k, k] += G[a, b]
            B[k, k] += B[a, b]
    G[a, b] = G[b, a] = 0.0
    B[a, b] = B[b, a] = 0.0
    ratings = {e: r for e, r in case.ratings.items() if e != l}
    return dataclasses.replace(case, edges=remaining, G=G, B=B, ratings=ratings)


def line_rating(case: PowerCase, l) -> float:
    l = _as_line(l)
    try:
        return case.ratings[l]
    except KeyError:
        raise MissingRatingError(f"no rating for line {l}") from None
