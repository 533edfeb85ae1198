import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ropdf.case_model import (AsymmetricMatrixError, DimensionMismatchError, EquilibriumPoint,
                              IslandingError, LineId, MalformedBundleError, MissingFileError,
                              MissingRatingError, NonPositiveRatingError, UnknownLineError,
                              builtin_cases, is_connected, line_rating, load_case,
                              parse_case_bundle, remove_line, write_case_bundle)

from conftest import toy_case


def bfs_components(n, edges):
    """Union-find oracle, independent of the BFS under test."""
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in edges:
        parent[find(e.i)] = find(e.j)
    return len({find(k) for k in range(1, n + 1)})


def test_toy_bundle_parses(toy_bundle):
    case, eq = parse_case_bundle(toy_bundle)
    assert case.n == 2
    assert case.edges == (LineId(1, 2),)
    assert case.B[0, 1] == case.B[1, 0] == -5.0
    assert line_rating(case, (1, 2)) == 1.0
    assert np.array_equal(eq.v_star, [1.0, 1.0])


def test_builtin_case9():
    case, eq = load_case("case9")
    assert case.n == 9 and len(case.edges) == 9
    assert line_rating(case, LineId(4, 9)) == 1.0
    assert line_rating(case, (9, 4)) == 1.0
    assert eq.v_star.shape == (9,)


def test_builtin_ratings():
    assert line_rating(load_case("case30")[0], (6, 7)) == 1.3
    assert line_rating(load_case("case30")[0], (6, 9)) == 0.65
    assert line_rating(load_case("case57")[0], (35, 36)) == 16.33
    assert line_rating(load_case("case57")[0], (36, 40)) == 20.27


def test_builtin_cases_listed():
    assert {"case9", "case30", "case57"} <= set(builtin_cases())


def _rewrite(path, name, old, new):
    p = path / name
    text = p.read_text()
    assert old in text
    p.write_text(text.replace(old, new, 1))


def test_asymmetric_rejected(toy_bundle):
    # break G[1][2] only in the matrix block
    p = toy_bundle / "network"
    lines = p.read_text().splitlines()
    gi = lines.index("G")
    lines[gi + 1] = "0.0 0.25"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(AsymmetricMatrixError):
        parse_case_bundle(toy_bundle)


def test_missing_file(toy_bundle):
    (toy_bundle / "ratings").unlink()
    with pytest.raises(MissingFileError):
        parse_case_bundle(toy_bundle)


def test_missing_directory(tmp_path):
    with pytest.raises(MissingFileError):
        parse_case_bundle(tmp_path / "nope")


def test_dimension_mismatch(toy_bundle):
    _rewrite(toy_bundle, "network", "n 2", "n 3")
    with pytest.raises(DimensionMismatchError):
        parse_case_bundle(toy_bundle)


def test_nonpositive_rating(toy_bundle):
    _rewrite(toy_bundle, "ratings", "1 2 1.0", "1 2 0.0")
    with pytest.raises(NonPositiveRatingError):
        parse_case_bundle(toy_bundle)


def test_unknown_keyword_and_trailing_garbage(toy_bundle):
    _rewrite(toy_bundle, "machines", "omega_R", "omega_X")
    with pytest.raises(MalformedBundleError):
        parse_case_bundle(toy_bundle)


def test_trailing_garbage(toy_bundle):
    with open(toy_bundle / "equilibrium", "a") as fh:
        fh.write("extra 1 2\n")
    with pytest.raises(MalformedBundleError):
        parse_case_bundle(toy_bundle)


def test_comments_and_blank_lines(toy_bundle):
    p = toy_bundle / "machines"
    p.write_text("\n# leading comment\n\n" + p.read_text().replace("\n", "   # trailing\n", 1))
    parse_case_bundle(toy_bundle)


def test_all_parse_errors_are_value_errors():
    for exc in (AsymmetricMatrixError, DimensionMismatchError, MalformedBundleError,
                NonPositiveRatingError, MissingFileError):
        assert issubclass(exc, ValueError)


@pytest.mark.parametrize("name", ["case9", "case30", "case57"])
def test_round_trip_exact(tmp_path, name):
    case, eq = load_case(name)
    write_case_bundle(case, eq, tmp_path / name, header="copy")
    case2, eq2 = parse_case_bundle(tmp_path / name)
    assert case2 == case
    assert eq2 == eq


def test_remove_line_case9(case9):
    case, _ = case9
    post = remove_line(case, (8, 9))
    assert post.B[7, 8] == post.B[8, 7] == 0.0
    assert post.G[7, 8] == post.G[8, 7] == 0.0
    assert len(post.edges) == 8
    assert np.array_equal(np.diag(post.G), np.diag(case.G))
    assert np.array_equal(np.diag(post.B), np.diag(case.B))
    # input untouched
    assert case.B[7, 8] != 0


def test_remove_line_series_admittance(case9):
    case, _ = case9
    post = remove_line(case, (8, 9), keep_diagonal=False)
    assert post.G[7, 7] == pytest.approx(case.G[7, 7] + case.G[7, 8], abs=1e-14)
    assert post.B[8, 8] == pytest.approx(case.B[8, 8] + case.B[7, 8], abs=1e-14)
    off = ~np.eye(9, dtype=bool)
    assert np.count_nonzero((post.B != case.B) & off) == 2


def test_remove_line_islanding(toy2):
    with pytest.raises(IslandingError):
        remove_line(toy2, (1, 2))


def test_remove_line_twice(case9):
    post = remove_line(case9[0], (8, 9))
    with pytest.raises(UnknownLineError):
        remove_line(post, (8, 9))


def test_missing_rating():
    case = toy_case(3)
    with pytest.raises(MissingRatingError):
        line_rating(case, (2, 3))


@pytest.mark.parametrize("name", ["case9", "case30", "case57"])
def test_remove_line_changes_four_offdiagonals(name):
    case, _ = load_case(name)
    off = ~np.eye(case.n, dtype=bool)
    for e in case.edges:
        try:
            post = remove_line(case, e)
        except IslandingError:
            continue
        changed = np.count_nonzero((post.G != case.G) & off) + np.count_nonzero((post.B != case.B) & off)
        # an entry that was already zero (lossless line) cannot change
        zeros = 2 * (case.G[e.i - 1, e.j - 1] == 0) + 2 * (case.B[e.i - 1, e.j - 1] == 0)
        assert changed == 4 - zeros
        # every changed off-diagonal entry belongs to the removed line
        idx = {tuple(p) for p in np.argwhere(((post.G != case.G) | (post.B != case.B)) & off)}
        assert idx <= {(e.i - 1, e.j - 1), (e.j - 1, e.i - 1)}
        assert np.array_equal(post.G, post.G.T) and np.array_equal(post.B, post.B.T)


@pytest.mark.parametrize("name", ["case9", "case30", "case57"])
def test_connectivity_matches_union_find(name):
    case, _ = load_case(name)
    for e in case.edges:
        rest = [x for x in case.edges if x != e]
        assert is_connected(case.n, rest) == (bfs_components(case.n, rest) == 1)
        if is_connected(case.n, rest):
            remove_line(case, e)
        else:
            with pytest.raises(IslandingError):
                remove_line(case, e)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.data())
def test_connectivity_random_graphs(n, data):
    pairs = list(itertools.combinations(range(1, n + 1), 2))
    chosen = data.draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    edges = [LineId(i, j) for i, j in chosen]
    assert is_connected(n, edges) == (bfs_components(n, edges) == 1)


def test_line_id_normalizes():
    assert LineId(9, 4) == LineId(4, 9)
    assert LineId.parse("9-4") == LineId(4, 9)
    assert str(LineId(4, 9)) == "4-9"
    with pytest.raises(ValueError):
        LineId(3, 3)


def test_case_invariants_rejected():
    with pytest.raises(MalformedBundleError):
        toy_case(2, h=np.array([1.0, 0.0]))
    with pytest.raises(MalformedBundleError):
        toy_case(2, d=np.array([1.0, -1.0]))


def test_equilibrium_requires_positive_voltages():
    with pytest.raises(MalformedBundleError):
        EquilibriumPoint(np.array([1.0, 0.0]), np.zeros(2))
