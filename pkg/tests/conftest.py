import numpy as np
import pytest

from ropdf.case_model import EquilibriumPoint, PowerCase, load_case, write_case_bundle


def toy_case(n_bus=2, b=-5.0, rating=1.0, **kw):
    """Path graph on ``n_bus`` buses with identical lines."""
    G = np.zeros((n_bus, n_bus))
    B = np.zeros((n_bus, n_bus))
    edges = []
    for k in range(n_bus - 1):
        B[k, k + 1] = B[k + 1, k] = b
        B[k, k] -= b
        B[k + 1, k + 1] -= b
        edges.append((k + 1, k + 2))
    ratings = {edges[0]: rating} if rating is not None else {}
    args = dict(n=n_bus, edges=edges, G=G, B=B, h=np.ones(n_bus), d=np.ones(n_bus),
                p_m=np.zeros(n_bus), ratings=ratings, name=f"toy{n_bus}")
    args.update(kw)
    return PowerCase(**args)


@pytest.fixture
def toy2():
    return toy_case(2)


@pytest.fixture
def toy_bundle(tmp_path, toy2):
    eq = EquilibriumPoint(np.ones(2), np.zeros(2))
    return write_case_bundle(toy2, eq, tmp_path / "toy2")


@pytest.fixture(scope="session")
def case9():
    return load_case("case9")
