import runpy
from pathlib import Path

import pytest

from ropdf.pipeline import load_config, validate

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.mark.parametrize("path", sorted((DEMOS / "configs").glob("*.ini")), ids=lambda p: p.name)
def test_demo_configs_validate(path):
    validate(load_config(path))


def test_ou_demo_runs(capsys):
    runpy.run_path(str(DEMOS / "ou_projection.py"), run_name="__main__")
    assert "L1 vs exact" in capsys.readouterr().out
