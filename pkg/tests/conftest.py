import os
import shutil
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from arealaw.config import load_config
from arealaw.errors import GeometryWarning
from arealaw.lattice import Lattice

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"

settings.register_profile(
    "repo",
    derandomize=True,
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def chain8():
    return Lattice.chain(8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def golden_config():
    return load_config(CONFIGS / "tfim_n10.toml")


@pytest.fixture(scope="session")
def golden_run(tmp_path_factory, golden_config):
    """The shipped n = 10 experiment, run once per session (about 10 minutes).

    Set ``AREALAW_GOLDEN_RUN`` to an existing output directory of the same
    config to reuse it instead.
    """
    from arealaw.pipeline import run_pipeline

    reuse = os.environ.get("AREALAW_GOLDEN_RUN")
    if reuse:
        out = Path(reuse)
        rec_path = out / "record.json"
        if rec_path.exists():
            import json

            rec = json.loads(rec_path.read_text())
            if rec["config_hash"] == golden_config.hash():
                return out, rec
    out = tmp_path_factory.mktemp("golden")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GeometryWarning)
        rec = run_pipeline(golden_config, out)
    return out, rec.to_dict()


@pytest.fixture(scope="session")
def quick_config():
    return load_config(CONFIGS / "tfim_n8_quick.toml")


@pytest.fixture
def quick_copy(tmp_path):
    """Fresh output directory for the quick config."""
    out = tmp_path / "quick"
    if out.exists():
        shutil.rmtree(out)
    return out
