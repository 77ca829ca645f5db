"""Shared fixtures: a small seeded configuration and its cached run."""
from __future__ import annotations

import numpy as np
import pytest

from amlgen import run_pipeline
from amlgen.config import config_from_dict

SMALL_DOC = {"n_accounts": 1000, "n_steps": 112, "master_seed": 5, "n_fis": 3}


@pytest.fixture(scope="session")
def small_doc():
    return dict(SMALL_DOC)


@pytest.fixture(scope="session")
def small_cfg():
    return config_from_dict(dict(SMALL_DOC))


@pytest.fixture(scope="session")
def small_run(small_cfg):
    return run_pipeline(small_cfg, debug=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
