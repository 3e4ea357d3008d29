"""Shared, session-cached expensive runs."""
import pytest

from swnudge.config import load_config
from swnudge.harness import initial_truth


@pytest.fixture(scope="session")
def nonlinear_cfg():
    return load_config("nonlinear-perfect.cfg")


@pytest.fixture(scope="session")
def spinup_state(nonlinear_cfg):
    # one model year of wind forcing from rest
    return initial_truth(nonlinear_cfg.twin())
