import functools

import numpy as np
import pytest

from wyflow.background import build_background
from wyflow.cli import initial_field, make_background
from wyflow.config import PRESETS, resolve
from wyflow.flow import FlowConfig, run

ACCEPTANCE_LINES: dict[int, str] = {}


@functools.lru_cache(maxsize=None)
def preset_run(name: str, **overrides):
    cfg = resolve(name)
    bg = make_background(cfg)
    w0 = initial_field(cfg, bg)
    kwargs = cfg.flow_kwargs()
    kwargs.update(overrides)
    result, trace = run(bg, w0, FlowConfig(**kwargs))
    return bg, w0, result, trace


@functools.lru_cache(maxsize=None)
def cached_background(family, items=(), nodes=256):
    return build_background(family, dict(items), nodes=nodes)


@pytest.fixture(scope="session")
def presets():
    return tuple(PRESETS)


@pytest.fixture
def flat():
    return cached_background("flat_interval", (("m", 1.0),), 128)


@pytest.fixture
def cap():
    return cached_background("spherical_cap", (("m", 1.0),), 128)


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def rng(seed=0):
    return np.random.default_rng(seed)
