import random

import pytest

from ralin import cli, runtime


def replay(text, shared_ts=False):
    """Trace text to ``(cfg, history)``."""
    cfg = runtime.run_trace(cli.parse_trace_text(text), shared_ts=shared_ts)
    return cfg, runtime.extract_history(cfg)


def golden(name, shared_ts=False):
    tr = cli.parse_trace(cli.scenario_path(name))
    cfg = runtime.run_trace(tr, shared_ts=shared_ts)
    return tr, cfg, runtime.extract_history(cfg)


@pytest.fixture
def rng():
    return random.Random(1234)
