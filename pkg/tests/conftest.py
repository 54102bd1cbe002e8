import sys
from pathlib import Path

import pytest

from aprap import Prng, Registry, TagState, keygen

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def world():
    """One tag, one registry, one rng; the golden-vector setup for seed 1."""

    def make(n_tags=1, seed=1, lambda_bits=128):
        rng = Prng(seed, lambda_bits)
        pairs = keygen(lambda_bits, n_tags, rng)
        reg = Registry.from_keygen(pairs)
        tags = [TagState(k, tag_id=r.tag_id) for (_, k), r in zip(pairs, reg)]
        return rng, reg, tags

    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
