import numpy as np
import pytest

from migcn.ingest import generate_synthetic
from migcn.validation import samples_from_manifest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data():
    """Six synthetic pairs, T=12, L_max=6, small widths."""
    ds = generate_synthetic(5, 6, 12, 8, 12, 6, embed_dim=8, min_len=2, max_len=6)
    return samples_from_manifest(ds.manifest, ds.embeddings)
