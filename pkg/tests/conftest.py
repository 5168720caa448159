from __future__ import annotations

import numpy as np
import pytest

from lanealign import build_index


def random_dna(rng, n: int) -> str:
    return "".join("ACGT"[i] for i in rng.integers(0, 4, n))


@pytest.fixture(scope="session")
def small_ref():
    rng = np.random.default_rng(11)
    return random_dna(rng, 2000)


@pytest.fixture(scope="session")
def small_index(small_ref):
    return build_index({"chr1": small_ref})


@pytest.fixture(scope="session")
def medium_ref():
    rng = np.random.default_rng(12)
    return random_dna(rng, 50_000)


@pytest.fixture(scope="session")
def medium_index(medium_ref):
    return build_index({"chr1": medium_ref})
