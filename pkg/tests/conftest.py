import json

import numpy as np
import pytest

from pbnc import storage
from pbnc.main import main
from pbnc.models.models import LiftedCode, Protomatrix
from pbnc.services.field_service import field_table_build
from pbnc.services.protograph_service import assemble_lifted_code


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def gf256():
    return field_table_build(8)


@pytest.fixture
def gf2():
    return field_table_build(1)


@pytest.fixture
def rate3_preset():
    """The small M=8 rate-3 protograph and its (all-zero) puncturing vector."""
    return storage.to_protomatrix(storage.load_protomatrix_file(preset="example_rate3"))


@pytest.fixture
def design_example_1():
    return storage.load_protomatrix_file(preset="design_example_1")


@pytest.fixture
def design_example_2():
    return storage.load_protomatrix_file(preset="design_example_2")


def random_small_code(rng: np.random.Generator, K: int, n_checks: int, n_batches: int, M: int, m: int = 1) -> LiftedCode:
    """Lifting factor 1 code over K VNs with random check and batch rows."""
    field = field_table_build(m)
    check_rows = [np.sort(rng.choice(K, size=int(rng.integers(2, min(K, 5) + 1)), replace=False)) for _ in range(n_checks)]
    batch_rows = [np.sort(rng.choice(K, size=int(rng.integers(1, min(K, M + 2) + 1)), replace=False)) for _ in range(n_batches)]
    B1 = np.zeros((n_checks, K), dtype=np.int64)
    for r, cols in enumerate(check_rows):
        B1[r, cols] = 1
    B2 = np.zeros((n_batches, K), dtype=np.int64)
    for r, cols in enumerate(batch_rows):
        B2[r, cols] = 1
    return assemble_lifted_code(
        Protomatrix(B1, B2), np.zeros(n_batches), 1, 1, M, m,
        check_rows, [field.random_nonzero(row.size, rng) for row in check_rows],
        batch_rows, np.arange(n_batches),
    )


@pytest.fixture
def small_code_factory():
    return random_small_code


class CliRunner:
    """Runs the command-line entry point inside a temporary directory."""

    def __init__(self, workdir):
        self.workdir = workdir

    def path(self, name: str) -> str:
        return str(self.workdir / name)

    def write_json(self, name: str, payload) -> str:
        path = self.workdir / name
        path.write_text(json.dumps(payload))
        return str(path)

    def __call__(self, *argv) -> int:
        return main([str(a) for a in argv])


@pytest.fixture
def cli(tmp_path):
    return CliRunner(tmp_path)
