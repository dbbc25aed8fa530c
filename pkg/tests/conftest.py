import numpy as np
import pytest

from tensorgep.benchmarks import gen_maxwell, maxwell_library
from tensorgep.genome import GenomeFactory


@pytest.fixture(scope="session")
def maxwell_ds():
    return gen_maxwell(60, seed=3)


@pytest.fixture(scope="session")
def maxwell_lib(maxwell_ds):
    return maxwell_library(maxwell_ds, rnc=True)


@pytest.fixture
def factory(maxwell_lib):
    return GenomeFactory(maxwell_lib, host_head=5, plasmid_head=10, n_genes=4, rng=np.random.default_rng(11))
