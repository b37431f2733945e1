import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from geomem import graphs

threadpool_limits(limits=1)

TINY_TAGS = ["path_star(4,4)", "tree_star(4,4)", "grid(4,4)", "cycle(15)", "irregular"]


@pytest.fixture(scope="session")
def tiny_graphs():
    return {tag: graphs.generate(tag, seed=3) for tag in TINY_TAGS}


@pytest.fixture(scope="session")
def star44():
    return graphs.path_star(4, 4, seed=1)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
