import os
import sys

root_path = os.path.abspath(os.path.dirname(__file__)).split('tests')[0]
sys.path.append(root_path + 'src')

import numpy as np
import pytest

from pq_lab.geometry import Domain, build_grid
from pq_lab.wb_cover import build_wb_covering


def _domain(name):
    return Domain.from_json(os.path.join(root_path, 'data', 'domains', f'{name}.json'))


@pytest.fixture(scope='session')
def data_path():
    return os.path.join(root_path, 'data')


@pytest.fixture(scope='session')
def unit_square():
    return _domain('unit_square')


@pytest.fixture(scope='session')
def l_shape():
    return _domain('l_shape')


@pytest.fixture(scope='session')
def disk64():
    return _domain('disk64')


@pytest.fixture(scope='session')
def square_grid(unit_square):
    return build_grid(unit_square, 1 / 32)


@pytest.fixture(scope='session')
def fine_square_grid(unit_square):
    return build_grid(unit_square, 1 / 64)


@pytest.fixture
def rng():
    return np.random.default_rng(2023)


@pytest.fixture(scope='session')
def wide_cover(unit_square):
    # Four balls of radius 0.28125 around the center
    return build_wb_covering(unit_square, 0.2, lam=0.75)


@pytest.fixture(scope='session')
def two_scale_cover(unit_square):
    # wide_cover plus a ring of twenty balls of radius 0.140625
    return build_wb_covering(unit_square, 0.1, lam=0.75)
