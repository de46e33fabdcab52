import numpy as np
import pytest

import carnot_lab
from carnot_lab.common.utils import (
    chunk_sizes,
    conjugate_exponent,
    get_num_threads,
    get_rng,
    get_system_info,
    parallel_map,
    set_num_threads,
)


def test_get_rng_streams():
    first = get_rng(0, 0).uniform(size=8)
    # same seed and stream, same numbers
    assert np.array_equal(first, get_rng(0, 0).uniform(size=8))
    assert not np.array_equal(first, get_rng(0, 1).uniform(size=8))
    assert not np.array_equal(first, get_rng(1, 0).uniform(size=8))
    with pytest.raises(ValueError):
        get_rng(-1)
    with pytest.raises(ValueError):
        get_rng(0, -2)


def test_parallel_map_keeps_order():
    items = list(range(20))
    assert parallel_map(lambda x: x * x, items, n_threads=4) == [x * x for x in items]
    assert parallel_map(lambda x: x + 1, items, n_threads=1) == [x + 1 for x in items]
    assert parallel_map(lambda x: x, []) == []


def test_set_num_threads():
    previous = get_num_threads()
    with pytest.raises(ValueError):
        set_num_threads(0)
    assert get_num_threads() == previous


@pytest.mark.parametrize(
    "n_total, chunk_size, expected",
    [(10, 4, [4, 4, 2]), (8, 4, [4, 4]), (3, 10, [3]), (0, 5, [])],
)
def test_chunk_sizes(n_total, chunk_size, expected):
    assert chunk_sizes(n_total, chunk_size) == expected


def test_chunk_sizes_invalid():
    with pytest.raises(ValueError):
        chunk_sizes(10, 0)


@pytest.mark.parametrize(
    "p, q, sigma",
    [(8, 4, 8.0), (4, 4, np.inf), (np.inf, 2, 2.0), (6, 2, 3.0), (3, 1.5, 3.0), (np.inf, np.inf, np.inf)],
)
def test_conjugate_exponent(p, q, sigma):
    assert conjugate_exponent(p, q) == pytest.approx(sigma)


def test_conjugate_exponent_invalid():
    with pytest.raises(ValueError):
        conjugate_exponent(2, 4)
    with pytest.raises(ValueError):
        conjugate_exponent(4, 0.5)


def test_get_system_info():
    info, info_str = get_system_info(print_info=True)
    assert info["carnot-lab"] == str(carnot_lab.__version__)
    assert "Python" in info_str
    assert "PyTorch" in info_str
    assert "Numpy" in info_str
    assert "Scipy" in info_str
