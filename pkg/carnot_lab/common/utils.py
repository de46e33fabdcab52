import os
import platform
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import scipy
import torch as th

import carnot_lab

T = TypeVar("T")
R = TypeVar("R")

_NUM_THREADS = max(1, min(8, os.cpu_count() or 1))
_THREADS_LOCK = threading.Lock()


def set_random_seed(seed: int) -> None:
    """
    Seed the different random generators.
    Library routines create their own generators from explicit seeds,
    this is only needed for code relying on the global state (torch multi-starts, user callbacks).

    :param seed:
    """
    random.seed(seed)
    np.random.seed(seed)
    th.manual_seed(seed)


def get_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """
    Counter-based generator keyed by ``(seed, stream)``.
    Two different streams of the same seed are independent,
    which lets chunked computations draw the same numbers whatever the number of workers.

    :param seed: the user seed
    :param stream: index of the sub-stream (chunk index, member index, ...)
    :return: a numpy generator backed by Philox
    """
    if seed < 0 or stream < 0:
        raise ValueError(f"Seed and stream must be non-negative, got seed={seed}, stream={stream}")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def set_num_threads(n_threads: int) -> None:
    """
    Cap the number of worker threads used by :func:`parallel_map`
    (and by torch intra-op parallelism).

    :param n_threads: positive number of threads
    """
    global _NUM_THREADS
    if n_threads < 1:
        raise ValueError(f"Expected a positive number of threads, got {n_threads}")
    with _THREADS_LOCK:
        _NUM_THREADS = int(n_threads)
    th.set_num_threads(int(n_threads))


def get_num_threads() -> int:
    return _NUM_THREADS


def parallel_map(fn: Callable[[T], R], items: Sequence[T], n_threads: Optional[int] = None) -> List[R]:
    """
    Apply ``fn`` to every item on a thread pool and return the results in input order.
    numpy releases the GIL in its kernels, so threads are enough for the vectorized work done here.

    :param fn: function applied to each item
    :param items: work items
    :param n_threads: number of workers (default: the value set by :func:`set_num_threads`)
    :return: list of results, ordered as ``items``
    """
    n_threads = get_num_threads() if n_threads is None else n_threads
    if n_threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_threads) as executor:
        return list(executor.map(fn, items))


def chunk_sizes(n_total: int, chunk_size: int) -> List[int]:
    """
    Split ``n_total`` items into chunks of at most ``chunk_size``.

    :param n_total:
    :param chunk_size:
    :return: the list of chunk lengths
    """
    if chunk_size <= 0:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    sizes = [chunk_size] * (n_total // chunk_size)
    if n_total % chunk_size:
        sizes.append(n_total % chunk_size)
    return sizes


def conjugate_exponent(p: Union[float, int], q: Union[float, int]) -> float:
    """
    Exponent ``sigma`` with ``1/sigma = 1/q - 1/p`` for ``1 <= q <= p <= inf``.
    The arithmetic is done on fractions so that ``q == p`` gives exactly ``inf``.

    :param p: exponent of the source space (can be ``inf``)
    :param q: exponent of the target space
    :return: sigma (``inf`` when ``q == p``)
    """
    if not 1 <= q <= p:
        raise ValueError(f"Expected 1 <= q <= p, got q={q}, p={p}")
    if np.isinf(q):
        return float("inf")
    inv_q = Fraction(q).limit_denominator(10**6) ** -1
    inv_p = Fraction(0) if np.isinf(p) else Fraction(p).limit_denominator(10**6) ** -1
    inv_sigma = inv_q - inv_p
    if inv_sigma == 0:
        return float("inf")
    return float(1 / inv_sigma)


def get_system_info(print_info: bool = True) -> Tuple[Dict[str, str], str]:
    """
    Retrieve system and python env info for the current system.

    :param print_info: Whether to print or not those infos
    :return: Dictionary summing up the version for each relevant package
        and a formatted string.
    """
    env_info = {
        "OS": f"{platform.platform()} {platform.version()}",
        "Python": platform.python_version(),
        "carnot-lab": carnot_lab.__version__,
        "Numpy": np.__version__,
        "Scipy": scipy.__version__,
        "PyTorch": th.__version__,
    }
    env_info_str = ""
    for key, value in env_info.items():
        env_info_str += f"{key}: {value}\n"
    if print_info:
        print(env_info_str)
    return env_info, env_info_str
