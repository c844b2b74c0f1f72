import math
import logging
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Tuple

import numpy as np
from scipy.special import comb

logger = logging.getLogger(__name__)


def derive_seed(base: int, *keys: int) -> int:
    """Derive a child seed from a base seed and a path of integer keys.

    The same (base, keys) always gives the same 63-bit seed, whatever order
    the children are requested in.
    """
    seq = np.random.SeedSequence(entropy=int(base) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package"""
    return np.random.Generator(np.random.Philox(int(seed)))


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@lru_cache(maxsize=32)
def multiset_ranks(n: int, m: int) -> Tuple[np.ndarray, int]:
    """Map every index tuple (flat, lexicographic) to the rank of its multiset.

    Multisets are ranked in the order of itertools.combinations_with_replacement,
    so rank t always names the same multiset for a given (n, m).
    """
    shape = (n,) * m
    combos = np.array(list(combinations_with_replacement(range(n), m)), dtype=np.int64).reshape(-1, m)
    lookup = np.full(n ** m, -1, dtype=np.int64)
    lookup[np.ravel_multi_index(combos.T, shape)] = np.arange(len(combos))

    tuples = np.indices(shape).reshape(m, -1)
    sorted_tuples = np.sort(tuples, axis=0)
    ranks = lookup[np.ravel_multi_index(sorted_tuples, shape)]
    return _readonly(ranks), len(combos)


@lru_cache(maxsize=32)
def diagonal_mask(n: int, m: int) -> np.ndarray:
    """Flat mask of the entries with at least one duplicate index"""
    tuples = np.sort(np.indices((n,) * m).reshape(m, -1), axis=0)
    return _readonly(np.any(np.diff(tuples, axis=0) == 0, axis=0))


@lru_cache(maxsize=32)
def presence_matrix(n: int, m: int) -> np.ndarray:
    """(n^m, n) 0/1 matrix: row t marks the vertices appearing in index tuple t"""
    tuples = np.indices((n,) * m).reshape(m, -1)
    presence = np.zeros((n ** m, n), dtype=float)
    rows = np.arange(n ** m)
    for mode in range(m):
        presence[rows, tuples[mode]] = 1.0
    return _readonly(presence)


def count_equal_partitions(n: int, r: int, k: int) -> int:
    """Number of ways to pick r unlabeled disjoint clusters of size k from n vertices"""
    chosen = comb(n, r * k, exact=True)
    splits = math.factorial(r * k) // (math.factorial(k) ** r * math.factorial(r))
    return chosen * splits


def format_float(value) -> str:
    """Stable text form for CSV cells"""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return 'nan'
    return f"{value:.12g}"


def standard_error(rate: float, trials: int) -> float:
    """Binomial standard error sqrt(p(1-p)/trials)"""
    if trials <= 0:
        return float('nan')
    return math.sqrt(max(rate * (1.0 - rate), 0.0) / trials)
