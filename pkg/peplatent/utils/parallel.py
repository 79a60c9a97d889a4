"""Thread-pool helpers with deterministic result order"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Applies `fn` to every item, in a pool when threads > 1.

    Results come back in input order regardless of completion order.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def pairwise_matrix(
    n: int,
    cell: Callable[[int, int], float],
    threads: int = 1,
    symmetric: bool = False,
    diagonal: float | None = None,
) -> np.ndarray:
    """
    Fills an n x n matrix with cell(i, j).

    Args:
        n: Matrix size
        cell: Function of the ordered pair (i, j)
        threads: Worker count for the off-diagonal cells
        symmetric: Compute only i < j and mirror
        diagonal: Constant placed on the diagonal instead of calling cell(i, i)
    """
    if symmetric:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    if diagonal is None:
        pairs += [(i, i) for i in range(n)]

    values = ordered_map(lambda ij: cell(*ij), pairs, threads)

    out = np.zeros((n, n), dtype=np.float64)
    if diagonal is not None:
        np.fill_diagonal(out, diagonal)
    for (i, j), v in zip(pairs, values):
        out[i, j] = v
        if symmetric:
            out[j, i] = v
    return out
