"""External cluster validation: adjusted Rand index and cross-tabulation."""

from dataclasses import dataclass

import numpy as np

__all__ = ["ContingencyTable", "adjusted_rand_index", "cross_tab"]


@dataclass(frozen=True)
class ContingencyTable:
    """
    Co-occurrence counts of two labelings.

    ``counts[i, j]`` is the number of observations with row label
    ``rows[i]`` and column label ``cols[j]``.
    """

    counts: np.ndarray
    rows: tuple
    cols: tuple

    @property
    def total(self):
        return int(self.counts.sum())

    def format(self, row_title="truth", col_title="pred"):
        """Plain-text rendering with row and column labels."""
        head = [f"{row_title}\\{col_title}"] + [str(c) for c in self.cols]
        body = [[str(r)] + [str(v) for v in line] for r, line in zip(self.rows, self.counts)]
        width = max(len(s) for s in head + [s for line in body for s in line])
        return "\n".join(" ".join(s.rjust(width) for s in line) for line in [head] + body)


def _pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"label vectors differ in length: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def cross_tab(a, b):
    """Contingency table with rows from ``a`` and columns from ``b``."""
    a, b = _pair(a, b)
    rows, ia = np.unique(a, return_inverse=True)
    cols, ib = np.unique(b, return_inverse=True)
    counts = np.zeros((rows.size, cols.size), dtype=np.int64)
    np.add.at(counts, (ia, ib), 1)
    return ContingencyTable(counts, tuple(rows.tolist()), tuple(cols.tolist()))


def _comb2(n):
    n = np.asarray(n, dtype=np.int64)
    return n * (n - 1) // 2


def adjusted_rand_index(a, b):
    """
    Adjusted Rand index of two partitions.

    Equal to 1 for partitions identical up to renaming.  When both
    partitions put every observation in one cluster the index is 0/0; 1.0 is
    returned since the partitions are identical.

    Raises
    ------
    ValueError
        On a length mismatch or fewer than two observations.

    Examples
    --------
    >>> adjusted_rand_index([0, 0, 1, 1], [5, 5, 3, 3])
    1.0
    """
    a, b = _pair(a, b)
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    table = cross_tab(a, b).counts
    index = int(_comb2(table).sum())
    sa = int(_comb2(table.sum(axis=1)).sum())
    sb = int(_comb2(table.sum(axis=0)).sum())
    expected = sa * sb / _comb2(n)
    maximum = 0.5 * (sa + sb)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))
