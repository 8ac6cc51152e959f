"""Set partitions, pair partitions and Pfaffians.

Points are numbered from 1 in link patterns and pair partitions, matching the
``[[1, 2], [3, 4]]`` JSON form; matrices are indexed from 0.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import schur

from fkcorr.core.exceptions import (
    CapacityError,
    ConfigurationError,
    InternalInvariantError,
    InvalidMatrixError,
)


MAX_PAIR_HALF_SIZE = 8
MAX_PFAFFIAN_DIM = 16
MAX_SET_PARTITION_SIZE = 10
ANTISYMMETRY_TOL = 1e-12
AGREEMENT_TOL = 1e-10


@dataclass(frozen=True)
class LinkPattern:
    """A partition of ``{1..n}`` into blocks, sorted by least element."""

    n: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        flat = sorted(i for block in self.blocks for i in block)
        if flat != list(range(1, self.n + 1)):
            msg = f"blocks {self.blocks} do not partition 1..{self.n}"
            raise ConfigurationError(msg)

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]]) -> LinkPattern:
        if any(len(b) == 0 for b in blocks):
            msg = f"blocks {[list(b) for b in blocks]} contain an empty block"
            raise ConfigurationError(msg)
        canonical = tuple(sorted((tuple(sorted(int(i) for i in b)) for b in blocks), key=lambda b: b[0]))
        n = sum(len(b) for b in canonical)
        return cls(n=n, blocks=canonical)

    @classmethod
    def single_block(cls, n: int) -> LinkPattern:
        return cls(n=n, blocks=(tuple(range(1, n + 1)),))

    @property
    def has_singletons(self) -> bool:
        return any(len(b) == 1 for b in self.blocks)

    @property
    def all_blocks_even(self) -> bool:
        return all(len(b) % 2 == 0 for b in self.blocks)

    def block_of(self) -> tuple[int, ...]:
        """Block number (0-based) of every point, in point order."""
        owner = [0] * self.n
        for k, block in enumerate(self.blocks):
            for i in block:
                owner[i - 1] = k
        return tuple(owner)

    def to_json(self) -> list[list[int]]:
        return [list(b) for b in self.blocks]

    def __str__(self) -> str:
        return "".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks)


@dataclass(frozen=True)
class PairPartition:
    """A perfect matching of ``{1..2n}`` with ``c_j < d_j`` and increasing ``c_j``."""

    n: int
    pairs: tuple[tuple[int, int], ...]
    sign: int


def pair_partition_sign(pairs: Sequence[tuple[int, int]]) -> int:
    """Sign of the product of ``(c-e)(c-f)(d-e)(d-f)`` over distinct pairs."""
    negative = 0
    for j, (c, d) in enumerate(pairs):
        for e, f in pairs[j + 1 :]:
            if (c - e) * (c - f) * (d - e) * (d - f) < 0:
                negative += 1
    return -1 if negative % 2 else 1


@lru_cache(maxsize=None)
def _pairing_table(n: int) -> tuple[NDArray[np.int8], NDArray[np.int8]]:
    """All matchings of ``0..2n-1`` as an ``(M, n, 2)`` array plus their signs.

    Rows come in canonical order: the first point is paired with each later
    point in turn, and the rest is matched recursively.
    """
    if n == 0:
        return np.zeros((1, 0, 2), dtype=np.int8), np.ones(1, dtype=np.int8)
    sub, _ = _pairing_table(n - 1)
    size = 2 * n
    parts = []
    for j in range(1, size):
        rest = np.array([k for k in range(1, size) if k != j], dtype=np.int8)
        head = np.broadcast_to(np.array([[0, j]], dtype=np.int8), (sub.shape[0], 1, 2))
        parts.append(np.concatenate([head, rest[sub]], axis=1))
    table = np.concatenate(parts, axis=0)

    c = table[:, :, 0].astype(np.int64)
    d = table[:, :, 1].astype(np.int64)
    negative = np.zeros(table.shape[0], dtype=np.int64)
    for j in range(n):
        for k in range(j + 1, n):
            product = (c[:, j] - c[:, k]) * (c[:, j] - d[:, k]) * (d[:, j] - c[:, k]) * (d[:, j] - d[:, k])
            negative += product < 0
    signs = np.where(negative % 2 == 0, 1, -1).astype(np.int8)
    table.setflags(write=False)
    signs.setflags(write=False)
    return table, signs


def enumerate_pair_partitions(n: int) -> list[PairPartition]:
    """All ``(2n-1)!!`` pair partitions of ``{1..2n}`` with their signs.

    Raises:
        CapacityError: ``n`` outside ``1..8``.
    """
    if n < 1 or n > MAX_PAIR_HALF_SIZE:
        msg = f"pair partitions supported for 1 <= n <= {MAX_PAIR_HALF_SIZE}, got {n}"
        raise CapacityError(msg)
    table, signs = _pairing_table(n)
    return [
        PairPartition(
            n=n,
            pairs=tuple((int(c) + 1, int(d) + 1) for c, d in row),
            sign=int(s),
        )
        for row, s in zip(table, signs)
    ]


def _validated(entries: ArrayLike) -> NDArray[np.float64]:
    matrix = np.asarray(entries, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        msg = f"expected a square matrix, got shape {matrix.shape}"
        raise InvalidMatrixError(msg)
    dim = matrix.shape[0]
    if dim % 2:
        msg = f"Pfaffian needs even dimension, got {dim}"
        raise InvalidMatrixError(msg)
    if dim > MAX_PFAFFIAN_DIM:
        msg = f"Pfaffian dimension {dim} exceeds {MAX_PFAFFIAN_DIM}"
        raise CapacityError(msg)
    asym = float(np.max(np.abs(matrix + matrix.T))) if dim else 0.0
    if asym > ANTISYMMETRY_TOL:
        msg = f"matrix is not antisymmetric (max |A + A^T| = {asym:.3e})"
        raise InvalidMatrixError(msg)
    return matrix


def _pair_sum(matrix: NDArray[np.float64]) -> tuple[float, float]:
    table, signs = _pairing_table(matrix.shape[0] // 2)
    terms = matrix[table[:, :, 0], table[:, :, 1]].prod(axis=1)
    return float(signs @ terms), float(np.abs(terms).sum())


def pfaffian_row_expansion(entries: ArrayLike) -> float:
    """Pfaffian by expansion along the first row, memoized on index subsets."""
    matrix = _validated(entries)
    dim = matrix.shape[0]

    @lru_cache(maxsize=None)
    def pf(mask: int) -> float:
        if mask == 0:
            return 1.0
        idx = [k for k in range(dim) if mask >> k & 1]
        first = idx[0]
        total = 0.0
        for pos, j in enumerate(idx[1:]):
            a = matrix[first, j]
            if a != 0.0:
                sign = -1.0 if pos % 2 else 1.0
                total += sign * a * pf(mask & ~(1 << first) & ~(1 << j))
        return total

    return pf((1 << dim) - 1)


def pfaffian_schur(entries: ArrayLike) -> float:
    """Pfaffian from the real Schur form ``A = Z T Z^T``."""
    matrix = _validated(entries)
    if matrix.shape[0] == 0:
        return 1.0
    blocks, z = schur(matrix, output="real")
    return float(np.prod(np.diag(blocks, 1)[::2]) * np.linalg.det(z))


def pfaffian(entries: ArrayLike) -> float:
    """Pfaffian as the signed pair-partition sum, cross-checked by row expansion.

    Raises:
        InvalidMatrixError: Odd dimension, non-square or not antisymmetric.
        CapacityError: Dimension above 16.
    """
    matrix = _validated(entries)
    if matrix.shape[0] == 0:
        return 1.0
    value, scale = _pair_sum(matrix)
    check = pfaffian_row_expansion(matrix)
    if abs(value - check) > AGREEMENT_TOL * max(abs(value), scale, np.finfo(float).tiny):
        msg = f"Pfaffian evaluations disagree: {value!r} vs {check!r}"
        raise InternalInvariantError(msg)
    return value


def connection_partition(cluster_labels: Sequence[Any]) -> LinkPattern:
    """Group point indices (1-based) by equal cluster id."""
    groups: dict[Any, list[int]] = {}
    for i, label in enumerate(cluster_labels, start=1):
        groups.setdefault(label, []).append(i)
    return LinkPattern.from_blocks(list(groups.values()))


def _restricted_growth(n: int) -> Iterator[list[int]]:
    if n == 0:
        yield []
        return
    word = [0] * n

    def extend(i: int, top: int) -> Iterator[list[int]]:
        if i == n:
            yield list(word)
            return
        for v in range(top + 2):
            word[i] = v
            yield from extend(i + 1, max(top, v))

    word[0] = 0
    yield from extend(1, 0)


def enumerate_set_partitions(n: int) -> list[LinkPattern]:
    """All set partitions of ``{1..n}`` (Bell-number many).

    Raises:
        CapacityError: ``n`` above 10.
    """
    if n < 1 or n > MAX_SET_PARTITION_SIZE:
        msg = f"set partitions supported for 1 <= n <= {MAX_SET_PARTITION_SIZE}, got {n}"
        raise CapacityError(msg)
    return [connection_partition(word) for word in _restricted_growth(n)]


def even_block_partitions(n: int) -> list[LinkPattern]:
    """Set partitions of ``{1..n}`` whose blocks all have even size."""
    return [q for q in enumerate_set_partitions(n) if q.all_blocks_even]
