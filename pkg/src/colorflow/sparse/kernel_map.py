"""Kernel maps for submanifold sparse convolution.

For every kernel offset ``d`` the map lists (input_row, output_row) pairs with
``coords[input_row] == coords[output_row] + d`` inside the same batch item.
Output sites equal input sites, so for a fixed offset each output row has at
most one input row and vice versa.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from colorflow.errors import InvalidKernelError
from colorflow.sparse.tensor import SparseTensor


def kernel_offsets(kernel_size: int) -> np.ndarray:
    """All (dx, dy, dz) offsets of a cubic kernel, lexicographic, shape (k^3, 3)."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise InvalidKernelError(f"kernel size must be a positive odd integer, got {kernel_size}")
    radius = kernel_size // 2
    span = range(-radius, radius + 1)
    return np.array(list(itertools.product(span, span, span)), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class KernelMap:
    kernel_size: int
    offsets: np.ndarray
    in_rows: tuple[np.ndarray, ...]
    out_rows: tuple[np.ndarray, ...]

    @property
    def volume(self) -> int:
        return len(self.offsets)

    @property
    def center(self) -> int:
        """Position of the zero offset."""
        return self.volume // 2

    @property
    def pair_count(self) -> int:
        return int(sum(len(rows) for rows in self.in_rows))

    def pairs(self, offset_index: int) -> tuple[np.ndarray, np.ndarray]:
        return self.in_rows[offset_index], self.out_rows[offset_index]


def build_kernel_map(st: SparseTensor, kernel_size: int = 3) -> KernelMap:
    """Enumerate every occupied neighbor relation of ``st`` for a k^3 kernel."""
    offsets = kernel_offsets(kernel_size)
    in_rows, out_rows = [], []
    for offset in offsets:
        query = st.coords.copy()
        query[:, :3] += offset
        found = st.index.lookup(query)
        outputs = np.flatnonzero(found >= 0)
        in_rows.append(found[outputs])
        out_rows.append(outputs)
    return KernelMap(
        kernel_size=kernel_size,
        offsets=offsets,
        in_rows=tuple(in_rows),
        out_rows=tuple(out_rows),
    )
