"""Open-addressing hash map from 4D integer coordinates to row indices.

Keys are (x, y, z, batch) rows packed into one uint64: x, y and z are biased by
2^15 into 16 bits each, the batch index takes the top 16 bits. Slots are chosen
by the splitmix64 finalizer and collisions are resolved by linear probing.
Insertion and lookup are vectorized: every probe round handles all pending keys
at once, and the table is kept at most half full so rounds stay short.
"""

from __future__ import annotations

import numpy as np

from colorflow.errors import DuplicateCoordinateError, ShapeError

COORD_BIAS = 1 << 15
COORD_MIN = -COORD_BIAS
COORD_MAX = COORD_BIAS - 1
MAX_BATCH = (1 << 16) - 2

# splitmix64 finalizer constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

EMPTY_KEY = np.uint64(0xFFFFFFFFFFFFFFFF)


def as_coords4(coords: np.ndarray) -> np.ndarray:
    """Return an (N, 4) int64 array, appending batch index 0 to (N, 3) input."""
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] not in (3, 4):
        raise ShapeError(f"coordinates must have shape (N, 3) or (N, 4), got {coords.shape}")
    if coords.shape[1] == 3:
        coords = np.concatenate([coords, np.zeros((len(coords), 1), dtype=np.int64)], axis=1)
    return coords


def packable(coords4: np.ndarray) -> np.ndarray:
    """Mask of rows whose coordinates fit the packed key layout."""
    xyz = coords4[:, :3]
    batch = coords4[:, 3]
    return (
        np.all(xyz >= COORD_MIN, axis=1) & np.all(xyz <= COORD_MAX, axis=1) & (batch >= 0) & (batch <= MAX_BATCH)
    )


def pack_keys(coords4: np.ndarray) -> np.ndarray:
    """Pack (N, 4) coordinates into uint64 keys. Rows must be packable."""
    biased = (coords4[:, :3] + COORD_BIAS).astype(np.uint64)
    batch = coords4[:, 3].astype(np.uint64)
    return (batch << np.uint64(48)) | (biased[:, 0] << np.uint64(32)) | (biased[:, 1] << np.uint64(16)) | biased[:, 2]


def mix64(keys: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; wraps modulo 2^64."""
    with np.errstate(over="ignore"):
        z = keys + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


class CoordinateHashMap:
    """Immutable map from 4D coordinates to their row in the source array."""

    def __init__(self, keys: np.ndarray, values: np.ndarray, size: int):
        self._keys = keys
        self._values = values
        self._mask = np.uint64(len(keys) - 1)
        self.size = size
        self._keys.setflags(write=False)
        self._values.setflags(write=False)

    @classmethod
    def from_coords(cls, coords: np.ndarray) -> CoordinateHashMap:
        """Index every row of ``coords`` ((N, 3) or (N, 4)).

        Raises:
            DuplicateCoordinateError: a coordinate appears twice
            ShapeError: a coordinate is outside the packable range
        """
        coords4 = as_coords4(coords)
        if not np.all(packable(coords4)):
            raise ShapeError(
                f"coordinates must lie in [{COORD_MIN}, {COORD_MAX}] with batch index in [0, {MAX_BATCH}]"
            )
        keys = pack_keys(coords4)
        unique, first, counts = np.unique(keys, return_index=True, return_counts=True)
        if len(unique) != len(keys):
            dup_row = int(first[np.argmax(counts > 1)])
            raise DuplicateCoordinateError(f"duplicate coordinate {tuple(coords4[dup_row].tolist())}")

        capacity = 16
        while capacity < 2 * len(keys):
            capacity *= 2
        table_keys = np.full(capacity, EMPTY_KEY, dtype=np.uint64)
        table_values = np.full(capacity, -1, dtype=np.int64)
        mask = np.uint64(capacity - 1)

        slots = mix64(keys) & mask
        pending = np.arange(len(keys))
        placed = np.zeros(len(keys), dtype=bool)
        while pending.size:
            current = slots[pending]
            free = table_keys[current] == EMPTY_KEY
            candidates = pending[free]
            # several keys may race for one free slot; the lowest row wins
            taken, first_idx = np.unique(current[free], return_index=True)
            winners = candidates[first_idx]
            table_keys[taken] = keys[winners]
            table_values[taken] = winners
            placed[winners] = True
            pending = pending[~placed[pending]]
            slots[pending] = (slots[pending] + np.uint64(1)) & mask

        return cls(table_keys, table_values, len(keys))

    def __len__(self) -> int:
        return self.size

    @property
    def capacity(self) -> int:
        return len(self._keys)

    def lookup(self, coords: np.ndarray) -> np.ndarray:
        """Row index for every query coordinate, -1 where absent."""
        coords4 = as_coords4(coords)
        result = np.full(len(coords4), -1, dtype=np.int64)
        valid = np.flatnonzero(packable(coords4))
        if not valid.size or not self.size:
            return result
        queries = pack_keys(coords4[valid])
        slots = mix64(queries) & self._mask
        pending = np.arange(len(valid))
        while pending.size:
            found = self._keys[slots[pending]]
            hit = found == queries[pending]
            result[valid[pending[hit]]] = self._values[slots[pending[hit]]]
            done = hit | (found == EMPTY_KEY)
            pending = pending[~done]
            slots[pending] = (slots[pending] + np.uint64(1)) & self._mask
        return result

    def contains(self, coords: np.ndarray) -> np.ndarray:
        return self.lookup(coords) >= 0


def build_index(coords: np.ndarray) -> CoordinateHashMap:
    """Hash index over unique coordinates with expected O(1) lookups."""
    return CoordinateHashMap.from_coords(coords)
