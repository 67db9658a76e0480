"""Bounded memory structures: short-term buffer, long-term store, positions.

The short-term buffer holds at most ``capacity`` frames. Pushing into a full
buffer pops the entire contents (a fill) and starts the next fill with the
frame that triggered the overflow. Context seeds planted by ``reinit`` count
against capacity, so each later fill completes after capacity - len(seeds)
fresh pushes.

The long-term store appends consolidated frames with strictly increasing
position ids and, whenever it outgrows its cap, greedily merges the most
similar adjacent pair (the same rule consolidation uses) until it fits.
Weight is conserved; nothing is dropped.

Extended positions map indices in [0, n^2) onto an n-row base table: the
first n indices return base rows bitwise, the rest blend two rows. Blending
collapses for indices i*n + i (the blend of a row with itself), so a
collision scan is provided rather than pretending the map is injective.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BufferNotEmpty,
    InvalidSpec,
    MemoryTooLongForTable,
    PositionOutOfRange,
    SeedTooLarge,
    ShapeMismatch,
)
from .frames import WeightedFrame, as_token_matrix, frame_pair_similarity, weighted_merge

__all__ = [
    "ShortTermBuffer",
    "LongTermMemory",
    "PositionalTable",
    "extended_position",
    "enumerate_collisions",
    "assign_positions",
]


class ShortTermBuffer:
    """Fixed-capacity FIFO of weighted frames with overflow popping.

    ``window_size`` is sliding-window bookkeeping only: capacity must equal
    window_size * windows_per_fill, and :meth:`windows` groups the current
    contents accordingly. It never changes overflow behavior.
    """

    def __init__(self, capacity: int, n_tokens: int, dims: int, window_size: int | None = None):
        if capacity < 1:
            raise InvalidSpec(f"capacity must be >= 1, got {capacity}")
        if n_tokens < 1 or dims < 1:
            raise InvalidSpec(f"bad frame shape ({n_tokens}, {dims})")
        window_size = capacity if window_size is None else window_size
        if window_size < 1 or capacity % window_size != 0:
            raise InvalidSpec(
                f"window_size {window_size} must divide capacity {capacity}")
        self.capacity = capacity
        self.window_size = window_size
        self.windows_per_fill = capacity // window_size
        self.n_tokens = n_tokens
        self.dims = dims
        self._frames: list[WeightedFrame] = []
        self._next_source_index = 0

    def __len__(self) -> int:
        return len(self._frames)

    @property
    def frames(self) -> tuple[WeightedFrame, ...]:
        return tuple(self._frames)

    @property
    def next_source_index(self) -> int:
        return self._next_source_index

    def _check_shape(self, tokens: np.ndarray) -> None:
        if tokens.shape != (self.n_tokens, self.dims):
            raise ShapeMismatch(
                f"frame shape {tokens.shape} != configured ({self.n_tokens}, {self.dims})")

    def push(self, frame) -> list[WeightedFrame] | None:
        """Push one raw frame.

        Returns None while the buffer accepts, or the popped fill (exactly
        ``capacity`` frames) when this push would overflow. The pushed frame
        is not part of the popped fill; it becomes the first element of the
        next one. Each push consumes one source index for provenance.
        """
        tokens = as_token_matrix(frame)
        self._check_shape(tokens)
        wrapped = WeightedFrame.from_tokens(tokens, self._next_source_index)
        self._next_source_index += 1
        if len(self._frames) >= self.capacity:
            popped = self._frames
            self._frames = [wrapped]
            return popped
        self._frames.append(wrapped)
        return None

    def reinit(self, seeds: Sequence[WeightedFrame]) -> None:
        """Seed an empty buffer with carried-over context frames.

        Seeds are stored with context_flag set and count against capacity.
        An empty seed list is just a no-op on an already-empty buffer.
        """
        if self._frames:
            raise BufferNotEmpty(f"buffer still holds {len(self._frames)} frames")
        if len(seeds) >= self.capacity:
            raise SeedTooLarge(
                f"{len(seeds)} seeds do not fit under capacity {self.capacity}")
        for seed in seeds:
            self._check_shape(seed.tokens)
        self._frames = [seed.as_context() for seed in seeds]

    def drain(self) -> list[WeightedFrame]:
        """Remove and return everything currently buffered."""
        frames, self._frames = self._frames, []
        return frames

    def clear(self) -> None:
        self._frames = []

    def _restore(self, frames: Iterable[WeightedFrame]) -> None:
        # requeue already-wrapped frames (no new source indices); used by the
        # pipeline to put an overflow trigger back after reseeding
        for frame in frames:
            self._check_shape(frame.tokens)
            if len(self._frames) >= self.capacity:
                raise BufferNotEmpty("restore would exceed capacity")
            self._frames.append(frame)

    def windows(self) -> tuple[tuple[WeightedFrame, ...], ...]:
        """Current contents grouped into window_size chunks (last may be short)."""
        c = self.window_size
        return tuple(
            tuple(self._frames[i:i + c]) for i in range(0, len(self._frames), c))


class LongTermMemory:
    """Append-only consolidated store with greedy adjacent compaction.

    Entries keep strictly increasing position ids; compaction merges a pair
    into one entry that inherits the smaller (left) id. A cache of adjacent
    similarities is maintained incrementally; every cached value is exactly
    what recomputing from scratch would produce, because merges only disturb
    the two neighboring pairs.
    """

    def __init__(self, capacity: int, n_tokens: int | None = None, dims: int | None = None):
        if capacity < 1:
            raise InvalidSpec(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.n_tokens = n_tokens
        self.dims = dims
        self._entries: list[WeightedFrame] = []
        self._position_ids: list[int] = []
        self._next_position_id = 0
        self._pair_sims: list[float] = []

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[WeightedFrame, ...]:
        return tuple(self._entries)

    @property
    def position_ids(self) -> tuple[int, ...]:
        return tuple(self._position_ids)

    @property
    def next_position_id(self) -> int:
        return self._next_position_id

    def total_weight(self) -> int:
        return sum(e.weight for e in self._entries)

    def _check_entry(self, frame: WeightedFrame) -> None:
        if self.n_tokens is None:
            self.n_tokens, self.dims = frame.tokens.shape
        elif frame.tokens.shape != (self.n_tokens, self.dims):
            raise ShapeMismatch(
                f"entry shape {frame.tokens.shape} != configured "
                f"({self.n_tokens}, {self.dims})")

    def append(self, frames: Sequence[WeightedFrame]) -> None:
        """Append consolidated frames in order, then compact if over cap."""
        for frame in frames:
            self._check_entry(frame)
            if self._entries:
                self._pair_sims.append(frame_pair_similarity(self._entries[-1], frame))
            self._entries.append(frame)
            self._position_ids.append(self._next_position_id)
            self._next_position_id += 1
        self.overflow_compact()

    def overflow_compact(self) -> None:
        """Merge most-similar adjacent pairs until the store fits its cap.

        Ties go to the lowest index. No-op when already within cap.
        """
        while len(self._entries) > self.capacity:
            sims = self._pair_sims
            best = 0
            for i in range(1, len(sims)):
                if sims[i] > sims[best]:
                    best = i
            merged = weighted_merge(self._entries[best], self._entries[best + 1])
            self._entries[best] = merged
            del self._entries[best + 1]
            # left id is the minimum of the merged group
            del self._position_ids[best + 1]
            del sims[best]
            if best > 0:
                sims[best - 1] = frame_pair_similarity(self._entries[best - 1], merged)
            if best < len(sims):
                sims[best] = frame_pair_similarity(merged, self._entries[best + 1])

    def _restore(self, entries: Sequence[WeightedFrame], position_ids: Sequence[int],
                 next_position_id: int) -> None:
        # snapshot import path; trusts ids, rebuilds the similarity cache
        if len(entries) != len(position_ids):
            raise InvalidSpec("entry and position id counts differ")
        if any(b <= a for a, b in zip(position_ids, position_ids[1:])):
            raise InvalidSpec("position ids must be strictly increasing")
        self._entries = []
        self._position_ids = []
        self._pair_sims = []
        for frame in entries:
            self._check_entry(frame)
            if self._entries:
                self._pair_sims.append(frame_pair_similarity(self._entries[-1], frame))
            self._entries.append(frame)
        self._position_ids = [int(p) for p in position_ids]
        self._next_position_id = int(next_position_id)


@dataclass(frozen=True)
class PositionalTable:
    """Base table for extended positional encodings.

    ``base`` has n >= 2 pairwise-distinct rows; ``blend`` in (0, 1) weighs
    the high-order row when two rows combine. 0.5 is deliberately not the
    default: an even blend would also collide (i, j) with (j, i).
    """

    base: np.ndarray
    blend: float = 0.4

    def __post_init__(self):
        a = np.asarray(self.base, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] < 1:
            raise InvalidSpec(f"base table must be (n >= 2, dim >= 1), got {a.shape}")
        if not np.isfinite(a).all():
            raise InvalidSpec("base table contains non-finite values")
        for i in range(a.shape[0]):
            for j in range(i + 1, a.shape[0]):
                if np.array_equal(a[i], a[j]):
                    raise InvalidSpec(f"base rows {i} and {j} are identical")
        if not 0.0 < self.blend < 1.0:
            raise InvalidSpec(f"blend must be inside (0, 1), got {self.blend}")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "base", a)

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def dim(self) -> int:
        return self.base.shape[1]

    @property
    def max_positions(self) -> int:
        return self.n * self.n

    @classmethod
    def gaussian(cls, n: int, dim: int, seed: int = 0, blend: float = 0.4) -> "PositionalTable":
        """Random table for tests and demos; rows are i.i.d. Gaussian."""
        rng = np.random.default_rng(seed)
        return cls(base=rng.standard_normal((n, dim)), blend=blend)


def extended_position(table: PositionalTable, k: int) -> np.ndarray:
    """Positional vector for index k in [0, n^2).

    Indices below n return the base row itself, bitwise. Larger indices
    split as k = i*n + j and return blend*base[i] + (1-blend)*base[j].
    """
    n = table.n
    if not 0 <= k < n * n:
        raise PositionOutOfRange(f"position {k} outside [0, {n * n})")
    if k < n:
        return table.base[k]
    i, j = divmod(k, n)
    out = table.blend * table.base[i] + (1.0 - table.blend) * table.base[j]
    out.setflags(write=False)
    return out


def enumerate_collisions(table: PositionalTable, tol: float = 1e-8) -> list[tuple[int, int]]:
    """Brute-force scan for index pairs whose encodings coincide.

    Returns sorted (k1, k2) pairs with k1 < k2 and distance below tol. For a
    generic table the only hits are the diagonal degeneracies: k = i*n + i
    blends base[i] with itself and lands on position i again.
    """
    total = table.max_positions
    encodings = np.stack([extended_position(table, k) for k in range(total)])
    hits = []
    for k1 in range(total):
        diff = encodings[k1 + 1:] - encodings[k1]
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        for off in np.nonzero(dist < tol)[0]:
            hits.append((k1, k1 + 1 + int(off)))
    return hits


def assign_positions(memory: LongTermMemory, table: PositionalTable):
    """Pair each entry, in append-rank order, with its extended position.

    Raises MemoryTooLongForTable when the store holds more entries than the
    table can index (n^2).
    """
    if len(memory) > table.max_positions:
        raise MemoryTooLongForTable(
            f"{len(memory)} entries exceed table range {table.max_positions}")
    return [(entry, extended_position(table, rank))
            for rank, entry in enumerate(memory.entries)]
