"""Per-replica random streams on numpy Generators.

Replica ``r`` of a run seeded with ``s`` draws from a Philox generator keyed by
``SeedSequence(s, spawn_key=(lane, r))``. A lane separates unrelated uses
(initial points, bit refresh, Gaussian increments), so results never depend on
batch sizes or on how replicas are split across threads.
"""

from __future__ import annotations

from typing import Iterable, List, Optional

import numpy as np

LANE_INIT_BASE = 1
LANE_INIT_FIBER = 2
LANE_REFRESH = 3
LANE_GAUSS = 4
LANE_SEED = 5

DEFAULT_BLOCK = 256


def replica_generator(seed: int, lane: int, replica: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(lane), int(replica)))
    return np.random.Generator(np.random.Philox(sequence))


class ReplicaStreams:
    """One generator per replica, drawn a block of steps at a time.

    ``draw()`` returns the next value of every stream: uniforms in [0, 1) with
    shape (replicas,), or standard normals of shape (replicas, normal_width).
    """

    def __init__(
        self,
        seed: int,
        lane: int,
        replicas: Iterable[int],
        normal_width: Optional[int] = None,
        block: int = DEFAULT_BLOCK,
    ) -> None:
        if block < 1:
            raise ValueError(f"block must be >= 1, got {block}")
        self._generators: List[np.random.Generator] = [replica_generator(seed, lane, r) for r in replicas]
        self.normal_width = normal_width
        self.block = block
        self._buffer: Optional[np.ndarray] = None
        self._cursor = block

    def __len__(self) -> int:
        return len(self._generators)

    def _refill(self) -> None:
        if self.normal_width is None:
            rows = [g.random(self.block) for g in self._generators]
        else:
            rows = [g.standard_normal((self.block, self.normal_width)) for g in self._generators]
        if rows:
            self._buffer = np.stack(rows)
        else:
            tail = () if self.normal_width is None else (self.normal_width,)
            self._buffer = np.empty((0, self.block, *tail))
        self._cursor = 0

    def draw(self) -> np.ndarray:
        if self._cursor == self.block:
            self._refill()
        out = self._buffer[:, self._cursor]
        self._cursor += 1
        return out


def uniforms(seed: int, lane: int, replicas: Iterable[int]) -> np.ndarray:
    """First uniform of each replica's stream."""
    return np.array([replica_generator(seed, lane, r).random() for r in replicas], dtype=np.float64)


def derive_seed(master_seed: int, index: int) -> int:
    """A 64-bit child seed; used for the fixed repetition seeds of a criterion."""
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=(LANE_SEED, int(index)))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def repetition_seeds(master_seed: int, count: int = 3) -> list[int]:
    return [derive_seed(master_seed, i) for i in range(count)]
