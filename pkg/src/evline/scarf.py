"""SCARF storage: per-block FIFO ring buffers of active/inactive events.

Every block owns a preallocated ring buffer of capacity ``N = round(alpha
* b^2)``. An incoming event is pushed *active* into the block covering its
pixel and *inactive* into up to three neighbouring blocks whose half-block
margin contains it. Inactive pushes participate in eviction like active
ones (they "clear" a block as an edge moves out of it) but are excluded
from visualization and, unless explicitly requested, from snapshots.

Timestamps are deliberately not stored: a block's content depends only on
the last N pushes targeted at it, which makes the representation invariant
to how fast the scene moved while producing them.

Concurrency: one writer thread plus any number of snapshot readers. Blocks
are guarded by per-block-row locks; the batch writer locks the span of
rows a chunk touches (ascending), snapshot locks the rows it reads
(ascending), so lock acquisition is globally ordered and deadlock-free.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .events import Event
from .lattice import BlockCoord, LatticeGeometry


@dataclass(frozen=True)
class StoredEvent:
    u: int
    v: int
    active: bool


@dataclass
class Snapshot:
    """Point-in-time copy of one or more block buffers.

    Events are ordered oldest-to-newest within each block, blocks in
    row-major order. ``capacity`` is the summed buffer capacity of the
    requested blocks, used as the score normalizer.
    """

    u: np.ndarray
    v: np.ndarray
    active: np.ndarray
    capacity: int

    def __len__(self) -> int:
        return len(self.u)

    def points(self) -> np.ndarray:
        """(n, 2) float array of event positions."""
        return np.column_stack((self.u.astype(np.float64), self.v.astype(np.float64)))

    def events(self) -> list[StoredEvent]:
        return [StoredEvent(int(self.u[i]), int(self.v[i]), bool(self.active[i]))
                for i in range(len(self.u))]

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))


class ScarfStorage:
    """Lattice of fixed-capacity FIFO event buffers."""

    def __init__(self, geometry: LatticeGeometry, alpha: float = 1.0,
                 intensity: int = 64):
        n = round(alpha * geometry.b * geometry.b)
        if n < 1:
            raise ValueError(f"buffer capacity round({alpha} * {geometry.b}^2) < 1")
        self.geometry = geometry
        self.alpha = alpha
        self.capacity_per_block = n
        self.intensity = intensity
        nb = geometry.n_blocks
        self._buf_u = np.zeros((nb, n), np.uint16)
        self._buf_v = np.zeros((nb, n), np.uint16)
        self._buf_act = np.zeros((nb, n), np.bool_)
        self._head = np.zeros(nb, np.int64)
        self._count = np.zeros(nb, np.int64)
        self._pushes = np.zeros(nb, np.int64)
        self._row_locks = [threading.Lock() for _ in range(geometry.ny)]
        self.dropped_events = 0
        _kernels.warmup()

    # -- writing -----------------------------------------------------------

    def insert(self, event: Event) -> bool:
        """Push one event; returns False if it was out of bounds."""
        n_dropped = self.insert_batch(np.array([event.u], np.uint16),
                                      np.array([event.v], np.uint16))
        return n_dropped == 0

    def insert_batch(self, u: np.ndarray, v: np.ndarray) -> int:
        """Push a chunk of events in stream order; returns dropped count."""
        if len(u) == 0:
            return 0
        g = self.geometry
        bv_min = int(np.min(v)) // g.b
        bv_max = int(np.max(v)) // g.b
        rows = range(max(bv_min - 1, 0), min(bv_max + 1, g.ny - 1) + 1)
        for r in rows:
            self._row_locks[r].acquire()
        try:
            dropped = _kernels.scatter_chunk(
                np.ascontiguousarray(u, np.uint16),
                np.ascontiguousarray(v, np.uint16),
                g.sensor.width, g.sensor.height, g.b, g.nx, g.ny,
                self.capacity_per_block,
                self._buf_u, self._buf_v, self._buf_act,
                self._head, self._count, self._pushes)
        finally:
            for r in rows:
                self._row_locks[r].release()
        self.dropped_events += int(dropped)
        return int(dropped)

    # -- reading -----------------------------------------------------------

    def _block_order(self, bid: int) -> np.ndarray:
        """Slot indices of block ``bid`` from oldest to newest."""
        c = int(self._count[bid])
        start = (int(self._head[bid]) - c) % self.capacity_per_block
        return (start + np.arange(c)) % self.capacity_per_block

    def snapshot(self, blocks: Sequence[BlockCoord],
                 include_inactive: bool = False) -> Snapshot:
        """Copy the requested buffers' contents, oldest first, row-major blocks."""
        g = self.geometry
        ordered = sorted(set(blocks), key=lambda blk: (blk.rv, blk.ru))
        for blk in ordered:
            if not (0 <= blk.ru < g.nx and 0 <= blk.rv < g.ny):
                raise ValueError(f"block {blk} outside lattice")
        rows = sorted({blk.rv for blk in ordered})
        for r in rows:
            self._row_locks[r].acquire()
        try:
            us, vs, acts = [], [], []
            for blk in ordered:
                bid = g.block_id(blk)
                idx = self._block_order(bid)
                us.append(self._buf_u[bid, idx])
                vs.append(self._buf_v[bid, idx])
                acts.append(self._buf_act[bid, idx])
        finally:
            for r in rows:
                self._row_locks[r].release()
        u = np.concatenate(us) if us else np.empty(0, np.uint16)
        v = np.concatenate(vs) if vs else np.empty(0, np.uint16)
        act = np.concatenate(acts) if acts else np.empty(0, np.bool_)
        if not include_inactive:
            u, v, act = u[act], v[act], act[act]
        return Snapshot(u, v, act, capacity=len(ordered) * self.capacity_per_block)

    def occupancy(self, block: BlockCoord) -> int:
        return int(self._count[self.geometry.block_id(block)])

    def push_counters(self) -> np.ndarray:
        """Monotone per-block total push counts (advisory, lock-free)."""
        return self._pushes

    def read_dense(self, bids: np.ndarray):
        """Copy whole buffer rows for the given block ids, under row locks.

        Returns (u, v, active, occupancy) with shape (len(bids), N); slot
        order is raw ring order, which is irrelevant to moment and score
        computations.
        """
        g = self.geometry
        rows = sorted({int(b) // g.nx for b in bids})
        for r in rows:
            self._row_locks[r].acquire()
        try:
            u = self._buf_u[bids].astype(np.float64)
            v = self._buf_v[bids].astype(np.float64)
            act = self._buf_act[bids].copy()
            count = self._count[bids].copy()
        finally:
            for r in rows:
                self._row_locks[r].release()
        return u, v, act, count

    def block_stats(self):
        """Advisory per-block active counts and scatter moments (lock-free).

        Used by the detection loop to skip hopeless blocks cheaply; any
        block that survives the prefilter is re-read under a snapshot.
        """
        nb = self.geometry.n_blocks
        n_act = np.zeros(nb, np.int64)
        su = np.zeros(nb, np.float64)
        sv = np.zeros(nb, np.float64)
        suu = np.zeros(nb, np.float64)
        svv = np.zeros(nb, np.float64)
        suv = np.zeros(nb, np.float64)
        _kernels.block_moments(self._buf_u, self._buf_v, self._buf_act,
                               self._count, n_act, su, sv, suu, svv, suv)
        return n_act, su, sv, suu, svv, suv

    def render_frame(self) -> np.ndarray:
        """Accumulate intensity per active event into an 8-bit image."""
        g = self.geometry
        rows = list(range(g.ny))
        for r in rows:
            self._row_locks[r].acquire()
        try:
            valid = np.arange(self.capacity_per_block)[None, :] < self._count[:, None]
            mask = valid & self._buf_act
            us = self._buf_u[mask].astype(np.int64)
            vs = self._buf_v[mask].astype(np.int64)
        finally:
            for r in rows:
                self._row_locks[r].release()
        w, h = g.sensor.width, g.sensor.height
        acc = np.bincount(vs * w + us, minlength=w * h) * self.intensity
        return np.minimum(acc, 255).astype(np.uint8).reshape(h, w)


def write_pgm(image: np.ndarray, path: str | Path) -> None:
    """Write a grayscale image as binary PGM (P5, maxval 255)."""
    img = np.asarray(image, np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = (int(x) for x in parts[1].split())
    maxval = int(parts[2])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    return np.frombuffer(parts[3][: w * h], np.uint8).reshape(h, w).copy()
