"""Block-grid geometry: block indexing, active/inactive membership, traversal.

The sensor plane is partitioned into square blocks of ``b`` pixels. Every
pixel belongs to exactly one *active* block (floor division). Each block
additionally owns an *inactive* margin extending ``b/2`` pixels past its
border into the neighbouring blocks, so a pixel can fall inside the
inactive region of up to three neighbours (one horizontal, one vertical,
one diagonal).

Membership at exactly ``b/2`` from a border is exclusive: such a pixel is
not inside the neighbour's inactive region. This keeps the neighbour count
bound tight and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .events import SensorGeometry

_EPS = 1e-9


class BlockCoord(NamedTuple):
    ru: int
    rv: int


@dataclass(frozen=True)
class LatticeGeometry:
    """Grid of ``nx`` x ``ny`` blocks of size ``b`` covering the sensor.

    ``b`` must be even so the half-block inactive margin is integral.
    Border blocks keep nominal size ``b``; their active regions are
    clipped to the sensor extent.
    """

    sensor: SensorGeometry
    b: int
    nx: int = field(init=False)
    ny: int = field(init=False)

    def __post_init__(self) -> None:
        if self.b < 2 or self.b % 2 != 0:
            raise ValueError(f"block size must be even and >= 2, got {self.b}")
        object.__setattr__(self, "nx", math.ceil(self.sensor.width / self.b))
        object.__setattr__(self, "ny", math.ceil(self.sensor.height / self.b))

    @property
    def n_blocks(self) -> int:
        return self.nx * self.ny

    def block_id(self, block: BlockCoord) -> int:
        return block.rv * self.nx + block.ru

    def block_of_id(self, bid: int) -> BlockCoord:
        return BlockCoord(bid % self.nx, bid // self.nx)

    def contains(self, u: float, v: float) -> bool:
        return 0 <= u < self.sensor.width and 0 <= v < self.sensor.height

    def active_block_of(self, u: float, v: float) -> BlockCoord:
        """Block whose active region holds pixel (u, v)."""
        if not self.contains(u, v):
            raise ValueError(f"pixel ({u}, {v}) out of sensor bounds")
        return BlockCoord(int(u // self.b), int(v // self.b))

    def inactive_blocks_of(self, u: int, v: int) -> list[BlockCoord]:
        """Neighbour blocks whose inactive margin contains pixel (u, v).

        Returns 0 to 3 blocks, in (horizontal, vertical, diagonal) order.
        """
        if not self.contains(u, v):
            raise ValueError(f"pixel ({u}, {v}) out of sensor bounds")
        b = self.b
        bu, bv = int(u // b), int(v // b)
        lu, lv = u - bu * b, v - bv * b
        # strict comparison: a pixel at exactly b/2 belongs to no neighbour
        h = -1 if 2 * lu < b else (1 if 2 * lu > b else 0)
        k = -1 if 2 * lv < b else (1 if 2 * lv > b else 0)
        out: list[BlockCoord] = []
        if h != 0 and 0 <= bu + h < self.nx:
            out.append(BlockCoord(bu + h, bv))
        if k != 0 and 0 <= bv + k < self.ny:
            out.append(BlockCoord(bu, bv + k))
        if h != 0 and k != 0 and 0 <= bu + h < self.nx and 0 <= bv + k < self.ny:
            out.append(BlockCoord(bu + h, bv + k))
        return out

    def block_rect(self, block: BlockCoord) -> tuple[float, float, float, float]:
        """Active-region rectangle (x0, y0, x1, y1), clipped to the sensor."""
        b = self.b
        x0, y0 = block.ru * b, block.rv * b
        x1 = min(x0 + b, self.sensor.width)
        y1 = min(y0 + b, self.sensor.height)
        return float(x0), float(y0), float(x1), float(y1)

    def clamp_block_of(self, u: float, v: float) -> BlockCoord:
        """Like active_block_of but tolerates points on the far sensor border."""
        ru = min(int(u // self.b), self.nx - 1)
        rv = min(int(v // self.b), self.ny - 1)
        return BlockCoord(max(ru, 0), max(rv, 0))

    def blocks_crossed(self, q0, q1) -> list[BlockCoord]:
        """All blocks whose active region the closed segment q0-q1 passes through.

        Grid traversal along the segment; an exact corner crossing includes
        both edge-adjacent blocks (conservative over-coverage).
        """
        x0, y0 = float(q0[0]), float(q0[1])
        x1, y1 = float(q1[0]), float(q1[1])
        b = self.b
        dx, dy = x1 - x0, y1 - y0

        # parameters where the segment crosses grid lines
        ts = {0.0, 1.0}
        if abs(dx) > _EPS:
            lo, hi = sorted((x0, x1))
            for m in range(math.ceil(lo / b - _EPS), math.floor(hi / b + _EPS) + 1):
                t = (m * b - x0) / dx
                if -_EPS < t < 1 + _EPS:
                    ts.add(min(max(t, 0.0), 1.0))
        if abs(dy) > _EPS:
            lo, hi = sorted((y0, y1))
            for n in range(math.ceil(lo / b - _EPS), math.floor(hi / b + _EPS) + 1):
                t = (n * b - y0) / dy
                if -_EPS < t < 1 + _EPS:
                    ts.add(min(max(t, 0.0), 1.0))

        params = sorted(ts)
        seen: set[BlockCoord] = set()
        out: list[BlockCoord] = []

        def add(px: float, py: float) -> None:
            blk = self.clamp_block_of(px, py)
            if blk not in seen:
                seen.add(blk)
                out.append(blk)

        for ta, tb in zip(params[:-1], params[1:]):
            if tb - ta < _EPS:
                continue
            tm = 0.5 * (ta + tb)
            add(x0 + tm * dx, y0 + tm * dy)
        if not out:  # zero-length segment
            add(x0, y0)

        # exact corner crossings: include both edge-adjacent blocks
        for t in params:
            px, py = x0 + t * dx, y0 + t * dy
            on_vert = abs(px / b - round(px / b)) < _EPS
            on_horz = abs(py / b - round(py / b)) < _EPS
            if on_vert and on_horz and 0.0 < t < 1.0:
                m, n = round(px / b), round(py / b)
                for ru, rv in ((m - 1, n), (m, n - 1), (m, n), (m - 1, n - 1)):
                    if 0 <= ru < self.nx and 0 <= rv < self.ny:
                        blk = BlockCoord(ru, rv)
                        if blk not in seen:
                            seen.add(blk)
                            out.append(blk)
        return out

    # vectorised helpers used by the storage layer -------------------------

    def active_block_ids(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        return (vs // self.b).astype(np.int64) * self.nx + (us // self.b).astype(np.int64)

    def neighbor_offsets(self, us: np.ndarray, vs: np.ndarray):
        """Per-event inactive-neighbour direction (h, k), 0 meaning none."""
        b = self.b
        lu = us - (us // b) * b
        lv = vs - (vs // b) * b
        h = np.where(2 * lu < b, -1, np.where(2 * lu > b, 1, 0)).astype(np.int8)
        k = np.where(2 * lv < b, -1, np.where(2 * lv > b, 1, 0)).astype(np.int8)
        return h, k
