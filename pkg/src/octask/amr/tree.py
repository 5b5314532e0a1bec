"""Octree structure: keys, geometry, neighbors, refinement, placement.

A node is keyed by (level, ix, iy, iz) with octant coordinates in
[0, 2^level).  Refinement always splits a node into all 8 children and
the builder enforces 2:1 balance across faces, so a leaf's face neighbor
is a leaf at the same level, a leaf one level coarser, or four leaves
one level finer.  The structure is metadata only (replicated on every
locality); field data lives in leaf components.
"""

from __future__ import annotations

import struct
from typing import Callable, Iterable, Optional

import numpy as np

N = 8  # cells per sub-grid edge

Key = tuple[int, int, int, int]

# child index = (cx << 2) | (cy << 1) | cz
CHILD_OFFSETS = [(cx, cy, cz) for cx in (0, 1) for cy in (0, 1) for cz in (0, 1)]


class BuildError(RuntimeError):
    pass


def children_of(key: Key) -> list[Key]:
    level, ix, iy, iz = key
    return [(level + 1, 2 * ix + cx, 2 * iy + cy, 2 * iz + cz)
            for cx, cy, cz in CHILD_OFFSETS]


def parent_of(key: Key) -> Optional[Key]:
    level, ix, iy, iz = key
    if level == 0:
        return None
    return (level - 1, ix // 2, iy // 2, iz // 2)


class TreeStructure:
    """Replicated octree metadata derived from the set of leaf keys."""

    def __init__(self, domain_size: float, leaf_keys: Iterable[Key]):
        self.domain_size = float(domain_size)
        self.leaves: list[Key] = sorted(leaf_keys)
        if not self.leaves:
            raise BuildError("a tree needs at least one leaf")
        self.leaf_set = set(self.leaves)
        nodes = set(self.leaf_set)
        for key in self.leaves:
            p = parent_of(key)
            while p is not None and p not in nodes:
                nodes.add(p)
                p = parent_of(p)
        self.nodes = nodes

    # -- geometry -----------------------------------------------------------

    def node_size(self, level: int) -> float:
        return self.domain_size / (1 << level)

    def cell_width(self, level: int) -> float:
        return self.domain_size / (N << level)

    def node_origin(self, key: Key) -> np.ndarray:
        level, ix, iy, iz = key
        s = self.node_size(level)
        return np.array([ix * s, iy * s, iz * s])

    def node_center(self, key: Key) -> np.ndarray:
        level = key[0]
        return self.node_origin(key) + 0.5 * self.node_size(level)

    def cell_centers(self, key: Key) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell-center coordinate grids, each (N, N, N)."""
        h = self.cell_width(key[0])
        o = self.node_origin(key)
        ax = [o[d] + (np.arange(N) + 0.5) * h for d in range(3)]
        return np.meshgrid(ax[0], ax[1], ax[2], indexing="ij")

    def is_leaf(self, key: Key) -> bool:
        return key in self.leaf_set

    def finest_level(self) -> int:
        return max(k[0] for k in self.leaves)

    def census(self) -> tuple[int, int]:
        return len(self.leaves), len(self.leaves) * N ** 3

    # -- placement ------------------------------------------------------------

    def owner(self, key: Key, locality_count: int) -> int:
        """Subtree round-robin: a level-1 octant and all its descendants
        share a locality; the root goes to the supervisor."""
        level, ix, iy, iz = key
        if level == 0:
            return 0
        shift = level - 1
        octant = ((ix >> shift) << 2) | ((iy >> shift) << 1) | (iz >> shift)
        return octant % locality_count

    # -- neighbors ------------------------------------------------------------

    def face_neighbor(self, key: Key, axis: int, side: int):
        """Classify the neighbor across a face of a leaf.

        side is 0 (low) or 1 (high).  Returns one of
          ("boundary", None)
          ("same", key)            same-level leaf
          ("coarse", key)          leaf one level up covers the region
          ("fine", [k0..k3])       four finer leaves, transverse-ordered
        """
        level, *coords = key
        step = 1 if side else -1
        coords = list(coords)
        coords[axis] += step
        if not 0 <= coords[axis] < (1 << level):
            return ("boundary", None)
        nk = (level, *coords)
        if nk in self.nodes:
            if nk in self.leaf_set:
                return ("same", nk)
            tb, tc = _transverse(axis)
            facing = 0 if side else 1
            out = []
            for qb in (0, 1):
                for qc in (0, 1):
                    off = [0, 0, 0]
                    off[axis] = facing
                    off[tb] = qb
                    off[tc] = qc
                    ck = (level + 1,
                          2 * coords[0] + off[0],
                          2 * coords[1] + off[1],
                          2 * coords[2] + off[2])
                    if ck not in self.leaf_set:
                        raise BuildError(f"tree is not 2:1 balanced at {key} face {axis}/{side}")
                    out.append(ck)
            return ("fine", out)
        pk = parent_of(nk)
        if pk is None or pk not in self.leaf_set:
            raise BuildError(f"tree is not 2:1 balanced at {key} face {axis}/{side}")
        return ("coarse", pk)

    # -- wire form ------------------------------------------------------------

    def pack(self) -> bytes:
        out = struct.pack("<dI", self.domain_size, len(self.leaves))
        for level, ix, iy, iz in self.leaves:
            out += struct.pack("<IIII", level, ix, iy, iz)
        return out

    @classmethod
    def unpack(cls, buf: bytes, off: int = 0) -> tuple["TreeStructure", int]:
        domain, count = struct.unpack_from("<dI", buf, off)
        off += 12
        leaves = []
        for _ in range(count):
            leaves.append(struct.unpack_from("<IIII", buf, off))
            off += 16
        return cls(domain, leaves), off


def _transverse(axis: int) -> tuple[int, int]:
    b, c = [d for d in range(3) if d != axis]
    return b, c


def quadrant_parity(key: Key, axis: int) -> tuple[int, int]:
    """Position of a leaf within its parent along a face's transverse axes."""
    tb, tc = _transverse(axis)
    coords = key[1:]
    return coords[tb] & 1, coords[tc] & 1


def build_structure(cfg, refine_metric: Callable[[Key, "TreeStructure"], float]) -> TreeStructure:
    """Refine from the root wherever the metric exceeds the threshold,
    then enforce 2:1 face balance; errors name the offending level."""
    probe = TreeStructure(cfg.domain_size, [(0, 0, 0, 0)])
    leaves: set[Key] = set()
    frontier: list[Key] = [(0, 0, 0, 0)]
    while frontier:
        key = frontier.pop()
        if key[0] < cfg.max_level and refine_metric(key, probe) > cfg.threshold:
            frontier.extend(children_of(key))
        else:
            leaves.add(key)
        if len(leaves) + len(frontier) > cfg.leaf_budget:
            raise BuildError(
                f"refinement to level {cfg.max_level} exceeds the "
                f"leaf budget of {cfg.leaf_budget}")

    # 2:1 balance: a leaf at level l must not touch a leaf coarser than l-1
    changed = True
    while changed:
        changed = False
        for key in sorted(leaves, key=lambda k: -k[0]):
            level, *coords = key
            if level < 2:
                continue
            for axis in range(3):
                for side in (0, 1):
                    nc = list(coords)
                    nc[axis] += 1 if side else -1
                    if not 0 <= nc[axis] < (1 << level):
                        continue
                    cover = _covering_leaf(leaves, (level, *nc))
                    if cover is not None and cover[0] < level - 1:
                        leaves.discard(cover)
                        leaves.update(children_of(cover))
                        changed = True
        if len(leaves) > cfg.leaf_budget:
            raise BuildError(
                f"balancing at level {cfg.max_level} exceeds the "
                f"leaf budget of {cfg.leaf_budget}")
    return TreeStructure(cfg.domain_size, leaves)


def _covering_leaf(leaves: set[Key], key: Key) -> Optional[Key]:
    k = key
    while k is not None:
        if k in leaves:
            return k
        k = parent_of(k)
    return None
