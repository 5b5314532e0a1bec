"""Ghost-shell exchange for one leaf.

The requester derives everything from the replicated tree: which
neighbor covers each face, whether the data needs piecewise-constant
expansion (coarse neighbor) or 4-cell restriction (finer neighbors), and
which face the neighbor must serve.  `fetch` abstracts the transport: it
returns a future of the serialized slab, so local and remote neighbors
look identical here.
"""

from __future__ import annotations

import struct
from typing import Callable

import numpy as np

from ..runtime import FutureHandle, when_all
from .grid import SubGrid, expand_quad, restrict_fine
from .tree import Key, N, TreeStructure, quadrant_parity

FACE_FULL = 0
FACE_QUAD = 1


def face_request(axis: int, side: int, mode: int, pb: int = 0, pc: int = 0) -> bytes:
    return struct.pack("<BBBBB", axis, side, mode, pb, pc)


def serve_face(grid: SubGrid, payload: bytes) -> bytes:
    """Leaf-side handler for a face request."""
    axis, side, mode, pb, pc = struct.unpack("<BBBBB", payload)
    if mode == FACE_FULL:
        return np.ascontiguousarray(grid.boundary_face(axis, side)).tobytes()
    return np.ascontiguousarray(grid.boundary_quad(axis, side, pb, pc)).tobytes()


Fetch = Callable[[Key, bytes], FutureHandle]


def fill_leaf_ghosts(structure: TreeStructure, grid: SubGrid, fetch: Fetch) -> None:
    """Copy the interior into the extended blocks and fill all six faces."""
    grid.load_interior()
    plans = []  # (axis, side, kind, futures)
    for axis in range(3):
        for side in (0, 1):
            kind, info = structure.face_neighbor(grid.key, axis, side)
            if kind == "boundary":
                grid.reflect_ghost(axis, side)
                continue
            opposite = 1 - side
            if kind == "same":
                futs = [fetch(info, face_request(axis, opposite, FACE_FULL))]
            elif kind == "coarse":
                pb, pc = quadrant_parity(grid.key, axis)
                futs = [fetch(info, face_request(axis, opposite, FACE_QUAD, pb, pc))]
            else:
                futs = [fetch(ck, face_request(axis, opposite, FACE_FULL))
                        for ck in info]
            plans.append((axis, side, kind, futs))
    replies = iter(when_all([f for _, _, _, fs in plans for f in fs]).get())
    for axis, side, kind, futs in plans:
        raws = [next(replies) for _ in futs]
        if kind == "same":
            slab = np.frombuffer(raws[0]).reshape(5, N, N)
        elif kind == "coarse":
            slab = expand_quad(np.frombuffer(raws[0]).reshape(5, 4, 4))
        else:
            slab = restrict_fine([np.frombuffer(r).reshape(5, N, N) for r in raws])
        grid.set_ghost(axis, side, slab)


def local_fetch(grids: dict[Key, SubGrid]) -> Fetch:
    """In-process fetch over a dict of grids (tests, single locality)."""

    def fetch(key: Key, request: bytes) -> FutureHandle:
        return FutureHandle.ready(serve_face(grids[key], request))

    return fetch
