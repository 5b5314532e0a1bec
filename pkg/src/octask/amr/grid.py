"""Sub-grid storage: 8x8x8 field blocks with one-cell ghost shells.

Hydro fields (rho, momentum, energy) are exchanged into the ghost shell
before a step; the potential gets its ghost values straight from the
gravity solver.  Ghost transforms across level jumps are piecewise
constant downward (coarse to fine) and 4-cell averages upward.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .tree import N, Key

FIELDS = ("rho", "mx", "my", "mz", "en")
HASH_FIELDS = FIELDS + ("phi",)
_MOMENTUM_OF_AXIS = {0: "mx", 1: "my", 2: "mz"}


def _face_index(side: int) -> int:
    return N - 1 if side else 0


def _interior_face(arr: np.ndarray, axis: int, side: int) -> np.ndarray:
    sl = [slice(None)] * 3
    sl[axis] = _face_index(side)
    return arr[tuple(sl)]


def _ghost_plane(ext: np.ndarray, axis: int, side: int) -> np.ndarray:
    sl = [slice(1, N + 1)] * 3
    sl[axis] = N + 1 if side else 0
    return ext[tuple(sl)]


class SubGrid:
    """Field data of one leaf plus its ghost-extended scratch blocks."""

    __slots__ = ("key", "cell_width", "origin", "x", "y", "z",
                 "rho", "mx", "my", "mz", "en", "phi",
                 "rho_e", "mx_e", "my_e", "mz_e", "en_e", "phi_e")

    def __init__(self, key: Key, structure, initial: dict[str, np.ndarray] | None = None):
        self.key = key
        self.cell_width = structure.cell_width(key[0])
        self.origin = structure.node_origin(key)
        self.x, self.y, self.z = structure.cell_centers(key)
        for name in FIELDS + ("phi",):
            setattr(self, name, np.zeros((N, N, N)))
        for name in FIELDS + ("phi",):
            setattr(self, name + "_e", np.zeros((N + 2, N + 2, N + 2)))
        if initial:
            for name, arr in initial.items():
                getattr(self, name)[:] = arr

    # -- ghost machinery ------------------------------------------------------

    def load_interior(self) -> None:
        for name in FIELDS:
            getattr(self, name + "_e")[1:N + 1, 1:N + 1, 1:N + 1] = getattr(self, name)

    def boundary_face(self, axis: int, side: int) -> np.ndarray:
        """(5, 8, 8) slab of the hydro fields at one face, transverse axes
        in ascending global order."""
        return np.stack([_interior_face(getattr(self, f), axis, side) for f in FIELDS])

    def boundary_quad(self, axis: int, side: int, pb: int, pc: int) -> np.ndarray:
        """(5, 4, 4) quadrant of a face, for a finer neighbor to expand."""
        face = self.boundary_face(axis, side)
        return face[:, pb * 4:(pb + 1) * 4, pc * 4:(pc + 1) * 4]

    def set_ghost(self, axis: int, side: int, slab: np.ndarray) -> None:
        for i, name in enumerate(FIELDS):
            _ghost_plane(getattr(self, name + "_e"), axis, side)[:] = slab[i]

    def reflect_ghost(self, axis: int, side: int) -> None:
        """Mirror the interior boundary layer; flip the normal momentum."""
        slab = self.boundary_face(axis, side).copy()
        slab[1 + axis] = -slab[1 + axis]
        self.set_ghost(axis, side, slab)

    # -- diagnostics ------------------------------------------------------------

    def total_mass(self) -> float:
        h = self.cell_width
        return float(self.rho.sum() * (h * h * h))

    def digest(self) -> bytes:
        """Canonical hash of the live fields (row-major float64 LE)."""
        sha = hashlib.sha256()
        for name in HASH_FIELDS:
            sha.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return sha.digest()


def expand_quad(slab: np.ndarray) -> np.ndarray:
    """(5, 4, 4) coarse quadrant -> (5, 8, 8) piecewise-constant fine slab."""
    return np.repeat(np.repeat(slab, 2, axis=1), 2, axis=2)


def restrict_fine(faces: list[np.ndarray]) -> np.ndarray:
    """Four (5, 8, 8) fine child faces (qb-major order) -> (5, 8, 8) coarse slab
    by conservative 4-cell averaging."""
    full = np.empty((5, 2 * N, 2 * N))
    k = 0
    for qb in (0, 1):
        for qc in (0, 1):
            full[:, qb * N:(qb + 1) * N, qc * N:(qc + 1) * N] = faces[k]
            k += 1
    t = full[:, 0::2, 0::2] + full[:, 1::2, 0::2]
    t = t + full[:, 0::2, 1::2]
    t = t + full[:, 1::2, 1::2]
    return t * 0.25
