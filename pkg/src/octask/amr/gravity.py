"""Monopole gravity on the octree (G = 1).

An upward pass folds cell masses into per-node monopole moments over a
flattened replica of the tree; the per-cell downward walk accepts a node
when size < theta * distance and otherwise descends, falling back to
direct cell-cell sums at leaves.  The potential is also evaluated at
each leaf's ghost-shell positions so the hydro step can take centered
gradients without a second exchange; values there match what the owning
neighbor computes for the same points.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .. import kernels
from .grid import SubGrid, _ghost_plane, _interior_face
from .tree import N, Key, TreeStructure, children_of


class FlatTree:
    """Array form of the tree shared by walk kernels on every locality."""

    __slots__ = ("size", "comx", "comy", "comz", "mass", "first_child",
                 "cell_off", "cell_cnt", "cx", "cy", "cz", "cmass",
                 "leaf_offset", "node_keys")

    def __init__(self, n_nodes: int, n_cells: int):
        self.size = np.zeros(n_nodes)
        self.comx = np.zeros(n_nodes)
        self.comy = np.zeros(n_nodes)
        self.comz = np.zeros(n_nodes)
        self.mass = np.zeros(n_nodes)
        self.first_child = np.full(n_nodes, -1, dtype=np.int32)
        self.cell_off = np.full(n_nodes, -1, dtype=np.int64)
        self.cell_cnt = np.zeros(n_nodes, dtype=np.int64)
        self.cx = np.zeros(n_cells)
        self.cy = np.zeros(n_cells)
        self.cz = np.zeros(n_cells)
        self.cmass = np.zeros(n_cells)
        self.leaf_offset: dict[Key, int] = {}
        self.node_keys: list[Key] = []


def build_flat_tree(structure: TreeStructure,
                    rho_of: Callable[[Key], np.ndarray]) -> FlatTree:
    """Flatten the tree (breadth-first, children contiguous) and run the
    upward moment pass from per-leaf densities."""
    order: list[Key] = [(0, 0, 0, 0)]
    for key in order:  # grows while iterating: breadth-first
        if not structure.is_leaf(key):
            order.extend(children_of(key))
    index = {key: i for i, key in enumerate(order)}

    n_cells = len(structure.leaves) * N ** 3
    flat = FlatTree(len(order), n_cells)
    flat.node_keys = order

    off = 0
    for key in structure.leaves:
        flat.leaf_offset[key] = off
        i = index[key]
        flat.cell_off[i] = off
        flat.cell_cnt[i] = N ** 3
        x, y, z = structure.cell_centers(key)
        flat.cx[off:off + N ** 3] = x.ravel()
        flat.cy[off:off + N ** 3] = y.ravel()
        flat.cz[off:off + N ** 3] = z.ravel()
        h = structure.cell_width(key[0])
        flat.cmass[off:off + N ** 3] = rho_of(key).ravel() * (h * h * h)
        off += N ** 3

    for i, key in enumerate(order):
        flat.size[i] = structure.node_size(key[0])
        if not structure.is_leaf(key):
            flat.first_child[i] = index[children_of(key)[0]]

    # upward pass: children precede nothing (BFS puts them after parents),
    # so walk the order backwards
    for i in range(len(order) - 1, -1, -1):
        key = order[i]
        if structure.is_leaf(key):
            o = flat.cell_off[i]
            c = flat.cell_cnt[i]
            m = flat.cmass[o:o + c]
            total = float(m.sum())
            flat.mass[i] = total
            if total > 0.0:
                flat.comx[i] = float((m * flat.cx[o:o + c]).sum()) / total
                flat.comy[i] = float((m * flat.cy[o:o + c]).sum()) / total
                flat.comz[i] = float((m * flat.cz[o:o + c]).sum()) / total
            else:
                flat.comx[i], flat.comy[i], flat.comz[i] = structure.node_center(key)
        else:
            fc = flat.first_child[i]
            total = 0.0
            ax = ay = az = 0.0
            for c in range(8):
                j = fc + c
                total = total + flat.mass[j]
                ax = ax + flat.mass[j] * flat.comx[j]
                ay = ay + flat.mass[j] * flat.comy[j]
                az = az + flat.mass[j] * flat.comz[j]
            flat.mass[i] = total
            if total > 0.0:
                flat.comx[i] = ax / total
                flat.comy[i] = ay / total
                flat.comz[i] = az / total
            else:
                flat.comx[i], flat.comy[i], flat.comz[i] = structure.node_center(key)
    return flat


def walk_positions(flat: FlatTree, tx, ty, tz, theta: float,
                   self_off: int = -1) -> np.ndarray:
    """Potential at arbitrary positions via the opening-angle walk."""
    out = np.empty(tx.shape[0])
    kernels.gravity_walk(flat.size, flat.comx, flat.comy, flat.comz, flat.mass,
                         flat.first_child, flat.cell_off, flat.cell_cnt,
                         flat.cx, flat.cy, flat.cz, flat.cmass,
                         self_off, tx, ty, tz, theta, out)
    return out


def direct_potential_all(flat: FlatTree) -> np.ndarray:
    """O(n^2) reference: every cell against every cell."""
    out = np.empty(flat.cx.shape[0])
    kernels.direct_potential(flat.cx, flat.cy, flat.cz,
                             flat.cx, flat.cy, flat.cz, flat.cmass, out)
    return out


def _ghost_coords(grid: SubGrid, axis: int, side: int):
    h = grid.cell_width
    centers = [grid.origin[d] + (np.arange(N) + 0.5) * h for d in range(3)]
    normal = grid.origin[axis] + ((N + 0.5) * h if side else -0.5 * h)
    coords = []
    for d in range(3):
        coords.append(np.full((N, N), normal) if d == axis else None)
    tb, tc = [d for d in range(3) if d != axis]
    b, c = np.meshgrid(centers[tb], centers[tc], indexing="ij")
    coords[tb] = b
    coords[tc] = c
    return coords


def solve_leaf(flat: FlatTree, structure: TreeStructure, grid: SubGrid,
               theta: float, space=None) -> None:
    """Fill grid.phi and the ghost-extended phi_e for one leaf.

    With an execution space the interior targets are split into the
    space's task count; results do not depend on the split.
    """
    if theta < 0:
        raise ValueError("theta must be >= 0")
    self_off = flat.leaf_offset[grid.key]
    tx, ty, tz = grid.x.ravel(), grid.y.ravel(), grid.z.ravel()
    if space is None:
        phi = walk_positions(flat, tx, ty, tz, theta, self_off)
    else:
        from ..par import chunk_plan
        from ..spaces import parallel_for_md
        phi = np.empty(N ** 3)
        plan = chunk_plan(0, N ** 3, space.task_count)

        def kernel(ci):
            lo, hi = plan[ci]
            if lo < hi:
                phi[lo:hi] = walk_positions(flat, tx[lo:hi], ty[lo:hi], tz[lo:hi],
                                            theta, self_off)

        parallel_for_md(space, (len(plan),), kernel).get()
    grid.phi[:] = phi.reshape(N, N, N)
    grid.phi_e[1:N + 1, 1:N + 1, 1:N + 1] = grid.phi
    level, *coords = grid.key
    for axis in range(3):
        for side in (0, 1):
            edge = coords[axis] + (1 if side else -1)
            plane = _ghost_plane(grid.phi_e, axis, side)
            if not 0 <= edge < (1 << level):
                # reflecting wall: even extension, zero normal gradient
                plane[:] = _interior_face(grid.phi, axis, side)
                continue
            gx, gy, gz = _ghost_coords(grid, axis, side)
            vals = walk_positions(flat, gx.ravel(), gy.ravel(), gz.ravel(), theta)
            plane[:] = vals.reshape(N, N)
