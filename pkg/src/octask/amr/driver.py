"""Distributed advance loop for the octree application.

One manager component per locality owns that locality's leaves.  The
supervisor drives barriered phases per step: signal-speed reduction for
dt, ghost exchange, density replication, gravity walk, hydro update.
Every reduction folds in canonical leaf order, so the state hash is
identical for any locality count or parcelport.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .. import timebase
from ..dist import Gid, Runtime, pack_gid, register_global_factory, unpack_gid
from ..runtime import when_all
from ..spaces import Serial
from . import gravity, hydro, star
from .config import AmrConfig
from .ghosts import fill_leaf_ghosts, serve_face
from .grid import SubGrid
from .tree import N, Key, TreeStructure, build_structure

# leaf actions
A_GET_FACE = 1

# manager actions
A_SET_TREE = 10
A_SET_GIDS = 11
A_MAX_SIGNAL = 12
A_EXCHANGE = 13
A_DENSITY = 14
A_SET_REMOTE_DENSITY = 15
A_GRAVITY = 16
A_HYDRO = 17
A_HASHES = 18
A_MASS = 19
A_REPORT_HASH = 20

MANAGER_TYPE = "amr-manager"

KERNEL_MODES = ("native", "execspace")


@dataclass
class RunMetrics:
    wall_seconds: float
    leaf_count: int
    steps: int
    cells: int
    cells_per_second: float
    step_normalized_rate: float


def compute_metrics(wall_seconds: float, leaf_count: int, steps: int) -> RunMetrics:
    """Throughput per the run definition, plus the alternate normalization
    that divides one step's cells by both the wall time and the step count."""
    cells = leaf_count * N ** 3
    return RunMetrics(
        wall_seconds=wall_seconds,
        leaf_count=leaf_count,
        steps=steps,
        cells=cells,
        cells_per_second=cells * steps / wall_seconds if wall_seconds > 0 else float("inf"),
        step_normalized_rate=cells / (wall_seconds * steps) if wall_seconds > 0 and steps else float("inf"),
    )


# ---------------------------------------------------------------------------
# key/map codecs

def _pack_key(key: Key) -> bytes:
    return struct.pack("<IIII", *key)


def _unpack_key(buf: bytes, off: int) -> tuple[Key, int]:
    return struct.unpack_from("<IIII", buf, off), off + 16


def _pack_gid_map(items: dict[Key, Gid]) -> bytes:
    out = struct.pack("<I", len(items))
    for key in sorted(items):
        out += _pack_key(key) + pack_gid(items[key])
    return out


def _unpack_gid_map(buf: bytes, off: int = 0) -> tuple[dict[Key, Gid], int]:
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    items = {}
    for _ in range(count):
        key, off = _unpack_key(buf, off)
        gid, off = unpack_gid(buf, off)
        items[key] = gid
    return items, off


def _pack_blocks(items: dict[Key, np.ndarray]) -> bytes:
    out = struct.pack("<I", len(items))
    for key in sorted(items):
        out += _pack_key(key) + np.ascontiguousarray(items[key]).tobytes()
    return out


def _unpack_blocks(buf: bytes, off: int = 0) -> dict[Key, np.ndarray]:
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    nbytes = N ** 3 * 8
    items = {}
    for _ in range(count):
        key, off = _unpack_key(buf, off)
        block = np.frombuffer(buf[off:off + nbytes]).reshape(N, N, N)
        off += nbytes
        items[key] = block
    return items


# ---------------------------------------------------------------------------
# leaf component

_LEAF_ACTIONS = {A_GET_FACE: lambda grid, payload, rt: serve_face(grid, payload)}


# ---------------------------------------------------------------------------
# per-locality manager

class AmrManager:
    """Owns the locality's leaves and runs the per-step phases on them."""

    def __init__(self, runtime: Runtime):
        self.runtime = runtime
        self.cfg: AmrConfig | None = None
        self.structure: TreeStructure | None = None
        self.kernel_mode = "native"
        self.grids: dict[Key, SubGrid] = {}
        self.gid_map: dict[Key, Gid] = {}
        self.remote_rho: dict[Key, np.ndarray] = {}
        self.final_hash: str | None = None

    # -- phase handlers (run as serialized manager actions) ------------------

    def set_tree(self, payload: bytes) -> bytes:
        self.cfg, off = AmrConfig.unpack(payload)
        (mode_code,) = struct.unpack_from("<B", payload, off)
        self.kernel_mode = KERNEL_MODES[mode_code]
        self.structure, _ = TreeStructure.unpack(payload, off + 1)
        mine = {}
        for key in self.structure.leaves:
            if self.structure.owner(key, self.runtime.locality_count) != self.runtime.locality_id:
                continue
            x, y, z = self.structure.cell_centers(key)
            grid = SubGrid(key, self.structure, star.initial_fields(self.cfg, x, y, z))
            self.grids[key] = grid
            mine[key] = self.runtime.register_component(grid, _LEAF_ACTIONS)
        return _pack_gid_map(mine)

    def set_gids(self, payload: bytes) -> bytes:
        self.gid_map, _ = _unpack_gid_map(payload)
        return b""

    def max_signal(self) -> bytes:
        best = 0.0
        for key in sorted(self.grids):
            s = hydro.leaf_max_signal(self.grids[key], self.cfg.gamma)
            if s > best:
                best = s
        return struct.pack("<d", best)

    def exchange(self) -> bytes:
        pool = self.runtime.pool

        def fetch(key, request):
            return self.runtime.invoke(self.gid_map[key], A_GET_FACE, request)

        futs = [pool.spawn(fill_leaf_ghosts, self.structure, self.grids[key], fetch)
                for key in sorted(self.grids)]
        when_all(futs).get()
        return b""

    def density_blocks(self) -> bytes:
        return _pack_blocks({key: self.grids[key].rho for key in self.grids})

    def set_remote_density(self, payload: bytes) -> bytes:
        self.remote_rho = _unpack_blocks(payload)
        return b""

    def _rho_of(self, key: Key) -> np.ndarray:
        grid = self.grids.get(key)
        if grid is not None:
            return grid.rho
        return self.remote_rho[key]

    def gravity_phase(self, payload: bytes) -> bytes:
        (theta,) = struct.unpack("<d", payload)
        flat = gravity.build_flat_tree(self.structure, self._rho_of)
        pool = self.runtime.pool
        space = Serial() if self.kernel_mode == "execspace" else None
        futs = [pool.spawn(gravity.solve_leaf, flat, self.structure,
                           self.grids[key], theta, space)
                for key in sorted(self.grids)]
        when_all(futs).get()
        return b""

    def hydro_phase(self, payload: bytes) -> bytes:
        (dt,) = struct.unpack("<d", payload)
        pool = self.runtime.pool
        if self.kernel_mode == "execspace":
            step = lambda g: hydro.step_leaf_execspace(g, dt, self.cfg.gamma, Serial())
        else:
            step = lambda g: hydro.step_leaf(g, dt, self.cfg.gamma)
        futs = [pool.spawn(step, self.grids[key]) for key in sorted(self.grids)]
        when_all(futs).get()
        return b""

    def leaf_hashes(self) -> bytes:
        out = struct.pack("<I", len(self.grids))
        for key in sorted(self.grids):
            out += _pack_key(key) + self.grids[key].digest()
        return out

    def leaf_masses(self) -> bytes:
        out = struct.pack("<I", len(self.grids))
        for key in sorted(self.grids):
            out += _pack_key(key) + struct.pack("<d", self.grids[key].total_mass())
        return out

    def note_hash(self, payload: bytes) -> bytes:
        self.final_hash = payload.decode()
        return b""


def _manager_factory(payload: bytes, runtime: Runtime):
    mgr = AmrManager(runtime)
    runtime.amr_manager = mgr  # found again by worker CLIs after shutdown
    actions = {
        A_SET_TREE: lambda m, p, rt: m.set_tree(p),
        A_SET_GIDS: lambda m, p, rt: m.set_gids(p),
        A_MAX_SIGNAL: lambda m, p, rt: m.max_signal(),
        A_EXCHANGE: lambda m, p, rt: m.exchange(),
        A_DENSITY: lambda m, p, rt: m.density_blocks(),
        A_SET_REMOTE_DENSITY: lambda m, p, rt: m.set_remote_density(p),
        A_GRAVITY: lambda m, p, rt: m.gravity_phase(p),
        A_HYDRO: lambda m, p, rt: m.hydro_phase(p),
        A_HASHES: lambda m, p, rt: m.leaf_hashes(),
        A_MASS: lambda m, p, rt: m.leaf_masses(),
        A_REPORT_HASH: lambda m, p, rt: m.note_hash(p),
    }
    return mgr, actions


register_global_factory(MANAGER_TYPE, _manager_factory)


# ---------------------------------------------------------------------------
# supervisor driver

class AmrRun:
    """Supervisor-side handle: builds the tree, advances, reports."""

    def __init__(self, runtime: Runtime, cfg: AmrConfig, kernel_mode: str = "native"):
        if kernel_mode not in KERNEL_MODES:
            raise ValueError(f"kernel mode must be one of {KERNEL_MODES}")
        self.runtime = runtime
        self.cfg = cfg.validate()
        self.kernel_mode = kernel_mode
        self.structure: TreeStructure | None = None
        self.managers: list[Gid] = []
        self.gid_map: dict[Key, Gid] = {}

    def _bcast(self, action: int, payload: bytes = b"") -> list[bytes]:
        futs = [self.runtime.invoke(m, action, payload) for m in self.managers]
        return when_all(futs).get()

    def build_tree(self) -> tuple[int, int]:
        """Build and distribute the tree; returns (leaf_count, cell_count)."""
        cfg = self.cfg
        self.structure = build_structure(cfg, star.refine_metric(cfg))
        count = self.runtime.locality_count
        self.managers = [
            self.runtime.create_remote(loc, MANAGER_TYPE)
            for loc in range(count)
        ]
        self.managers = when_all(self.managers).get()
        payload = cfg.pack() + struct.pack("<B", KERNEL_MODES.index(self.kernel_mode)) \
            + self.structure.pack()
        merged: dict[Key, Gid] = {}
        for reply in self._bcast(A_SET_TREE, payload):
            part, _ = _unpack_gid_map(reply)
            merged.update(part)
        self.gid_map = merged
        self._bcast(A_SET_GIDS, _pack_gid_map(merged))
        return self.structure.census()

    def advance(self, steps: int | None = None) -> RunMetrics:
        """Interleaved solver loop: ghosts, gravity, hydro, once per step."""
        steps = self.cfg.steps if steps is None else steps
        structure = self.structure
        h_min = structure.cell_width(structure.finest_level())
        theta_payload = struct.pack("<d", self.cfg.theta)
        timebase.perf_seconds()  # warm the calibration before timing
        t0 = timebase.perf_seconds()
        for step in range(steps):
            try:
                smax = max(struct.unpack("<d", r)[0] for r in self._bcast(A_MAX_SIGNAL))
                dt = self.cfg.dt_safety * h_min / smax
                self._bcast(A_EXCHANGE)
                if self.runtime.locality_count > 1:
                    blocks = {}
                    for reply in self._bcast(A_DENSITY):
                        blocks.update(_unpack_blocks(reply))
                    self._bcast(A_SET_REMOTE_DENSITY, _pack_blocks(blocks))
                self._bcast(A_GRAVITY, theta_payload)
                self._bcast(A_HYDRO, struct.pack("<d", dt))
            except Exception as e:
                raise RuntimeError(f"step {step} failed: {e}") from e
        wall = timebase.perf_seconds() - t0
        return compute_metrics(wall, len(structure.leaves), steps)

    def state_hash(self) -> str:
        """Canonical digest over all leaves in global key order."""
        per_leaf: dict[Key, bytes] = {}
        for reply in self._bcast(A_HASHES):
            (count,) = struct.unpack_from("<I", reply, 0)
            off = 4
            for _ in range(count):
                key, off = _unpack_key(reply, off)
                per_leaf[key] = reply[off:off + 32]
                off += 32
        sha = hashlib.sha256()
        for key in self.structure.leaves:
            sha.update(_pack_key(key) + per_leaf[key])
        digest = sha.hexdigest()
        self._bcast(A_REPORT_HASH, digest.encode())
        return digest

    def total_mass(self) -> float:
        per_leaf: dict[Key, float] = {}
        for reply in self._bcast(A_MASS):
            (count,) = struct.unpack_from("<I", reply, 0)
            off = 4
            for _ in range(count):
                key, off = _unpack_key(reply, off)
                (m,) = struct.unpack_from("<d", reply, off)
                off += 8
                per_leaf[key] = m
        return sum(per_leaf[key] for key in self.structure.leaves)
