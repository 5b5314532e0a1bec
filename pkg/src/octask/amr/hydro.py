"""Finite-volume hydro step: Rusanov flux, ideal gas, gravity source.

`step_leaf` drives the kernel backend over a leaf's ghost-extended
blocks.  `update_cell` is the per-cell reference used by the
execution-space kernel route; it performs the identical operation
sequence, so both routes produce bit-identical states.
"""

from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..spaces import ExecutionSpace, Serial, parallel_for_md
from .grid import SubGrid
from .tree import N


class StepFault(RuntimeError):
    """Update produced an unphysical state; names the cell."""

    def __init__(self, key, flat_index):
        i, r = divmod(flat_index, N * N)
        j, k = divmod(r, N)
        super().__init__(f"negative density or pressure at leaf {key} cell ({i},{j},{k})")
        self.key = key
        self.cell = (i, j, k)


def leaf_max_signal(grid: SubGrid, gamma: float) -> float:
    s = kernels.max_signal(grid.rho, grid.mx, grid.my, grid.mz, grid.en, gamma)
    if s < 0:
        raise StepFault(grid.key, 0)
    return s


def _pressure(rho, mx, my, mz, en, gamma):
    return (gamma - 1.0) * (en - 0.5 * (mx * mx + my * my + mz * mz) / rho)


def _rusanov(rl, mxl, myl, mzl, el, rr, mxr, myr, mzr, er, axis, gamma):
    # scalar mirror of the compiled flux; keep the operation order in sync
    pl = _pressure(rl, mxl, myl, mzl, el, gamma)
    pr = _pressure(rr, mxr, myr, mzr, er, gamma)
    if axis == 0:
        ml, mr = mxl, mxr
    elif axis == 1:
        ml, mr = myl, myr
    else:
        ml, mr = mzl, mzr
    ul = ml / rl
    ur = mr / rr
    sl = abs(ul) + math.sqrt(gamma * pl / rl)
    sr = abs(ur) + math.sqrt(gamma * pr / rr)
    smax = sl if sl > sr else sr
    flmx = mxl * ul
    flmy = myl * ul
    flmz = mzl * ul
    frmx = mxr * ur
    frmy = myr * ur
    frmz = mzr * ur
    if axis == 0:
        flmx = flmx + pl
        frmx = frmx + pr
    elif axis == 1:
        flmy = flmy + pl
        frmy = frmy + pr
    else:
        flmz = flmz + pl
        frmz = frmz + pr
    return (
        0.5 * (ml + mr) - 0.5 * (smax * (rr - rl)),
        0.5 * (flmx + frmx) - 0.5 * (smax * (mxr - mxl)),
        0.5 * (flmy + frmy) - 0.5 * (smax * (myr - myl)),
        0.5 * (flmz + frmz) - 0.5 * (smax * (mzr - mzl)),
        0.5 * ((el + pl) * ul + (er + pr) * ur) - 0.5 * (smax * (er - el)),
    )


def update_cell(ext, phi_e, gamma, dt, h, i, j, k):
    """New (rho, mx, my, mz, en) of interior cell (i, j, k), or None when
    the update leaves density or pressure nonpositive."""
    rho_e, mx_e, my_e, mz_e, en_e = ext
    lam = dt / h
    twoh = 2.0 * h
    ii, jj, kk = i + 1, j + 1, k + 1
    c = (rho_e[ii, jj, kk], mx_e[ii, jj, kk], my_e[ii, jj, kk],
         mz_e[ii, jj, kk], en_e[ii, jj, kk])

    def at(a, b, d):
        return (rho_e[a, b, d], mx_e[a, b, d], my_e[a, b, d],
                mz_e[a, b, d], en_e[a, b, d])

    fxp = _rusanov(*c, *at(ii + 1, jj, kk), 0, gamma)
    fxm = _rusanov(*at(ii - 1, jj, kk), *c, 0, gamma)
    fyp = _rusanov(*c, *at(ii, jj + 1, kk), 1, gamma)
    fym = _rusanov(*at(ii, jj - 1, kk), *c, 1, gamma)
    fzp = _rusanov(*c, *at(ii, jj, kk + 1), 2, gamma)
    fzm = _rusanov(*at(ii, jj, kk - 1), *c, 2, gamma)

    gx = (phi_e[ii - 1, jj, kk] - phi_e[ii + 1, jj, kk]) / twoh
    gy = (phi_e[ii, jj - 1, kk] - phi_e[ii, jj + 1, kk]) / twoh
    gz = (phi_e[ii, jj, kk - 1] - phi_e[ii, jj, kk + 1]) / twoh

    rho, mx, my, mz, en = c
    d0 = (fxp[0] - fxm[0]) + (fyp[0] - fym[0]) + (fzp[0] - fzm[0])
    d1 = (fxp[1] - fxm[1]) + (fyp[1] - fym[1]) + (fzp[1] - fzm[1])
    d2 = (fxp[2] - fxm[2]) + (fyp[2] - fym[2]) + (fzp[2] - fzm[2])
    d3 = (fxp[3] - fxm[3]) + (fyp[3] - fym[3]) + (fzp[3] - fzm[3])
    d4 = (fxp[4] - fxm[4]) + (fyp[4] - fym[4]) + (fzp[4] - fzm[4])
    nr = rho - lam * d0
    nmx = mx - lam * d1 + dt * (rho * gx)
    nmy = my - lam * d2 + dt * (rho * gy)
    nmz = mz - lam * d3 + dt * (rho * gz)
    nen = en - lam * d4 + dt * ((mx * gx + my * gy) + mz * gz)
    if not (nr > 0.0) or not (_pressure(nr, nmx, nmy, nmz, nen, gamma) > 0.0):
        return None
    return nr, nmx, nmy, nmz, nen


def step_leaf(grid: SubGrid, dt: float, gamma: float) -> None:
    """Advance one leaf in place using the active kernel backend.

    Ghost shells must be current; faults carry the first offending cell.
    """
    outs = [np.empty((N, N, N)) for _ in range(5)]
    rc = kernels.hydro_update(grid.rho_e, grid.mx_e, grid.my_e, grid.mz_e,
                              grid.en_e, grid.phi_e, gamma, dt,
                              grid.cell_width, *outs)
    if rc:
        raise StepFault(grid.key, int(rc) - 1)
    grid.rho[:], grid.mx[:], grid.my[:], grid.mz[:], grid.en[:] = outs


def step_leaf_execspace(grid: SubGrid, dt: float, gamma: float,
                        space: ExecutionSpace | None = None) -> None:
    """Same update routed through the execution-space kernel API."""
    space = space or Serial()
    ext = (grid.rho_e, grid.mx_e, grid.my_e, grid.mz_e, grid.en_e)
    outs = [np.empty((N, N, N)) for _ in range(5)]
    bad = np.zeros((N, N, N), dtype=bool)

    def kernel(i, j, k):
        new = update_cell(ext, grid.phi_e, gamma, dt, grid.cell_width, i, j, k)
        if new is None:
            bad[i, j, k] = True
            return
        for f in range(5):
            outs[f][i, j, k] = new[f]

    parallel_for_md(space, (N, N, N), kernel).get()
    if bad.any():
        raise StepFault(grid.key, int(np.argmax(bad)))
    grid.rho[:], grid.mx[:], grid.my[:], grid.mz[:], grid.en[:] = outs
