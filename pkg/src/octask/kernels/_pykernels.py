"""Pure-Python (numpy) fallback for the compiled kernel core.

Mirrors the interface of ``_ckernels`` so either module can sit behind
``octask.kernels``.  The finite-volume update keeps the exact operation
order of the compiled version, so both backends round identically there;
the summation kernels trade that for vectorized speed and agree to
rounding noise instead.
"""

import numpy as np

BACKEND_NAME = "python"

_BLOCK = 1 << 18
_DIRECT_BLOCK = 64


def hw_counter_available():
    return False


def hw_timestamp():
    raise RuntimeError("python kernel backend has no hardware counter")


# ---------------------------------------------------------------------------
# alternating series partial sums


def maclaurin_partial(x, k_lo, k_hi):
    """Sum of (-1)^(k+1) x^k / k for k in [k_lo, k_hi), k_lo >= 1."""
    total = 0.0
    k = int(k_lo)
    k_hi = int(k_hi)
    while k < k_hi:
        end = min(k + _BLOCK, k_hi)
        ks = np.arange(k, end, dtype=np.float64)
        terms = np.power(x, ks) / ks
        even = np.arange(k, end, dtype=np.int64) & 1 == 0
        terms[even] = -terms[even]
        total += float(terms.sum())
        k = end
    return total


# ---------------------------------------------------------------------------
# gravity


def direct_potential(tx, ty, tz, sx, sy, sz, sm, out):
    """phi(t) = -sum_j m_j / |t - s_j|, skipping coincident points (G = 1)."""
    nt = tx.shape[0]
    for lo in range(0, nt, _DIRECT_BLOCK):
        hi = min(lo + _DIRECT_BLOCK, nt)
        dx = sx[None, :] - tx[lo:hi, None]
        dy = sy[None, :] - ty[lo:hi, None]
        dz = sz[None, :] - tz[lo:hi, None]
        r2 = dx * dx + dy * dy + dz * dz
        with np.errstate(divide="ignore"):
            contrib = np.where(r2 > 0.0, sm[None, :] / np.sqrt(r2), 0.0)
        out[lo:hi] = -contrib.sum(axis=1)
    return 0


def _direct_leaf(out, idx, px, py, pz, cx, cy, cz, cm):
    dx = cx[None, :] - px[:, None]
    dy = cy[None, :] - py[:, None]
    dz = cz[None, :] - pz[:, None]
    r2 = dx * dx + dy * dy + dz * dz
    with np.errstate(divide="ignore"):
        contrib = np.where(r2 > 0.0, cm[None, :] / np.sqrt(r2), 0.0)
    out[idx] -= contrib.sum(axis=1)


def gravity_walk(node_size, comx, comy, comz, node_mass, first_child,
                 cell_off, cell_cnt, cx, cy, cz, cmass, self_off,
                 tx, ty, tz, theta, out):
    """Vectorized twin of the compiled tree walk (same visit order)."""
    out[:] = 0.0
    stack = [(0, np.arange(tx.shape[0]))]
    while stack:
        n, idx = stack.pop()
        if node_mass[n] == 0.0:
            continue
        fc = int(first_child[n])
        off = int(cell_off[n])
        px = tx[idx]
        py = ty[idx]
        pz = tz[idx]
        if fc < 0 and off == self_off:
            end = off + int(cell_cnt[n])
            _direct_leaf(out, idx, px, py, pz,
                         cx[off:end], cy[off:end], cz[off:end], cmass[off:end])
            continue
        dx = comx[n] - px
        dy = comy[n] - py
        dz = comz[n] - pz
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        far = node_size[n] < theta * d
        if far.any():
            out[idx[far]] -= node_mass[n] / d[far]
        near = idx[~far]
        if near.size == 0:
            continue
        if fc < 0:
            end = off + int(cell_cnt[n])
            _direct_leaf(out, near, tx[near], ty[near], tz[near],
                         cx[off:end], cy[off:end], cz[off:end], cmass[off:end])
        else:
            for c in range(7, -1, -1):
                stack.append((fc + c, near))
    return 0


# ---------------------------------------------------------------------------
# hydro


def _pressure(rho, mx, my, mz, en, gamma):
    return (gamma - 1.0) * (en - 0.5 * (mx * mx + my * my + mz * mz) / rho)


def max_signal(rho, mx, my, mz, en, gamma):
    """max over cells of |u|_inf + sound speed; negative if state invalid."""
    rho = np.asarray(rho)
    if not (rho > 0.0).all():  # NaN-aware, matching the compiled kernel
        return -1.0
    p = _pressure(rho, mx, my, mz, en, gamma)
    if not (p > 0.0).all():
        return -1.0
    am = np.maximum(np.maximum(np.abs(mx), np.abs(my)), np.abs(mz))
    s = am / rho + np.sqrt(gamma * p / rho)
    return float(s.max())


def _rusanov(rl, mxl, myl, mzl, el, rr, mxr, myr, mzr, er, axis, gamma):
    pl = _pressure(rl, mxl, myl, mzl, el, gamma)
    pr = _pressure(rr, mxr, myr, mzr, er, gamma)
    ml = (mxl, myl, mzl)[axis]
    mr = (mxr, myr, mzr)[axis]
    ul = ml / rl
    ur = mr / rr
    smax = np.maximum(np.abs(ul) + np.sqrt(gamma * pl / rl),
                      np.abs(ur) + np.sqrt(gamma * pr / rr))
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


def _face_flux(fields, gamma, axis):
    n = fields[0].shape[0] - 2
    sl = [slice(1, n + 1)] * 3
    sr = [slice(1, n + 1)] * 3
    sl[axis] = slice(0, n + 1)
    sr[axis] = slice(1, n + 2)
    sl = tuple(sl)
    sr = tuple(sr)
    left = [f[sl] for f in fields]
    right = [f[sr] for f in fields]
    return _rusanov(*left, *right, axis, gamma)


def hydro_update(rho_e, mx_e, my_e, mz_e, en_e, phi_e, gamma, dt, h,
                 rho_o, mx_o, my_o, mz_o, en_o):
    """Vectorized twin of the compiled update; identical rounding."""
    n = rho_o.shape[0]
    lam = dt / h
    twoh = 2.0 * h
    fields = (rho_e, mx_e, my_e, mz_e, en_e)
    interior = (slice(1, n + 1),) * 3
    r, mx, my, mz, en = (f[interior] for f in fields)

    diffs = []
    with np.errstate(invalid="ignore"):  # bad states fault at the check below
        for axis in range(3):
            fx = _face_flux(fields, gamma, axis)
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[axis] = slice(0, n)
            hi[axis] = slice(1, n + 1)
            lo = tuple(lo)
            hi = tuple(hi)
            diffs.append([fx[c][hi] - fx[c][lo] for c in range(5)])
    # same grouping as the compiled kernel, signed zeros included
    div = [(diffs[0][c] + diffs[1][c]) + diffs[2][c] for c in range(5)]

    gx = (phi_e[0:n, 1:n + 1, 1:n + 1] - phi_e[2:n + 2, 1:n + 1, 1:n + 1]) / twoh
    gy = (phi_e[1:n + 1, 0:n, 1:n + 1] - phi_e[1:n + 1, 2:n + 2, 1:n + 1]) / twoh
    gz = (phi_e[1:n + 1, 1:n + 1, 0:n] - phi_e[1:n + 1, 1:n + 1, 2:n + 2]) / twoh

    nr = r - lam * div[0]
    nmx = mx - lam * div[1] + dt * (r * gx)
    nmy = my - lam * div[2] + dt * (r * gy)
    nmz = mz - lam * div[3] + dt * (r * gz)
    nen = en - lam * div[4] + dt * ((mx * gx + my * gy) + mz * gz)

    with np.errstate(divide="ignore", invalid="ignore"):
        press = _pressure(nr, nmx, nmy, nmz, nen, gamma)
    bad = ~(nr > 0.0) | ~(press > 0.0)  # NaN-aware, matching the compiled kernel
    if bad.any():
        return 1 + int(np.argmax(bad))
    rho_o[:] = nr
    mx_o[:] = nmx
    my_o[:] = nmy
    mz_o[:] = nmz
    en_o[:] = nen
    return 0
